#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "stvsr/common.hpp"
#include "stvsr/video.hpp"

namespace stvsr {

// RVID container, little-endian:
//   bytes 0-3   magic "RVID"
//   byte  4     version (1)
//   byte  5     dtype code: 0 = u8, 1 = f32
//   bytes 6-7   reserved, zero
//   bytes 8-23  u32 T, H, W, C
//   payload     T*H*W*C values, frame-major, row-major, channel-last
enum class RvidDtype : std::uint8_t { U8 = 0, F32 = 1 };

namespace detail {

inline void put_u32le(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  buf.push_back(static_cast<std::uint8_t>(v & 0xff));
  buf.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  buf.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  buf.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f32le(std::vector<std::uint8_t>& buf, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32le(buf, bits);
}

inline float get_f32le(const std::uint8_t* p) {
  std::uint32_t bits = get_u32le(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

struct RvidRaw {
  RvidDtype dtype;
  std::uint32_t t, h, w, c;
  std::vector<float> values;  // raw payload as floats (u8 already scaled to [0,1])
};

inline void write_rvid_raw(const std::string& path, RvidDtype dtype, std::uint32_t t,
                           std::uint32_t h, std::uint32_t w, std::uint32_t c,
                           const float* values) {
  std::vector<std::uint8_t> buf;
  std::size_t n = static_cast<std::size_t>(t) * h * w * c;
  buf.reserve(24 + n * (dtype == RvidDtype::U8 ? 1 : 4));
  buf.insert(buf.end(), {'R', 'V', 'I', 'D'});
  buf.push_back(1);
  buf.push_back(static_cast<std::uint8_t>(dtype));
  buf.push_back(0);
  buf.push_back(0);
  put_u32le(buf, t);
  put_u32le(buf, h);
  put_u32le(buf, w);
  put_u32le(buf, c);
  if (dtype == RvidDtype::U8) {
    for (std::size_t i = 0; i < n; ++i) {
      long q = std::lround(static_cast<double>(values[i]) * 255.0);
      buf.push_back(static_cast<std::uint8_t>(std::clamp(q, 0L, 255L)));
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) put_f32le(buf, values[i]);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("write failed: " + path);
}

inline RvidRaw read_rvid_raw(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 4 || std::memcmp(buf.data(), "RVID", 4) != 0)
    throw ParseError("bad magic, expected \"RVID\"", 0);
  if (buf.size() < 5 || buf[4] != 1)
    throw ParseError("unsupported version", 4);
  if (buf.size() < 6 || buf[5] > 1)
    throw ParseError("unsupported dtype code", 5);
  RvidDtype dtype = static_cast<RvidDtype>(buf[5]);
  if (buf.size() < 8 || buf[6] != 0 || buf[7] != 0)
    throw ParseError("reserved bytes must be zero", 6);
  if (buf.size() < 24) throw ParseError("truncated header", buf.size());

  std::uint32_t dims[4];
  for (int i = 0; i < 4; ++i) {
    dims[i] = get_u32le(buf.data() + 8 + 4 * i);
    if (dims[i] == 0)
      throw ParseError("dimension field must be >= 1", 8 + 4u * i);
  }
  std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2] * dims[3];
  std::size_t elem = (dtype == RvidDtype::U8) ? 1 : 4;
  std::size_t expected = 24 + n * elem;
  if (buf.size() < expected)
    throw ParseError("truncated payload, expected " + std::to_string(expected) +
                         " bytes total",
                     buf.size());

  RvidRaw out{dtype, dims[0], dims[1], dims[2], dims[3], {}};
  out.values.resize(n);
  if (dtype == RvidDtype::U8) {
    for (std::size_t i = 0; i < n; ++i)
      out.values[i] = static_cast<float>(buf[24 + i]) / 255.0f;
  } else {
    for (std::size_t i = 0; i < n; ++i)
      out.values[i] = get_f32le(buf.data() + 24 + 4 * i);
  }
  return out;
}

}  // namespace detail

template <class T>
void save_rvid(const Video<T>& v, const std::string& path,
               RvidDtype dtype = RvidDtype::F32) {
  validate_video(v, "save_rvid");
  std::vector<float> vals(v.data.size());
  for (std::size_t i = 0; i < v.data.size(); ++i)
    vals[i] = static_cast<float>(v.data[i]);
  detail::write_rvid_raw(path, dtype, v.t, v.h, v.w, v.c, vals.data());
}

template <class T>
Video<T> load_rvid(const std::string& path) {
  detail::RvidRaw raw = detail::read_rvid_raw(path);
  Video<T> v(static_cast<int>(raw.t), static_cast<int>(raw.h),
             static_cast<int>(raw.w), static_cast<int>(raw.c));
  for (std::size_t i = 0; i < raw.values.size(); ++i)
    v.data[i] = static_cast<T>(raw.values[i]);
  validate_video(v, "load_rvid");
  return v;
}

// Flow sidecars reuse the container with C=2 and f32 payload; entry i holds the
// field for the frame pair (i, i+1) in file order.
template <class T>
void save_flow_rvid(const std::vector<FlowField<T>>& flows, const std::string& path) {
  if (flows.empty()) throw DomainError("save_flow_rvid: empty flow list");
  int h = flows[0].h, w = flows[0].w;
  std::vector<float> vals;
  vals.reserve(flows.size() * static_cast<std::size_t>(h) * w * 2);
  for (const auto& fl : flows) {
    if (fl.h != h || fl.w != w) throw ShapeError("save_flow_rvid: ragged flow list");
    for (const T& x : fl.data) vals.push_back(static_cast<float>(x));
  }
  detail::write_rvid_raw(path, RvidDtype::F32, static_cast<std::uint32_t>(flows.size()),
                         h, w, 2, vals.data());
}

template <class T>
std::vector<FlowField<T>> load_flow_rvid(const std::string& path) {
  detail::RvidRaw raw = detail::read_rvid_raw(path);
  if (raw.c != 2 || raw.dtype != RvidDtype::F32)
    throw ParseError("flow sidecar must be C=2 f32", 5);
  std::vector<FlowField<T>> flows;
  std::size_t per = static_cast<std::size_t>(raw.h) * raw.w * 2;
  for (std::uint32_t i = 0; i < raw.t; ++i) {
    FlowField<T> fl(static_cast<int>(raw.h), static_cast<int>(raw.w),
                    static_cast<int>(i), static_cast<int>(i) + 1);
    for (std::size_t j = 0; j < per; ++j)
      fl.data[j] = static_cast<T>(raw.values[per * i + j]);
    flows.push_back(std::move(fl));
  }
  return flows;
}

inline std::string flow_sidecar_path(const std::string& clip_path, bool forward) {
  std::filesystem::path p(clip_path);
  std::filesystem::path stem = p.parent_path() / p.stem();
  return stem.string() + (forward ? ".flowf.rvid" : ".flowb.rvid");
}

}  // namespace stvsr
