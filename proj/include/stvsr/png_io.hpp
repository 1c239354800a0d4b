#pragma once

#include <zlib.h>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "stvsr/common.hpp"
#include "stvsr/video.hpp"

namespace stvsr {

// Minimal PNG codec: 8-bit grayscale or RGB, non-interlaced. Enough for the
// frame-sequence convenience path; anything fancier should be converted first.
namespace pngdetail {

inline void put_u32be(std::vector<std::uint8_t>& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 24));
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_u32be(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void write_chunk(std::vector<std::uint8_t>& out, const char type[4],
                        const std::vector<std::uint8_t>& payload) {
  put_u32be(out, static_cast<std::uint32_t>(payload.size()));
  std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  std::uint32_t crc = crc32(0, out.data() + start, static_cast<uInt>(4 + payload.size()));
  put_u32be(out, crc);
}

inline std::vector<std::uint8_t> zlib_pack(const std::vector<std::uint8_t>& raw) {
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> out(bound);
  if (compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("png: zlib compression failed");
  out.resize(bound);
  return out;
}

inline std::vector<std::uint8_t> zlib_unpack(const std::vector<std::uint8_t>& comp,
                                             std::size_t expected) {
  std::vector<std::uint8_t> out(expected);
  uLongf len = static_cast<uLongf>(expected);
  if (uncompress(out.data(), &len, comp.data(), static_cast<uLong>(comp.size())) != Z_OK ||
      len != expected)
    throw ParseError("png: zlib stream corrupt", 0);
  return out;
}

inline int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace pngdetail

struct PngImage {
  int h = 0, w = 0, c = 0;  // c: 1 (gray) or 3 (rgb)
  std::vector<std::uint8_t> pixels;  // row-major, channel-last
};

inline void save_png(const PngImage& img, const std::string& path) {
  using namespace pngdetail;
  if (img.c != 1 && img.c != 3) throw DomainError("png: channels must be 1 or 3");
  std::vector<std::uint8_t> raw;
  std::size_t stride = static_cast<std::size_t>(img.w) * img.c;
  raw.reserve((stride + 1) * img.h);
  for (int y = 0; y < img.h; ++y) {
    raw.push_back(0);  // filter: none
    raw.insert(raw.end(), img.pixels.begin() + y * stride,
               img.pixels.begin() + (y + 1) * stride);
  }
  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<std::uint8_t> ihdr;
  put_u32be(ihdr, static_cast<std::uint32_t>(img.w));
  put_u32be(ihdr, static_cast<std::uint32_t>(img.h));
  ihdr.push_back(8);                                 // bit depth
  ihdr.push_back(img.c == 1 ? 0 : 2);                // color type
  ihdr.push_back(0); ihdr.push_back(0); ihdr.push_back(0);
  write_chunk(out, "IHDR", ihdr);
  write_chunk(out, "IDAT", zlib_pack(raw));
  write_chunk(out, "IEND", {});
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path);
}

inline PngImage load_png(const std::string& path) {
  using namespace pngdetail;
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
    throw ParseError("png: bad signature", 0);

  PngImage img;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  int bit_depth = 0, color_type = -1, interlace = 0;
  while (pos + 8 <= buf.size()) {
    std::uint32_t len = get_u32be(buf.data() + pos);
    if (pos + 12 + len > buf.size()) throw ParseError("png: truncated chunk", pos);
    const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
    const std::uint8_t* payload = buf.data() + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw ParseError("png: bad IHDR", pos);
      img.w = static_cast<int>(get_u32be(payload));
      img.h = static_cast<int>(get_u32be(payload + 4));
      bit_depth = payload[8];
      color_type = payload[9];
      interlace = payload[12];
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (bit_depth != 8 || (color_type != 0 && color_type != 2) || interlace != 0)
    throw ParseError("png: only 8-bit gray/rgb non-interlaced supported", 8);
  img.c = (color_type == 0) ? 1 : 3;

  std::size_t stride = static_cast<std::size_t>(img.w) * img.c;
  std::vector<std::uint8_t> raw = zlib_unpack(idat, (stride + 1) * img.h);
  img.pixels.assign(stride * img.h, 0);
  int bpp = img.c;
  for (int y = 0; y < img.h; ++y) {
    std::uint8_t filter = raw[y * (stride + 1)];
    const std::uint8_t* src = raw.data() + y * (stride + 1) + 1;
    std::uint8_t* dst = img.pixels.data() + y * stride;
    const std::uint8_t* up = (y > 0) ? img.pixels.data() + (y - 1) * stride : nullptr;
    for (std::size_t i = 0; i < stride; ++i) {
      int a = (i >= static_cast<std::size_t>(bpp)) ? dst[i - bpp] : 0;
      int b = up ? up[i] : 0;
      int c = (up && i >= static_cast<std::size_t>(bpp)) ? up[i - bpp] : 0;
      int x = src[i];
      switch (filter) {
        case 0: dst[i] = static_cast<std::uint8_t>(x); break;
        case 1: dst[i] = static_cast<std::uint8_t>((x + a) & 0xff); break;
        case 2: dst[i] = static_cast<std::uint8_t>((x + b) & 0xff); break;
        case 3: dst[i] = static_cast<std::uint8_t>((x + (a + b) / 2) & 0xff); break;
        case 4: dst[i] = static_cast<std::uint8_t>((x + paeth(a, b, c)) & 0xff); break;
        default: throw ParseError("png: unknown filter type", y);
      }
    }
  }
  return img;
}

// Frame <-> image conversions (round(v*255) quantization, same as RVID u8).
template <class T>
PngImage frame_to_png(const Video<T>& v, int f) {
  PngImage img;
  img.h = v.h; img.w = v.w; img.c = v.c;
  img.pixels.resize(v.frame_elems());
  const T* p = v.frame_ptr(f);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    long q = std::lround(static_cast<double>(p[i]) * 255.0);
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(q, 0L, 255L));
  }
  return img;
}

template <class T>
Video<T> png_to_frame(const PngImage& img) {
  Video<T> v(1, img.h, img.w, img.c);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    v.data[i] = static_cast<T>(img.pixels[i] / 255.0);
  return v;
}

// Zero-padded numbered frames: <dir>/frame_000000.png, frame_000001.png, ...
template <class T>
void save_png_sequence(const Video<T>& v, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (int f = 0; f < v.t; ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06d.png", f);
    save_png(frame_to_png(v, f), (std::filesystem::path(dir) / name).string());
  }
}

template <class T>
Video<T> load_png_sequence(const std::string& dir) {
  if (!std::filesystem::is_directory(dir))
    throw IoError("not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".png") files.push_back(e.path().string());
  if (files.empty()) throw IoError("no .png frames in " + dir);
  std::sort(files.begin(), files.end());

  Video<T> v;
  for (std::size_t f = 0; f < files.size(); ++f) {
    PngImage img = load_png(files[f]);
    if (f == 0) {
      v = Video<T>(static_cast<int>(files.size()), img.h, img.w, img.c);
    } else if (img.h != v.h || img.w != v.w || img.c != v.c) {
      throw ShapeError("png sequence frames disagree in size: " + files[f]);
    }
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
      v.data[v.frame_elems() * f + i] = static_cast<T>(img.pixels[i] / 255.0);
  }
  return v;
}

}  // namespace stvsr
