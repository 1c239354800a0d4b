#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "stvsr/config.hpp"
#include "stvsr/io.hpp"
#include "stvsr/png_io.hpp"
#include "stvsr/rng.hpp"
#include "stvsr/tensor.hpp"
#include "stvsr/video.hpp"

using namespace stvsr;

namespace {

std::filesystem::path temp_dir() {
  auto p = std::filesystem::temp_directory_path() / "stvsr_core_tests";
  std::filesystem::create_directories(p);
  return p;
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(b.data()),
          static_cast<std::streamsize>(b.size()));
}

// Minimal valid 1x1x1x1 u8 file, value 255.
std::vector<std::uint8_t> tiny_rvid() {
  std::vector<std::uint8_t> b = {'R', 'V', 'I', 'D', 1, 0, 0, 0};
  for (int i = 0; i < 4; ++i) {
    b.push_back(1);
    b.push_back(0);
    b.push_back(0);
    b.push_back(0);
  }
  b.push_back(255);
  return b;
}

}  // namespace

TEST_CASE("rng streams are deterministic and label-separated") {
  RngStream a = derive_stream(42, "alpha");
  RngStream a2 = derive_stream(42, "alpha");
  RngStream b = derive_stream(42, "beta");
  bool identical = true, distinct = false;
  for (int i = 0; i < 64; ++i) {
    std::uint64_t va = a.next_u64();
    identical = identical && (va == a2.next_u64());
    distinct = distinct || (va != b.next_u64());
  }
  CHECK(identical);
  CHECK(distinct);

  // Salted derivations split one label into independent per-item streams.
  CHECK(derive_stream(42, "x", 0).next_u64() != derive_stream(42, "x", 1).next_u64());
}

TEST_CASE("rng uniform and below stay in range") {
  RngStream s(7);
  for (int i = 0; i < 1000; ++i) {
    double u = s.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 1000; ++i) CHECK(s.below(13) < 13);
  double lo = s.uniform(2.0, 5.0);
  CHECK(lo >= 2.0);
  CHECK(lo <= 5.0);
}

TEST_CASE("rng normal sequence repeats bit-exactly") {
  RngStream a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
}

TEST_CASE("tensor construction zero-fills") {
  Tensor<float> t({2, 3});
  REQUIRE(t.numel() == 6);
  for (std::size_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.0f);
  Tensor<float> f({2, 2}, 1.5f);
  CHECK(f[3] == 1.5f);
  CHECK(shape_str(t.shape) == "(2x3)");
}

TEST_CASE("gemm matches hand-computed products in all transpose modes") {
  // A = [[1,2,3],[4,5,6]] (2x3), B = [[7,8],[9,10],[11,12]] (3x2)
  // A*B = [[58,64],[139,154]]
  std::vector<double> a = {1, 2, 3, 4, 5, 6};
  std::vector<double> b = {7, 8, 9, 10, 11, 12};
  std::vector<double> c(4, 0.0);
  gemm(false, false, 2, 2, 3, 1.0, a.data(), 3, b.data(), 2, 0.0, c.data(), 2);
  CHECK(c == std::vector<double>{58, 64, 139, 154});

  // Same product with A supplied transposed (3x2 storage).
  std::vector<double> at = {1, 4, 2, 5, 3, 6};
  std::fill(c.begin(), c.end(), 0.0);
  gemm(true, false, 2, 2, 3, 1.0, at.data(), 2, b.data(), 2, 0.0, c.data(), 2);
  CHECK(c == std::vector<double>{58, 64, 139, 154});

  // And B transposed (2x3 storage).
  std::vector<double> bt = {7, 9, 11, 8, 10, 12};
  std::fill(c.begin(), c.end(), 0.0);
  gemm(false, true, 2, 2, 3, 1.0, a.data(), 3, bt.data(), 3, 0.0, c.data(), 2);
  CHECK(c == std::vector<double>{58, 64, 139, 154});

  std::fill(c.begin(), c.end(), 0.0);
  gemm(true, true, 2, 2, 3, 1.0, at.data(), 2, bt.data(), 3, 0.0, c.data(), 2);
  CHECK(c == std::vector<double>{58, 64, 139, 154});

  // beta accumulates into C.
  gemm(false, false, 2, 2, 3, 1.0, a.data(), 3, b.data(), 2, 1.0, c.data(), 2);
  CHECK(c == std::vector<double>{116, 128, 278, 308});
}

TEST_CASE("validate_video rejects malformed and out-of-range data") {
  Video<float> ok(2, 4, 4, 3, 0.5f);
  CHECK_NOTHROW(validate_video(ok));

  Video<float> two_ch(1, 2, 2, 3);
  two_ch.c = 2;
  two_ch.data.resize(8);
  CHECK_THROWS_AS(validate_video(two_ch), DomainError);

  Video<float> bad_size(1, 2, 2, 1);
  bad_size.data.pop_back();
  CHECK_THROWS_AS(validate_video(bad_size), ShapeError);

  Video<float> hot(1, 1, 1, 1);
  hot.at(0, 0, 0, 0) = 1.5f;
  CHECK_THROWS_AS(validate_video(hot), DomainError);

  Video<float> nan_v(1, 1, 1, 1);
  nan_v.at(0, 0, 0, 0) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(validate_video(nan_v), DomainError);
}

TEST_CASE("resize_bilinear matches half-pixel-center oracles") {
  // Upsample a 2-wide row (0, 1) to width 4. Source positions are
  // (i+0.5)/2 - 0.5 = -0.25, 0.25, 0.75, 1.25, clamped to [0,1]:
  // values 0, 0.25, 0.75, 1.
  Video<double> row(1, 1, 2, 1);
  row.at(0, 0, 1, 0) = 1.0;
  Video<double> up = resize_bilinear(row, 1, 4);
  REQUIRE(up.w == 4);
  CHECK(up.at(0, 0, 0, 0) == Catch::Approx(0.0).margin(1e-12));
  CHECK(up.at(0, 0, 1, 0) == Catch::Approx(0.25).margin(1e-12));
  CHECK(up.at(0, 0, 2, 0) == Catch::Approx(0.75).margin(1e-12));
  CHECK(up.at(0, 0, 3, 0) == Catch::Approx(1.0).margin(1e-12));

  // Downsample a 4-wide ramp (0, 1/3, 2/3, 1) to width 2: source positions
  // 0.5 and 2.5 average adjacent pairs -> 1/6, 5/6.
  Video<double> ramp(1, 1, 4, 1);
  for (int x = 0; x < 4; ++x) ramp.at(0, 0, x, 0) = x / 3.0;
  Video<double> dn = resize_bilinear(ramp, 1, 2);
  CHECK(dn.at(0, 0, 0, 0) == Catch::Approx(1.0 / 6.0).margin(1e-12));
  CHECK(dn.at(0, 0, 1, 0) == Catch::Approx(5.0 / 6.0).margin(1e-12));

  // Same-size resize is the identity.
  Video<double> id = resize_bilinear(ramp, 1, 4);
  for (int x = 0; x < 4; ++x)
    CHECK(id.at(0, 0, x, 0) == Catch::Approx(ramp.at(0, 0, x, 0)).margin(1e-12));
}

TEST_CASE("rvid f32 round trip is bit-exact") {
  auto path = (temp_dir() / "f32.rvid").string();
  Video<float> v(2, 3, 4, 3);
  RngStream s(5);
  for (auto& x : v.data) x = static_cast<float>(s.uniform());
  save_rvid(v, path, RvidDtype::F32);
  Video<float> r = load_rvid<float>(path);
  REQUIRE(r.same_shape(v));
  CHECK(r.data == v.data);
}

TEST_CASE("rvid u8 quantizes to nearest 1/255 step") {
  auto path = (temp_dir() / "u8.rvid").string();
  Video<float> v(1, 2, 2, 1);
  v.data = {0.0f, 1.0f, 0.5f, 0.2501f};
  save_rvid(v, path, RvidDtype::U8);
  Video<float> r = load_rvid<float>(path);
  for (std::size_t i = 0; i < v.data.size(); ++i)
    CHECK(std::abs(r.data[i] - v.data[i]) <= 0.5f / 255.0f + 1e-7f);

  // Header layout: magic, version 1, dtype 0 (u8), two reserved zero bytes,
  // then four u32le dims; payload starts at byte 24 with round(v*255).
  std::ifstream f(path, std::ios::binary);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  REQUIRE(buf.size() == 28);
  CHECK(std::string(buf.begin(), buf.begin() + 4) == "RVID");
  CHECK(buf[4] == 1);
  CHECK(buf[5] == 0);
  CHECK(buf[6] == 0);
  CHECK(buf[7] == 0);
  CHECK(buf[24] == 0);
  CHECK(buf[25] == 255);
  CHECK(buf[26] == 128);
  CHECK(buf[27] == 64);
}

TEST_CASE("rvid parse errors report the failing byte offset") {
  auto dir = temp_dir();
  auto check_offset = [&](std::vector<std::uint8_t> bytes, std::uint64_t want) {
    auto p = (dir / "bad.rvid").string();
    write_bytes(p, bytes);
    try {
      detail::read_rvid_raw(p);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.offset == want);
    }
  };

  auto good = tiny_rvid();

  auto bad_magic = good;
  bad_magic[0] = 'X';
  check_offset(bad_magic, 0);

  auto bad_version = good;
  bad_version[4] = 2;
  check_offset(bad_version, 4);

  auto bad_dtype = good;
  bad_dtype[5] = 7;
  check_offset(bad_dtype, 5);

  auto bad_reserved = good;
  bad_reserved[6] = 1;
  check_offset(bad_reserved, 6);

  // Zero in dim field i reports offset 8 + 4*i.
  for (int i = 0; i < 4; ++i) {
    auto zero_dim = good;
    zero_dim[8 + 4 * i] = 0;
    check_offset(zero_dim, 8 + 4u * i);
  }

  // Truncation reports the actual file size.
  auto short_header = std::vector<std::uint8_t>(good.begin(), good.begin() + 10);
  check_offset(short_header, 10);
  auto no_payload = std::vector<std::uint8_t>(good.begin(), good.begin() + 24);
  check_offset(no_payload, 24);

  CHECK_THROWS_AS(detail::read_rvid_raw((dir / "does_not_exist.rvid").string()),
                  IoError);
}

TEST_CASE("flow sidecars round trip and use the stem naming scheme") {
  auto clip = (temp_dir() / "clip007.rvid").string();
  CHECK(flow_sidecar_path(clip, true) == (temp_dir() / "clip007.flowf.rvid").string());
  CHECK(flow_sidecar_path(clip, false) == (temp_dir() / "clip007.flowb.rvid").string());

  std::vector<FlowField<float>> flows;
  RngStream s(11);
  for (int i = 0; i < 3; ++i) {
    FlowField<float> f(4, 5, i, i + 1);
    for (auto& x : f.data) x = static_cast<float>(s.uniform(-2.0, 2.0));
    flows.push_back(f);
  }
  auto p = flow_sidecar_path(clip, true);
  save_flow_rvid(flows, p);
  auto r = load_flow_rvid<float>(p);
  REQUIRE(r.size() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(r[i].src_frame == i);
    CHECK(r[i].dst_frame == i + 1);
    CHECK(r[i].data == flows[i].data);
  }

  CHECK_THROWS_AS(save_flow_rvid(std::vector<FlowField<float>>{}, p), DomainError);
  std::vector<FlowField<float>> ragged = {FlowField<float>(2, 2), FlowField<float>(3, 2)};
  CHECK_THROWS_AS(save_flow_rvid(ragged, p), ShapeError);
}

TEST_CASE("png sequences round trip u8-exact values") {
  auto dir = (temp_dir() / "seq").string();
  std::filesystem::remove_all(dir);
  Video<float> v(3, 5, 4, 3);
  RngStream s(3);
  for (auto& x : v.data)
    x = static_cast<float>(s.below(256)) / 255.0f;  // representable exactly in u8
  save_png_sequence(v, dir);
  Video<float> r = load_png_sequence<float>(dir);
  REQUIRE(r.same_shape(v));
  for (std::size_t i = 0; i < v.data.size(); ++i)
    CHECK(std::abs(r.data[i] - v.data[i]) < 1e-6f);

  CHECK_THROWS_AS(load_png_sequence<float>((temp_dir() / "empty_seq").string()),
                  IoError);
  std::filesystem::create_directories(temp_dir() / "no_frames");
  CHECK_THROWS_AS(load_png_sequence<float>((temp_dir() / "no_frames").string()),
                  IoError);
}

TEST_CASE("png single image survives gray and rgb round trips") {
  auto p = (temp_dir() / "one.png").string();
  PngImage img;
  img.h = 3;
  img.w = 7;
  img.c = 1;
  img.pixels.resize(21);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(i * 11);
  save_png(img, p);
  PngImage back = load_png(p);
  CHECK(back.h == img.h);
  CHECK(back.w == img.w);
  CHECK(back.c == 1);
  CHECK(back.pixels == img.pixels);

  write_bytes(p, {0, 1, 2, 3});
  CHECK_THROWS_AS(load_png(p), ParseError);
}

TEST_CASE("config parses sections, comments, and last-wins keys") {
  Config c = Config::parse(
      "# comment line\n"
      "seed = 7\n"
      "[train]\n"
      "lr = 5e-5   # trailing comment\n"
      "iters = 10\n"
      "iters = 20\n"
      "[degrade]\n"
      "blur_sigma = 1.25\n"
      "flag = true\n");
  CHECK(c.get_u64("seed", 0) == 7);
  CHECK(c.get_double("train.lr", 0.0) == Catch::Approx(5e-5));
  CHECK(c.get_int("train.iters", 0) == 20);  // later assignment wins
  CHECK(c.get_double("degrade.blur_sigma", 0.0) == Catch::Approx(1.25));
  CHECK(c.get_bool("degrade.flag", false));
  CHECK(c.get_int("missing", 42) == 42);
  CHECK_THROWS_AS(c.require_str("nope"), ConfigError);

  Config bad = Config::parse("[t]\nn = 3x\n");
  CHECK_THROWS_AS(bad.get_int("t.n", 0), ConfigError);
  CHECK_THROWS_AS(Config::parse("just a bare word\n"), ConfigError);
}

TEST_CASE("config fingerprint is order-insensitive and value-sensitive") {
  Config a = Config::parse("b = 2\na = 1\n");
  Config b = Config::parse("a = 1\nb = 2\n");
  CHECK(a.fingerprint() == b.fingerprint());
  Config c = Config::parse("a = 1\nb = 3\n");
  CHECK(a.fingerprint() != c.fingerprint());
}
