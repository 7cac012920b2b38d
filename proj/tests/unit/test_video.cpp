#include <filesystem>
#include <fstream>

#include "acv/hash.hpp"
#include "acv/synth.hpp"
#include "acv/video.hpp"
#include "doctest.h"

namespace fs = std::filesystem;

using acv::RegionMotion;
using acv::Sequence;
using acv::Shape4;
using acv::SynthSpec;
using acv::Tensor;

namespace {

fs::path fresh_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("fnv-1a 64-bit reference vectors") {
  CHECK(acv::fnv1a64("", 0) == 0xcbf29ce484222325ULL);
  CHECK(acv::fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
  CHECK(acv::fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);
  CHECK(acv::Fnv1a64().update("foo").update("bar").digest() ==
        0x85944171f73967e8ULL);
  CHECK(acv::hex16(0x85944171f73967e8ULL) == "85944171f73967e8");
  CHECK(acv::hex16(0x5ULL) == "0000000000000005");
  CHECK(acv::mix64(1) != 1);
  CHECK(acv::mix64(1) == acv::mix64(1));
}

TEST_CASE("replicate padding extends edges and keeps originals") {
  Tensor<double> x = Tensor<double>::from(Shape4(1, 1, 2, 3),
                                          {1, 2, 3, 4, 5, 6});
  Tensor<double> p = acv::replicate_pad(x, 4, 5);
  CHECK(p.shape() == Shape4(1, 1, 4, 5));
  // originals untouched
  for (int y = 0; y < 2; ++y)
    for (int xx = 0; xx < 3; ++xx) CHECK(p.at(0, 0, y, xx) == x.at(0, 0, y, xx));
  // right edge replicates column 2, bottom rows replicate row 1
  CHECK(p.at(0, 0, 0, 3) == 3);
  CHECK(p.at(0, 0, 0, 4) == 3);
  CHECK(p.at(0, 0, 3, 1) == 5);
  CHECK(p.at(0, 0, 3, 4) == 6);
  CHECK(acv::round_up(60, 64) == 64);
  CHECK(acv::round_up(64, 64) == 64);
  CHECK(acv::round_up(65, 16) == 80);
  CHECK_THROWS_AS(acv::replicate_pad(x, 1, 3), acv::ConfigError);
}

TEST_CASE("u8 conversion round-trips exactly") {
  acv::ImageU8 img;
  img.width = 5;
  img.height = 4;
  img.rgb.resize(5 * 4 * 3);
  for (std::size_t i = 0; i < img.rgb.size(); ++i)
    img.rgb[i] = std::uint8_t((i * 37 + 11) & 0xFF);
  Tensor<double> f = acv::frame_from_u8<double>(img);
  CHECK(f.shape() == Shape4(1, 3, 4, 5));
  CHECK(f.value().minCoeff() >= 0.0);
  CHECK(f.value().maxCoeff() <= 1.0);
  acv::ImageU8 back = acv::frame_to_u8(f, 5, 4);
  CHECK(back.rgb == img.rgb);
}

TEST_CASE("png directory save/load round-trip with padding") {
  fs::path dir = fresh_dir("acv_png_seq");
  Sequence<double> seq;
  seq.width = 60;
  seq.height = 52;
  acv::Pcg32 rng(8);
  for (int t = 0; t < 3; ++t) {
    Tensor<double> f = Tensor<double>::zeros(Shape4(1, 3, 52, 60));
    for (std::int64_t i = 0; i < f.size(); ++i)
      f.mutable_value()[i] = double(rng.below(256)) / 255.0;
    seq.frames.push_back(f);
  }
  acv::save_png_dir(dir.string(), seq);
  Sequence<double> loaded = acv::load_png_dir<double>(dir.string(), 64);
  CHECK(loaded.width == 60);
  CHECK(loaded.height == 52);
  CHECK(loaded.frames.size() == 3);
  CHECK(loaded.padded_width() == 64);
  CHECK(loaded.padded_height() == 64);
  for (int t = 0; t < 3; ++t)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 52; ++y)
        for (int x = 0; x < 60; ++x)
          CHECK(loaded.frames[std::size_t(t)].at(0, c, y, x) ==
                seq.frames[std::size_t(t)].at(0, c, y, x));
  // padding replicates the last original row/column
  CHECK(loaded.frames[0].at(0, 0, 60, 5) == loaded.frames[0].at(0, 0, 51, 5));
  CHECK(loaded.frames[0].at(0, 1, 10, 63) == loaded.frames[0].at(0, 1, 10, 59));

  // save -> load again is idempotent
  fs::path dir2 = fresh_dir("acv_png_seq2");
  acv::save_png_dir(dir2.string(), loaded);
  Sequence<double> again = acv::load_png_dir<double>(dir2.string(), 64);
  for (int t = 0; t < 3; ++t)
    CHECK((again.frames[std::size_t(t)].value() -
           loaded.frames[std::size_t(t)].value())
              .abs()
              .maxCoeff() == 0.0);
}

TEST_CASE("png directory error paths") {
  fs::path dir = fresh_dir("acv_png_bad");
  CHECK_THROWS_AS(acv::load_png_dir<double>(dir.string(), 64), acv::IoError);

  acv::ImageU8 a;
  a.width = 4;
  a.height = 4;
  a.rgb.assign(4 * 4 * 3, 100);
  acv::ImageU8 b;
  b.width = 6;
  b.height = 4;
  b.rgb.assign(6 * 4 * 3, 50);
  acv::write_png_rgb8((dir / "frame_0000.png").string(), a);
  acv::write_png_rgb8((dir / "frame_0001.png").string(), b);
  CHECK_THROWS_AS(acv::load_png_dir<double>(dir.string(), 16), acv::IoError);
}

TEST_CASE("raw rgb24 round-trip and length validation") {
  fs::path dir = fresh_dir("acv_raw");
  fs::path file = dir / "clip.rgb";
  Sequence<float> seq;
  seq.width = 20;
  seq.height = 12;
  acv::Pcg32 rng(77);
  for (int t = 0; t < 2; ++t) {
    Tensor<float> f = Tensor<float>::zeros(Shape4(1, 3, 12, 20));
    for (std::int64_t i = 0; i < f.size(); ++i)
      f.mutable_value()[i] = float(rng.below(256)) / 255.0f;
    seq.frames.push_back(f);
  }
  acv::save_raw_rgb24(file.string(), seq);
  Sequence<float> loaded =
      acv::load_raw_rgb24<float>(file.string(), 20, 12, 16);
  CHECK(loaded.frames.size() == 2);
  CHECK(loaded.padded_width() == 32);
  CHECK(loaded.padded_height() == 16);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 20; ++x)
      CHECK(loaded.frames[1].at(0, 2, y, x) == seq.frames[1].at(0, 2, y, x));

  // wrong length: drop one byte
  auto size = fs::file_size(file);
  fs::resize_file(file, size - 1);
  CHECK_THROWS_AS(acv::load_raw_rgb24<float>(file.string(), 20, 12, 16),
                  acv::IoError);
  CHECK_THROWS_AS(acv::load_raw_rgb24<float>("/nonexistent/x.rgb", 4, 4, 16),
                  acv::IoError);
}

TEST_CASE("synthesis is deterministic by seed") {
  SynthSpec spec;
  spec.width = 48;
  spec.height = 32;
  spec.frames = 4;
  spec.region_rows = 1;
  spec.region_cols = 2;
  spec.regions = {{1.0, 0.5, 0.0, 0.0}, {-2.0, 0.0, 0.01, 0.005}};
  auto a = acv::synthesize<double>(spec, 7, 16);
  auto b = acv::synthesize<double>(spec, 7, 16);
  REQUIRE(a.seq.frames.size() == 4);
  REQUIRE(a.flows.size() == 3);
  for (int t = 0; t < 4; ++t)
    CHECK((a.seq.frames[std::size_t(t)].value() -
           b.seq.frames[std::size_t(t)].value())
              .abs()
              .maxCoeff() == 0.0);
  for (int t = 0; t < 3; ++t)
    CHECK((a.flows[std::size_t(t)].value() - b.flows[std::size_t(t)].value())
              .abs()
              .maxCoeff() == 0.0);
  auto c = acv::synthesize<double>(spec, 8, 16);
  CHECK((a.seq.frames[0].value() - c.seq.frames[0].value()).abs().maxCoeff() >
        0.0);
  // frames look like images: full range use, in [0,1]
  CHECK(a.seq.frames[0].value().minCoeff() >= 0.0);
  CHECK(a.seq.frames[0].value().maxCoeff() <= 1.0);
  CHECK((a.seq.frames[0].value().maxCoeff() -
         a.seq.frames[0].value().minCoeff()) > 0.2);
}

TEST_CASE("zero velocity gives identical frames and zero flow") {
  SynthSpec spec;
  spec.width = 32;
  spec.height = 32;
  spec.frames = 3;
  spec.regions = {{0, 0, 0, 0}};
  auto r = acv::synthesize<double>(spec, 3, 32);
  CHECK((r.seq.frames[1].value() - r.seq.frames[0].value()).abs().maxCoeff() ==
        0.0);
  CHECK((r.seq.frames[2].value() - r.seq.frames[0].value()).abs().maxCoeff() ==
        0.0);
  CHECK(r.flows[0].value().abs().maxCoeff() == 0.0);
  CHECK(r.flows[1].value().abs().maxCoeff() == 0.0);
}

TEST_CASE("pure translation shifts content and reports constant flow") {
  SynthSpec spec;
  spec.width = 40;
  spec.height = 24;
  spec.frames = 3;
  spec.regions = {{2.0, 0.0, 0.0, 0.0}};
  auto r = acv::synthesize<double>(spec, 5, 8);
  // frame t+1 equals frame t shifted right by 2 px wherever both exist
  for (int t = 0; t + 1 < 3; ++t)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 24; ++y)
        for (int x = 2; x < 40; ++x)
          CHECK(r.seq.frames[std::size_t(t + 1)].at(0, c, y, x) ==
                r.seq.frames[std::size_t(t)].at(0, c, y, x - 2));
  // backward flow is exactly (-2, 0) everywhere
  CHECK((r.flows[0].value().head(24 * 40) + 2.0).abs().maxCoeff() == 0.0);
  CHECK(r.flows[0].value().tail(24 * 40).abs().maxCoeff() == 0.0);
}

TEST_CASE("static/moving split yields zero flow only on the static half") {
  SynthSpec spec;
  spec.width = 32;
  spec.height = 16;
  spec.frames = 2;
  spec.region_rows = 1;
  spec.region_cols = 2;
  spec.regions = {{0, 0, 0, 0}, {3.0, 1.0, 0.0, 0.0}};
  auto r = acv::synthesize<double>(spec, 11, 16);
  const auto& fl = r.flows[0];
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 32; ++x) {
      if (x < 16) {
        CHECK(fl.at(0, 0, y, x) == 0.0);
        CHECK(fl.at(0, 1, y, x) == 0.0);
      } else {
        CHECK(fl.at(0, 0, y, x) == -3.0);
        CHECK(fl.at(0, 1, y, x) == -1.0);
      }
    }
  // the static half's pixels are unchanged between frames
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        CHECK(r.seq.frames[1].at(0, c, y, x) == r.seq.frames[0].at(0, c, y, x));
}

TEST_CASE("zoom and rotation flows stay within the configured cap") {
  SynthSpec spec;
  spec.width = 64;
  spec.height = 64;
  spec.frames = 5;
  spec.regions = {{1.0, -1.0, 0.02, 0.01}};
  spec.max_displacement = 4.0;
  auto r = acv::synthesize<double>(spec, 21, 64);
  for (const auto& fl : r.flows) {
    CHECK(fl.value().isFinite().all());
    const auto u = fl.value().head(64 * 64);
    const auto v = fl.value().tail(64 * 64);
    CHECK((u * u + v * v).sqrt().maxCoeff() <= spec.max_displacement);
  }
}

TEST_CASE("synthesis spec validation") {
  SynthSpec spec;
  spec.regions = {{20.0, 0.0, 0.0, 0.0}};  // exceeds default 8 px cap
  CHECK_THROWS_AS(acv::synthesize<double>(spec, 1), acv::ConfigError);
  spec.regions = {{0, 0, 0, 0}, {0, 0, 0, 0}};  // grid is 1x1
  CHECK_THROWS_AS(acv::synthesize<double>(spec, 1), acv::ConfigError);
  spec.regions = {{0, 0, 0, 0}};
  spec.frames = 0;
  CHECK_THROWS_AS(acv::synthesize<double>(spec, 1), acv::ConfigError);
}

TEST_CASE("odd resolution is padded without altering the original region") {
  SynthSpec spec;
  spec.width = 60;
  spec.height = 60;
  spec.frames = 2;
  spec.regions = {{1.0, 0.0, 0.0, 0.0}};
  auto padded = acv::synthesize<double>(spec, 9, 64);
  auto native = acv::synthesize<double>(spec, 9, 1);
  CHECK(padded.seq.padded_width() == 64);
  CHECK(padded.seq.padded_height() == 64);
  CHECK(native.seq.padded_width() == 60);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 60; ++y)
      for (int x = 0; x < 60; ++x)
        CHECK(padded.seq.frames[1].at(0, c, y, x) ==
              native.seq.frames[1].at(0, c, y, x));
  // replicated borders
  CHECK(padded.seq.frames[0].at(0, 0, 63, 7) ==
        padded.seq.frames[0].at(0, 0, 59, 7));
}
