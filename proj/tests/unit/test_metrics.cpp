#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "acv/metrics.hpp"
#include "acv/synth.hpp"
#include "doctest.h"

using namespace acv;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.width_mult = 0.025;
  return cfg;
}

template <typename S>
void wake_heads(VideoModel<S>& m, double s, std::uint64_t seed) {
  Pcg32 rng(seed);
  for (auto& p : m.params.all()) {
    if (p.name.find("head.") != std::string::npos)
      fill_uniform(p.value, rng, -s, s);
  }
}

template <typename S>
Sequence<S> tiny_sequence(int frames, std::uint64_t seed, bool moving) {
  SynthSpec spec;
  spec.width = 64;
  spec.height = 64;
  spec.frames = frames;
  RegionMotion m;
  if (moving) {
    m.vx = 1.5;
    m.vy = -1.0;
    m.rot = 0.01;
  }
  spec.regions = {m};
  spec.texture_seed = seed;
  return synthesize<S>(spec, seed + 1).seq;
}

double simpson(const std::function<double(double)>& f, double a, double b,
               int n) {
  // n even
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("pchip reproduces knots and is exact on linear data") {
  Pchip p({0.0, 1.0, 2.5, 3.0, 5.0}, {1.0, 2.0, 2.2, 4.0, 4.5});
  const double xs[] = {0.0, 1.0, 2.5, 3.0, 5.0};
  const double ys[] = {1.0, 2.0, 2.2, 4.0, 4.5};
  for (int i = 0; i < 5; ++i)
    CHECK(p(xs[i]) == doctest::Approx(ys[i]).epsilon(1e-14));

  Pchip lin({0.0, 0.5, 2.0, 3.0}, {1.0, 2.0, 5.0, 7.0});
  for (double x = 0.0; x <= 3.0; x += 0.125)
    CHECK(lin(x) == doctest::Approx(1.0 + 2.0 * x).epsilon(1e-13));
  CHECK(lin.integrate(0.0, 3.0) ==
        doctest::Approx(3.0 + 9.0).epsilon(1e-13));  // trapezoid area
}

TEST_CASE("pchip matches an independent monotone-cubic implementation") {
  // Reference values computed with a separately-written Fritsch-Carlson
  // interpolator over the same knots.
  Pchip p({0.0, 1.0, 2.5, 3.0, 5.0}, {1.0, 2.0, 2.2, 4.0, 4.5});
  CHECK(p(0.25) == doctest::Approx(1.3340030991735536).epsilon(1e-13));
  CHECK(p(0.5) == doctest::Approx(1.6373415977961434).epsilon(1e-13));
  CHECK(p(1.7) == doctest::Approx(2.0863783890979795).epsilon(1e-13));
  CHECK(p(2.75) == doctest::Approx(3.083636726016476).epsilon(1e-13));
  CHECK(p(2.9) == doctest::Approx(3.7814411905394625).epsilon(1e-13));
  CHECK(p(3.5) == doctest::Approx(4.237323113207546).epsilon(1e-13));
  CHECK(p(4.9) == doctest::Approx(4.499063679245283).epsilon(1e-13));
  CHECK(p.integrate(0.3, 4.7) ==
        doctest::Approx(13.25478483623936).epsilon(1e-13));
}

TEST_CASE("pchip preserves monotonicity between knots") {
  Pchip p({0.0, 1.0, 2.5, 3.0, 5.0}, {1.0, 2.0, 2.2, 4.0, 4.5});
  double prev = p(0.0);
  for (int i = 1; i <= 500; ++i) {
    const double v = p(5.0 * i / 500.0);
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
}

TEST_CASE("pchip analytic integral agrees with quadrature") {
  Pchip p({0.0, 0.7, 1.5, 3.0, 3.2}, {0.0, 0.5, 0.9, 2.0, 2.05});
  const double got = p.integrate(0.1, 3.15);
  const double want = simpson([&](double x) { return p(x); }, 0.1, 3.15, 4000);
  CHECK(got == doctest::Approx(want).epsilon(1e-9));
  // Additivity over a split point.
  CHECK(p.integrate(0.1, 1.5) + p.integrate(1.5, 3.15) ==
        doctest::Approx(got).epsilon(1e-12));
}

TEST_CASE("pchip rejects bad knots") {
  CHECK_THROWS_AS(Pchip({0.0}, {1.0}), ConfigError);
  CHECK_THROWS_AS(Pchip({0.0, 1.0, 1.0}, {0.0, 1.0, 2.0}), ConfigError);
  CHECK_THROWS_AS(Pchip({0.0, 1.0}, {0.0, 1.0, 2.0}), ConfigError);
  Pchip p({0.0, 1.0}, {0.0, 1.0});
  CHECK_THROWS_AS(p(-0.1), ContractError);
  CHECK_THROWS_AS(p.integrate(0.0, 1.5), ContractError);
}

TEST_CASE("bd-rate of a curve against itself is exactly zero") {
  std::vector<RDPoint> c = {
      {0.10, 30.0}, {0.18, 33.0}, {0.33, 36.0}, {0.61, 39.0}, {1.10, 41.5}};
  CHECK(bd_rate(c, c) == 0.0);
}

TEST_CASE("bd-rate reports minus ten percent for rates scaled by 0.9") {
  std::vector<RDPoint> anchor = {
      {0.10, 30.0}, {0.18, 33.0}, {0.33, 36.0}, {0.61, 39.0}};
  std::vector<RDPoint> test = anchor;
  for (auto& p : test) p.bpp *= 0.9;
  CHECK(bd_rate(anchor, test) == doctest::Approx(-10.0).epsilon(1e-10));
  // Flip: the anchor needs 1/0.9 - 1 more rate.
  CHECK(bd_rate(test, anchor) ==
        doctest::Approx((1.0 / 0.9 - 1.0) * 100.0).epsilon(1e-10));
}

TEST_CASE("bd-rate agrees with a quadrature evaluation of the same curves") {
  std::vector<RDPoint> anchor = {
      {0.11, 29.5}, {0.21, 33.1}, {0.37, 35.8}, {0.66, 38.4}, {1.21, 40.9}};
  std::vector<RDPoint> test = {
      {0.09, 30.2}, {0.17, 33.6}, {0.34, 36.9}, {0.58, 38.8}};
  const double got = bd_rate(anchor, test);

  auto curve = [](const std::vector<RDPoint>& pts) {
    std::vector<double> xs, ys;
    for (const auto& p : pts) {
      xs.push_back(p.psnr);
      ys.push_back(std::log10(p.bpp));
    }
    return Pchip(std::move(xs), std::move(ys));
  };
  Pchip pa = curve(anchor), pt = curve(test);
  const double lo = std::max(pa.lo(), pt.lo());
  const double hi = std::min(pa.hi(), pt.hi());
  const double ia = simpson([&](double x) { return pa(x); }, lo, hi, 4000);
  const double it = simpson([&](double x) { return pt(x); }, lo, hi, 4000);
  const double want = (std::pow(10.0, (it - ia) / (hi - lo)) - 1.0) * 100.0;
  CHECK(got == doctest::Approx(want).epsilon(1e-3));
  CHECK(std::abs(got - want) < 1e-6);  // quadrature is near-exact on cubics
  CHECK(got < 0.0);                    // test curve sits left of the anchor
}

TEST_CASE("bd-rate is antisymmetric as a rate ratio") {
  std::vector<RDPoint> a = {
      {0.11, 29.5}, {0.21, 33.1}, {0.37, 35.8}, {0.66, 38.4}};
  std::vector<RDPoint> b = {
      {0.09, 30.2}, {0.17, 33.6}, {0.34, 36.9}, {0.58, 38.8}};
  const double ab = bd_rate(a, b), ba = bd_rate(b, a);
  CHECK((1.0 + ab / 100.0) * (1.0 + ba / 100.0) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bd-rate rejects malformed curves") {
  std::vector<RDPoint> ok = {
      {0.10, 30.0}, {0.18, 33.0}, {0.33, 36.0}, {0.61, 39.0}};
  std::vector<RDPoint> three(ok.begin(), ok.begin() + 3);
  CHECK_THROWS_AS(bd_rate(three, ok), ConfigError);
  CHECK_THROWS_AS(bd_rate(ok, three), ConfigError);

  std::vector<RDPoint> disjoint = {
      {0.10, 50.0}, {0.18, 53.0}, {0.33, 56.0}, {0.61, 59.0}};
  CHECK_THROWS_AS(bd_rate(ok, disjoint), ConfigError);

  std::vector<RDPoint> bent = ok;
  bent[2].bpp = 0.05;  // rate drops while quality rises
  CHECK_THROWS_AS(bd_rate(ok, bent), ConfigError);

  std::vector<RDPoint> flat = ok;
  flat[1].psnr = flat[0].psnr;
  CHECK_THROWS_AS(bd_rate(ok, flat), ConfigError);

  std::vector<RDPoint> zero = ok;
  zero[0].bpp = 0.0;
  CHECK_THROWS_AS(bd_rate(ok, zero), ConfigError);
}

TEST_CASE("alpha sweep measures both substreams with a zero-delta baseline") {
  VideoModel<float> model(tiny_config(), 501);
  wake_heads(model, 0.05, 502);
  std::vector<Sequence<float>> seqs = {tiny_sequence<float>(3, 503, true)};

  SequenceCodingConfig cfg;
  cfg.intra_period = 0;
  cfg.lambda_ = 512.0;
  std::vector<SweepRow> rows = alpha_sweep(model, seqs, cfg);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].alpha == -1.0);
  CHECK(rows[1].alpha == 0.0);
  CHECK(rows[2].alpha == 1.0);
  for (const auto& r : rows) {
    CHECK(r.motion_bpp > 0.0);
    CHECK(r.inter_bpp > 0.0);
  }
  CHECK(rows[1].motion_delta_pct == 0.0);
  CHECK(rows[1].inter_delta_pct == 0.0);
  CHECK(rows[0].motion_delta_pct ==
        doctest::Approx(100.0 * (rows[0].motion_bpp - rows[1].motion_bpp) /
                        rows[1].motion_bpp));
}

TEST_CASE("heatmap scales patch cells into a normalized grayscale image") {
  Tensor<float> grid = Tensor<float>::zeros(Shape4(1, 1, 2, 3));
  grid.at(0, 0, 0, 1) = 0.5f;
  grid.at(0, 0, 0, 2) = 1.0f;
  grid.at(0, 0, 1, 0) = 1.0f;
  grid.at(0, 0, 1, 1) = 0.25f;
  grid.at(0, 0, 1, 2) = 0.75f;
  ImageU8 img = heatmap_image(grid, 4, 0.0, 1.0);
  CHECK(img.width == 12);
  CHECK(img.height == 8);
  auto px = [&](int y, int x) { return img.rgb[(std::size_t(y) * 12 + x) * 3]; };
  CHECK(px(0, 0) == 0);
  CHECK(px(3, 3) == 0);     // same cell as (0,0)
  CHECK(px(0, 11) == 255);  // value 1 maps to white
  CHECK(px(4, 0) == 255);
  CHECK(px(5, 5) == 64);  // 0.25 * 255 rounded
  for (std::size_t i = 0; i < img.rgb.size(); i += 3) {
    CHECK(img.rgb[i] == img.rgb[i + 1]);  // gray everywhere
    CHECK(img.rgb[i] == img.rgb[i + 2]);
  }
  // Degenerate range renders flat black instead of dividing by zero.
  ImageU8 flat = heatmap_image(grid, 2, 0.5, 0.5);
  for (std::uint8_t v : flat.rgb) CHECK(v == 0);
  CHECK_THROWS_AS(heatmap_image(Tensor<float>::zeros(Shape4(1, 2, 2, 2)), 4,
                                0.0, 1.0),
                  ConfigError);
}

TEST_CASE("flow wheel colors direction and leaves still pixels white") {
  Tensor<float> flow = Tensor<float>::zeros(Shape4(1, 2, 2, 2));
  flow.at(0, 0, 0, 1) = 2.0f;   // pure +x at max magnitude
  flow.at(0, 1, 1, 0) = -5.0f;  // pure -y, beyond max: saturates
  ImageU8 img = flow_wheel_image(flow, 2.0);
  CHECK(img.width == 2);
  CHECK(img.height == 2);
  auto px = [&](int y, int x, int c) {
    return img.rgb[(std::size_t(y) * 2 + x) * 3 + c];
  };
  // Zero flow: zero saturation, full value.
  CHECK(px(0, 0, 0) == 255);
  CHECK(px(0, 0, 1) == 255);
  CHECK(px(0, 0, 2) == 255);
  // +x and -y land a half-wheel apart, both fully saturated.
  const int hx[3] = {px(0, 1, 0), px(0, 1, 1), px(0, 1, 2)};
  const int hy[3] = {px(1, 0, 0), px(1, 0, 1), px(1, 0, 2)};
  CHECK((hx[0] == 0 || hx[1] == 0 || hx[2] == 0));
  CHECK((hy[0] == 0 || hy[1] == 0 || hy[2] == 0));
  CHECK((hx[0] != hy[0] || hx[1] != hy[1] || hx[2] != hy[2]));
  CHECK_THROWS_AS(flow_wheel_image(flow, 0.0), ConfigError);
}

TEST_CASE("report emission writes the full artifact set and a faithful csv") {
  VideoModel<float> model(tiny_config(), 601);
  wake_heads(model, 0.05, 602);
  Sequence<float> seq = tiny_sequence<float>(3, 603, true);

  SequenceCodingConfig cfg;
  cfg.intra_period = 0;
  cfg.lambda_ = 512.0;
  SequenceResult<float> res = code_sequence_adaptive(model, seq, cfg);

  const std::string dir = "test_report_out";
  std::filesystem::remove_all(dir);
  std::vector<std::string> files = emit_report(dir, res, 8.0);
  // summary + csv + four images per predicted frame
  REQUIRE(files.size() == 2 + 4 * 2);
  CHECK(files[0] == "summary.json");
  CHECK(files[1] == "frame_metrics.csv");
  CHECK(files[2] == "alpha_0001.png");
  CHECK(files[3] == "rate_motion_0001.png");
  CHECK(files[4] == "rate_inter_0001.png");
  CHECK(files[5] == "flow_0001.png");
  CHECK(files[6] == "alpha_0002.png");
  for (const auto& f : files)
    CHECK(std::filesystem::exists(dir + "/" + f));

  {
    std::ifstream in(dir + "/summary.json");
    nlohmann::json j = nlohmann::json::parse(in);
    CHECK(j.at("frames").get<int>() == 3);
    CHECK(j.at("predicted_frames").get<int>() == 2);
    CHECK(j.at("bpp").get<double>() == res.bpp);
    CHECK(j.at("psnr").get<double>() == res.psnr);
  }

  // The alpha map upsamples the patch grid to frame size.
  ImageU8 amap = read_png_rgb8(dir + "/alpha_0001.png");
  CHECK(amap.width == 64);
  CHECK(amap.height == 64);
  ImageU8 fimg = read_png_rgb8(dir + "/flow_0001.png");
  CHECK(fimg.width == 64);
  CHECK(fimg.height == 64);

  std::vector<FrameMetricsRow> rows =
      read_frame_metrics_csv(dir + "/frame_metrics.csv");
  REQUIRE(rows.size() == res.frames.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const FrameMetricsRow want = to_metrics_row(res.frames[i]);
    CHECK(rows[i].index == want.index);
    CHECK(rows[i].type == want.type);
    CHECK(rows[i].psnr == want.psnr);  // %.17g round-trips doubles exactly
    CHECK(rows[i].bpp == want.bpp);
    CHECK(rows[i].est_bpp == want.est_bpp);
    CHECK(rows[i].motion_bpp == want.motion_bpp);
    CHECK(rows[i].inter_bpp == want.inter_bpp);
    CHECK(rows[i].rd_cost == want.rd_cost);
    CHECK(rows[i].anchor_cost == want.anchor_cost);
    CHECK(rows[i].alpha_mean == want.alpha_mean);
    CHECK(rows[i].alpha_min == want.alpha_min);
    CHECK(rows[i].alpha_max == want.alpha_max);
  }
  CHECK(rows[0].type == "I");
  CHECK(rows[1].type == "P");
  std::filesystem::remove_all(dir);
}

TEST_CASE("frame metrics csv rejects missing and malformed files") {
  CHECK_THROWS_AS(read_frame_metrics_csv("no_such_dir/none.csv"), IoError);

  const std::string path = "test_bad_metrics.csv";
  auto write_text = [&](const std::string& text) {
    std::ofstream out(path);
    out << text;
  };
  write_text("wrong,header\n");
  CHECK_THROWS_AS(read_frame_metrics_csv(path), CorruptStreamError);
  write_text(std::string(kFrameCsvHeader) + "\n1,P,1,2,3\n");
  CHECK_THROWS_AS(read_frame_metrics_csv(path), CorruptStreamError);
  write_text(std::string(kFrameCsvHeader) +
             "\n1,P,x,2,3,4,5,6,7,8,9,10\n");
  CHECK_THROWS_AS(read_frame_metrics_csv(path), CorruptStreamError);
  write_text(std::string(kFrameCsvHeader) +
             "\n1,Q,1,2,3,4,5,6,7,8,9,10\n");
  CHECK_THROWS_AS(read_frame_metrics_csv(path), CorruptStreamError);
  write_text(std::string(kFrameCsvHeader) +
             "\n3,P,1,2,3,4,5,6,7,8,9,10\n");
  std::vector<FrameMetricsRow> rows = read_frame_metrics_csv(path);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].index == 3);
  CHECK(rows[0].alpha_max == 10.0);
  std::filesystem::remove(path);
}
