#include <cmath>

#include "acv/alpha.hpp"
#include "acv/codecs.hpp"
#include "acv/motion_nets.hpp"
#include "doctest.h"
#include "support/grad_check.hpp"

using namespace acv;
using acv::testing::grad_check;

namespace {

Tensor<double> random_tensor(Shape4 s, std::uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
  Tensor<double> t = Tensor<double>::zeros(s);
  Pcg32 rng(seed);
  fill_uniform(t, rng, lo, hi);
  return t;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  return (a.value() - b.value()).abs().maxCoeff();
}

}  // namespace

TEST_CASE("sum_channels adds over the channel dim") {
  Tensor<double> x = Tensor<double>::from(
      Shape4(1, 3, 1, 2), {1.0, 2.0, 10.0, 20.0, 100.0, 200.0});
  Tensor<double> y = sum_channels(x);
  CHECK(y.shape() == Shape4(1, 1, 1, 2));
  CHECK(y.value()[0] == 111.0);
  CHECK(y.value()[1] == 222.0);

  auto xr = random_tensor(Shape4(2, 4, 3, 5), 11);
  auto w = random_tensor(Shape4(2, 1, 3, 5), 12);
  auto loss = [&] { return sum(mul(sum_channels(xr), w)); };
  CHECK(grad_check(loss, {xr}) < 1e-8);
}

TEST_CASE("zero_upsample scatters onto a strided grid") {
  Tensor<double> x =
      Tensor<double>::from(Shape4(1, 1, 2, 2), {1.0, 2.0, 3.0, 4.0});
  Tensor<double> y = zero_upsample(x, 2, 3);
  CHECK(y.shape() == Shape4(1, 1, 4, 6));
  const auto& v = y.value();
  CHECK(v[0 * 6 + 0] == 1.0);
  CHECK(v[0 * 6 + 3] == 2.0);
  CHECK(v[2 * 6 + 0] == 3.0);
  CHECK(v[2 * 6 + 3] == 4.0);
  int nonzero = 0;
  for (std::int64_t i = 0; i < v.size(); ++i) nonzero += v[i] != 0.0;
  CHECK(nonzero == 4);
  CHECK(v.sum() == 10.0);

  auto xr = random_tensor(Shape4(1, 2, 3, 4), 21);
  auto w = random_tensor(Shape4(1, 2, 6, 8), 22);
  auto loss = [&] { return sum(mul(zero_upsample(xr, 2, 2), w)); };
  CHECK(grad_check(loss, {xr}) < 1e-8);
}

TEST_CASE("alpha grid helpers") {
  CHECK(alpha_grid_shape(64, 128, 16) == Shape4(1, 1, 4, 8));
  CHECK_THROWS_AS(alpha_grid_shape(60, 64, 16), ConfigError);
  CHECK_THROWS_AS(alpha_grid_shape(64, 65, 16), ConfigError);

  Tensor<double> a = alpha_uniform(-0.5, 64, 64, 16);
  CHECK(a.shape() == Shape4(1, 1, 4, 4));
  CHECK(a.value().minCoeff() == -0.5);
  CHECK(a.value().maxCoeff() == -0.5);
  CHECK_THROWS_AS(alpha_uniform(1.5, 64, 64, 16), ContractError);
  CHECK_THROWS_AS(alpha_uniform(-1.01, 64, 64, 16), ContractError);
}

TEST_CASE("random alpha stays strictly inside (-1,1) with near-zero mean") {
  Pcg32 rng(77);
  // 320x320 patches = 102400 draws; the mean of tanh(N(0,1)) is 0
  Tensor<double> a = alpha_random<double>(5120, 5120, 16, rng);
  CHECK(a.value().minCoeff() > -1.0);
  CHECK(a.value().maxCoeff() < 1.0);
  CHECK(std::abs(a.value().mean()) < 0.01);

  Pcg32 r1(5), r2(5), r3(6);
  Tensor<double> s1 = alpha_random<double>(64, 64, 16, r1);
  Tensor<double> s2 = alpha_random<double>(64, 64, 16, r2);
  Tensor<double> s3 = alpha_random<double>(64, 64, 16, r3);
  CHECK(max_abs_diff(s1, s2) == 0.0);
  CHECK(max_abs_diff(s1, s3) > 0.0);
}

TEST_CASE("scale_alpha replicates patches and block-averages back") {
  auto grid = random_tensor(Shape4(1, 1, 2, 3), 31);
  Tensor<double> up = scale_alpha(grid, 8, 12);
  CHECK(up.shape() == Shape4(1, 1, 8, 12));
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 12; ++x)
      CHECK(up.value()[y * 12 + x] == grid.value()[(y / 4) * 3 + x / 4]);
  Tensor<double> back = avg_pool(up, 4);
  CHECK(max_abs_diff(back, grid) < 1e-15);
  // identity when the target already matches
  CHECK(max_abs_diff(scale_alpha(grid, 2, 3), grid) == 0.0);
}

TEST_CASE("sft layer is the identity at init") {
  ParamStore<double> store;
  Pcg32 rng(41);
  SftLayer<double> sft(store, "sft", 3, 4, 5, rng);
  auto f = random_tensor(Shape4(1, 4, 8, 8), 42);
  auto a = random_tensor(Shape4(1, 1, 8, 8), 43);
  auto comp = random_tensor(Shape4(1, 3, 8, 8), 44, 0.0, 1.0);
  Tensor<double> out = sft(f, a, comp);
  CHECK(out.shape() == f.shape());
  CHECK(max_abs_diff(out, f) == 0.0);  // zero-init head: gamma=1, beta=0

  CHECK_THROWS_AS(sft(f, random_tensor(Shape4(1, 1, 4, 4), 1), comp),
                  ConfigError);
  CHECK_THROWS_AS(sft(random_tensor(Shape4(1, 2, 8, 8), 2), a, comp),
                  ConfigError);
}

TEST_CASE("sft modulation carries gradients to features, alpha, companion") {
  ParamStore<double> store;
  Pcg32 rng(51);
  SftLayer<double> sft(store, "sft", 2, 3, 4, rng);
  // wake the zero head so the layer actually modulates
  fill_uniform(store.get("sft.head.w"), rng, -0.3, 0.3);
  fill_uniform(store.get("sft.head.b"), rng, -0.1, 0.1);

  auto f = random_tensor(Shape4(1, 3, 6, 6), 52);
  auto a = random_tensor(Shape4(1, 1, 6, 6), 53);
  auto comp = random_tensor(Shape4(1, 2, 6, 6), 54);
  CHECK(max_abs_diff(sft(f, a, comp), f) > 0.0);

  auto w = random_tensor(Shape4(1, 3, 6, 6), 55);
  auto loss = [&] { return sum(mul(sft(f, a, comp), w)); };
  CHECK(grad_check(loss, {f, a, comp, store.get("sft.c1.w")}) < 1e-6);
}

TEST_CASE("alpha extractor lands on the patch grid inside (-1,1)") {
  ParamStore<double> store;
  Pcg32 rng(61);
  AlphaExtractor<double> ex(store, "ex", 4, 5, rng);
  auto h = random_tensor(Shape4(1, 4, 2, 3), 62, -3.0, 3.0);
  Tensor<double> a = ex(h, 8, 12);
  CHECK(a.shape() == Shape4(1, 1, 8, 12));
  CHECK(a.value().minCoeff() > -1.0);
  CHECK(a.value().maxCoeff() < 1.0);
  CHECK(a.value().abs().maxCoeff() > 0.0);  // not stuck at zero
  CHECK(max_abs_diff(ex(h, 8, 12), a) == 0.0);  // deterministic
}

TEST_CASE("flow net is exactly zero at init and bounded after that") {
  ParamStore<double> store;
  Pcg32 rng(71);
  FlowNet<double> fn(store, "flow", 6, 16.0, rng);
  auto x = random_tensor(Shape4(1, 3, 16, 16), 72, 0.0, 1.0);
  auto ref = random_tensor(Shape4(1, 3, 16, 16), 73, 0.0, 1.0);
  Tensor<double> flow = fn(x, ref);
  CHECK(flow.shape() == Shape4(1, 2, 16, 16));
  CHECK(flow.value().abs().maxCoeff() == 0.0);

  // crank the heads: output moves but never escapes the soft bound
  fill_uniform(store.get("flow.coarse_head.w"), rng, -50.0, 50.0);
  fill_uniform(store.get("flow.fine_head.w"), rng, -50.0, 50.0);
  fill_uniform(store.get("flow.fine_head.b"), rng, -5.0, 5.0);
  Tensor<double> big = fn(x, ref);
  CHECK(big.value().abs().maxCoeff() > 0.0);
  CHECK(big.value().abs().maxCoeff() <= 16.0);

  CHECK_THROWS_AS(fn(random_tensor(Shape4(1, 3, 15, 16), 1, 0.0, 1.0),
                     random_tensor(Shape4(1, 3, 15, 16), 2, 0.0, 1.0)),
                  ConfigError);
  CHECK_THROWS_AS(fn(x, random_tensor(Shape4(1, 3, 16, 32), 3, 0.0, 1.0)),
                  ConfigError);
}

TEST_CASE("mc net at init is clamp(warped)") {
  ParamStore<double> store;
  Pcg32 rng(81);
  McNet<double> mc(store, "mc", 4, rng);
  auto warped = random_tensor(Shape4(1, 3, 8, 8), 82, -0.2, 1.2);
  auto ref = random_tensor(Shape4(1, 3, 8, 8), 83, 0.0, 1.0);
  auto flow = random_tensor(Shape4(1, 2, 8, 8), 84, -2.0, 2.0);
  Tensor<double> out = mc(warped, ref, flow);
  CHECK(out.shape() == warped.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) {
    double expect = std::min(1.0, std::max(0.0, warped.value()[i]));
    CHECK(out.value()[i] == expect);
  }

  fill_uniform(store.get("mc.head.w"), rng, -0.5, 0.5);
  Tensor<double> moved = mc(warped, ref, flow);
  CHECK(moved.value().minCoeff() >= 0.0);
  CHECK(moved.value().maxCoeff() <= 1.0);
  CHECK(max_abs_diff(moved, out) > 0.0);
}

TEST_CASE("bit attribution: pooled for the main latent") {
  // patch 16 over a x16 latent: factor equal, each latent cell is one patch
  Tensor<double> bits = Tensor<double>::zeros(Shape4(1, 3, 4, 4));
  Pcg32 rng(91);
  for (std::int64_t i = 0; i < bits.size(); ++i)
    bits.mutable_value()[i] = double(rng.below(9));
  Tensor<double> g = attribute_bits_to_patches(bits, 16, 16);
  CHECK(g.shape() == Shape4(1, 1, 4, 4));
  for (int i = 0; i < 16; ++i) {
    double want = bits.value()[i] + bits.value()[16 + i] + bits.value()[32 + i];
    CHECK(g.value()[i] == want);
  }
  CHECK(g.value().sum() == bits.value().sum());  // integer-exact

  // patch 32 over a x16 latent: 2x2 latent cells pool into one patch
  Tensor<double> ones = Tensor<double>::full(Shape4(1, 2, 4, 4), 1.0);
  Tensor<double> p32 = attribute_bits_to_patches(ones, 32, 16);
  CHECK(p32.shape() == Shape4(1, 1, 2, 2));
  CHECK(p32.value().minCoeff() == 8.0);
  CHECK(p32.value().maxCoeff() == 8.0);
}

TEST_CASE("bit attribution: scattered for the hyper latent") {
  // patch 16 under a x64 latent: each hyper cell anchors one patch in 4x4
  Tensor<double> bits = Tensor<double>::from(
      Shape4(1, 2, 2, 2), {1.0, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0});
  Tensor<double> g = attribute_bits_to_patches(bits, 16, 64);
  CHECK(g.shape() == Shape4(1, 1, 8, 8));
  CHECK(g.value()[0 * 8 + 0] == 11.0);
  CHECK(g.value()[0 * 8 + 4] == 22.0);
  CHECK(g.value()[4 * 8 + 0] == 33.0);
  CHECK(g.value()[4 * 8 + 4] == 44.0);
  CHECK(g.value().sum() == bits.value().sum());
  int nonzero = 0;
  for (std::int64_t i = 0; i < g.size(); ++i) nonzero += g.value()[i] != 0.0;
  CHECK(nonzero == 4);

  CHECK_THROWS_AS(attribute_bits_to_patches(bits, 24, 16), ConfigError);

  auto br = random_tensor(Shape4(1, 2, 2, 2), 92, 0.0, 4.0);
  auto w = random_tensor(Shape4(1, 1, 8, 8), 93);
  auto loss = [&] { return sum(mul(attribute_bits_to_patches(br, 16, 64), w)); };
  CHECK(grad_check(loss, {br}) < 1e-8);
}
