#include <cmath>

#include "acv/entropy.hpp"
#include "acv/nn.hpp"
#include "doctest.h"
#include "support/grad_check.hpp"

using acv::CodingCtx;
using acv::FactorizedPrior;
using acv::OffsetStore;
using acv::ParamStore;
using acv::Pcg32;
using acv::QuantMode;
using acv::Shape4;
using acv::Tape;
using acv::Tensor;

TEST_CASE("param store create/get/duplicate contracts") {
  ParamStore<double> store;
  Tensor<double>& w = store.create("enc.c1.w", Shape4(8, 3, 3, 3));
  CHECK(w.shape() == Shape4(8, 3, 3, 3));
  CHECK(w.requires_grad());
  CHECK(store.has("enc.c1.w"));
  CHECK(!store.has("enc.c1.b"));
  CHECK_THROWS_AS(store.create("enc.c1.w", Shape4(1, 1, 1, 1)),
                  acv::ContractError);
  CHECK_THROWS_AS(store.get("nope"), acv::ContractError);
  store.create("enc.c1.b", Shape4(1, 8, 1, 1));
  CHECK(store.size() == 2);
  CHECK(store.element_count() == 8 * 3 * 3 * 3 + 8);

  // handles share storage with the store
  w.mutable_value()[0] = 7.0;
  CHECK(store.get("enc.c1.w").value()[0] == 7.0);
}

TEST_CASE("conv/deconv layers: shapes, zero-init identity") {
  ParamStore<double> store;
  Pcg32 rng(11);
  acv::Conv<double> down(store, "down", 3, 16, 3, 2, 1, rng);
  acv::Deconv<double> up(store, "up", 16, 3, 4, 2, 1, rng);
  Tensor<double> x = Tensor<double>::zeros(Shape4(1, 3, 16, 16));
  acv::fill_uniform(x, rng, -1.0, 1.0);
  Tensor<double> h = down(x);
  CHECK(h.shape() == Shape4(1, 16, 8, 8));
  CHECK(up(h).shape() == Shape4(1, 3, 16, 16));

  acv::Conv<double> zeroed(store, "zeroed", 3, 4, 3, 1, 1, rng, true);
  Tensor<double> z = zeroed(x);
  CHECK(z.value().abs().maxCoeff() == 0.0);
}

TEST_CASE("quantize round mode: nearest integer, detached") {
  Tensor<double> x = Tensor<double>::from(
      Shape4(1, 1, 2, 4), {0.3, -0.3, 1.5, -1.5, 2.49, -0.5, 1e4, 0.0});
  CodingCtx<double> ctx;
  ctx.mode = QuantMode::kRound;
  Tape<double> tape;
  x.set_requires_grad(true);
  Tensor<double> q = acv::quantize(x, ctx);
  CHECK(q.value()[0] == 0.0);
  CHECK(q.value()[1] == 0.0);
  CHECK(q.value()[2] == 2.0);   // half rounds up
  CHECK(q.value()[3] == -1.0);  // half rounds up (toward +inf)
  CHECK(q.value()[4] == 2.0);
  CHECK(q.value()[5] == 0.0);
  CHECK(q.value()[6] == 1e4);
  CHECK(q.value()[7] == 0.0);
  CHECK(!q.requires_grad());
}

TEST_CASE("quantize noise mode: bounded perturbation, needs rng and tape") {
  Tensor<double> x = Tensor<double>::zeros(Shape4(2, 3, 5, 7));
  Pcg32 rng(5);
  acv::fill_uniform(x, rng, -4.0, 4.0);
  CodingCtx<double> ctx;
  ctx.mode = QuantMode::kNoise;
  ctx.rng = &rng;

  {
    Tape<double> tape;
    x.set_requires_grad(true);
    Tensor<double> q = acv::quantize(x, ctx);
    // perturbation stays within half a step of the input, always
    CHECK((q.value() - x.value()).abs().maxCoeff() < 0.5);
    CHECK(q.requires_grad());
  }
  // contract: no tape or no rng is a programming error
  CHECK_THROWS_AS(acv::quantize(x, ctx), acv::ContractError);
  Tape<double> tape;
  ctx.rng = nullptr;
  CHECK_THROWS_AS(acv::quantize(x, ctx), acv::ContractError);
}

TEST_CASE("quantize ste mode: rounded values, identity gradient") {
  Tensor<double> x = Tensor<double>::from(Shape4(1, 1, 1, 5),
                                          {0.3, -0.7, 1.5, 2.2, -3.9});
  CodingCtx<double> ctx;
  ctx.mode = QuantMode::kSte;
  Tape<double> tape;
  x.set_requires_grad(true);
  Tensor<double> q = acv::quantize(x, ctx);
  CHECK(q.value()[0] == 0.0);
  CHECK(q.value()[1] == -1.0);
  CHECK(q.value()[2] == 2.0);
  CHECK(q.value()[3] == 2.0);
  CHECK(q.value()[4] == -4.0);
  Tensor<double> loss = acv::sum(q);
  tape.backward(loss);
  // gradient of sum(quantize(x)) with respect to x is all ones
  for (std::int64_t i = 0; i < x.size(); ++i) CHECK(x.grad()[i] == 1.0);
}

TEST_CASE("offset store records and replays identically") {
  Tensor<double> x = Tensor<double>::zeros(Shape4(1, 2, 3, 3));
  Pcg32 rng(9);
  acv::fill_uniform(x, rng, -2.0, 2.0);
  OffsetStore<double> store;
  CodingCtx<double> ctx;
  ctx.mode = QuantMode::kNoise;
  ctx.rng = &rng;
  ctx.store = &store;

  acv::ArrayX<double> first, second;
  {
    Tape<double> tape;
    x.set_requires_grad(true);
    store.start_recording();
    first = acv::quantize(x, ctx).value();
    second = acv::quantize(x, ctx).value();
    CHECK(store.seqs.size() == 2);
    CHECK((first - second).abs().maxCoeff() > 0.0);  // fresh draws differ
  }
  // replay without a tape: values must match the recorded pass exactly
  store.start_replay();
  CHECK((acv::quantize(x, ctx).value() - first).abs().maxCoeff() == 0.0);
  CHECK((acv::quantize(x, ctx).value() - second).abs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(acv::quantize(x, ctx), acv::ContractError);  // exhausted

  // replayed offsets are constants: input changes pass straight through
  store.start_replay();
  Tensor<double> shifted = acv::offset(x, 0.25);
  CHECK((acv::quantize(shifted, ctx).value() - (first + 0.25))
            .abs()
            .maxCoeff() < 1e-15);

  // length mismatch is a contract violation
  store.start_replay();
  Tensor<double> wrong = Tensor<double>::zeros(Shape4(1, 1, 2, 2));
  CHECK_THROWS_AS(acv::quantize(wrong, ctx), acv::ContractError);
}

TEST_CASE("rate pins: half -> 1 bit, one -> 0 bits, floor -> 16 bits") {
  Tensor<double> lik = Tensor<double>::from(Shape4(1, 1, 1, 4),
                                            {0.5, 1.0, 1e-9, 0.25});
  auto r = acv::rate_bits(lik);
  CHECK(r.per_element_bits.value()[0] == 1.0);
  CHECK(r.per_element_bits.value()[1] == 0.0);
  CHECK(r.per_element_bits.value()[2] == 16.0);  // clamped at 2^-16
  CHECK(r.per_element_bits.value()[3] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(r.total_bits.item() == doctest::Approx(19.0).epsilon(1e-12));

  // uniform over 256 values -> 8 bits per element
  Tensor<double> u = Tensor<double>::full(Shape4(1, 1, 8, 8), 1.0 / 256.0);
  CHECK(acv::rate_bits(u).per_element_bits.value()[0] ==
        doctest::Approx(8.0).epsilon(1e-12));

  // monotone: a likelier symbol never costs more
  Tensor<double> probs = Tensor<double>::from(
      Shape4(1, 1, 1, 6), {1e-9, 1e-5, 0.01, 0.3, 0.6, 0.999});
  auto bits = acv::bits_from_likelihood(probs);
  for (int i = 1; i < 6; ++i)
    CHECK(bits.value()[i] <= bits.value()[i - 1]);
}

TEST_CASE("unit gaussian: integer 0 costs about 1.3849 bits") {
  // independent oracle: p = erf(0.5 / sqrt(2)), bits = -log2(p)
  const double p_ref = std::erf(0.5 / std::sqrt(2.0));
  const double bits_ref = -std::log2(p_ref);
  CHECK(bits_ref == doctest::Approx(1.3848665).epsilon(1e-6));

  Tensor<double> y = Tensor<double>::zeros(Shape4(1, 1, 1, 1));
  Tensor<double> mean = Tensor<double>::zeros(Shape4(1, 1, 1, 1));
  Tensor<double> sigma = Tensor<double>::full(Shape4(1, 1, 1, 1), 1.0);
  Tensor<double> lik = acv::gaussian_likelihood(y, mean, sigma);
  CHECK(lik.item() == doctest::Approx(p_ref).epsilon(1e-12));
  CHECK(acv::rate_bits(lik).total_bits.item() ==
        doctest::Approx(bits_ref).epsilon(1e-12));
}

TEST_CASE("gaussian tensor path matches its scalar twin exactly") {
  Pcg32 rng(21);
  Shape4 s(2, 3, 4, 5);
  Tensor<double> y = Tensor<double>::zeros(s);
  Tensor<double> mean = Tensor<double>::zeros(s);
  Tensor<double> raw = Tensor<double>::zeros(s);
  acv::fill_normal(y, rng, 0.0, 3.0);
  y = Tensor<double>::from_array(s, y.value().round());
  acv::fill_normal(mean, rng, 0.0, 2.0);
  acv::fill_uniform(raw, rng, -3.0, 3.0);
  Tensor<double> sigma = acv::scale_from_raw(raw);
  CHECK(sigma.value().minCoeff() > acv::kScaleMin);

  Tensor<double> lik = acv::gaussian_likelihood(y, mean, sigma);
  for (std::int64_t i = 0; i < lik.size(); ++i) {
    double ref = acv::gaussian_likelihood_scalar(y.value()[i], mean.value()[i],
                                                 sigma.value()[i]);
    CHECK(lik.value()[i] == ref);
  }

  // same check in 32-bit, where arithmetic order matters most
  Tensor<float> yf = y.template cast<float>();
  Tensor<float> mf = mean.template cast<float>();
  Tensor<float> sf = sigma.template cast<float>();
  Tensor<float> likf = acv::gaussian_likelihood(yf, mf, sf);
  for (std::int64_t i = 0; i < likf.size(); ++i) {
    float ref = acv::gaussian_likelihood_scalar(yf.value()[i], mf.value()[i],
                                                sf.value()[i]);
    CHECK(likf.value()[i] == ref);
  }
}

TEST_CASE("factorized prior: valid, monotone, near-unit total mass") {
  ParamStore<double> store;
  Pcg32 rng(33);
  FactorizedPrior<double> prior(store, "prior", 5, rng);
  CHECK(prior.channels() == 5);
  CHECK(store.size() == 4 * 2 + 3);  // H,b per stage + 3 gates

  // monotone nondecreasing CDF per channel, values inside (0,1)
  const int m = 101;
  Tensor<double> pts = Tensor<double>::zeros(Shape4(5, 1, 1, m));
  for (int c = 0; c < 5; ++c)
    for (int i = 0; i < m; ++i)
      pts.mutable_value()[c * m + i] = -25.0 + 0.5 * i;
  Tensor<double> cdf = prior.cdf(pts);
  for (int c = 0; c < 5; ++c)
    for (int i = 0; i < m; ++i) {
      double v = cdf.value()[c * m + i];
      CHECK(v > 0.0);
      CHECK(v < 1.0);
      if (i > 0) CHECK(v >= cdf.value()[c * m + i - 1]);
    }

  // pmf over a wide integer support captures nearly all mass
  for (int c = 0; c < 5; ++c) {
    double total = 0.0;
    for (int k = -120; k <= 120; ++k)
      total += prior.cdf_scalar(c, double(k) + 0.5) -
               prior.cdf_scalar(c, double(k) - 0.5);
    CHECK(total > 0.995);
    CHECK(total < 1.0 + 1e-9);
  }

  // scalar evaluations agree with the batched call (grid point 52 is x = 1.0)
  for (int c = 0; c < 5; ++c)
    CHECK(prior.cdf_scalar(c, 1.0) ==
          doctest::Approx(cdf.value()[c * m + 52]).epsilon(1e-12));

  // shape contract
  CHECK_THROWS_AS(prior.likelihood(Tensor<double>::zeros(Shape4(1, 4, 2, 2))),
                  acv::ConfigError);
}

TEST_CASE("factorized prior likelihood matches per-point cdf differences") {
  ParamStore<double> store;
  Pcg32 rng(7);
  FactorizedPrior<double> prior(store, "p", 3, rng);
  Shape4 s(2, 3, 2, 2);
  Tensor<double> y = Tensor<double>::zeros(s);
  acv::fill_normal(y, rng, 0.0, 2.0);
  y = Tensor<double>::from_array(s, y.value().round());
  Tensor<double> lik = prior.likelihood(y);
  CHECK(lik.shape() == s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int yy = 0; yy < s.h; ++yy)
        for (int xx = 0; xx < s.w; ++xx) {
          double v = y.at(n, c, yy, xx);
          double ref = prior.cdf_scalar(c, v + 0.5) -
                       prior.cdf_scalar(c, v - 0.5);
          CHECK(lik.at(n, c, yy, xx) == doctest::Approx(ref).epsilon(1e-12));
        }
}

TEST_CASE("gradients flow through rate estimates (frozen offsets)") {
  ParamStore<double> store;
  Pcg32 rng(101);
  FactorizedPrior<double> prior(store, "p", 2, rng);
  Shape4 s(1, 2, 3, 3);
  Tensor<double> x = Tensor<double>::zeros(s);
  acv::fill_normal(x, rng, 0.0, 1.5);

  OffsetStore<double> offsets;
  CodingCtx<double> ctx;
  ctx.mode = QuantMode::kNoise;
  ctx.rng = &rng;
  ctx.store = &offsets;

  // record one noisy pass, then check gradients under replay
  {
    Tape<double> tape;
    x.set_requires_grad(true);
    offsets.start_recording();
    (void)acv::rate_bits(acv::quantize(x, ctx));
  }
  std::vector<Tensor<double>> inputs = {x, store.get("p.H1"),
                                        store.get("p.b0"), store.get("p.a0")};
  auto loss_fn = [&]() {
    offsets.start_replay();
    return acv::rate_bits(acv::quantize(x, ctx)).total_bits;
  };
  double err = acv::testing::grad_check(loss_fn, inputs);
  CHECK(err < 1e-6);

  // same through the gaussian model with ste offsets
  Tensor<double> mean = Tensor<double>::zeros(s);
  Tensor<double> raw = Tensor<double>::zeros(s);
  acv::fill_normal(mean, rng, 0.0, 1.0);
  acv::fill_uniform(raw, rng, -1.0, 1.0);
  OffsetStore<double> ste_offsets;
  CodingCtx<double> ste_ctx;
  ste_ctx.mode = QuantMode::kSte;
  ste_ctx.store = &ste_offsets;
  {
    Tape<double> tape;
    ste_offsets.start_recording();
    (void)acv::quantize(x, ste_ctx);
  }
  auto gauss_fn = [&]() {
    ste_offsets.start_replay();
    Tensor<double> q = acv::quantize(x, ste_ctx);
    return acv::rate_bits(
               acv::gaussian_likelihood(q, mean, acv::scale_from_raw(raw)))
        .total_bits;
  };
  double gerr =
      acv::testing::grad_check(gauss_fn, {x, mean, raw});
  CHECK(gerr < 1e-6);
}
