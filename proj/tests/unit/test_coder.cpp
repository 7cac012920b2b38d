#include <cmath>
#include <vector>

#include "acv/coder.hpp"
#include "acv/entropy.hpp"
#include "acv/nn.hpp"
#include "doctest.h"

using acv::ChannelBounds;
using acv::FactorizedPrior;
using acv::ParamStore;
using acv::Pcg32;
using acv::Shape4;
using acv::Tensor;

namespace {

Tensor<double> rounded_normal(Shape4 s, Pcg32& rng, double sd) {
  Tensor<double> t = Tensor<double>::zeros(s);
  acv::fill_normal(t, rng, 0.0, sd);
  return Tensor<double>::from_array(s, t.value().round());
}

}  // namespace

TEST_CASE("cumulative table quantization") {
  // uniform pmf over 4 bins splits the 16-bit total evenly
  auto cum = acv::detail::build_cum<double>({0.25, 0.25, 0.25, 0.25});
  CHECK(cum == std::vector<std::uint32_t>{0, 16384, 32768, 49152, 65536});

  // near-zero bins are forced to at least one count each
  auto tiny = acv::detail::build_cum<double>({1e-12, 1.0 - 2e-12, 1e-12});
  CHECK(tiny == std::vector<std::uint32_t>{0, 1, 65535, 65536});

  // heavy head keeps every tail bin codable
  std::vector<double> pmf(10, 1e-13);
  pmf[0] = 1.0 - 9e-13;
  auto cum2 = acv::detail::build_cum<double>(pmf);
  for (std::size_t j = 0; j + 1 < cum2.size(); ++j)
    CHECK(cum2[j + 1] > cum2[j]);
  CHECK(cum2.back() == 65536);

  // negative noise in a pmf (float cancellation) is treated as zero mass
  auto neg = acv::detail::build_cum<double>({0.5, -1e-9, 0.5});
  CHECK(neg[2] >= neg[1] + 1);

  // symbol lookup: cum[j] <= target < cum[j+1]
  CHECK(acv::detail::find_symbol(cum, 0) == 0);
  CHECK(acv::detail::find_symbol(cum, 16383) == 0);
  CHECK(acv::detail::find_symbol(cum, 16384) == 1);
  CHECK(acv::detail::find_symbol(cum, 65535) == 3);
}

TEST_CASE("factorized round-trip is exact") {
  ParamStore<double> store;
  Pcg32 rng(77);
  FactorizedPrior<double> prior(store, "p", 4, rng);
  Tensor<double> y = rounded_normal(Shape4(2, 4, 8, 8), rng, 3.0);

  auto enc = acv::encode_factorized(y, prior);
  CHECK(enc.body.size() == 4 * 4 + enc.payload_bytes);
  Tensor<double> back = acv::decode_factorized(enc.body.data(),
                                               enc.body.size(),
                                               y.shape(), prior);
  CHECK((back.value() - y.value()).abs().maxCoeff() == 0.0);
}

TEST_CASE("factorized stream is a pure function of parameters") {
  auto make_body = [] {
    ParamStore<double> store;
    Pcg32 rng(123);
    FactorizedPrior<double> prior(store, "p", 3, rng);
    Pcg32 data_rng(55);
    Tensor<double> y = rounded_normal(Shape4(1, 3, 6, 6), data_rng, 2.0);
    return acv::encode_factorized(y, prior).body;
  };
  CHECK(make_body() == make_body());
}

TEST_CASE("gaussian round-trip is exact") {
  Pcg32 rng(31);
  Shape4 s(1, 6, 10, 10);
  Tensor<double> mean = Tensor<double>::zeros(s);
  Tensor<double> raw = Tensor<double>::zeros(s);
  acv::fill_normal(mean, rng, 0.0, 2.0);
  acv::fill_uniform(raw, rng, -2.0, 2.0);
  Tensor<double> sigma = acv::scale_from_raw(raw);
  Tensor<double> noise = Tensor<double>::zeros(s);
  acv::fill_normal(noise, rng, 0.0, 1.0);
  Tensor<double> y = Tensor<double>::from_array(
      s, (mean.value() + sigma.value() * noise.value()).round());

  auto enc = acv::encode_gaussian(y, mean, sigma);
  CHECK(enc.body.size() == 6 * 4 + enc.payload_bytes);
  Tensor<double> back =
      acv::decode_gaussian(enc.body.data(), enc.body.size(), mean, sigma);
  CHECK((back.value() - y.value()).abs().maxCoeff() == 0.0);
}

TEST_CASE("empty latent round-trips to empty") {
  ParamStore<double> store;
  Pcg32 rng(3);
  FactorizedPrior<double> prior(store, "p", 2, rng);
  Tensor<double> y = Tensor<double>::zeros(Shape4(0, 2, 4, 4));
  auto enc = acv::encode_factorized(y, prior);
  CHECK(enc.payload_bytes == 0);
  CHECK(enc.body.size() == 2 * 4);  // bounds only
  Tensor<double> back = acv::decode_factorized(enc.body.data(),
                                               enc.body.size(),
                                               y.shape(), prior);
  CHECK(back.shape() == y.shape());
  CHECK(back.size() == 0);
}

TEST_CASE("measured bytes track the clamped-likelihood estimate") {
  ParamStore<double> store;
  Pcg32 rng(99);
  FactorizedPrior<double> prior(store, "p", 8, rng);
  // ~100k symbols with a mix of typical and rare values
  Tensor<double> y = rounded_normal(Shape4(2, 8, 80, 80), rng, 2.5);
  auto enc = acv::encode_factorized(y, prior);
  const double measured_bits = double(enc.payload_bytes) * 8.0;
  CHECK(measured_bits <= enc.estimated_bits * 1.01 + 32.0 * 8.0);
  CHECK(measured_bits >= enc.estimated_bits * 0.999 - 64.0);

  // the tensor-side estimate agrees with the coder's own accounting
  auto est = acv::rate_bits(prior.likelihood(y));
  CHECK(est.total_bits.item() ==
        doctest::Approx(enc.estimated_bits).epsilon(1e-9));

  // gaussian side, same contract
  Shape4 s(1, 4, 64, 64);
  Tensor<double> mean = Tensor<double>::zeros(s);
  Tensor<double> raw = Tensor<double>::zeros(s);
  acv::fill_normal(mean, rng, 0.0, 1.0);
  acv::fill_uniform(raw, rng, -2.0, 1.0);
  Tensor<double> sigma = acv::scale_from_raw(raw);
  Tensor<double> noise = Tensor<double>::zeros(s);
  acv::fill_normal(noise, rng, 0.0, 1.0);
  Tensor<double> yg = Tensor<double>::from_array(
      s, (mean.value() + sigma.value() * noise.value()).round());
  auto genc = acv::encode_gaussian(yg, mean, sigma);
  const double gmeasured = double(genc.payload_bytes) * 8.0;
  CHECK(gmeasured <= genc.estimated_bits * 1.01 + 32.0 * 8.0);
  CHECK(gmeasured >= genc.estimated_bits * 0.999 - 64.0);
  auto gest = acv::rate_bits(acv::gaussian_likelihood(yg, mean, sigma));
  CHECK(gest.total_bits.item() ==
        doctest::Approx(genc.estimated_bits).epsilon(1e-6));
}

TEST_CASE("corrupt factorized streams are rejected") {
  ParamStore<double> store;
  Pcg32 rng(13);
  FactorizedPrior<double> prior(store, "p", 2, rng);
  Pcg32 data_rng(17);
  Tensor<double> y = rounded_normal(Shape4(1, 2, 16, 16), data_rng, 2.0);
  auto enc = acv::encode_factorized(y, prior);
  REQUIRE(enc.payload_bytes > 40);

  SUBCASE("truncated bounds") {
    CHECK_THROWS_AS(
        acv::decode_factorized(enc.body.data(), 3, y.shape(), prior),
        acv::CorruptStreamError);
  }
  SUBCASE("truncated payload") {
    // keep the bounds and a valid preamble but drop most of the payload
    CHECK_THROWS_AS(acv::decode_factorized(enc.body.data(),
                                           2 * 4 + 20, y.shape(), prior),
                    acv::CorruptStreamError);
  }
  SUBCASE("inverted bounds") {
    auto bad = enc.body;
    bad[0] = 9;
    bad[1] = 0;
    bad[2] = 2;
    bad[3] = 0;  // lo=9 > hi=2
    CHECK_THROWS_AS(
        acv::decode_factorized(bad.data(), bad.size(), y.shape(), prior),
        acv::CorruptStreamError);
  }
  SUBCASE("virtual tail symbol") {
    // hand-encode the below-range tail bin for channel 0; a well-formed
    // encoder can never emit it, so decoding must fail loudly
    std::vector<ChannelBounds> bounds{{0, 1}, {0, 1}};
    auto pmfs = acv::detail::factorized_pmfs(prior, bounds);
    auto cum = acv::detail::build_cum(pmfs[0]);
    acv::RangeEncoder bad_enc;
    bad_enc.encode(cum[0], cum[1] - cum[0], acv::kCdfTotal);
    auto payload = bad_enc.finish();
    std::vector<std::uint8_t> body;
    for (int i = 0; i < 2; ++i) {
      acv::detail::put_i16(body, bounds[std::size_t(i)].lo);
      acv::detail::put_i16(body, bounds[std::size_t(i)].hi);
    }
    body.insert(body.end(), payload.begin(), payload.end());
    CHECK_THROWS_AS(acv::decode_factorized(body.data(), body.size(),
                                           Shape4(1, 2, 1, 1), prior),
                    acv::CorruptStreamError);
  }
}

TEST_CASE("non-integer latents are rejected at encode time") {
  ParamStore<double> store;
  Pcg32 rng(1);
  FactorizedPrior<double> prior(store, "p", 1, rng);
  Tensor<double> y = Tensor<double>::full(Shape4(1, 1, 2, 2), 0.3);
  CHECK_THROWS_AS(acv::encode_factorized(y, prior), acv::ContractError);
}

TEST_CASE("constant channels and shape contracts") {
  ParamStore<double> store;
  Pcg32 rng(41);
  FactorizedPrior<double> prior(store, "p", 3, rng);
  // one channel all zeros, one all -2, one mixed
  Tensor<double> y = Tensor<double>::zeros(Shape4(1, 3, 4, 4));
  for (int i = 0; i < 16; ++i) {
    y.mutable_value()[16 + i] = -2.0;
    y.mutable_value()[32 + i] = (i % 5) - 2;
  }
  auto enc = acv::encode_factorized(y, prior);
  Tensor<double> back = acv::decode_factorized(enc.body.data(),
                                               enc.body.size(),
                                               y.shape(), prior);
  CHECK((back.value() - y.value()).abs().maxCoeff() == 0.0);

  // channel-count mismatch with the model is a configuration error
  CHECK_THROWS_AS(
      acv::encode_factorized(Tensor<double>::zeros(Shape4(1, 2, 4, 4)), prior),
      acv::ConfigError);
}
