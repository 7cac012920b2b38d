#ifndef ACV_ENTROPY_HPP_
#define ACV_ENTROPY_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "acv/nn.hpp"
#include "acv/ops.hpp"
#include "acv/rng.hpp"
#include "acv/tensor.hpp"

namespace acv {

// Likelihood floor: caps any symbol's cost at 16 bits and keeps every CDF bin
// representable at 16-bit coder precision.
inline constexpr double kLikelihoodFloor = 1.0 / 65536.0;
// Lower bound added to the softplus of the raw Gaussian scale head.
inline constexpr double kScaleMin = 0.11;

// Deterministic scalar rounding used for all quantization and table building:
// nearest integer, ties toward +inf.
template <typename S>
S round_half_up(S v) {
  return std::floor(v + S(0.5));
}

enum class QuantMode { kNoise, kRound, kSte };

// Records or replays per-call quantization offsets. Replay makes a stochastic
// (noise) or piecewise-constant (ste) forward pass a fixed smooth function of
// its inputs, which is what finite-difference checks and repeated objective
// evaluations need.
template <typename S>
struct OffsetStore {
  bool recording = true;
  std::vector<ArrayX<S>> seqs;
  std::size_t next = 0;

  void start_recording() {
    recording = true;
    seqs.clear();
    next = 0;
  }
  void start_replay() {
    recording = false;
    next = 0;
  }
};

template <typename S>
struct CodingCtx {
  QuantMode mode = QuantMode::kRound;
  Pcg32* rng = nullptr;             // required for fresh noise draws
  OffsetStore<S>* store = nullptr;  // optional capture/replay
  bool emit = false;                // write range-coded bytes (round mode only)
};

// noise: x + U(-0.5, 0.5); round: detached nearest integers; ste: rounded
// forward with identity gradient (implemented as x plus a constant offset).
template <typename S>
Tensor<S> quantize(const Tensor<S>& x, CodingCtx<S>& ctx) {
  ArrayX<S> off;
  const bool replaying = ctx.store != nullptr && !ctx.store->recording;
  if (replaying) {
    ACV_CHECK(ctx.store->next < ctx.store->seqs.size(),
              "quantize: offset replay exhausted at call ", ctx.store->next);
    off = ctx.store->seqs[ctx.store->next++];
    ACV_CHECK(off.size() == x.size(),
              "quantize: replayed offset length ", off.size(),
              " for tensor of ", x.size());
  } else {
    switch (ctx.mode) {
      case QuantMode::kNoise: {
        ACV_CHECK(ctx.rng != nullptr, "quantize: noise mode needs an rng");
        ACV_CHECK(Tape<S>::active() != nullptr,
                  "quantize: noise mode outside gradient tracking");
        off.resize(x.size());
        for (std::int64_t i = 0; i < off.size(); ++i)
          off[i] = S(ctx.rng->uniform(-0.5, 0.5));
        break;
      }
      case QuantMode::kRound:
      case QuantMode::kSte:
        off = x.value().unaryExpr([](S v) { return round_half_up(v) - v; });
        break;
    }
    if (ctx.store != nullptr) ctx.store->seqs.push_back(off);
  }
  if (ctx.mode == QuantMode::kRound) {
    return Tensor<S>::from_array(x.shape(), x.value() + off);
  }
  return add(x, Tensor<S>::from_array(x.shape(), std::move(off)));
}

// ---------------------------------------------------------------------------
// Rate estimation
// ---------------------------------------------------------------------------

template <typename S>
struct RateResult {
  Tensor<S> total_bits;        // scalar
  Tensor<S> per_element_bits;  // same shape as the latent
};

template <typename S>
Tensor<S> bits_from_likelihood(const Tensor<S>& likelihood) {
  return neg(log2(clamp(likelihood, S(kLikelihoodFloor), S(1))));
}

template <typename S>
RateResult<S> rate_bits(const Tensor<S>& likelihood) {
  RateResult<S> r;
  r.per_element_bits = bits_from_likelihood(likelihood);
  r.total_bits = sum(r.per_element_bits);
  return r;
}

// ---------------------------------------------------------------------------
// Factorized prior: a per-channel learned monotone CDF
// ---------------------------------------------------------------------------
//
// Each channel owns a tiny stack of K=4 monotone stages
//   u <- softplus(H_k) u + b_k             (positive matrix, any bias)
//   u <- u + tanh(a_k) * tanh(u)   k<K-1   (gated, |gate|<1 keeps monotone)
// with hidden widths 1-3-3-3-1 and a final sigmoid. Monotone in the input by
// construction, so p(s) = CDF(s+0.5) - CDF(s-0.5) is a valid pmf.
template <typename S>
class FactorizedPrior {
 public:
  static constexpr int kStages = 4;

  FactorizedPrior() = default;

  FactorizedPrior(ParamStore<S>& store, const std::string& prefix, int channels,
                  Pcg32& rng, double init_scale = 10.0)
      : channels_(channels) {
    const int dims[kStages + 1] = {1, 3, 3, 3, 1};
    // Spread the initial slope evenly across stages so the initial CDF covers
    // roughly [-init_scale/2, init_scale/2].
    const double per_stage = std::pow(init_scale, 1.0 / kStages);
    for (int k = 0; k < kStages; ++k) {
      const int di = dims[k], dj = dims[k + 1];
      Tensor<S>& h =
          store.create(prefix + ".H" + std::to_string(k), Shape4(channels, dj, di, 1));
      const double target = 1.0 / (per_stage * dj);
      h.mutable_value().setConstant(S(std::log(std::expm1(target))));
      Tensor<S>& b =
          store.create(prefix + ".b" + std::to_string(k), Shape4(channels, dj, 1, 1));
      fill_uniform(b, rng, -0.5, 0.5);
      hs_.push_back(h);
      bs_.push_back(b);
      if (k < kStages - 1) {
        Tensor<S>& a = store.create(prefix + ".a" + std::to_string(k),
                                    Shape4(channels, dj, 1, 1));
        as_.push_back(a);  // zero: gates start closed
      }
    }
  }

  int channels() const { return channels_; }

  // x: (C, 1, 1, M) -> CDF values in (0, 1), same shape.
  Tensor<S> cdf(const Tensor<S>& x) const {
    ACV_CHECK_CFG(x.shape().n == channels_ && x.shape().c == 1 &&
                      x.shape().h == 1,
                  "FactorizedPrior::cdf: want (", channels_,
                  ",1,1,M), got ", x.shape().str());
    Tensor<S> u = x;
    for (int k = 0; k < kStages; ++k) {
      u = add(channel_matmul(softplus(hs_[std::size_t(k)]), u),
              bs_[std::size_t(k)]);
      if (k < kStages - 1)
        u = add(u, mul(tanh(as_[std::size_t(k)]), tanh(u)));
    }
    return sigmoid(u);
  }

  // y: (N, C, H, W) quantized (or noise-perturbed) latent -> per-element
  // likelihood, same shape.
  Tensor<S> likelihood(const Tensor<S>& y) const {
    const Shape4 s = y.shape();
    ACV_CHECK_CFG(s.c == channels_, "FactorizedPrior::likelihood: ", s.str(),
                  " has ", s.c, " channels, model has ", channels_);
    Tensor<S> cols = reshape(permute(y, {1, 0, 2, 3}),
                             Shape4(channels_, 1, 1, s.n * s.h * s.w));
    Tensor<S> hi = cdf(offset(cols, S(0.5)));
    Tensor<S> lo = cdf(offset(cols, S(-0.5)));
    Tensor<S> lik = sub(hi, lo);
    return permute(reshape(lik, Shape4(channels_, s.n, s.h, s.w)),
                   {1, 0, 2, 3});
  }

  // CDF at scalar points for one channel; shares every arithmetic step with
  // cdf() so the coder's tables match rate estimates bit for bit.
  S cdf_scalar(int channel, S x) const {
    Tensor<S> t = Tensor<S>::zeros(Shape4(channels_, 1, 1, 1));
    t.mutable_value()[channel] = x;
    return cdf(t).value()[channel];
  }

 private:
  int channels_ = 0;
  std::vector<Tensor<S>> hs_, bs_, as_;
};

// ---------------------------------------------------------------------------
// Conditional Gaussian
// ---------------------------------------------------------------------------

// sigma = kScaleMin + softplus(raw): strictly above the floor, smooth grads.
template <typename S>
Tensor<S> scale_from_raw(const Tensor<S>& raw) {
  return offset(softplus(raw), S(kScaleMin));
}

// Integrated Gaussian over [y-0.5, y+0.5]:
//   p = Phi((y - mu + 0.5)/sigma) - Phi((y - mu - 0.5)/sigma)
// with Phi(t) = (1 + erf(t/sqrt(2)))/2.
template <typename S>
Tensor<S> gaussian_likelihood(const Tensor<S>& y, const Tensor<S>& mean,
                              const Tensor<S>& sigma) {
  ACV_CHECK_CFG(y.shape() == mean.shape() && y.shape() == sigma.shape(),
                "gaussian_likelihood: shapes ", y.shape().str(), ", ",
                mean.shape().str(), ", ", sigma.shape().str());
  const S inv_sqrt2 = S(0.7071067811865476);
  Tensor<S> d = sub(y, mean);
  Tensor<S> hi = erf(scale(div(offset(d, S(0.5)), sigma), inv_sqrt2));
  Tensor<S> lo = erf(scale(div(offset(d, S(-0.5)), sigma), inv_sqrt2));
  return scale(sub(hi, lo), S(0.5));
}

// Scalar twin of gaussian_likelihood for the coder's table construction;
// mirrors the tensor path's arithmetic order step for step.
template <typename S>
S gaussian_likelihood_scalar(S y, S mean, S sigma) {
  const S inv_sqrt2 = S(0.7071067811865476);
  S d = y - mean;
  S hi = S(std::erf(double(S((d + S(0.5)) / sigma) * inv_sqrt2)));
  S lo = S(std::erf(double(S((d + S(-0.5)) / sigma) * inv_sqrt2)));
  return S(0.5) * (hi - lo);
}

}  // namespace acv

#endif  // ACV_ENTROPY_HPP_
