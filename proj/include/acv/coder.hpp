#ifndef ACV_CODER_HPP_
#define ACV_CODER_HPP_

#include <algorithm>
#include <cstring>
#include <vector>

#include "acv/entropy.hpp"
#include "acv/range_coder.hpp"
#include "acv/tensor.hpp"

namespace acv {

inline constexpr std::uint32_t kCdfTotal = 1u << 16;

// Observed integer range of one channel; serialized so the decoder can build
// a finite alphabet.
struct ChannelBounds {
  std::int16_t lo = 0;
  std::int16_t hi = 0;
};

template <typename S>
struct EncodedLatent {
  std::vector<std::uint8_t> body;  // [bounds i16 pairs][range payload]
  std::size_t payload_bytes = 0;   // range-coder bytes only
  double estimated_bits = 0;       // clamped-likelihood estimate at the coded values
};

namespace detail {

// Quantizes a pmf (tail, in-range bins, tail) to a 16-bit cumulative table.
// Every bin keeps at least one count, so anything within bounds stays
// codable; c_j = clamp(round(P_j * total), c_{j-1}+1, total-(m-j)).
template <typename S>
std::vector<std::uint32_t> build_cum(const std::vector<S>& pmf) {
  const std::size_t m = pmf.size();
  ACV_CHECK(m >= 1 && m <= kCdfTotal, "build_cum: ", m, " bins");
  std::vector<std::uint32_t> cum(m + 1);
  cum[0] = 0;
  cum[m] = kCdfTotal;
  S acc = 0;
  for (std::size_t j = 1; j < m; ++j) {
    acc += std::max(pmf[j - 1], S(0));
    double scaled = round_half_up(double(acc) * kCdfTotal);
    std::uint32_t lo_lim = cum[j - 1] + 1;
    std::uint32_t hi_lim = kCdfTotal - std::uint32_t(m - j);
    std::uint32_t c =
        scaled <= 0 ? 0u
                    : scaled >= double(kCdfTotal) ? kCdfTotal
                                                  : std::uint32_t(scaled);
    cum[j] = std::min(std::max(c, lo_lim), hi_lim);
  }
  return cum;
}

inline int find_symbol(const std::vector<std::uint32_t>& cum,
                       std::uint32_t target) {
  auto it = std::upper_bound(cum.begin(), cum.end(), target);
  return int(it - cum.begin()) - 1;
}

inline void put_i16(std::vector<std::uint8_t>& out, std::int16_t v) {
  out.push_back(std::uint8_t(std::uint16_t(v) & 0xFF));
  out.push_back(std::uint8_t(std::uint16_t(v) >> 8));
}

inline std::int16_t get_i16(const std::uint8_t* p) {
  return std::int16_t(std::uint16_t(p[0]) | (std::uint16_t(p[1]) << 8));
}

template <typename S>
int int_value(S v) {
  double r = round_half_up(double(v));
  ACV_CHECK(std::abs(double(v) - r) < 1e-3,
            "latent coder: value ", double(v), " is not an integer");
  ACV_CHECK(r >= -32768 && r <= 32767, "latent coder: value ", r,
            " outside the 16-bit alphabet");
  return int(r);
}

template <typename S>
std::vector<ChannelBounds> observed_bounds(const Tensor<S>& y) {
  const Shape4 s = y.shape();
  std::vector<ChannelBounds> bounds(std::size_t(s.c));
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  for (int c = 0; c < s.c; ++c) {
    int lo = 0, hi = 0;
    bool first = true;
    for (int n = 0; n < s.n; ++n) {
      const S* p = y.value().data() + (std::int64_t(n) * s.c + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        int v = int_value(p[i]);
        lo = first ? v : std::min(lo, v);
        hi = first ? v : std::max(hi, v);
        first = false;
      }
    }
    bounds[std::size_t(c)] = {std::int16_t(lo), std::int16_t(hi)};
  }
  return bounds;
}

inline double clamped_bits(double p) {
  return -std::log2(std::min(std::max(p, kLikelihoodFloor), 1.0));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Factorized-prior streams: one table per channel.
// ---------------------------------------------------------------------------

namespace detail {

// Per-channel pmfs over [lo-1 .. hi+1] (tails at both ends) from one batched
// CDF evaluation, so table values agree with the rate estimator's CDF calls.
template <typename S>
std::vector<std::vector<S>> factorized_pmfs(
    const FactorizedPrior<S>& prior, const std::vector<ChannelBounds>& bounds) {
  const int C = prior.channels();
  int max_pts = 0;
  for (const auto& b : bounds)
    max_pts = std::max(max_pts, int(b.hi) - int(b.lo) + 2);
  Tensor<S> pts = Tensor<S>::zeros(Shape4(C, 1, 1, std::max(max_pts, 1)));
  for (int c = 0; c < C; ++c) {
    const auto& b = bounds[std::size_t(c)];
    const int npts = int(b.hi) - int(b.lo) + 2;
    for (int i = 0; i < max_pts; ++i) {
      int k = std::min(i, npts - 1);
      pts.mutable_value()[std::int64_t(c) * max_pts + i] =
          S(b.lo) + S(k) - S(0.5);
    }
  }
  Tensor<S> cdfv = prior.cdf(pts);
  std::vector<std::vector<S>> pmfs(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    const auto& b = bounds[std::size_t(c)];
    const int npts = int(b.hi) - int(b.lo) + 2;
    const S* row = cdfv.value().data() + std::int64_t(c) * max_pts;
    auto& pmf = pmfs[std::size_t(c)];
    pmf.resize(std::size_t(npts) + 1);  // npts-1 in-range bins + 2 tails
    pmf[0] = row[0];                    // mass below lo-0.5
    for (int j = 1; j < npts; ++j) pmf[std::size_t(j)] = row[j] - row[j - 1];
    pmf[std::size_t(npts)] = S(1) - row[npts - 1];  // mass above hi+0.5
  }
  return pmfs;
}

}  // namespace detail

template <typename S>
EncodedLatent<S> encode_factorized(const Tensor<S>& y,
                                   const FactorizedPrior<S>& prior) {
  const Shape4 s = y.shape();
  ACV_CHECK_CFG(s.c == prior.channels(), "encode_factorized: ", s.str(),
                " vs model channels ", prior.channels());
  EncodedLatent<S> out;
  auto bounds = detail::observed_bounds(y);
  for (const auto& b : bounds) {
    detail::put_i16(out.body, b.lo);
    detail::put_i16(out.body, b.hi);
  }
  if (y.size() == 0) return out;

  auto pmfs = detail::factorized_pmfs(prior, bounds);
  std::vector<std::vector<std::uint32_t>> tables(bounds.size());
  for (std::size_t c = 0; c < bounds.size(); ++c)
    tables[c] = detail::build_cum(pmfs[c]);

  RangeEncoder enc;
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const auto& b = bounds[std::size_t(c)];
      const auto& cum = tables[std::size_t(c)];
      const auto& pmf = pmfs[std::size_t(c)];
      const S* p = y.value().data() + (std::int64_t(n) * s.c + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        int sym = detail::int_value(p[i]) - b.lo + 1;
        enc.encode(cum[std::size_t(sym)],
                   cum[std::size_t(sym) + 1] - cum[std::size_t(sym)],
                   kCdfTotal);
        out.estimated_bits += detail::clamped_bits(double(pmf[std::size_t(sym)]));
      }
    }
  auto payload = enc.finish();
  out.payload_bytes = payload.size();
  out.body.insert(out.body.end(), payload.begin(), payload.end());
  return out;
}

template <typename S>
Tensor<S> decode_factorized(const std::uint8_t* data, std::size_t size,
                            Shape4 shape, const FactorizedPrior<S>& prior) {
  ACV_CHECK_CFG(shape.c == prior.channels(), "decode_factorized: ", shape.str(),
                " vs model channels ", prior.channels());
  const std::size_t bounds_bytes = std::size_t(shape.c) * 4;
  ACV_CHECK_STREAM(size >= bounds_bytes, "factorized stream: ", size,
                   " bytes, need ", bounds_bytes, " for bounds");
  std::vector<ChannelBounds> bounds(std::size_t(shape.c));
  for (int c = 0; c < shape.c; ++c) {
    bounds[std::size_t(c)].lo = detail::get_i16(data + std::size_t(c) * 4);
    bounds[std::size_t(c)].hi = detail::get_i16(data + std::size_t(c) * 4 + 2);
    ACV_CHECK_STREAM(bounds[std::size_t(c)].hi >= bounds[std::size_t(c)].lo,
                     "factorized stream: channel ", c, " bounds inverted");
  }
  Tensor<S> y = Tensor<S>::zeros(shape);
  if (shape.count() == 0) return y;

  auto pmfs = detail::factorized_pmfs(prior, bounds);
  std::vector<std::vector<std::uint32_t>> tables(bounds.size());
  for (std::size_t c = 0; c < bounds.size(); ++c)
    tables[c] = detail::build_cum(pmfs[c]);

  RangeDecoder dec(data + bounds_bytes, size - bounds_bytes);
  const std::int64_t plane = std::int64_t(shape.h) * shape.w;
  for (int n = 0; n < shape.n; ++n)
    for (int c = 0; c < shape.c; ++c) {
      const auto& b = bounds[std::size_t(c)];
      const auto& cum = tables[std::size_t(c)];
      const int m = int(cum.size()) - 1;
      S* p = y.mutable_value().data() + (std::int64_t(n) * shape.c + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        int sym = detail::find_symbol(cum, dec.decode_target(kCdfTotal));
        ACV_CHECK_STREAM(sym > 0 && sym < m - 1,
                         "factorized stream: out-of-range symbol");
        dec.consume(cum[std::size_t(sym)],
                    cum[std::size_t(sym) + 1] - cum[std::size_t(sym)]);
        p[i] = S(b.lo + sym - 1);
      }
    }
  return y;
}

// ---------------------------------------------------------------------------
// Conditional-Gaussian streams: per-element tables from (mean, sigma),
// channel-wide bounds.
// ---------------------------------------------------------------------------

namespace detail {

// pmf over [lo-1 .. hi+1] for one element; diffs of shared Phi values keep it
// a true distribution (telescoping sum).
template <typename S>
void gaussian_pmf(S mean, S sigma, int lo, int hi, std::vector<S>& pmf) {
  const S inv_sqrt2 = S(0.7071067811865476);
  const int npts = hi - lo + 2;  // boundaries lo-0.5 .. hi+0.5
  pmf.assign(std::size_t(npts) + 1, S(0));
  S prev = S(0.5) * S(1 + std::erf(double(S((S(lo) - S(0.5) - mean) / sigma) *
                                          inv_sqrt2)));
  pmf[0] = prev;
  for (int j = 1; j < npts; ++j) {
    S cur = S(0.5) * S(1 + std::erf(double(S((S(lo + j) - S(0.5) - mean) / sigma) *
                                           inv_sqrt2)));
    pmf[std::size_t(j)] = cur - prev;
    prev = cur;
  }
  pmf[std::size_t(npts)] = S(1) - prev;
}

}  // namespace detail

template <typename S>
EncodedLatent<S> encode_gaussian(const Tensor<S>& y, const Tensor<S>& mean,
                                 const Tensor<S>& sigma) {
  const Shape4 s = y.shape();
  ACV_CHECK_CFG(mean.shape() == s && sigma.shape() == s,
                "encode_gaussian: shape mismatch ", s.str(), " vs ",
                mean.shape().str(), " / ", sigma.shape().str());
  EncodedLatent<S> out;
  auto bounds = detail::observed_bounds(y);
  for (const auto& b : bounds) {
    detail::put_i16(out.body, b.lo);
    detail::put_i16(out.body, b.hi);
  }
  if (y.size() == 0) return out;

  RangeEncoder enc;
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  std::vector<S> pmf;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const auto& b = bounds[std::size_t(c)];
      const std::int64_t base = (std::int64_t(n) * s.c + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        detail::gaussian_pmf(mean.value()[base + i], sigma.value()[base + i],
                             b.lo, b.hi, pmf);
        auto cum = detail::build_cum(pmf);
        int sym = detail::int_value(y.value()[base + i]) - b.lo + 1;
        enc.encode(cum[std::size_t(sym)],
                   cum[std::size_t(sym) + 1] - cum[std::size_t(sym)],
                   kCdfTotal);
        out.estimated_bits += detail::clamped_bits(double(pmf[std::size_t(sym)]));
      }
    }
  auto payload = enc.finish();
  out.payload_bytes = payload.size();
  out.body.insert(out.body.end(), payload.begin(), payload.end());
  return out;
}

template <typename S>
Tensor<S> decode_gaussian(const std::uint8_t* data, std::size_t size,
                          const Tensor<S>& mean, const Tensor<S>& sigma) {
  const Shape4 s = mean.shape();
  ACV_CHECK_CFG(sigma.shape() == s, "decode_gaussian: shape mismatch ",
                s.str(), " vs ", sigma.shape().str());
  const std::size_t bounds_bytes = std::size_t(s.c) * 4;
  ACV_CHECK_STREAM(size >= bounds_bytes, "gaussian stream: ", size,
                   " bytes, need ", bounds_bytes, " for bounds");
  std::vector<ChannelBounds> bounds(std::size_t(s.c));
  for (int c = 0; c < s.c; ++c) {
    bounds[std::size_t(c)].lo = detail::get_i16(data + std::size_t(c) * 4);
    bounds[std::size_t(c)].hi = detail::get_i16(data + std::size_t(c) * 4 + 2);
    ACV_CHECK_STREAM(bounds[std::size_t(c)].hi >= bounds[std::size_t(c)].lo,
                     "gaussian stream: channel ", c, " bounds inverted");
  }
  Tensor<S> y = Tensor<S>::zeros(s);
  if (s.count() == 0) return y;

  RangeDecoder dec(data + bounds_bytes, size - bounds_bytes);
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  std::vector<S> pmf;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const auto& b = bounds[std::size_t(c)];
      const std::int64_t base = (std::int64_t(n) * s.c + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        detail::gaussian_pmf(mean.value()[base + i], sigma.value()[base + i],
                             b.lo, b.hi, pmf);
        auto cum = detail::build_cum(pmf);
        const int m = int(cum.size()) - 1;
        int sym = detail::find_symbol(cum, dec.decode_target(kCdfTotal));
        ACV_CHECK_STREAM(sym > 0 && sym < m - 1,
                         "gaussian stream: out-of-range symbol");
        dec.consume(cum[std::size_t(sym)],
                    cum[std::size_t(sym) + 1] - cum[std::size_t(sym)]);
        y.mutable_value()[base + i] = S(b.lo + sym - 1);
      }
    }
  return y;
}

}  // namespace acv

#endif  // ACV_CODER_HPP_
