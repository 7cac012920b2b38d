#ifndef ACV_LOSS_HPP_
#define ACV_LOSS_HPP_

#include <cmath>

#include "acv/pipeline.hpp"

namespace acv {

// How strongly the per-patch preference tilts the rate split: the motion rate
// of patch i is charged delta^alpha_i while the inter rate keeps weight one.
// alpha > 0 makes motion bits expensive (push detail into the inter latent);
// alpha < 0 makes them cheap.
inline constexpr double kRateBase = 10.0;

// Per-patch weighted rate delta^alpha * R_motion + R_inter, summed and
// normalized to bits per padded pixel.
template <typename S>
Tensor<S> weighted_rate_bpp(const Tensor<S>& alpha_grid,
                            const Tensor<S>& motion_patch_bits,
                            const Tensor<S>& inter_patch_bits,
                            std::int64_t frame_pixels,
                            double base = kRateBase) {
  ACV_CHECK_CFG(alpha_grid.shape() == motion_patch_bits.shape() &&
                    alpha_grid.shape() == inter_patch_bits.shape(),
                "weighted rate: alpha ", alpha_grid.shape().str(),
                " vs motion ", motion_patch_bits.shape().str(), " vs inter ",
                inter_patch_bits.shape().str());
  ACV_CHECK_CFG(frame_pixels > 0 && base > 0.0, "weighted rate: pixels ",
                frame_pixels, ", base ", base);
  Tensor<S> w = exp(scale(alpha_grid, S(std::log(base))));
  Tensor<S> bits = add(mul(w, motion_patch_bits), inter_patch_bits);
  return scale(sum(bits), S(1) / S(frame_pixels));
}

template <typename S>
struct LossTerms {
  Tensor<S> total;       // lambda * distortion + weighted rate
  Tensor<S> distortion;  // MSE over the original window
  Tensor<S> rate_bpp;    // alpha-weighted rate, bits per padded pixel
};

// Rate-distortion objective for one predicted frame. `alpha_grid` must be the
// grid the encoder was conditioned on; the charge follows the request.
template <typename S>
LossTerms<S> pframe_loss(const PframeResult<S>& pf, const Tensor<S>& x_t,
                         const Tensor<S>& alpha_grid, double lambda,
                         int orig_h, int orig_w, double base = kRateBase) {
  const Shape4 s = x_t.shape();
  LossTerms<S> out;
  out.distortion = distortion_mse(pf.recon, x_t, orig_h, orig_w);
  out.rate_bpp =
      weighted_rate_bpp(alpha_grid, pf.motion_patch_bits, pf.inter_patch_bits,
                        std::int64_t(s.h) * s.w, base);
  out.total = add(scale(out.distortion, S(lambda)), out.rate_bpp);
  return out;
}

// Same objective for an intra frame: no motion, no weighting.
template <typename S>
LossTerms<S> intra_loss(const IntraResult<S>& ir, const Tensor<S>& x,
                        double lambda, int orig_h, int orig_w) {
  const Shape4 s = x.shape();
  LossTerms<S> out;
  out.distortion = distortion_mse(ir.recon, x, orig_h, orig_w);
  out.rate_bpp = scale(ir.total_bits, S(1) / S(std::int64_t(s.h) * s.w));
  out.total = add(scale(out.distortion, S(lambda)), out.rate_bpp);
  return out;
}

}  // namespace acv

#endif  // ACV_LOSS_HPP_
