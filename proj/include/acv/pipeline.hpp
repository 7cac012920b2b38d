#ifndef ACV_PIPELINE_HPP_
#define ACV_PIPELINE_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "acv/codecs.hpp"
#include "acv/hash.hpp"
#include "acv/motion_nets.hpp"

namespace acv {

// Architecture knobs. All channel widths derive from one multiplier, so the
// whole model family scales with a single number.
struct ModelConfig {
  double width_mult = 0.25;
  int patch = 16;  // alpha granularity in pixels over the padded frame
  double max_flow = 16.0;

  int n_ch() const { return derived(128); }       // transform width
  int m_ch() const { return derived(192); }       // main latent channels
  int flow_ch() const { return derived(128); }    // flow estimator width
  int mc_ch() const { return derived(128); }      // compensation net width
  int sft_hidden() const { return derived(64); }  // modulation net width

  void validate() const {
    ACV_CHECK_CFG(width_mult > 0.0 && derived(64) >= 1,
                  "model config: width_mult ", width_mult,
                  " gives empty layers");
    ACV_CHECK_CFG(patch > 0 && (patch % 16 == 0 || 64 % patch == 0),
                  "model config: patch ", patch,
                  " incompatible with the latent grids (x16, x64)");
    ACV_CHECK_CFG(max_flow > 0.0, "model config: max_flow ", max_flow);
  }

  // Identifies the architecture; carried in streams and checkpoints so both
  // ends can refuse a mismatched model.
  std::uint64_t hash() const {
    Fnv1a64 h;
    h.update_u32(std::uint32_t(n_ch()));
    h.update_u32(std::uint32_t(m_ch()));
    h.update_u32(std::uint32_t(flow_ch()));
    h.update_u32(std::uint32_t(mc_ch()));
    h.update_u32(std::uint32_t(sft_hidden()));
    h.update_u32(std::uint32_t(patch));
    h.update_f32(float(max_flow));
    return h.digest();
  }

 private:
  int derived(int base) const {
    return int(std::lround(double(base) * width_mult));
  }
};

// The full two-frame model: flow estimation, motion coding, compensation,
// conditional inter coding, plus a standalone intra codec for references.
// Layers hold shared handles into `params`, so the model is pinned in place.
template <typename S>
struct VideoModel {
  ModelConfig cfg;
  ParamStore<S> params;
  FlowNet<S> flow_net;
  McNet<S> mc_net;
  MotionCodec<S> motion;
  InterCodec<S> inter;
  IntraCodec<S> intra;

  explicit VideoModel(const ModelConfig& c, std::uint64_t seed = 1) : cfg(c) {
    cfg.validate();
    Pcg32 rng(seed);
    flow_net =
        FlowNet<S>(params, "flow", cfg.flow_ch(), S(cfg.max_flow), rng);
    mc_net = McNet<S>(params, "mc", cfg.mc_ch(), rng);
    motion = MotionCodec<S>(params, "motion", cfg.n_ch(), cfg.m_ch(),
                            cfg.sft_hidden(), rng);
    inter = InterCodec<S>(params, "inter", cfg.n_ch(), cfg.m_ch(),
                          cfg.sft_hidden(), rng);
    intra = IntraCodec<S>(params, "intra", cfg.n_ch(), cfg.m_ch(), rng);
  }

  VideoModel(const VideoModel&) = delete;
  VideoModel& operator=(const VideoModel&) = delete;
};

struct FrameBytes {
  std::vector<std::uint8_t> motion_hyper, motion_main;
  std::vector<std::uint8_t> inter_hyper, inter_main;
};

template <typename S>
struct PframeResult {
  Tensor<S> flow;      // estimated motion, encoder side
  Tensor<S> flow_hat;  // decoded motion (the decoder's view)
  Tensor<S> x_c;       // motion-compensated condition
  Tensor<S> recon;     // decode-path reconstruction, unclamped
  Tensor<S> alpha_hat_motion, alpha_hat_inter;
  Tensor<S> motion_patch_bits, inter_patch_bits;  // (1,1,H/P,W/P)
  Tensor<S> motion_bits, inter_bits;              // scalars, == patch sums
  FrameBytes bytes;
  std::size_t payload_bytes = 0;
};

// One predicted frame: estimate flow, code it, compensate the reference and
// condition the inter codec on the result. Everything past the two latent
// pairs runs exactly as the decoder will run it.
template <typename S>
PframeResult<S> code_pframe(const VideoModel<S>& model, const Tensor<S>& x_t,
                            const Tensor<S>& ref, const Tensor<S>& alpha_grid,
                            CodingCtx<S>& ctx, bool bypass_sft) {
  ACV_CHECK_CFG(x_t.shape() == ref.shape(), "p-frame: ", x_t.shape().str(),
                " vs reference ", ref.shape().str());
  const int patch = model.cfg.patch;
  ACV_CHECK_CFG(alpha_grid.shape() ==
                    alpha_grid_shape(x_t.shape().h, x_t.shape().w, patch),
                "p-frame: alpha grid ", alpha_grid.shape().str());
  PframeResult<S> out;
  out.flow = model.flow_net(x_t, ref);
  MotionResult<S> m =
      model.motion.code(out.flow, alpha_grid, patch, ctx, bypass_sft);
  out.flow_hat = m.flow_hat;
  Tensor<S> warped = warp_bilinear(ref, m.flow_hat);
  out.x_c = model.mc_net(warped, ref, m.flow_hat);
  InterResult<S> r =
      model.inter.code(x_t, out.x_c, alpha_grid, patch, ctx, bypass_sft);
  out.recon = r.recon;
  out.alpha_hat_motion = m.alpha_hat;
  out.alpha_hat_inter = r.alpha_hat;
  out.motion_patch_bits = m.patch_bits;
  out.inter_patch_bits = r.patch_bits;
  out.motion_bits = m.total_bits;
  out.inter_bits = r.total_bits;
  out.bytes.motion_hyper = std::move(m.hyper_bytes);
  out.bytes.motion_main = std::move(m.main_bytes);
  out.bytes.inter_hyper = std::move(r.hyper_bytes);
  out.bytes.inter_main = std::move(r.main_bytes);
  out.payload_bytes = m.payload_bytes + r.payload_bytes;
  return out;
}

// Decoder-side counterpart: bytes plus the previous reference only.
template <typename S>
Tensor<S> decode_pframe(const VideoModel<S>& model, const FrameBytes& bytes,
                        const Tensor<S>& ref, bool bypass_sft) {
  const Shape4 s = ref.shape();
  Tensor<S> flow_hat =
      model.motion.decode(bytes.motion_hyper, bytes.motion_main, s.h, s.w,
                          model.cfg.patch, bypass_sft);
  Tensor<S> warped = warp_bilinear(ref, flow_hat);
  Tensor<S> x_c = model.mc_net(warped, ref, flow_hat);
  return model.inter.decode(bytes.inter_hyper, bytes.inter_main, x_c,
                            model.cfg.patch, bypass_sft);
}

// Reconstructions feed back as references clamped to the pixel range and cut
// loose from the graph, matching what a decoder holds.
template <typename S>
Tensor<S> to_reference(const Tensor<S>& recon) {
  return clamp(recon, S(0), S(1)).detach();
}

// Distortion over the original window (padding is not paid for twice).
template <typename S>
Tensor<S> distortion_mse(const Tensor<S>& a, const Tensor<S>& b, int orig_h,
                         int orig_w) {
  const Shape4 s = a.shape();
  if (orig_h == s.h && orig_w == s.w) return mse(a, b);
  return mse(crop(a, 0, 0, orig_h, orig_w), crop(b, 0, 0, orig_h, orig_w));
}

// PSNR in dB over the original window, all channels jointly; identical
// inputs report +infinity.
template <typename S>
double psnr_rgb(const Tensor<S>& a, const Tensor<S>& b, int orig_h,
                int orig_w) {
  const double m = double(distortion_mse(a, b, orig_h, orig_w).item());
  if (m <= 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(m);
}

}  // namespace acv

#endif  // ACV_PIPELINE_HPP_
