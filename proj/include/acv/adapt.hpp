#ifndef ACV_ADAPT_HPP_
#define ACV_ADAPT_HPP_

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "acv/adam.hpp"
#include "acv/bitstream.hpp"
#include "acv/loss.hpp"
#include "acv/video.hpp"

namespace acv {

// Inference-time search touches only the alpha parameters; switching off
// gradient tracking for the model weights skips their whole share of the
// backward pass. Restores tracking on scope exit.
template <typename S>
class FreezeGuard {
 public:
  explicit FreezeGuard(ParamStore<S>& store) : store_(&store) {
    for (auto& p : store_->all()) p.value.set_requires_grad(false);
  }
  ~FreezeGuard() {
    for (auto& p : store_->all()) p.value.set_requires_grad(true);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  ParamStore<S>* store_;
};

// Knobs for the per-frame search over the alpha grid.
struct AdaptConfig {
  int steps = 32;
  double lr = 0.02;
  int window = 1;  // 1 = per-frame greedy, 2 = two-frame look-ahead

  void validate() const {
    ACV_CHECK_CFG(steps >= 1, "adapt config: steps ", steps);
    ACV_CHECK_CFG(lr >= 0.0 && std::isfinite(lr), "adapt config: lr ", lr);
    ACV_CHECK_CFG(window == 1 || window == 2, "adapt config: window ", window);
  }
};

template <typename S>
struct AdaptResult {
  Tensor<S> alpha;                 // committed grid, used at full precision
  PframeResult<S> coded;           // entropy-coded frame under `alpha`
  std::vector<double> trajectory;  // search objective per iterate
  double initial_cost = 0.0;       // objective at the starting point
  double anchor_cost = 0.0;        // this frame's cost at alpha == 0
  double final_cost = 0.0;         // this frame's cost at the committed alpha
  double anchor_joint = 0.0;       // window=2: two-frame cost at (0, 0)
  double final_joint = 0.0;        // window=2: two-frame cost as committed
  Tensor<S> carried;               // window=2: next frame's theta initializer
};

// Search objective for one predicted frame: lambda * MSE plus the coded bits
// per padded pixel with the per-patch tilt stripped (base 1). The tilt only
// steers the encoder; the search pays the bits that actually come out.
template <typename S>
Tensor<S> adapt_objective(const VideoModel<S>& model, const Tensor<S>& x_t,
                          const Tensor<S>& ref, const Tensor<S>& alpha,
                          double lambda, int orig_h, int orig_w,
                          CodingCtx<S>& ctx) {
  PframeResult<S> pf = code_pframe(model, x_t, ref, alpha, ctx, false);
  return pframe_loss(pf, x_t, alpha, lambda, orig_h, orig_w, 1.0).total;
}

template <typename S>
struct JointObjective {
  Tensor<S> total;       // frame t cost + frame t+1 cost
  Tensor<S> frame_cost;  // frame t part alone
};

// Two-frame window: frame t codes against the committed reference, frame t+1
// against the reconstruction frame t produces under alpha_t. The second
// frame's cost therefore feels both alpha maps.
template <typename S>
JointObjective<S> adapt_joint_objective(
    const VideoModel<S>& model, const Tensor<S>& x_t, const Tensor<S>& x_next,
    const Tensor<S>& ref, const Tensor<S>& alpha_t, const Tensor<S>& alpha_next,
    double lambda, int orig_h, int orig_w, CodingCtx<S>& ctx) {
  JointObjective<S> out;
  PframeResult<S> pt = code_pframe(model, x_t, ref, alpha_t, ctx, false);
  out.frame_cost =
      pframe_loss(pt, x_t, alpha_t, lambda, orig_h, orig_w, 1.0).total;
  Tensor<S> ref_next = clamp(pt.recon, S(0), S(1));  // stays in the graph
  PframeResult<S> pn = code_pframe(model, x_next, ref_next, alpha_next, ctx,
                                   false);
  Tensor<S> next_cost =
      pframe_loss(pn, x_next, alpha_next, lambda, orig_h, orig_w, 1.0).total;
  out.total = add(out.frame_cost, next_cost);
  return out;
}

// Per-frame alpha search: a handful of Adam steps on theta with
// alpha = tanh(theta), straight-through rounding so the objective tracks the
// cost the eval-mode encode will really pay, and the iterate with the lowest
// objective committed. The alpha == 0 anchor always competes, so the chosen
// frame can never lose to the plain encode. A non-finite iterate is skipped;
// the search is fully deterministic (no randomness anywhere).
template <typename S>
AdaptResult<S> adapt_greedy(VideoModel<S>& model, const Tensor<S>& x_t,
                            const Tensor<S>& ref, const AdaptConfig& cfg,
                            double lambda, int orig_h, int orig_w,
                            const Tensor<S>& theta_init = {}) {
  cfg.validate();
  const Shape4 gs =
      alpha_grid_shape(x_t.shape().h, x_t.shape().w, model.cfg.patch);
  Tensor<S> theta =
      theta_init.defined() ? theta_init.detach() : Tensor<S>::zeros(gs);
  ACV_CHECK_CFG(theta.shape() == gs, "adapt: initializer ",
                theta.shape().str(), " for grid ", gs.str());
  FreezeGuard<S> freeze(model.params);

  AdaptResult<S> out;
  double best = std::numeric_limits<double>::infinity();
  Tensor<S> best_theta = Tensor<S>::zeros(gs);
  auto consider = [&](double v, const Tensor<S>& th) {
    if (std::isfinite(v) && v < best) {
      best = v;
      best_theta = th.detach();
    }
  };

  {
    CodingCtx<S> ctx{QuantMode::kSte};
    Tensor<S> zero = Tensor<S>::zeros(gs);
    out.anchor_cost = double(
        adapt_objective(model, x_t, ref, zero, lambda, orig_h, orig_w, ctx)
            .item());
    consider(out.anchor_cost, zero);
  }

  theta.set_requires_grad(true);
  Adam<S> opt({theta}, cfg.lr);
  for (int k = 0; k < cfg.steps; ++k) {
    theta.zero_grad();
    Tape<S> tape;
    CodingCtx<S> ctx{QuantMode::kSte};
    Tensor<S> obj = adapt_objective(model, x_t, ref, tanh(theta), lambda,
                                    orig_h, orig_w, ctx);
    const double v = double(obj.item());
    out.trajectory.push_back(v);
    consider(v, theta);
    if (std::isfinite(v)) tape.backward(obj);
    opt.step();
    if (!theta.value().isFinite().all()) break;  // keep the best found so far
  }
  if (theta.value().isFinite().all()) {
    CodingCtx<S> ctx{QuantMode::kSte};
    const double v = double(adapt_objective(model, x_t, ref, tanh(theta),
                                            lambda, orig_h, orig_w, ctx)
                                .item());
    out.trajectory.push_back(v);
    consider(v, theta);
  }
  out.initial_cost = out.trajectory.front();
  out.final_cost = best;
  out.alpha = tanh(best_theta);

  CodingCtx<S> emit_ctx{QuantMode::kRound, nullptr, nullptr, true};
  out.coded = code_pframe(model, x_t, ref, out.alpha, emit_ctx, false);
  return out;
}

// Sliding two-frame window: optimize (theta_t, theta_next) on the joint
// objective, commit alpha_t for coding and hand theta_next to the next window
// as its initializer. Committing is constrained to iterates whose frame-t
// cost does not exceed the alpha == 0 cost, so the per-frame guarantee of the
// greedy search carries over; (0, 0) satisfies it with equality, so the
// candidate set is never empty.
template <typename S>
AdaptResult<S> adapt_lookahead(VideoModel<S>& model, const Tensor<S>& x_t,
                               const Tensor<S>& x_next, const Tensor<S>& ref,
                               const AdaptConfig& cfg, double lambda,
                               int orig_h, int orig_w,
                               const Tensor<S>& theta_init = {}) {
  cfg.validate();
  ACV_CHECK_CFG(cfg.window == 2, "look-ahead needs window 2, got ",
                cfg.window);
  const Shape4 gs =
      alpha_grid_shape(x_t.shape().h, x_t.shape().w, model.cfg.patch);
  Tensor<S> theta_t =
      theta_init.defined() ? theta_init.detach() : Tensor<S>::zeros(gs);
  ACV_CHECK_CFG(theta_t.shape() == gs, "adapt: initializer ",
                theta_t.shape().str(), " for grid ", gs.str());
  Tensor<S> theta_n = Tensor<S>::zeros(gs);
  FreezeGuard<S> freeze(model.params);

  AdaptResult<S> out;
  double best_joint = std::numeric_limits<double>::infinity();
  double best_frame = std::numeric_limits<double>::infinity();
  Tensor<S> best_t = Tensor<S>::zeros(gs);
  Tensor<S> best_n = Tensor<S>::zeros(gs);

  {
    CodingCtx<S> ctx{QuantMode::kSte};
    Tensor<S> zero = Tensor<S>::zeros(gs);
    JointObjective<S> a = adapt_joint_objective(
        model, x_t, x_next, ref, zero, zero, lambda, orig_h, orig_w, ctx);
    out.anchor_cost = double(a.frame_cost.item());
    out.anchor_joint = double(a.total.item());
  }
  auto consider = [&](double vj, double vt, const Tensor<S>& t0,
                      const Tensor<S>& t1) {
    if (!std::isfinite(vj) || !std::isfinite(vt)) return;
    if (vt > out.anchor_cost) return;  // would lose frame t to the anchor
    if (vj < best_joint) {
      best_joint = vj;
      best_frame = vt;
      best_t = t0.detach();
      best_n = t1.detach();
    }
  };
  {
    Tensor<S> zero = Tensor<S>::zeros(gs);
    consider(out.anchor_joint, out.anchor_cost, zero, zero);
  }

  theta_t.set_requires_grad(true);
  theta_n.set_requires_grad(true);
  Adam<S> opt({theta_t, theta_n}, cfg.lr);
  for (int k = 0; k < cfg.steps; ++k) {
    theta_t.zero_grad();
    theta_n.zero_grad();
    Tape<S> tape;
    CodingCtx<S> ctx{QuantMode::kSte};
    JointObjective<S> j =
        adapt_joint_objective(model, x_t, x_next, ref, tanh(theta_t),
                              tanh(theta_n), lambda, orig_h, orig_w, ctx);
    const double vj = double(j.total.item());
    out.trajectory.push_back(vj);
    consider(vj, double(j.frame_cost.item()), theta_t, theta_n);
    if (std::isfinite(vj)) tape.backward(j.total);
    opt.step();
    if (!theta_t.value().isFinite().all() ||
        !theta_n.value().isFinite().all()) {
      break;
    }
  }
  if (theta_t.value().isFinite().all() && theta_n.value().isFinite().all()) {
    CodingCtx<S> ctx{QuantMode::kSte};
    JointObjective<S> j =
        adapt_joint_objective(model, x_t, x_next, ref, tanh(theta_t),
                              tanh(theta_n), lambda, orig_h, orig_w, ctx);
    const double vj = double(j.total.item());
    out.trajectory.push_back(vj);
    consider(vj, double(j.frame_cost.item()), theta_t, theta_n);
  }
  out.initial_cost = out.trajectory.front();
  out.final_cost = best_frame;
  out.final_joint = best_joint;
  out.alpha = tanh(best_t);
  out.carried = best_n;

  CodingCtx<S> emit_ctx{QuantMode::kRound, nullptr, nullptr, true};
  out.coded = code_pframe(model, x_t, ref, out.alpha, emit_ctx, false);
  return out;
}

enum class AdaptMode { kOff, kGreedy, kLookahead };

struct SequenceCodingConfig {
  AdaptMode mode = AdaptMode::kOff;
  AdaptConfig adapt;
  int intra_period = 8;  // 0: single leading intra frame
  double lambda_ = 1024.0;
  int lambda_index = 0;         // header slot naming the lambda point
  double uniform_alpha = 0.0;   // fixed grid used when adaptation is off
  bool verify_decode = true;

  void validate() const {
    adapt.validate();
    ACV_CHECK_CFG(uniform_alpha >= -1.0 && uniform_alpha <= 1.0,
                  "sequence coder: uniform alpha ", uniform_alpha);
    ACV_CHECK_CFG(intra_period >= 0 && intra_period <= 255,
                  "sequence coder: intra period ", intra_period);
    ACV_CHECK_CFG(std::isfinite(lambda_) && lambda_ > 0.0,
                  "sequence coder: lambda ", lambda_);
    ACV_CHECK_CFG(lambda_index >= 0 && lambda_index <= 255,
                  "sequence coder: lambda index ", lambda_index);
    if (mode == AdaptMode::kLookahead) {
      ACV_CHECK_CFG(adapt.window == 2,
                    "sequence coder: look-ahead mode with window ",
                    adapt.window);
    }
  }
};

// Everything worth reporting about one coded frame. Rates are measured from
// the coded substreams over the original pixel count; est_bpp carries the
// entropy estimate for the same bits.
template <typename S>
struct FrameReport {
  int index = 0;
  FrameType type = FrameType::kIntra;
  double psnr = 0.0;
  double bpp = 0.0;
  double est_bpp = 0.0;
  double motion_bpp = 0.0, inter_bpp = 0.0;        // predicted frames only
  double rd_cost = 0.0, anchor_cost = 0.0;         // unweighted objective
  Tensor<S> alpha;                                 // committed grid
  Tensor<S> motion_patch_bits, inter_patch_bits;   // estimates, (1,1,Hp,Wp)
  Tensor<S> flow_hat;                              // decoded motion
};

template <typename S>
struct SequenceResult {
  VideoStream stream;
  std::vector<FrameReport<S>> frames;
  std::vector<Tensor<S>> recons;  // padded, clamped; what a decoder yields
  double bpp = 0.0;               // sequence mean, measured bytes
  double psnr = 0.0;              // mean over frames
};

// Decode a parsed stream back to clamped padded frames. Needs only the model
// and the bytes; whether the encoder adapted alpha is invisible here.
template <typename S>
std::vector<Tensor<S>> decode_stream(const VideoModel<S>& model,
                                     const VideoStream& vs) {
  ACV_CHECK(vs.header.model_hash == model.cfg.hash(),
            "decode: stream was coded with a different model (hash ",
            vs.header.model_hash, " vs ", model.cfg.hash(), ")");
  ACV_CHECK(int(vs.header.patch) == model.cfg.patch,
            "decode: stream patch ", int(vs.header.patch), " vs model ",
            model.cfg.patch);
  const int ph = round_up(int(vs.header.height), 64);
  const int pw = round_up(int(vs.header.width), 64);
  std::vector<Tensor<S>> out;
  out.reserve(vs.frames.size());
  Tensor<S> ref;
  for (std::size_t i = 0; i < vs.frames.size(); ++i) {
    const FrameRecord& fr = vs.frames[i];
    Tensor<S> recon;
    if (fr.type == FrameType::kIntra) {
      recon = model.intra.decode(fr.substreams[0], fr.substreams[1], ph, pw);
    } else {
      ACV_CHECK_STREAM(ref.defined(),
                       "decode: predicted frame ", i, " has no reference");
      FrameBytes fb;
      fb.motion_hyper = fr.substreams[0];
      fb.motion_main = fr.substreams[1];
      fb.inter_hyper = fr.substreams[2];
      fb.inter_main = fr.substreams[3];
      recon = clamp(decode_pframe(model, fb, ref, false), S(0), S(1));
    }
    ref = recon;
    out.push_back(recon);
  }
  return out;
}

// Code a whole sequence: intra frames on the configured period, predicted
// frames optionally alpha-adapted first, all entropy-coded into one stream.
// With verify_decode the stream is decoded back and checked bit-exact against
// the encoder's own reconstructions.
template <typename S>
SequenceResult<S> code_sequence_adaptive(VideoModel<S>& model,
                                         const Sequence<S>& seq,
                                         const SequenceCodingConfig& cfg) {
  cfg.validate();
  const int count = int(seq.frames.size());
  ACV_CHECK_CFG(count >= 1, "sequence coder: empty sequence");
  ACV_CHECK_CFG(seq.width >= 1 && seq.height >= 1 && seq.width <= 0xffff &&
                    seq.height <= 0xffff && count <= 0xffff,
                "sequence coder: dims ", seq.width, "x", seq.height, "x",
                count);
  ACV_CHECK_CFG(model.cfg.patch <= 255, "sequence coder: patch ",
                model.cfg.patch, " does not fit the header field");
  const Shape4 fs = seq.frames[0].shape();
  ACV_CHECK_CFG(fs.h % 64 == 0 && fs.w % 64 == 0, "sequence coder: frames ",
                fs.str(), " not padded to the codec grid");
  for (const auto& f : seq.frames)
    ACV_CHECK_CFG(f.shape() == fs, "sequence coder: ragged frame shapes");
  const std::int64_t orig_pixels = std::int64_t(seq.width) * seq.height;

  SequenceResult<S> out;
  out.stream.header.width = std::uint16_t(seq.width);
  out.stream.header.height = std::uint16_t(seq.height);
  out.stream.header.frame_count = std::uint16_t(count);
  out.stream.header.intra_period = std::uint8_t(cfg.intra_period);
  out.stream.header.patch = std::uint8_t(model.cfg.patch);
  out.stream.header.model_hash = model.cfg.hash();
  out.stream.header.lambda_index = std::uint8_t(cfg.lambda_index);

  auto is_intra_at = [&](int t) {
    return cfg.intra_period == 0 ? t == 0 : t % cfg.intra_period == 0;
  };

  Tensor<S> ref;
  Tensor<S> carry;
  std::size_t total_bytes = 0;
  double psnr_sum = 0.0;
  for (int t = 0; t < count; ++t) {
    const Tensor<S>& x = seq.frames[std::size_t(t)];
    FrameReport<S> rep;
    rep.index = t;
    FrameRecord rec;
    if (is_intra_at(t)) {
      CodingCtx<S> ctx{QuantMode::kRound, nullptr, nullptr, true};
      IntraResult<S> ir = model.intra.code(x, ctx);
      rep.type = rec.type = FrameType::kIntra;
      rep.est_bpp = double(ir.total_bits.item()) / double(orig_pixels);
      ref = to_reference(ir.recon);
      rec.substreams = {std::move(ir.hyper_bytes), std::move(ir.main_bytes)};
      carry = Tensor<S>();  // the sliding window does not cross a GOP edge
    } else {
      rep.type = rec.type = FrameType::kPred;
      const bool next_pred = t + 1 < count && !is_intra_at(t + 1);
      PframeResult<S> coded;
      Tensor<S> alpha;
      if (cfg.mode == AdaptMode::kOff) {
        alpha = Tensor<S>::full(alpha_grid_shape(fs.h, fs.w, model.cfg.patch),
                                S(cfg.uniform_alpha));
        CodingCtx<S> ctx{QuantMode::kRound, nullptr, nullptr, true};
        coded = code_pframe(model, x, ref, alpha, ctx, false);
        rep.rd_cost = rep.anchor_cost =
            double(pframe_loss(coded, x, alpha, cfg.lambda_, seq.height,
                               seq.width, 1.0)
                       .total.item());
      } else {
        AdaptResult<S> ar;
        if (cfg.mode == AdaptMode::kGreedy) {
          ar = adapt_greedy(model, x, ref, cfg.adapt, cfg.lambda_, seq.height,
                            seq.width);
        } else if (next_pred) {
          ar = adapt_lookahead(model, x, seq.frames[std::size_t(t) + 1], ref,
                               cfg.adapt, cfg.lambda_, seq.height, seq.width,
                               carry);
        } else {
          // Last predicted frame of the GOP: nothing ahead to look at.
          ar = adapt_greedy(model, x, ref, cfg.adapt, cfg.lambda_, seq.height,
                            seq.width, carry);
        }
        carry = next_pred && cfg.mode == AdaptMode::kLookahead ? ar.carried
                                                               : Tensor<S>();
        alpha = ar.alpha;
        coded = std::move(ar.coded);
        rep.rd_cost = ar.final_cost;
        rep.anchor_cost = ar.anchor_cost;
      }
      rep.est_bpp =
          double(coded.motion_bits.item() + coded.inter_bits.item()) /
          double(orig_pixels);
      const std::size_t mb = coded.bytes.motion_hyper.size() +
                             coded.bytes.motion_main.size();
      const std::size_t ib = coded.bytes.inter_hyper.size() +
                             coded.bytes.inter_main.size();
      rep.motion_bpp = 8.0 * double(mb) / double(orig_pixels);
      rep.inter_bpp = 8.0 * double(ib) / double(orig_pixels);
      rep.alpha = alpha;
      rep.motion_patch_bits = coded.motion_patch_bits;
      rep.inter_patch_bits = coded.inter_patch_bits;
      rep.flow_hat = coded.flow_hat;
      ref = to_reference(coded.recon);
      rec.substreams = {std::move(coded.bytes.motion_hyper),
                        std::move(coded.bytes.motion_main),
                        std::move(coded.bytes.inter_hyper),
                        std::move(coded.bytes.inter_main)};
    }
    std::size_t frame_bytes = 0;
    for (const auto& ss : rec.substreams) frame_bytes += ss.size();
    rep.bpp = 8.0 * double(frame_bytes) / double(orig_pixels);
    rep.psnr = psnr_rgb(ref, x, seq.height, seq.width);
    total_bytes += frame_bytes;
    psnr_sum += rep.psnr;
    out.recons.push_back(ref);
    out.frames.push_back(std::move(rep));
    out.stream.frames.push_back(std::move(rec));
  }
  out.bpp = 8.0 * double(total_bytes) / double(orig_pixels * count);
  out.psnr = psnr_sum / double(count);

  if (cfg.verify_decode) {
    std::vector<Tensor<S>> dec = decode_stream(model, out.stream);
    ACV_CHECK(dec.size() == out.recons.size(),
              "sequence coder: decode produced ", dec.size(), " of ",
              out.recons.size(), " frames");
    for (std::size_t i = 0; i < dec.size(); ++i) {
      ACV_CHECK((dec[i].value() == out.recons[i].value()).all(),
                "sequence coder: decode mismatch at frame ", i);
    }
  }
  return out;
}

}  // namespace acv

#endif  // ACV_ADAPT_HPP_
