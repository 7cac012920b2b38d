#ifndef ACV_TRAIN_HPP_
#define ACV_TRAIN_HPP_

#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "acv/adam.hpp"
#include "acv/loss.hpp"
#include "acv/synth.hpp"

namespace acv {

// Two-stage schedule: stage 1 trains the plain codecs with the modulation
// layers bypassed; stage 2 switches them on and draws a fresh random
// preference grid per sample so the model learns the whole alpha range.
struct TrainConfig {
  int stage1_steps = 1200;
  int stage2_steps = 600;
  double lr = 1e-4;
  double lr_drop_frac = 0.8;  // past this fraction of all steps: lr/10
  double lambda_ = 1024.0;
  int frame_size = 64;  // square synthetic frames, 64-multiple
  std::uint64_t seed = 1;
  int log_every = 25;

  void validate() const {
    ACV_CHECK_CFG(stage1_steps >= 0 && stage2_steps >= 0 &&
                      stage1_steps + stage2_steps > 0,
                  "train config: stages ", stage1_steps, "+", stage2_steps);
    ACV_CHECK_CFG(frame_size > 0 && frame_size % 64 == 0,
                  "train config: frame size ", frame_size,
                  " must be a 64-multiple");
    ACV_CHECK_CFG(lr > 0.0 && lambda_ > 0.0, "train config: lr ", lr,
                  ", lambda ", lambda_);
    ACV_CHECK_CFG(lr_drop_frac > 0.0 && lr_drop_frac <= 1.0,
                  "train config: lr_drop_frac ", lr_drop_frac);
    ACV_CHECK_CFG(log_every > 0, "train config: log_every ", log_every);
  }
};

// One procedural two-frame clip. Half the samples split the frame into four
// independently moving regions; a quarter of all regions hold still, so zero
// flow stays in-distribution.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> draw_training_pair(int size, Pcg32& rng) {
  SynthSpec spec;
  spec.width = size;
  spec.height = size;
  spec.frames = 2;
  const bool split = rng.uniform() < 0.5;
  spec.region_rows = split ? 2 : 1;
  spec.region_cols = split ? 2 : 1;
  for (int i = 0; i < spec.region_rows * spec.region_cols; ++i) {
    RegionMotion m;
    if (rng.uniform() >= 0.25) {
      m.vx = rng.uniform(-3.0, 3.0);
      m.vy = rng.uniform(-3.0, 3.0);
      m.zoom = rng.uniform(-0.03, 0.03);
      m.rot = rng.uniform(-0.03, 0.03);
    }
    spec.regions.push_back(m);
  }
  spec.texture_seed = rng.next_u64();
  SynthResult<S> world = synthesize<S>(spec, rng.next_u64());
  return {world.seq.frames[0], world.seq.frames[1]};
}

struct TrainLogRow {
  int step = 0;
  int stage = 1;
  double lr = 0.0;
  double loss = 0.0;
  double intra_mse = 0.0, intra_bpp = 0.0;
  double p_mse = 0.0, p_bpp = 0.0;
};

struct TrainResult {
  std::vector<TrainLogRow> rows;  // sampled every log_every steps, plus last
  double last_loss = 0.0;
};

// Rate-distortion training on procedural two-frame clips. The reference for
// the predicted frame is the ground-truth first frame early in stage 1, then
// the detached intra reconstruction, matching what encoding will provide.
// A non-finite loss aborts: past that point every step is garbage.
template <typename S>
TrainResult train_model(VideoModel<S>& model, const TrainConfig& cfg,
                        const std::string& csv_path = "") {
  cfg.validate();
  Pcg32 rng(cfg.seed);
  Adam<S> opt = adam_for(model.params, cfg.lr);
  const int total = cfg.stage1_steps + cfg.stage2_steps;
  TrainResult res;
  std::ofstream csv;
  if (!csv_path.empty()) {
    csv.open(csv_path);
    ACV_CHECK_IO(csv.good(), "cannot open ", csv_path, " for writing");
    csv << "step,stage,lr,loss,intra_mse,intra_bpp,p_mse,p_bpp\n";
  }

  for (int step = 0; step < total; ++step) {
    const int stage = step < cfg.stage1_steps ? 1 : 2;
    const bool bypass = stage == 1;
    opt.lr = double(step) < cfg.lr_drop_frac * double(total) ? cfg.lr
                                                             : cfg.lr * 0.1;

    auto [x0, x1] = draw_training_pair<S>(cfg.frame_size, rng);
    const Shape4 fs = x0.shape();
    Tensor<S> alpha =
        bypass ? alpha_uniform<S>(S(0), fs.h, fs.w, model.cfg.patch)
               : alpha_random<S>(fs.h, fs.w, model.cfg.patch, rng);

    model.params.zero_grad();
    TrainLogRow row;
    row.step = step;
    row.stage = stage;
    row.lr = opt.lr;
    {
      Tape<S> tape;
      CodingCtx<S> ctx;
      ctx.mode = QuantMode::kNoise;
      ctx.rng = &rng;
      IntraResult<S> ir = model.intra.code(x0, ctx);
      const bool gt_ref = stage == 1 && 2 * step < cfg.stage1_steps;
      Tensor<S> ref = gt_ref ? x0 : to_reference(ir.recon);
      PframeResult<S> pf = code_pframe(model, x1, ref, alpha, ctx, bypass);
      LossTerms<S> li = intra_loss(ir, x0, cfg.lambda_, fs.h, fs.w);
      LossTerms<S> lp = pframe_loss(pf, x1, alpha, cfg.lambda_, fs.h, fs.w);
      Tensor<S> loss = add(li.total, lp.total);
      row.loss = double(loss.item());
      row.intra_mse = double(li.distortion.item());
      row.intra_bpp = double(li.rate_bpp.item());
      row.p_mse = double(lp.distortion.item());
      row.p_bpp = double(lp.rate_bpp.item());
      ACV_CHECK(std::isfinite(row.loss), "training diverged at step ", step,
                " (loss ", row.loss, ")");
      tape.backward(loss);
    }
    opt.step();

    res.last_loss = row.loss;
    if (step % cfg.log_every == 0 || step + 1 == total) {
      res.rows.push_back(row);
      if (csv.is_open())
        csv << row.step << "," << row.stage << "," << row.lr << "," << row.loss
            << "," << row.intra_mse << "," << row.intra_bpp << "," << row.p_mse
            << "," << row.p_bpp << "\n";
    }
  }
  if (csv.is_open()) {
    csv.flush();
    ACV_CHECK_IO(csv.good(), "write failed: ", csv_path);
  }
  return res;
}

}  // namespace acv

#endif  // ACV_TRAIN_HPP_
