#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "acv/adapt.hpp"
#include "acv/checkpoint.hpp"
#include "acv/metrics.hpp"
#include "acv/synth.hpp"
#include "acv/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace acv;

namespace {

// Every knob of every subcommand lives here so one JSON file can configure a
// whole workflow; flags override file values, file values override defaults.
struct RunConfig {
  std::uint64_t seed = 1;
  int jobs = 1;
  // architecture (training; coding reads these from the checkpoint manifest)
  double width_mult = 0.25;
  int patch = 16;
  double max_flow = 16.0;
  // training schedule
  int stage1_steps = 1200;
  int stage2_steps = 600;
  double lr = 1e-4;
  double lr_drop_frac = 0.8;
  int frame_size = 64;
  int log_every = 25;
  // rate point; 0 = automatic (training: 1024, coding: the checkpoint's)
  double lambda = 0.0;
  int lambda_index = 0;
  // coding
  std::string adapt = "off";
  int adapt_steps = 32;
  double adapt_lr = 0.02;
  int intra_period = 8;
  double uniform_alpha = 0.0;
  bool no_verify = false;
  bool dump_alpha = false;
  bool dump_recon = false;
  // synthesis
  std::string preset = "mixed";
  int count = 1;
  int synth_frames = 16;
  int synth_width = 64;
  int synth_height = 64;
  std::string spec_file;
  // io
  std::string model;
  std::vector<std::string> models;
  std::vector<std::string> inputs;
  std::string out;
  std::string ref;
  std::string format = "auto";
  int raw_width = 0;
  int raw_height = 0;
  std::vector<double> sweep_values = {-1.0, 0.0, 1.0};
  std::string anchor_csv, test_csv;
};

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) s += sep;
    s += parts[i];
  }
  return s;
}

// JSON config schema: top-level object, keys named like the long flags with
// underscores. Unknown keys are rejected so typos cannot silently no-op.
void apply_json_file(RunConfig& c, const std::string& path) {
  std::vector<std::uint8_t> bytes = read_file_bytes(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  std::vector<std::string> bad;
  if (!j.is_object()) throw ConfigError(path + ": top level must be an object");
  for (const auto& [k, v] : j.items()) {
    try {
      if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "jobs") c.jobs = v.get<int>();
      else if (k == "width_mult") c.width_mult = v.get<double>();
      else if (k == "patch") c.patch = v.get<int>();
      else if (k == "max_flow") c.max_flow = v.get<double>();
      else if (k == "stage1_steps") c.stage1_steps = v.get<int>();
      else if (k == "stage2_steps") c.stage2_steps = v.get<int>();
      else if (k == "lr") c.lr = v.get<double>();
      else if (k == "lr_drop_frac") c.lr_drop_frac = v.get<double>();
      else if (k == "frame_size") c.frame_size = v.get<int>();
      else if (k == "log_every") c.log_every = v.get<int>();
      else if (k == "lambda") c.lambda = v.get<double>();
      else if (k == "lambda_index") c.lambda_index = v.get<int>();
      else if (k == "adapt") c.adapt = v.get<std::string>();
      else if (k == "adapt_steps") c.adapt_steps = v.get<int>();
      else if (k == "adapt_lr") c.adapt_lr = v.get<double>();
      else if (k == "intra_period") c.intra_period = v.get<int>();
      else if (k == "uniform_alpha") c.uniform_alpha = v.get<double>();
      else if (k == "verify_decode") c.no_verify = !v.get<bool>();
      else if (k == "dump_alpha") c.dump_alpha = v.get<bool>();
      else if (k == "dump_recon") c.dump_recon = v.get<bool>();
      else if (k == "preset") c.preset = v.get<std::string>();
      else if (k == "count") c.count = v.get<int>();
      else if (k == "frames") c.synth_frames = v.get<int>();
      else if (k == "width") c.synth_width = v.get<int>();
      else if (k == "height") c.synth_height = v.get<int>();
      else if (k == "format") c.format = v.get<std::string>();
      else if (k == "raw_width") c.raw_width = v.get<int>();
      else if (k == "raw_height") c.raw_height = v.get<int>();
      else if (k == "values") c.sweep_values = v.get<std::vector<double>>();
      else bad.push_back("unknown key '" + k + "'");
    } catch (const json::exception& e) {
      bad.push_back(k + ": " + e.what());
    }
  }
  if (!bad.empty()) throw ConfigError(path + ": " + join(bad, "; "));
}

json knobs_json(const RunConfig& c) {
  return json{{"seed", c.seed},
              {"jobs", c.jobs},
              {"width_mult", c.width_mult},
              {"patch", c.patch},
              {"max_flow", c.max_flow},
              {"stage1_steps", c.stage1_steps},
              {"stage2_steps", c.stage2_steps},
              {"lr", c.lr},
              {"lr_drop_frac", c.lr_drop_frac},
              {"frame_size", c.frame_size},
              {"log_every", c.log_every},
              {"lambda", c.lambda},
              {"lambda_index", c.lambda_index},
              {"adapt", c.adapt},
              {"adapt_steps", c.adapt_steps},
              {"adapt_lr", c.adapt_lr},
              {"intra_period", c.intra_period},
              {"uniform_alpha", c.uniform_alpha},
              {"verify_decode", !c.no_verify},
              {"dump_alpha", c.dump_alpha},
              {"dump_recon", c.dump_recon},
              {"preset", c.preset},
              {"count", c.count},
              {"frames", c.synth_frames},
              {"width", c.synth_width},
              {"height", c.synth_height},
              {"format", c.format},
              {"raw_width", c.raw_width},
              {"raw_height", c.raw_height},
              {"values", c.sweep_values}};
}

// One pass over every constraint; all violations are reported together so a
// bad config is fixed in one round, not one message at a time.
void validate_run(const std::string& cmd, const RunConfig& c) {
  std::vector<std::string> v;
  auto req = [&](bool ok, std::string msg) {
    if (!ok) v.push_back(std::move(msg));
  };
  req(c.jobs >= 1, "--jobs must be >= 1");
  req(c.width_mult > 0.0, "--width-mult must be > 0");
  req(c.patch > 0 && (c.patch % 16 == 0 || 64 % c.patch == 0),
      "--patch must divide 64 or be a multiple of 16");
  req(c.max_flow > 0.0, "--max-flow must be > 0");
  req(c.stage1_steps >= 0 && c.stage2_steps >= 0 &&
          c.stage1_steps + c.stage2_steps > 0,
      "training stages must be non-negative with at least one step total");
  req(c.lr > 0.0, "--lr must be > 0");
  req(c.lr_drop_frac > 0.0 && c.lr_drop_frac <= 1.0,
      "--lr-drop-frac must be in (0, 1]");
  req(c.frame_size > 0 && c.frame_size % 64 == 0,
      "--frame-size must be a positive 64-multiple");
  req(c.log_every > 0, "--log-every must be > 0");
  req(c.lambda >= 0.0 && std::isfinite(c.lambda),
      "--lambda must be finite and >= 0 (0 = automatic)");
  req(c.lambda_index >= 0 && c.lambda_index <= 255,
      "--lambda-index must fit in a byte");
  req(c.adapt == "off" || c.adapt == "greedy" || c.adapt == "lookahead",
      "--adapt must be off, greedy, or lookahead");
  req(c.adapt_steps >= 1, "--adapt-steps must be >= 1");
  req(c.adapt_lr >= 0.0 && std::isfinite(c.adapt_lr),
      "--adapt-lr must be finite and >= 0");
  req(c.intra_period >= 0 && c.intra_period <= 255,
      "--intra-period must be in [0, 255]");
  req(c.uniform_alpha >= -1.0 && c.uniform_alpha <= 1.0,
      "--uniform-alpha must be in [-1, 1]");
  req(c.preset == "static" || c.preset == "pan" || c.preset == "mixed" ||
          c.preset == "fast",
      "--preset must be static, pan, mixed, or fast");
  req(c.count >= 1, "--count must be >= 1");
  req(c.synth_frames >= 1, "--frames must be >= 1");
  req(c.synth_width >= 1 && c.synth_height >= 1,
      "--width and --height must be >= 1");
  req(c.format == "auto" || c.format == "png" || c.format == "raw",
      "--format must be auto, png, or raw");
  req(c.format != "raw" || (c.raw_width > 0 && c.raw_height > 0),
      "--format raw needs --raw-width and --raw-height");
  req(!c.sweep_values.empty(), "--values must not be empty");
  for (double a : c.sweep_values)
    req(a >= -1.0 && a <= 1.0, "--values entries must be in [-1, 1]");
  if (cmd == "encode" || cmd == "adapt-encode" || cmd == "report")
    req(c.inputs.size() == 1, cmd + " takes exactly one --input");
  if (cmd == "sweep-alpha" || cmd == "eval")
    req(!c.inputs.empty(), cmd + " needs at least one --input");
  if (cmd == "eval")
    req(!c.models.empty(), "eval needs at least one --model");
  if (!v.empty())
    throw ConfigError("invalid configuration: " + join(v, "; "));
}

std::uint64_t effective_jobs(const RunConfig& c) {
  const char* det = std::getenv("ACV_DETERMINISTIC");
  if (det && std::string(det) == "1") return 1;
  return std::uint64_t(c.jobs);
}

void write_run_config(const std::string& dir, const std::string& cmd,
                      const RunConfig& c, std::uint64_t checkpoint_hash) {
  json j = {{"command", cmd},
            {"seed", c.seed},
            {"checkpoint_hash", hex16(checkpoint_hash)},
            {"config", knobs_json(c)}};
  std::ofstream out(dir + "/run_config.json");
  ACV_CHECK_IO(out.is_open(), "cannot write ", dir, "/run_config.json");
  out << j.dump(2) << "\n";
  ACV_CHECK_IO(out.good(), "write failed: ", dir, "/run_config.json");
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  ACV_CHECK_IO(!ec, "cannot create ", dir, ": ", ec.message());
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  ACV_CHECK_IO(out.is_open(), "cannot write ", path);
  out << j.dump(2) << "\n";
  ACV_CHECK_IO(out.good(), "write failed: ", path);
}

// ---------------------------------------------------------------------------
// Model and sequence loading
// ---------------------------------------------------------------------------

struct LoadedModel {
  ModelConfig cfg;
  CheckpointManifest manifest;
  std::uint64_t file_hash = 0;  // fingerprint of the weight file bytes
  std::unique_ptr<VideoModel<float>> model;
};

LoadedModel load_model(const std::string& path) {
  LoadedModel lm;
  fs::path mpath(path);
  mpath.replace_extension(".json");
  lm.manifest = load_manifest(mpath.string());
  lm.cfg.width_mult = lm.manifest.width_mult;
  lm.cfg.patch = lm.manifest.patch;
  lm.cfg.max_flow = lm.manifest.max_flow;
  ACV_CHECK_STREAM(lm.cfg.hash() == lm.manifest.model_hash,
                   mpath.string(), ": manifest hash ", lm.manifest.model_hash,
                   " does not match its own architecture fields");
  lm.model = std::make_unique<VideoModel<float>>(lm.cfg, 1);
  std::vector<std::uint8_t> bytes = read_file_bytes(path);
  lm.file_hash = fnv1a64(bytes.data(), bytes.size());
  load_params_bytes(lm.model->params, lm.cfg.hash(), bytes.data(),
                    bytes.size());
  return lm;
}

Sequence<float> load_input(const RunConfig& c, const std::string& path) {
  bool raw = c.format == "raw";
  if (c.format == "auto") raw = !fs::is_directory(path);
  if (raw)
    return load_raw_rgb24<float>(path, c.raw_width, c.raw_height, 64);
  return load_png_dir<float>(path, 64);
}

AdaptMode mode_of(const std::string& s) {
  if (s == "greedy") return AdaptMode::kGreedy;
  if (s == "lookahead") return AdaptMode::kLookahead;
  return AdaptMode::kOff;
}

SequenceCodingConfig coding_config(const RunConfig& c, double manifest_lambda,
                                   bool adaptive) {
  SequenceCodingConfig scc;
  scc.mode = adaptive ? mode_of(c.adapt) : AdaptMode::kOff;
  scc.adapt.steps = c.adapt_steps;
  scc.adapt.lr = c.adapt_lr;
  scc.adapt.window = scc.mode == AdaptMode::kLookahead ? 2 : 1;
  scc.intra_period = c.intra_period;
  scc.lambda_ = c.lambda > 0.0 ? c.lambda : manifest_lambda;
  ACV_CHECK_CFG(scc.lambda_ > 0.0,
                "no rate point: --lambda not given and the checkpoint "
                "manifest carries none");
  scc.lambda_index = c.lambda_index;
  scc.uniform_alpha = c.uniform_alpha;
  scc.verify_decode = !c.no_verify;
  return scc;
}

template <typename F>
void parallel_for(int n, int jobs, F&& f) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j)
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < n;) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!err) err = std::current_exception();
          return;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------------------
// synth-data
// ---------------------------------------------------------------------------

SynthSpec spec_from_json(const std::string& path) {
  std::vector<std::uint8_t> bytes = read_file_bytes(path);
  SynthSpec s;
  try {
    json j = json::parse(bytes.begin(), bytes.end());
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.frames = j.value("frames", s.frames);
    s.region_rows = j.value("region_rows", s.region_rows);
    s.region_cols = j.value("region_cols", s.region_cols);
    s.max_displacement = j.value("max_displacement", s.max_displacement);
    s.octaves = j.value("octaves", s.octaves);
    s.base_freq = j.value("base_freq", s.base_freq);
    s.texture_seed = j.value("texture_seed", s.texture_seed);
    for (const auto& r : j.value("regions", json::array())) {
      RegionMotion m;
      m.vx = r.value("vx", 0.0);
      m.vy = r.value("vy", 0.0);
      m.zoom = r.value("zoom", 0.0);
      m.rot = r.value("rot", 0.0);
      s.regions.push_back(m);
    }
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return s;
}

json spec_to_json(const SynthSpec& s) {
  json regions = json::array();
  for (const auto& m : s.regions)
    regions.push_back(
        {{"vx", m.vx}, {"vy", m.vy}, {"zoom", m.zoom}, {"rot", m.rot}});
  return json{{"width", s.width},
              {"height", s.height},
              {"frames", s.frames},
              {"region_rows", s.region_rows},
              {"region_cols", s.region_cols},
              {"regions", regions},
              {"max_displacement", s.max_displacement},
              {"octaves", s.octaves},
              {"base_freq", s.base_freq},
              {"texture_seed", s.texture_seed}};
}

SynthSpec preset_spec(const RunConfig& c, Pcg32& rng) {
  SynthSpec s;
  s.width = c.synth_width;
  s.height = c.synth_height;
  s.frames = c.synth_frames;
  if (c.preset == "static") {
    s.regions = {RegionMotion{}};
  } else if (c.preset == "pan") {
    RegionMotion m;
    m.vx = rng.uniform(0.5, 2.0);
    m.vy = rng.uniform(-1.0, 1.0);
    s.regions = {m};
  } else if (c.preset == "fast") {
    s.region_rows = s.region_cols = 2;
    for (int i = 0; i < 4; ++i) {
      RegionMotion m;
      m.vx = rng.uniform(2.0, 3.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
      m.vy = rng.uniform(2.0, 3.5) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
      m.zoom = rng.uniform(-0.02, 0.02);
      m.rot = rng.uniform(-0.02, 0.02);
      s.regions.push_back(m);
    }
  } else {  // mixed: half the quadrants hold still
    s.region_rows = s.region_cols = 2;
    for (int i = 0; i < 4; ++i) {
      RegionMotion m;
      if (i % 2 == 0) {
        m.vx = rng.uniform(-3.0, 3.0);
        m.vy = rng.uniform(-3.0, 3.0);
        m.rot = rng.uniform(-0.02, 0.02);
      }
      s.regions.push_back(m);
    }
  }
  s.texture_seed = rng.next_u64();
  return s;
}

int cmd_synth(const RunConfig& c) {
  make_dir(c.out);
  Pcg32 rng(c.seed);
  for (int i = 0; i < c.count; ++i) {
    SynthSpec spec;
    if (!c.spec_file.empty()) {
      spec = spec_from_json(c.spec_file);
      spec.texture_seed += std::uint64_t(i);
    } else {
      spec = preset_spec(c, rng);
    }
    const std::uint64_t seq_seed = rng.next_u64();
    SynthResult<float> world = synthesize<float>(spec, seq_seed);
    char name[32];
    std::snprintf(name, sizeof name, "seq_%03d", i);
    const std::string dir = c.out + "/" + name;
    save_png_dir(dir, world.seq);
    json sj = spec_to_json(spec);
    sj["seed"] = seq_seed;
    write_json_file(dir + "/spec.json", sj);
    std::printf("%s: %d frames %dx%d (%s)\n", dir.c_str(), spec.frames,
                spec.width, spec.height,
                c.spec_file.empty() ? c.preset.c_str() : c.spec_file.c_str());
  }
  write_run_config(c.out, "synth-data", c, 0);
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const RunConfig& c) {
  make_dir(c.out);
  ModelConfig mc;
  mc.width_mult = c.width_mult;
  mc.patch = c.patch;
  mc.max_flow = c.max_flow;
  VideoModel<float> model(mc, c.seed);

  TrainConfig tc;
  tc.stage1_steps = c.stage1_steps;
  tc.stage2_steps = c.stage2_steps;
  tc.lr = c.lr;
  tc.lr_drop_frac = c.lr_drop_frac;
  tc.lambda_ = c.lambda > 0.0 ? c.lambda : 1024.0;
  tc.frame_size = c.frame_size;
  tc.seed = c.seed;
  tc.log_every = c.log_every;

  TrainResult res = train_model(model, tc, c.out + "/train_log.csv");

  const std::string ckpt = c.out + "/model.acvp";
  save_params(model.params, mc.hash(), ckpt);
  CheckpointManifest m;
  m.model_hash = mc.hash();
  m.width_mult = mc.width_mult;
  m.patch = mc.patch;
  m.max_flow = mc.max_flow;
  m.stage = tc.stage2_steps > 0 ? 2 : 1;
  m.iteration = tc.stage1_steps + tc.stage2_steps;
  m.lambda = tc.lambda_;
  m.seed = c.seed;
  save_manifest(m, c.out + "/model.json");

  std::vector<std::uint8_t> bytes = read_file_bytes(ckpt);
  write_run_config(c.out, "train", c, fnv1a64(bytes.data(), bytes.size()));

  const double first = res.rows.empty() ? 0.0 : res.rows.front().loss;
  std::printf("trained %d+%d steps (lambda %g): loss %.4f -> %.4f\n",
              tc.stage1_steps, tc.stage2_steps, tc.lambda_, first,
              res.last_loss);
  std::printf("wrote %s\n", ckpt.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// encode / adapt-encode / report
// ---------------------------------------------------------------------------

void print_frames(const std::vector<FrameReport<float>>& frames) {
  std::printf(
      "frame type     psnr      bpp  est_bpp  motion_bpp  inter_bpp\n");
  for (const auto& f : frames)
    std::printf("%5d    %c %8.3f %8.5f %8.5f    %8.5f   %8.5f\n", f.index,
                f.type == FrameType::kIntra ? 'I' : 'P', f.psnr, f.bpp,
                f.est_bpp, f.motion_bpp, f.inter_bpp);
}

json encode_summary(const SequenceResult<float>& res, double lambda,
                    const std::string& adapt) {
  std::size_t bytes = 0;
  for (const auto& f : res.stream.frames)
    for (const auto& ss : f.substreams) bytes += ss.size();
  json per = json::array();
  for (const auto& f : res.frames) per.push_back(f.psnr);
  return json{{"frames", res.frames.size()},
              {"payload_bytes", bytes},
              {"bpp", res.bpp},
              {"psnr", res.psnr},
              {"per_frame_psnr", per},
              {"lambda", lambda},
              {"adapt", adapt}};
}

int cmd_code(const RunConfig& rc, const std::string& cmd) {
  const bool adaptive = cmd != "encode";
  LoadedModel lm = load_model(rc.model);
  Sequence<float> seq = load_input(rc, rc.inputs[0]);
  SequenceCodingConfig scc = coding_config(rc, lm.manifest.lambda, adaptive);
  SequenceResult<float> res = code_sequence_adaptive(*lm.model, seq, scc);

  make_dir(rc.out);
  if (cmd == "report") {
    std::vector<std::string> files =
        emit_report(rc.out, res, lm.cfg.max_flow);
    write_run_config(rc.out, cmd, rc, lm.file_hash);
    print_frames(res.frames);
    std::printf("sequence: %.5f bpp  %.3f dB\n", res.bpp, res.psnr);
    std::printf("wrote %zu report files to %s\n", files.size(),
                rc.out.c_str());
    return 0;
  }

  write_file_bytes(rc.out + "/stream.acv", serialize_stream(res.stream));
  write_frame_metrics_csv(rc.out + "/frame_metrics.csv", res.frames);
  write_json_file(rc.out + "/summary.json",
                  encode_summary(res, scc.lambda_, adaptive ? rc.adapt : "off"));
  write_run_config(rc.out, cmd, rc, lm.file_hash);

  if (rc.dump_recon) {
    Sequence<float> rec;
    rec.frames = res.recons;
    rec.width = seq.width;
    rec.height = seq.height;
    save_png_dir(rc.out + "/recon", rec);
  }
  if (rc.dump_alpha) {
    make_dir(rc.out + "/alpha");
    for (const auto& f : res.frames) {
      if (f.type != FrameType::kPred) continue;
      char stem[32];
      std::snprintf(stem, sizeof stem, "alpha_%04d", f.index);
      write_png_rgb8(rc.out + "/alpha/" + stem + ".png",
                     heatmap_image(f.alpha, lm.cfg.patch, -1.0, 1.0));
      const Shape4 gs = f.alpha.shape();
      std::vector<double> vals(f.alpha.value().data(),
                               f.alpha.value().data() + gs.count());
      write_json_file(rc.out + "/alpha/" + stem + ".json",
                      json{{"index", f.index},
                           {"patch", lm.cfg.patch},
                           {"rows", gs.h},
                           {"cols", gs.w},
                           {"alpha", vals}});
    }
  }

  print_frames(res.frames);
  std::printf("sequence: %.5f bpp  %.3f dB\n", res.bpp, res.psnr);
  std::printf("wrote %s/stream.acv\n", rc.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// decode
// ---------------------------------------------------------------------------

int cmd_decode(const RunConfig& rc) {
  LoadedModel lm = load_model(rc.model);
  std::vector<std::uint8_t> bytes = read_file_bytes(rc.inputs[0]);
  VideoStream vs = parse_stream(bytes);
  std::vector<Tensor<float>> dec = decode_stream(*lm.model, vs);

  make_dir(rc.out);
  Sequence<float> outseq;
  outseq.frames = dec;
  outseq.width = vs.header.width;
  outseq.height = vs.header.height;
  save_png_dir(rc.out, outseq);

  json summary = {{"frames", dec.size()},
                  {"width", vs.header.width},
                  {"height", vs.header.height}};
  if (!rc.ref.empty()) {
    Sequence<float> ref = load_input(rc, rc.ref);
    ACV_CHECK_CFG(ref.width == vs.header.width &&
                      ref.height == vs.header.height &&
                      ref.frames.size() == dec.size(),
                  "reference is ", ref.width, "x", ref.height, "x",
                  ref.frames.size(), ", stream is ", vs.header.width, "x",
                  vs.header.height, "x", dec.size());
    double sum = 0.0;
    json per = json::array();
    for (std::size_t i = 0; i < dec.size(); ++i) {
      const double p =
          psnr_rgb(dec[i], ref.frames[i], vs.header.height, vs.header.width);
      per.push_back(p);
      sum += p;
    }
    summary["psnr"] = sum / double(dec.size());
    summary["per_frame_psnr"] = per;
    std::printf("decoded %zu frames: %.3f dB vs reference\n", dec.size(),
                sum / double(dec.size()));
  } else {
    std::printf("decoded %zu frames\n", dec.size());
  }
  write_json_file(rc.out + "/summary.json", summary);
  write_run_config(rc.out, "decode", rc, lm.file_hash);
  return 0;
}

// ---------------------------------------------------------------------------
// sweep-alpha
// ---------------------------------------------------------------------------

int cmd_sweep(const RunConfig& rc) {
  LoadedModel lm = load_model(rc.model);
  std::vector<Sequence<float>> seqs;
  for (const auto& p : rc.inputs) seqs.push_back(load_input(rc, p));
  SequenceCodingConfig base = coding_config(rc, lm.manifest.lambda, false);
  std::vector<SweepRow> rows =
      alpha_sweep(*lm.model, seqs, base, rc.sweep_values);

  make_dir(rc.out);
  std::ofstream csv(rc.out + "/sweep.csv");
  ACV_CHECK_IO(csv.is_open(), "cannot write ", rc.out, "/sweep.csv");
  csv << "alpha,motion_bpp,inter_bpp,motion_delta_pct,inter_delta_pct\n";
  std::printf(
      "alpha  motion_bpp  inter_bpp  motion_delta%%  inter_delta%%\n");
  for (const auto& r : rows) {
    char line[256];
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.alpha, r.motion_bpp, r.inter_bpp, r.motion_delta_pct,
                  r.inter_delta_pct);
    csv << line;
    std::printf("%5.2f    %8.5f   %8.5f      %+8.2f      %+8.2f\n", r.alpha,
                r.motion_bpp, r.inter_bpp, r.motion_delta_pct,
                r.inter_delta_pct);
  }
  csv.flush();
  ACV_CHECK_IO(csv.good(), "write failed: ", rc.out, "/sweep.csv");
  write_run_config(rc.out, "sweep-alpha", rc, lm.file_hash);
  return 0;
}

// ---------------------------------------------------------------------------
// eval / bdrate
// ---------------------------------------------------------------------------

inline constexpr const char* kRdCsvHeader = "lambda,bpp,psnr";

std::vector<RDPoint> read_rd_csv(const std::string& path) {
  std::ifstream in(path);
  ACV_CHECK_IO(in.is_open(), "cannot read ", path);
  std::string line;
  ACV_CHECK_STREAM(std::getline(in, line) && line == kRdCsvHeader,
                   path, ": expected header '", kRdCsvHeader, "'");
  std::vector<RDPoint> pts;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double lambda = 0.0;
    RDPoint p;
    const int n =
        std::sscanf(line.c_str(), "%lf,%lf,%lf", &lambda, &p.bpp, &p.psnr);
    ACV_CHECK_STREAM(n == 3, path, ": bad row '", line, "'");
    pts.push_back(p);
  }
  return pts;
}

int cmd_eval(const RunConfig& rc) {
  std::vector<LoadedModel> models;
  for (const auto& p : rc.models) models.push_back(load_model(p));
  std::vector<Sequence<float>> seqs;
  for (const auto& p : rc.inputs) seqs.push_back(load_input(rc, p));

  struct Cell {
    std::size_t bytes = 0;
    std::int64_t px_frames = 0;
    double psnr_sum = 0.0;
    std::int64_t frames = 0;
  };
  const int nm = int(models.size()), ns = int(seqs.size());
  std::vector<Cell> cells(std::size_t(nm) * ns);
  // Model x sequence pairs are independent; order of execution cannot change
  // any output because each cell is written once.
  parallel_for(nm * ns, int(effective_jobs(rc)), [&](int i) {
    const int mi = i / ns, si = i % ns;
    RunConfig local = rc;
    local.lambda_index = mi;
    SequenceCodingConfig scc =
        coding_config(local, models[std::size_t(mi)].manifest.lambda, true);
    SequenceResult<float> res = code_sequence_adaptive(
        *models[std::size_t(mi)].model, seqs[std::size_t(si)], scc);
    Cell& cell = cells[std::size_t(i)];
    for (const auto& f : res.stream.frames)
      for (const auto& ss : f.substreams) cell.bytes += ss.size();
    cell.px_frames = std::int64_t(seqs[std::size_t(si)].width) *
                     seqs[std::size_t(si)].height *
                     std::int64_t(res.frames.size());
    for (const auto& f : res.frames) cell.psnr_sum += f.psnr;
    cell.frames = std::int64_t(res.frames.size());
  });

  struct Row {
    double lambda, bpp, psnr;
  };
  std::vector<Row> rows;
  for (int mi = 0; mi < nm; ++mi) {
    Cell total;
    for (int si = 0; si < ns; ++si) {
      const Cell& cell = cells[std::size_t(mi) * ns + si];
      total.bytes += cell.bytes;
      total.px_frames += cell.px_frames;
      total.psnr_sum += cell.psnr_sum;
      total.frames += cell.frames;
    }
    rows.push_back({models[std::size_t(mi)].manifest.lambda,
                    8.0 * double(total.bytes) / double(total.px_frames),
                    total.psnr_sum / double(total.frames)});
  }
  std::sort(rows.begin(), rows.end(),
            [](const Row& a, const Row& b) { return a.lambda < b.lambda; });

  make_dir(rc.out);
  std::ofstream csv(rc.out + "/rd_points.csv");
  ACV_CHECK_IO(csv.is_open(), "cannot write ", rc.out, "/rd_points.csv");
  csv << kRdCsvHeader << "\n";
  std::printf("  lambda       bpp      psnr\n");
  for (const auto& r : rows) {
    char line[128];
    std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", r.lambda, r.bpp,
                  r.psnr);
    csv << line;
    std::printf("%8.0f  %8.5f  %8.3f\n", r.lambda, r.bpp, r.psnr);
  }
  csv.flush();
  ACV_CHECK_IO(csv.good(), "write failed: ", rc.out, "/rd_points.csv");
  std::uint64_t hash = 0;
  for (const auto& m : models) hash ^= m.file_hash;
  write_run_config(rc.out, "eval", rc, hash);
  return 0;
}

int cmd_bdrate(const RunConfig& rc) {
  std::vector<RDPoint> anchor = read_rd_csv(rc.anchor_csv);
  std::vector<RDPoint> test = read_rd_csv(rc.test_csv);
  const double bd = bd_rate(anchor, test);
  std::printf("BD-rate (test vs anchor): %+.4f%%\n", bd);
  if (!rc.out.empty())
    write_json_file(rc.out, json{{"anchor", rc.anchor_csv},
                                 {"test", rc.test_csv},
                                 {"bd_rate_pct", bd}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  // The config file loads before flag parsing so explicit flags win.
  try {
    for (int i = 1; i < argc; ++i) {
      const std::string a = argv[i];
      if (a == "--config" && i + 1 < argc) apply_json_file(cfg, argv[i + 1]);
      else if (a.rfind("--config=", 0) == 0)
        apply_json_file(cfg, a.substr(9));
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }

  CLI::App app{"content-adaptive learned video codec"};
  app.require_subcommand(1);
  std::string config_path;  // consumed by the pre-scan above

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path,
                    "JSON config file; explicit flags override it");
    sub->add_option("--seed", cfg.seed, "global random seed");
    sub->add_option("--jobs", cfg.jobs,
                    "sequence-level parallelism (ACV_DETERMINISTIC=1 forces 1)");
  };
  auto add_arch = [&](CLI::App* sub) {
    sub->add_option("--width-mult", cfg.width_mult,
                    "channel width multiplier");
    sub->add_option("--patch", cfg.patch, "alpha patch size in pixels");
    sub->add_option("--max-flow", cfg.max_flow,
                    "flow clamp in pixels");
  };
  auto add_input = [&](CLI::App* sub, bool multi) {
    auto* o = sub->add_option("--input", cfg.inputs,
                              "input sequence (PNG dir or raw RGB24 file)");
    o->required();
    if (!multi) o->expected(1);
    sub->add_option("--format", cfg.format, "auto, png, or raw");
    sub->add_option("--raw-width", cfg.raw_width, "raw input width");
    sub->add_option("--raw-height", cfg.raw_height, "raw input height");
  };
  auto add_coding = [&](CLI::App* sub) {
    sub->add_option("--lambda", cfg.lambda,
                    "rate-distortion weight (0 = the checkpoint's)");
    sub->add_option("--lambda-index", cfg.lambda_index,
                    "rate point tag stored in the stream header");
    sub->add_option("--intra-period", cfg.intra_period,
                    "frames per intra refresh (0 = single leading intra)");
    sub->add_flag("--no-verify", cfg.no_verify,
                  "skip the decode-side verification pass");
  };
  auto add_adapt = [&](CLI::App* sub) {
    sub->add_option("--adapt", cfg.adapt, "off, greedy, or lookahead");
    sub->add_option("--adapt-steps", cfg.adapt_steps,
                    "optimization steps per adapted frame");
    sub->add_option("--adapt-lr", cfg.adapt_lr, "optimization step size");
  };

  CLI::App* synth = app.add_subcommand(
      "synth-data", "generate synthetic test sequences as PNG directories");
  synth->add_option("--out", cfg.out, "output directory")->required();
  synth->add_option("--spec", cfg.spec_file, "motion spec JSON file");
  synth->add_option("--preset", cfg.preset, "static, pan, mixed, or fast");
  synth->add_option("--count", cfg.count, "number of sequences");
  synth->add_option("--frames", cfg.synth_frames, "frames per sequence");
  synth->add_option("--width", cfg.synth_width, "frame width");
  synth->add_option("--height", cfg.synth_height, "frame height");
  add_common(synth);

  CLI::App* train = app.add_subcommand("train", "train a model checkpoint");
  train->add_option("--out", cfg.out, "run directory")->required();
  train->add_option("--stage1-steps", cfg.stage1_steps,
                    "steps with modulation bypassed");
  train->add_option("--stage2-steps", cfg.stage2_steps,
                    "steps with randomized preference grids");
  train->add_option("--lr", cfg.lr, "learning rate");
  train->add_option("--lr-drop-frac", cfg.lr_drop_frac,
                    "fraction of steps before the 10x lr drop");
  train->add_option("--lambda", cfg.lambda,
                    "rate-distortion weight (0 = 1024)");
  train->add_option("--frame-size", cfg.frame_size,
                    "training frame size (64-multiple)");
  train->add_option("--log-every", cfg.log_every, "csv log stride");
  add_arch(train);
  add_common(train);

  CLI::App* encode =
      app.add_subcommand("encode", "encode a sequence with a fixed alpha");
  encode->add_option("--model", cfg.model, "checkpoint (.acvp)")->required();
  encode->add_option("--out", cfg.out, "run directory")->required();
  encode->add_option("--uniform-alpha", cfg.uniform_alpha,
                     "fixed preference in [-1, 1]");
  encode->add_flag("--dump-alpha", cfg.dump_alpha,
                   "write per-frame alpha maps as PNG+JSON");
  encode->add_flag("--dump-recon", cfg.dump_recon,
                   "write reconstructed frames");
  add_input(encode, false);
  add_coding(encode);
  add_common(encode);

  CLI::App* adapt = app.add_subcommand(
      "adapt-encode", "encode with per-frame alpha optimization");
  adapt->add_option("--model", cfg.model, "checkpoint (.acvp)")->required();
  adapt->add_option("--out", cfg.out, "run directory")->required();
  adapt->add_option("--uniform-alpha", cfg.uniform_alpha,
                    "fixed preference when --adapt off");
  adapt->add_flag("--dump-alpha", cfg.dump_alpha,
                  "write per-frame alpha maps as PNG+JSON");
  adapt->add_flag("--dump-recon", cfg.dump_recon,
                  "write reconstructed frames");
  add_input(adapt, false);
  add_coding(adapt);
  add_adapt(adapt);
  add_common(adapt);

  CLI::App* decode = app.add_subcommand("decode", "decode a coded stream");
  decode->add_option("--model", cfg.model, "checkpoint (.acvp)")->required();
  decode->add_option("--out", cfg.out, "output frame directory")->required();
  decode->add_option("--ref", cfg.ref,
                     "source sequence for quality reporting");
  add_input(decode, false);
  add_common(decode);

  CLI::App* sweep = app.add_subcommand(
      "sweep-alpha", "measure substream rates across uniform alpha values");
  sweep->add_option("--model", cfg.model, "checkpoint (.acvp)")->required();
  sweep->add_option("--out", cfg.out, "run directory")->required();
  sweep->add_option("--values", cfg.sweep_values, "alpha values to sweep")
      ->delimiter(',');
  add_input(sweep, true);
  add_coding(sweep);
  add_common(sweep);

  CLI::App* eval = app.add_subcommand(
      "eval", "code sequences with each checkpoint and emit an RD curve");
  eval->add_option("--model", cfg.models, "checkpoints, one per rate point")
      ->required();
  eval->add_option("--out", cfg.out, "run directory")->required();
  add_input(eval, true);
  add_coding(eval);
  add_adapt(eval);
  add_common(eval);

  CLI::App* bdrate = app.add_subcommand(
      "bdrate", "average rate difference between two RD curves");
  bdrate->add_option("anchor", cfg.anchor_csv, "anchor rd_points.csv")
      ->required();
  bdrate->add_option("test", cfg.test_csv, "test rd_points.csv")->required();
  bdrate->add_option("--out", cfg.out, "optional JSON result path");
  add_common(bdrate);

  CLI::App* report = app.add_subcommand(
      "report", "code a sequence and emit metrics, maps, and flow images");
  report->add_option("--model", cfg.model, "checkpoint (.acvp)")->required();
  report->add_option("--out", cfg.out, "report directory")->required();
  report->add_option("--uniform-alpha", cfg.uniform_alpha,
                     "fixed preference when --adapt off");
  add_input(report, false);
  add_coding(report);
  add_adapt(report);
  add_common(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    const std::string cmd = sub->get_name();
    if (std::uint64_t(cfg.jobs) != effective_jobs(cfg)) cfg.jobs = 1;
    validate_run(cmd, cfg);
    if (cmd == "synth-data") return cmd_synth(cfg);
    if (cmd == "train") return cmd_train(cfg);
    if (cmd == "encode" || cmd == "adapt-encode" || cmd == "report")
      return cmd_code(cfg, cmd);
    if (cmd == "decode") return cmd_decode(cfg);
    if (cmd == "sweep-alpha") return cmd_sweep(cfg);
    if (cmd == "eval") return cmd_eval(cfg);
    if (cmd == "bdrate") return cmd_bdrate(cfg);
    std::fprintf(stderr, "error: unhandled subcommand %s\n", cmd.c_str());
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const CorruptStreamError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 5;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
