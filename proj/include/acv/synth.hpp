#ifndef ACV_SYNTH_HPP_
#define ACV_SYNTH_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "acv/hash.hpp"
#include "acv/video.hpp"

namespace acv {

// Rigid-plus-zoom motion of one region's content, per frame.
struct RegionMotion {
  double vx = 0;    // translation, px/frame (horizontal)
  double vy = 0;    // translation, px/frame (vertical)
  double zoom = 0;  // relative scale change per frame
  double rot = 0;   // radians per frame
};

struct SynthSpec {
  int width = 64;
  int height = 64;
  int frames = 16;
  int region_rows = 1;
  int region_cols = 1;
  std::vector<RegionMotion> regions;  // row-major, region_rows*region_cols
  double max_displacement = 8.0;      // per-frame cap, px
  int octaves = 4;
  double base_freq = 1.0 / 16.0;  // lattice cells per pixel at octave 0
  std::uint64_t texture_seed = 0;
};

template <typename S>
struct SynthResult {
  Sequence<S> seq;
  // flows[t]: (1,2,H,W) backward flow aligning frame t+1 to frame t, at the
  // original (unpadded) resolution; channel 0 horizontal, 1 vertical.
  std::vector<Tensor<S>> flows;
};

namespace detail {

// Stateless value noise over an unbounded plane.
inline double lattice_value(std::int64_t ix, std::int64_t iy, int octave,
                            int channel, std::uint64_t seed) {
  std::uint64_t k = std::uint64_t(ix) * 0x9E3779B97F4A7C15ULL ^
                    std::uint64_t(iy) * 0xC2B2AE3D27D4EB4FULL ^
                    (std::uint64_t(octave) << 32) ^
                    (std::uint64_t(channel) << 40) ^ seed;
  return double(mix64(k) >> 11) * 0x1.0p-53;
}

inline double value_noise(double x, double y, int octave, int channel,
                          std::uint64_t seed) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto ix = std::int64_t(fx), iy = std::int64_t(fy);
  double tx = x - fx, ty = y - fy;
  tx = tx * tx * (3 - 2 * tx);  // smoothstep
  ty = ty * ty * (3 - 2 * ty);
  const double v00 = lattice_value(ix, iy, octave, channel, seed);
  const double v10 = lattice_value(ix + 1, iy, octave, channel, seed);
  const double v01 = lattice_value(ix, iy + 1, octave, channel, seed);
  const double v11 = lattice_value(ix + 1, iy + 1, octave, channel, seed);
  const double top = v00 + (v10 - v00) * tx;
  const double bot = v01 + (v11 - v01) * tx;
  return top + (bot - top) * ty;
}

// Multi-octave world texture, one value in [0,1] per channel at any real
// coordinate; the infinite domain is what makes warped sampling exact.
inline double world_texture(double x, double y, int channel, int octaves,
                            double base_freq, std::uint64_t seed) {
  double total = 0, norm = 0, amp = 1, freq = base_freq;
  for (int o = 0; o < octaves; ++o) {
    total += amp * value_noise(x * freq, y * freq, o, channel, seed);
    norm += amp;
    amp *= 0.5;
    freq *= 2;
  }
  return total / norm;
}

struct RegionFrame {  // screen -> world map p |-> R(-th)*(p - anchor)/s + c
  double cx, cy;      // region center (world anchor)
  double ax, ay;      // screen anchor at this frame
  double scale;       // cumulative zoom
  double cos_th, sin_th;
};

inline RegionFrame region_at(const RegionMotion& m, double cx, double cy,
                             int t) {
  RegionFrame rf;
  rf.cx = cx;
  rf.cy = cy;
  rf.ax = cx + m.vx * t;
  rf.ay = cy + m.vy * t;
  rf.scale = std::pow(1.0 + m.zoom, double(t));
  const double th = m.rot * t;
  rf.cos_th = std::cos(th);
  rf.sin_th = std::sin(th);
  return rf;
}

inline void screen_to_world(const RegionFrame& rf, double px, double py,
                            double& wx, double& wy) {
  const double dx = (px - rf.ax) / rf.scale;
  const double dy = (py - rf.ay) / rf.scale;
  // rotate by -theta
  wx = rf.cos_th * dx + rf.sin_th * dy + rf.cx;
  wy = -rf.sin_th * dx + rf.cos_th * dy + rf.cy;
}

inline void world_to_screen(const RegionFrame& rf, double wx, double wy,
                            double& px, double& py) {
  const double dx = wx - rf.cx;
  const double dy = wy - rf.cy;
  px = rf.scale * (rf.cos_th * dx - rf.sin_th * dy) + rf.ax;
  py = rf.scale * (rf.sin_th * dx + rf.cos_th * dy) + rf.ay;
}

}  // namespace detail

inline void validate_synth_spec(const SynthSpec& spec) {
  ACV_CHECK_CFG(spec.width > 0 && spec.height > 0, "synth: resolution ",
                spec.width, "x", spec.height);
  ACV_CHECK_CFG(spec.frames >= 1, "synth: frame count ", spec.frames);
  ACV_CHECK_CFG(spec.region_rows >= 1 && spec.region_cols >= 1,
                "synth: region grid ", spec.region_rows, "x",
                spec.region_cols);
  ACV_CHECK_CFG(
      int(spec.regions.size()) == spec.region_rows * spec.region_cols,
      "synth: ", spec.regions.size(), " region motions for a ",
      spec.region_rows, "x", spec.region_cols, " grid");
  ACV_CHECK_CFG(spec.octaves >= 1 && spec.base_freq > 0, "synth: texture ",
                spec.octaves, " octaves, base_freq ", spec.base_freq);
  const double cell_w = double(spec.width) / spec.region_cols;
  const double cell_h = double(spec.height) / spec.region_rows;
  const double radius = 0.5 * std::hypot(cell_w, cell_h);
  for (std::size_t i = 0; i < spec.regions.size(); ++i) {
    const auto& m = spec.regions[i];
    const double disp = std::hypot(m.vx, m.vy) +
                        (std::abs(m.zoom) + std::abs(m.rot)) * radius;
    ACV_CHECK_CFG(disp <= spec.max_displacement, "synth: region ", i,
                  " moves ~", disp, " px/frame, cap is ",
                  spec.max_displacement);
  }
}

// Deterministic procedural clip: a fixed noise world seen through per-region
// affine warps, with the exact backward flow between consecutive frames.
template <typename S>
SynthResult<S> synthesize(const SynthSpec& spec, std::uint64_t seed,
                          int pad_multiple = 64) {
  validate_synth_spec(spec);
  const std::uint64_t tex_seed = spec.texture_seed ^ mix64(seed);
  const int W = spec.width, H = spec.height;
  const int rows = spec.region_rows, cols = spec.region_cols;

  // per-pixel region ownership and per-region centers
  auto region_of = [&](int x, int y) {
    const int rx = std::min(x * cols / W, cols - 1);
    const int ry = std::min(y * rows / H, rows - 1);
    return ry * cols + rx;
  };
  std::vector<double> cx(std::size_t(rows) * cols), cy(std::size_t(rows) * cols);
  for (int ry = 0; ry < rows; ++ry)
    for (int rx = 0; rx < cols; ++rx) {
      cx[std::size_t(ry) * cols + rx] = (rx + 0.5) * double(W) / cols;
      cy[std::size_t(ry) * cols + rx] = (ry + 0.5) * double(H) / rows;
    }

  SynthResult<S> out;
  out.seq.width = W;
  out.seq.height = H;
  out.seq.source = "synth:" + std::to_string(seed);

  std::vector<detail::RegionFrame> prev_rf, cur_rf(spec.regions.size());
  for (int t = 0; t < spec.frames; ++t) {
    for (std::size_t r = 0; r < spec.regions.size(); ++r)
      cur_rf[r] = detail::region_at(spec.regions[r], cx[r], cy[r], t);

    Tensor<S> frame = Tensor<S>::zeros(Shape4(1, 3, H, W));
    S* fd = frame.mutable_value().data();
    Tensor<S> flow;
    S* fl = nullptr;
    if (t > 0) {
      flow = Tensor<S>::zeros(Shape4(1, 2, H, W));
      fl = flow.mutable_value().data();
    }
    const std::int64_t plane = std::int64_t(H) * W;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const std::size_t r = std::size_t(region_of(x, y));
        double wx, wy;
        detail::screen_to_world(cur_rf[r], double(x), double(y), wx, wy);
        for (int c = 0; c < 3; ++c)
          fd[c * plane + std::int64_t(y) * W + x] = S(detail::world_texture(
              wx, wy, c, spec.octaves, spec.base_freq, tex_seed));
        if (t > 0) {
          double qx, qy;
          detail::world_to_screen(prev_rf[r], wx, wy, qx, qy);
          fl[std::int64_t(y) * W + x] = S(qx - double(x));
          fl[plane + std::int64_t(y) * W + x] = S(qy - double(y));
        }
      }
    out.seq.frames.push_back(frame);
    if (t > 0) out.flows.push_back(flow);
    prev_rf = cur_rf;
  }
  pad_sequence(out.seq, pad_multiple);
  return out;
}

}  // namespace acv

#endif  // ACV_SYNTH_HPP_
