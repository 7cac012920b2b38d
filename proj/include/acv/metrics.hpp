#ifndef ACV_METRICS_HPP_
#define ACV_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "acv/adapt.hpp"
#include "acv/png_io.hpp"

namespace acv {

// One operating point of a codec: measured bits per original pixel against
// reconstruction quality.
struct RDPoint {
  double bpp = 0.0;
  double psnr = 0.0;
};

// ---------------------------------------------------------------------------
// Monotone piecewise-cubic interpolation
// ---------------------------------------------------------------------------

// Fritsch-Carlson shape-preserving cubic through strictly increasing xs.
// Monotone data stays monotone between knots (no overshoot), which is why
// sparse RD curves are interpolated this way. Integration is exact per
// segment (antiderivative of the cubic).
class Pchip {
 public:
  Pchip(std::vector<double> xs, std::vector<double> ys)
      : xs_(std::move(xs)), ys_(std::move(ys)) {
    const std::size_t n = xs_.size();
    ACV_CHECK_CFG(n >= 2 && ys_.size() == n, "pchip: ", n, " xs vs ",
                  ys_.size(), " ys");
    for (std::size_t i = 1; i < n; ++i)
      ACV_CHECK_CFG(xs_[i] > xs_[i - 1],
                    "pchip: xs not strictly increasing at index ", i);
    ms_.assign(n, 0.0);
    if (n == 2) {
      ms_[0] = ms_[1] = delta(0);
      return;
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double d0 = delta(i - 1), d1 = delta(i);
      if (d0 * d1 <= 0.0) continue;  // local extremum: flat slope
      const double w1 = 2.0 * h(i) + h(i - 1);
      const double w2 = h(i) + 2.0 * h(i - 1);
      ms_[i] = (w1 + w2) / (w1 / d0 + w2 / d1);
    }
    ms_[0] = edge_slope(h(0), h(1), delta(0), delta(1));
    ms_[n - 1] = edge_slope(h(n - 2), h(n - 3), delta(n - 2), delta(n - 3));
  }

  double lo() const { return xs_.front(); }
  double hi() const { return xs_.back(); }

  double operator()(double x) const {
    ACV_CHECK(x >= lo() && x <= hi(), "pchip: ", x, " outside [", lo(), ", ",
              hi(), "]");
    const std::size_t i = segment(x);
    const double hw = h(i);
    const double t = (x - xs_[i]) / hw;
    const double t2 = t * t, t3 = t2 * t;
    return ys_[i] * (2.0 * t3 - 3.0 * t2 + 1.0) +
           hw * ms_[i] * (t3 - 2.0 * t2 + t) + ys_[i + 1] * (3.0 * t2 - 2.0 * t3) +
           hw * ms_[i + 1] * (t3 - t2);
  }

  double integrate(double a, double b) const {
    ACV_CHECK(a <= b, "pchip: integration bounds ", a, " > ", b);
    ACV_CHECK(a >= lo() && b <= hi(), "pchip: bounds [", a, ", ", b,
              "] outside [", lo(), ", ", hi(), "]");
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < xs_.size(); ++i) {
      const double seg_lo = std::max(a, xs_[i]);
      const double seg_hi = std::min(b, xs_[i + 1]);
      if (seg_hi <= seg_lo) continue;
      const double hw = h(i);
      const double ta = (seg_lo - xs_[i]) / hw;
      const double tb = (seg_hi - xs_[i]) / hw;
      total += hw * (antiderivative(i, tb) - antiderivative(i, ta));
    }
    return total;
  }

 private:
  double h(std::size_t i) const { return xs_[i + 1] - xs_[i]; }
  double delta(std::size_t i) const { return (ys_[i + 1] - ys_[i]) / h(i); }

  // Three-point endpoint slope, clipped so the end segment stays monotone.
  static double edge_slope(double h0, double h1, double d0, double d1) {
    double m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (m * d0 <= 0.0) return 0.0;
    if (d0 * d1 < 0.0 && std::abs(m) > 3.0 * std::abs(d0)) return 3.0 * d0;
    return m;
  }

  std::size_t segment(double x) const {
    auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    std::size_t i =
        it == xs_.begin() ? 0 : std::size_t(it - xs_.begin()) - 1;
    return std::min(i, xs_.size() - 2);
  }

  double antiderivative(std::size_t i, double t) const {
    const double hw = h(i);
    const double t2 = t * t, t3 = t2 * t, t4 = t3 * t;
    return ys_[i] * (0.5 * t4 - t3 + t) +
           hw * ms_[i] * (0.25 * t4 - (2.0 / 3.0) * t3 + 0.5 * t2) +
           ys_[i + 1] * (t3 - 0.5 * t4) +
           hw * ms_[i + 1] * (0.25 * t4 - t3 / 3.0);
  }

  std::vector<double> xs_, ys_, ms_;
};

// ---------------------------------------------------------------------------
// BD-rate
// ---------------------------------------------------------------------------

// Average rate difference of `test` against `anchor` over their shared
// quality range, in percent; negative means the test codec spends fewer bits
// at equal quality. log10(rate) is interpolated against PSNR for both curves
// and the gap averaged over the overlapping PSNR interval.
inline double bd_rate(std::vector<RDPoint> anchor, std::vector<RDPoint> test) {
  auto prep = [](std::vector<RDPoint>& pts, const char* which) {
    ACV_CHECK_CFG(pts.size() >= 4, "bd-rate: ", which, " curve has ",
                  pts.size(), " points, need at least 4");
    std::sort(pts.begin(), pts.end(),
              [](const RDPoint& a, const RDPoint& b) { return a.psnr < b.psnr; });
    for (const RDPoint& p : pts)
      ACV_CHECK_CFG(p.bpp > 0.0 && std::isfinite(p.bpp) &&
                        std::isfinite(p.psnr),
                    "bd-rate: ", which, " point (", p.bpp, " bpp, ", p.psnr,
                    " dB) out of domain");
    for (std::size_t i = 1; i < pts.size(); ++i)
      ACV_CHECK_CFG(pts[i].psnr > pts[i - 1].psnr &&
                        pts[i].bpp > pts[i - 1].bpp,
                    "bd-rate: ", which,
                    " curve not strictly monotone after sorting (index ", i,
                    ")");
  };
  prep(anchor, "anchor");
  prep(test, "test");
  const double lo = std::max(anchor.front().psnr, test.front().psnr);
  const double hi = std::min(anchor.back().psnr, test.back().psnr);
  ACV_CHECK_CFG(hi > lo, "bd-rate: curves share no quality range ([",
                anchor.front().psnr, ", ", anchor.back().psnr, "] vs [",
                test.front().psnr, ", ", test.back().psnr, "])");
  auto to_pchip = [](const std::vector<RDPoint>& pts) {
    std::vector<double> xs, ys;
    for (const RDPoint& p : pts) {
      xs.push_back(p.psnr);
      ys.push_back(std::log10(p.bpp));
    }
    return Pchip(std::move(xs), std::move(ys));
  };
  Pchip pa = to_pchip(anchor);
  Pchip pt = to_pchip(test);
  const double avg = (pt.integrate(lo, hi) - pa.integrate(lo, hi)) / (hi - lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

// ---------------------------------------------------------------------------
// Uniform-alpha sweep
// ---------------------------------------------------------------------------

struct SweepRow {
  double alpha = 0.0;
  double motion_bpp = 0.0;  // mean over predicted frames, measured bytes
  double inter_bpp = 0.0;
  double motion_delta_pct = 0.0;  // vs the alpha == 0 run
  double inter_delta_pct = 0.0;
};

// Codes every sequence once per alpha value with a fixed uniform grid and
// reports how the motion and inter rates respond. The alpha == 0 baseline is
// always measured, so requested rows carry deltas against it.
template <typename S>
std::vector<SweepRow> alpha_sweep(VideoModel<S>& model,
                                  const std::vector<Sequence<S>>& seqs,
                                  const SequenceCodingConfig& base,
                                  const std::vector<double>& values = {
                                      -1.0, 0.0, 1.0}) {
  ACV_CHECK_CFG(!seqs.empty(), "alpha sweep: no sequences");
  ACV_CHECK_CFG(!values.empty(), "alpha sweep: no alpha values");
  auto measure = [&](double v) {
    SequenceCodingConfig cfg = base;
    cfg.mode = AdaptMode::kOff;
    cfg.uniform_alpha = v;
    double motion = 0.0, inter = 0.0;
    std::int64_t preds = 0;
    for (const Sequence<S>& s : seqs) {
      SequenceResult<S> r = code_sequence_adaptive(model, s, cfg);
      for (const auto& f : r.frames) {
        if (f.type != FrameType::kPred) continue;
        motion += f.motion_bpp;
        inter += f.inter_bpp;
        ++preds;
      }
    }
    ACV_CHECK_CFG(preds > 0, "alpha sweep: no predicted frames to measure");
    return std::pair<double, double>(motion / double(preds),
                                     inter / double(preds));
  };
  const auto [m0, i0] = measure(0.0);
  std::vector<SweepRow> rows;
  for (double v : values) {
    SweepRow row;
    row.alpha = v;
    if (v == 0.0) {
      row.motion_bpp = m0;
      row.inter_bpp = i0;
    } else {
      std::tie(row.motion_bpp, row.inter_bpp) = measure(v);
    }
    row.motion_delta_pct = 100.0 * (row.motion_bpp - m0) / m0;
    row.inter_delta_pct = 100.0 * (row.inter_bpp - i0) / i0;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct FrameMetricsRow {
  int index = 0;
  std::string type;  // "I" or "P"
  double psnr = 0.0, bpp = 0.0, est_bpp = 0.0;
  double motion_bpp = 0.0, inter_bpp = 0.0;
  double rd_cost = 0.0, anchor_cost = 0.0;
  double alpha_mean = 0.0, alpha_min = 0.0, alpha_max = 0.0;
};

inline constexpr const char* kFrameCsvHeader =
    "index,type,psnr,bpp,est_bpp,motion_bpp,inter_bpp,rd_cost,anchor_cost,"
    "alpha_mean,alpha_min,alpha_max";

namespace detail {

// Shortest decimal form that parses back to the same double.
inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

template <typename S>
FrameMetricsRow to_metrics_row(const FrameReport<S>& f) {
  FrameMetricsRow row;
  row.index = f.index;
  row.type = f.type == FrameType::kIntra ? "I" : "P";
  row.psnr = f.psnr;
  row.bpp = f.bpp;
  row.est_bpp = f.est_bpp;
  row.motion_bpp = f.motion_bpp;
  row.inter_bpp = f.inter_bpp;
  row.rd_cost = f.rd_cost;
  row.anchor_cost = f.anchor_cost;
  if (f.alpha.defined()) {
    row.alpha_mean = double(f.alpha.value().mean());
    row.alpha_min = double(f.alpha.value().minCoeff());
    row.alpha_max = double(f.alpha.value().maxCoeff());
  }
  return row;
}

template <typename S>
void write_frame_metrics_csv(const std::string& path,
                             const std::vector<FrameReport<S>>& frames) {
  std::ofstream out(path);
  ACV_CHECK_IO(out.is_open(), "cannot write ", path);
  out << kFrameCsvHeader << "\n";
  for (const auto& f : frames) {
    const FrameMetricsRow r = to_metrics_row(f);
    out << r.index << "," << r.type << "," << detail::fmt_double(r.psnr) << ","
        << detail::fmt_double(r.bpp) << "," << detail::fmt_double(r.est_bpp)
        << "," << detail::fmt_double(r.motion_bpp) << ","
        << detail::fmt_double(r.inter_bpp) << ","
        << detail::fmt_double(r.rd_cost) << ","
        << detail::fmt_double(r.anchor_cost) << ","
        << detail::fmt_double(r.alpha_mean) << ","
        << detail::fmt_double(r.alpha_min) << ","
        << detail::fmt_double(r.alpha_max) << "\n";
  }
  out.flush();
  ACV_CHECK_IO(out.good(), "write failed: ", path);
}

inline std::vector<FrameMetricsRow> read_frame_metrics_csv(
    const std::string& path) {
  std::ifstream in(path);
  ACV_CHECK_IO(in.is_open(), "cannot read ", path);
  std::string line;
  ACV_CHECK_STREAM(std::getline(in, line) && line == kFrameCsvHeader,
                   "frame metrics csv: bad header in ", path);
  std::vector<FrameMetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    ACV_CHECK_STREAM(cells.size() == 12, "frame metrics csv: ", cells.size(),
                     " fields in row '", line, "'");
    auto num = [&](std::size_t i) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[i], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      ACV_CHECK_STREAM(used == cells[i].size(),
                       "frame metrics csv: bad number '", cells[i], "'");
      return v;
    };
    FrameMetricsRow r;
    r.index = int(num(0));
    r.type = cells[1];
    ACV_CHECK_STREAM(r.type == "I" || r.type == "P",
                     "frame metrics csv: bad type '", r.type, "'");
    r.psnr = num(2);
    r.bpp = num(3);
    r.est_bpp = num(4);
    r.motion_bpp = num(5);
    r.inter_bpp = num(6);
    r.rd_cost = num(7);
    r.anchor_cost = num(8);
    r.alpha_mean = num(9);
    r.alpha_min = num(10);
    r.alpha_max = num(11);
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Visualization
// ---------------------------------------------------------------------------

// Grayscale rendering of a patch grid: each cell paints a patch x patch
// block, values mapped linearly from [lo, hi] to black..white.
template <typename S>
ImageU8 heatmap_image(const Tensor<S>& grid, int patch, double lo, double hi) {
  const Shape4 s = grid.shape();
  ACV_CHECK_CFG(s.n == 1 && s.c == 1 && patch > 0, "heatmap: grid ", s.str(),
                ", patch ", patch);
  ImageU8 img;
  img.width = s.w * patch;
  img.height = s.h * patch;
  img.rgb.assign(std::size_t(img.width) * img.height * 3, 0);
  const double span = hi - lo;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double v = double(grid.at(0, 0, y / patch, x / patch));
      const double u = span > 0.0 ? std::clamp((v - lo) / span, 0.0, 1.0) : 0.0;
      const auto g = std::uint8_t(std::lround(u * 255.0));
      const std::size_t i = (std::size_t(y) * img.width + x) * 3;
      img.rgb[i] = img.rgb[i + 1] = img.rgb[i + 2] = g;
    }
  return img;
}

namespace detail {

inline void hsv_to_rgb(double h, double s, double v, std::uint8_t* out) {
  h = h - std::floor(h);  // wrap to [0,1)
  const double f = h * 6.0 - std::floor(h * 6.0);
  const int sector = int(std::floor(h * 6.0)) % 6;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  double r, g, b;
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  out[0] = std::uint8_t(std::lround(r * 255.0));
  out[1] = std::uint8_t(std::lround(g * 255.0));
  out[2] = std::uint8_t(std::lround(b * 255.0));
}

}  // namespace detail

// Color-wheel rendering of a flow field: hue encodes direction, saturation
// magnitude (full color at max_mag), white where nothing moves.
template <typename S>
ImageU8 flow_wheel_image(const Tensor<S>& flow, double max_mag) {
  const Shape4 s = flow.shape();
  ACV_CHECK_CFG(s.n == 1 && s.c == 2, "flow image: ", s.str());
  ACV_CHECK_CFG(max_mag > 0.0, "flow image: max magnitude ", max_mag);
  ImageU8 img;
  img.width = s.w;
  img.height = s.h;
  img.rgb.assign(std::size_t(s.w) * s.h * 3, 0);
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      const double fx = double(flow.at(0, 0, y, x));
      const double fy = double(flow.at(0, 1, y, x));
      const double mag = std::sqrt(fx * fx + fy * fy);
      const double hue =
          (std::atan2(fy, fx) + 3.14159265358979323846) /
          (2.0 * 3.14159265358979323846);
      const double sat = std::clamp(mag / max_mag, 0.0, 1.0);
      detail::hsv_to_rgb(hue, sat, 1.0,
                         &img.rgb[(std::size_t(y) * s.w + x) * 3]);
    }
  return img;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

namespace detail {

inline std::string numbered(const char* stem, int index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04d.png", stem, index);
  return buf;
}

}  // namespace detail

// Writes the artifact set for one coded sequence into `dir`: an aggregate
// JSON summary, the per-frame metrics CSV, and per predicted frame the alpha
// map, both patch-rate heat maps, and the decoded flow. Returns the file
// names written, in deterministic order.
template <typename S>
std::vector<std::string> emit_report(const std::string& dir,
                                     const SequenceResult<S>& res,
                                     double max_flow) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  ACV_CHECK_IO(!ec, "cannot create ", dir, ": ", ec.message());
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const ImageU8& img) {
    write_png_rgb8(dir + "/" + name, img);
    written.push_back(name);
  };
  {
    int preds = 0;
    for (const auto& f : res.frames)
      if (f.type == FrameType::kPred) ++preds;
    nlohmann::json j = {
        {"frames", res.frames.size()},
        {"predicted_frames", preds},
        {"width", res.stream.header.width},
        {"height", res.stream.header.height},
        {"intra_period", res.stream.header.intra_period},
        {"bpp", res.bpp},
        {"psnr", res.psnr},
    };
    std::ofstream out(dir + "/summary.json");
    ACV_CHECK_IO(out.is_open(), "cannot write ", dir, "/summary.json");
    out << j.dump(2) << "\n";
    ACV_CHECK_IO(out.good(), "write failed: ", dir, "/summary.json");
    written.push_back("summary.json");
  }
  write_frame_metrics_csv(dir + "/frame_metrics.csv", res.frames);
  written.push_back("frame_metrics.csv");
  const int patch = int(res.stream.header.patch);
  for (const auto& f : res.frames) {
    if (f.type != FrameType::kPred) continue;
    emit(detail::numbered("alpha", f.index),
         heatmap_image(f.alpha, patch, -1.0, 1.0));
    emit(detail::numbered("rate_motion", f.index),
         heatmap_image(f.motion_patch_bits, patch, 0.0,
                       double(f.motion_patch_bits.value().maxCoeff())));
    emit(detail::numbered("rate_inter", f.index),
         heatmap_image(f.inter_patch_bits, patch, 0.0,
                       double(f.inter_patch_bits.value().maxCoeff())));
    emit(detail::numbered("flow", f.index),
         flow_wheel_image(f.flow_hat, max_flow));
  }
  return written;
}

}  // namespace acv

#endif  // ACV_METRICS_HPP_
