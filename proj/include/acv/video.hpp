#ifndef ACV_VIDEO_HPP_
#define ACV_VIDEO_HPP_

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "acv/png_io.hpp"
#include "acv/tensor.hpp"

namespace acv {

// A loaded clip: frames are (1,3,Hp,Wp) RGB in [0,1], already padded so the
// codec's strided stages divide evenly; width/height remember the original
// dims for metrics and for writing output files.
template <typename S>
struct Sequence {
  std::vector<Tensor<S>> frames;
  int width = 0;   // original, pre-padding
  int height = 0;
  std::string source;

  int padded_width() const {
    return frames.empty() ? 0 : frames[0].shape().w;
  }
  int padded_height() const {
    return frames.empty() ? 0 : frames[0].shape().h;
  }
};

enum class SequenceFormat { kPngDir, kRawRgb24 };

inline int round_up(int v, int multiple) {
  return (v + multiple - 1) / multiple * multiple;
}

// Extends an image tensor to (th, tw) by replicating the last row/column;
// original pixels are untouched. Plain data op, no gradients.
template <typename S>
Tensor<S> replicate_pad(const Tensor<S>& x, int th, int tw) {
  const Shape4 s = x.shape();
  ACV_CHECK_CFG(th >= s.h && tw >= s.w, "replicate_pad: target (", th, ",",
                tw, ") smaller than ", s.str());
  if (th == s.h && tw == s.w) return x;
  Tensor<S> out = Tensor<S>::zeros(Shape4(s.n, s.c, th, tw));
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < th; ++y) {
        const int sy = std::min(y, s.h - 1);
        const S* src =
            x.value().data() + ((std::int64_t(n) * s.c + c) * s.h + sy) * s.w;
        S* dst = out.mutable_value().data() +
                 ((std::int64_t(n) * s.c + c) * th + y) * tw;
        for (int xx = 0; xx < tw; ++xx) dst[xx] = src[std::min(xx, s.w - 1)];
      }
  return out;
}

template <typename S>
void pad_sequence(Sequence<S>& seq, int multiple) {
  ACV_CHECK_CFG(multiple > 0, "pad_sequence: multiple ", multiple);
  for (auto& f : seq.frames)
    f = replicate_pad(f, round_up(f.shape().h, multiple),
                      round_up(f.shape().w, multiple));
}

template <typename S>
Tensor<S> frame_from_u8(const ImageU8& img) {
  Tensor<S> t = Tensor<S>::zeros(Shape4(1, 3, img.height, img.width));
  const std::int64_t plane = std::int64_t(img.height) * img.width;
  S* d = t.mutable_value().data();
  for (std::int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      d[c * plane + i] = S(img.rgb[std::size_t(i * 3 + c)]) / S(255);
  return t;
}

// Converts the original-dims crop back to interleaved bytes.
template <typename S>
ImageU8 frame_to_u8(const Tensor<S>& t, int width, int height) {
  const Shape4 s = t.shape();
  ACV_CHECK(s.n == 1 && s.c == 3 && s.h >= height && s.w >= width,
            "frame_to_u8: bad frame shape ", s.str());
  ImageU8 img;
  img.width = width;
  img.height = height;
  img.rgb.resize(std::size_t(width) * height * 3);
  const S* d = t.value().data();
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) {
        double v = double(d[(std::int64_t(c) * s.h + y) * s.w + x]) * 255.0;
        v = std::floor(v + 0.5);
        img.rgb[std::size_t((std::int64_t(y) * width + x) * 3 + c)] =
            std::uint8_t(std::clamp(v, 0.0, 255.0));
      }
  return img;
}

inline std::string frame_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04d.png", index);
  return buf;
}

template <typename S>
Sequence<S> load_png_dir(const std::string& dir, int pad_multiple) {
  namespace fs = std::filesystem;
  Sequence<S> seq;
  seq.source = dir;
  for (int i = 0;; ++i) {
    fs::path p = fs::path(dir) / frame_file_name(i);
    if (!fs::exists(p)) break;
    ImageU8 img = read_png_rgb8(p.string());
    if (seq.frames.empty()) {
      seq.width = img.width;
      seq.height = img.height;
    } else {
      ACV_CHECK_IO(img.width == seq.width && img.height == seq.height,
                   "sequence ", dir, ": ", p.string(), " is ", img.width, "x",
                   img.height, ", expected ", seq.width, "x", seq.height);
    }
    seq.frames.push_back(frame_from_u8<S>(img));
  }
  ACV_CHECK_IO(!seq.frames.empty(), "sequence ", dir,
               ": no frame_0000.png found");
  pad_sequence(seq, pad_multiple);
  return seq;
}

template <typename S>
Sequence<S> load_raw_rgb24(const std::string& path, int width, int height,
                           int pad_multiple) {
  ACV_CHECK_CFG(width > 0 && height > 0, "load_raw_rgb24: dims ", width, "x",
                height);
  std::ifstream in(path, std::ios::binary);
  ACV_CHECK_IO(in.good(), "cannot open ", path);
  in.seekg(0, std::ios::end);
  const std::int64_t bytes = in.tellg();
  in.seekg(0);
  const std::int64_t frame_bytes = std::int64_t(width) * height * 3;
  ACV_CHECK_IO(bytes > 0 && bytes % frame_bytes == 0, path, ": ", bytes,
               " bytes is not a multiple of ", frame_bytes, " (", width, "x",
               height, " RGB24 frames)");
  Sequence<S> seq;
  seq.source = path;
  seq.width = width;
  seq.height = height;
  ImageU8 img;
  img.width = width;
  img.height = height;
  img.rgb.resize(std::size_t(frame_bytes));
  for (std::int64_t f = 0; f < bytes / frame_bytes; ++f) {
    in.read(reinterpret_cast<char*>(img.rgb.data()), frame_bytes);
    ACV_CHECK_IO(in.good(), path, ": short read at frame ", f);
    seq.frames.push_back(frame_from_u8<S>(img));
  }
  pad_sequence(seq, pad_multiple);
  return seq;
}

template <typename S>
Sequence<S> load_sequence(const std::string& path, SequenceFormat fmt,
                          int pad_multiple, int raw_width = 0,
                          int raw_height = 0) {
  if (fmt == SequenceFormat::kPngDir)
    return load_png_dir<S>(path, pad_multiple);
  return load_raw_rgb24<S>(path, raw_width, raw_height, pad_multiple);
}

template <typename S>
void save_png_dir(const std::string& dir, const Sequence<S>& seq) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  ACV_CHECK_IO(!ec, "cannot create directory ", dir, ": ", ec.message());
  for (std::size_t i = 0; i < seq.frames.size(); ++i)
    write_png_rgb8((fs::path(dir) / frame_file_name(int(i))).string(),
                   frame_to_u8(seq.frames[i], seq.width, seq.height));
}

template <typename S>
void save_raw_rgb24(const std::string& path, const Sequence<S>& seq) {
  std::ofstream out(path, std::ios::binary);
  ACV_CHECK_IO(out.good(), "cannot open ", path, " for writing");
  for (const auto& f : seq.frames) {
    ImageU8 img = frame_to_u8(f, seq.width, seq.height);
    out.write(reinterpret_cast<const char*>(img.rgb.data()),
              std::streamsize(img.rgb.size()));
  }
  ACV_CHECK_IO(out.good(), "write failed: ", path);
}

}  // namespace acv

#endif  // ACV_VIDEO_HPP_
