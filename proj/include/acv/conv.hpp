#ifndef ACV_CONV_HPP_
#define ACV_CONV_HPP_

#include <vector>

#include "acv/ops.hpp"
#include "acv/tensor.hpp"

namespace acv {

namespace detail {

// Patch matrix layout: row r = (c*kh + dy)*kw + dx, column q = oy*ow + ox,
// row-major, zero outside the padded canvas.
template <typename S>
void im2col(const S* src, int C, int H, int W, int kh, int kw, int stride,
            int pad, int oh, int ow, S* cols) {
  const std::int64_t ncols = std::int64_t(oh) * ow;
  std::int64_t r = 0;
  for (int c = 0; c < C; ++c)
    for (int dy = 0; dy < kh; ++dy)
      for (int dx = 0; dx < kw; ++dx, ++r) {
        S* row = cols + r * ncols;
        std::int64_t q = 0;
        for (int oy = 0; oy < oh; ++oy) {
          int y = oy * stride - pad + dy;
          if (y < 0 || y >= H) {
            for (int ox = 0; ox < ow; ++ox, ++q) row[q] = S(0);
            continue;
          }
          const S* line = src + (std::int64_t(c) * H + y) * W;
          for (int ox = 0; ox < ow; ++ox, ++q) {
            int x = ox * stride - pad + dx;
            row[q] = (x < 0 || x >= W) ? S(0) : line[x];
          }
        }
      }
}

// Adjoint of im2col: scatter-adds the patch matrix back onto the canvas.
template <typename S>
void col2im_acc(const S* cols, int C, int H, int W, int kh, int kw, int stride,
                int pad, int oh, int ow, S* dst) {
  const std::int64_t ncols = std::int64_t(oh) * ow;
  std::int64_t r = 0;
  for (int c = 0; c < C; ++c)
    for (int dy = 0; dy < kh; ++dy)
      for (int dx = 0; dx < kw; ++dx, ++r) {
        const S* row = cols + r * ncols;
        std::int64_t q = 0;
        for (int oy = 0; oy < oh; ++oy) {
          int y = oy * stride - pad + dy;
          if (y < 0 || y >= H) {
            q += ow;
            continue;
          }
          S* line = dst + (std::int64_t(c) * H + y) * W;
          for (int ox = 0; ox < ow; ++ox, ++q) {
            int x = ox * stride - pad + dx;
            if (x >= 0 && x < W) line[x] += row[q];
          }
        }
      }
}

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace detail

// Strided convolution, zero padding. x: (N, Cin, H, W), w: (Cout, Cin, kh, kw),
// output (N, Cout, oh, ow) with oh = floor((H + 2 pad - kh) / stride) + 1.
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, int stride, int pad) {
  const Shape4 xs = x.shape(), ws = w.shape();
  ACV_CHECK_CFG(stride >= 1 && pad >= 0, "conv2d: stride ", stride, " pad ", pad);
  ACV_CHECK_CFG(xs.c == ws.c, "conv2d: input channels ", xs.c,
                " != kernel channels ", ws.c, " (", xs.str(), " * ", ws.str(),
                ")");
  ACV_CHECK_CFG(xs.h + 2 * pad >= ws.h && xs.w + 2 * pad >= ws.w,
                "conv2d: kernel ", ws.str(), " larger than padded input ",
                xs.str());
  const int oh = (xs.h + 2 * pad - ws.h) / stride + 1;
  const int ow = (xs.w + 2 * pad - ws.w) / stride + 1;
  const int K = ws.c * ws.h * ws.w;
  const std::int64_t M = std::int64_t(oh) * ow;
  Shape4 os(xs.n, ws.n, oh, ow);
  Tensor<S> out = Tensor<S>::zeros(os);
  using RM = detail::RowMat<S>;
  std::vector<S> cols(std::size_t(K) * M);
  Eigen::Map<const RM> wm(w.value().data(), ws.n, K);
  for (int n = 0; n < xs.n; ++n) {
    detail::im2col(x.value().data() + std::int64_t(n) * xs.c * xs.h * xs.w,
                   xs.c, xs.h, xs.w, ws.h, ws.w, stride, pad, oh, ow,
                   cols.data());
    Eigen::Map<const RM> km(cols.data(), K, M);
    Eigen::Map<RM> om(out.mutable_value().data() + std::int64_t(n) * ws.n * M,
                      ws.n, M);
    om.noalias() = wm * km;
  }
  if (detail::track<S>({&x, &w})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record([px = x.payload(), pw = w.payload(),
                               po = out.payload(), xs, ws, stride, pad, oh, ow,
                               K, M] {
      using RM = detail::RowMat<S>;
      if (px->requires_grad) detail::ensure_grad<S>(px);
      if (pw->requires_grad) detail::ensure_grad<S>(pw);
      std::vector<S> cols(std::size_t(K) * M);
      Eigen::Map<const RM> wm(pw->value.data(), ws.n, K);
      for (int n = 0; n < xs.n; ++n) {
        Eigen::Map<const RM> gm(po->grad.data() + std::int64_t(n) * ws.n * M,
                                ws.n, M);
        if (pw->requires_grad) {
          detail::im2col(px->value.data() + std::int64_t(n) * xs.c * xs.h * xs.w,
                         xs.c, xs.h, xs.w, ws.h, ws.w, stride, pad, oh, ow,
                         cols.data());
          Eigen::Map<const RM> km(cols.data(), K, M);
          Eigen::Map<RM> gw(pw->grad.data(), ws.n, K);
          gw.noalias() += gm * km.transpose();
        }
        if (px->requires_grad) {
          Eigen::Map<RM> km(cols.data(), K, M);
          km.noalias() = wm.transpose() * gm;
          detail::col2im_acc(cols.data(), xs.c, xs.h, xs.w, ws.h, ws.w, stride,
                             pad, oh, ow,
                             px->grad.data() +
                                 std::int64_t(n) * xs.c * xs.h * xs.w);
        }
      }
    });
  }
  return out;
}

// Transposed (fractionally strided) convolution. x: (N, Cin, H, W),
// w: (Cin, Cout, kh, kw), output (N, Cout, oh, ow) with
// oh = (H - 1) * stride - 2 pad + kh.
template <typename S>
Tensor<S> conv2d_transpose(const Tensor<S>& x, const Tensor<S>& w, int stride,
                           int pad) {
  const Shape4 xs = x.shape(), ws = w.shape();
  ACV_CHECK_CFG(stride >= 1 && pad >= 0, "conv2d_transpose: stride ", stride,
                " pad ", pad);
  ACV_CHECK_CFG(xs.c == ws.n, "conv2d_transpose: input channels ", xs.c,
                " != kernel input dim ", ws.n, " (", xs.str(), " * ", ws.str(),
                ")");
  const int oh = (xs.h - 1) * stride - 2 * pad + ws.h;
  const int ow = (xs.w - 1) * stride - 2 * pad + ws.w;
  ACV_CHECK_CFG(oh >= 1 && ow >= 1, "conv2d_transpose: empty output for input ",
                xs.str(), " kernel ", ws.str());
  const int K = ws.c * ws.h * ws.w;
  const std::int64_t M = std::int64_t(xs.h) * xs.w;
  Shape4 os(xs.n, ws.c, oh, ow);
  Tensor<S> out = Tensor<S>::zeros(os);
  using RM = detail::RowMat<S>;
  std::vector<S> cols(std::size_t(K) * M);
  Eigen::Map<const RM> wm(w.value().data(), ws.n, K);
  for (int n = 0; n < xs.n; ++n) {
    Eigen::Map<const RM> xm(x.value().data() + std::int64_t(n) * xs.c * M, xs.c,
                            M);
    Eigen::Map<RM> km(cols.data(), K, M);
    km.noalias() = wm.transpose() * xm;
    detail::col2im_acc(cols.data(), ws.c, oh, ow, ws.h, ws.w, stride, pad, xs.h,
                       xs.w,
                       out.mutable_value().data() +
                           std::int64_t(n) * ws.c * oh * ow);
  }
  if (detail::track<S>({&x, &w})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record([px = x.payload(), pw = w.payload(),
                               po = out.payload(), xs, ws, stride, pad, oh, ow,
                               K, M] {
      using RM = detail::RowMat<S>;
      if (px->requires_grad) detail::ensure_grad<S>(px);
      if (pw->requires_grad) detail::ensure_grad<S>(pw);
      std::vector<S> cols(std::size_t(K) * M);
      Eigen::Map<const RM> wm(pw->value.data(), ws.n, K);
      for (int n = 0; n < xs.n; ++n) {
        detail::im2col(po->grad.data() + std::int64_t(n) * ws.c * oh * ow, ws.c,
                       oh, ow, ws.h, ws.w, stride, pad, xs.h, xs.w,
                       cols.data());
        Eigen::Map<const RM> km(cols.data(), K, M);
        if (px->requires_grad) {
          Eigen::Map<RM> gx(px->grad.data() + std::int64_t(n) * xs.c * M, xs.c,
                            M);
          gx.noalias() += wm * km;
        }
        if (pw->requires_grad) {
          Eigen::Map<const RM> xm(px->value.data() + std::int64_t(n) * xs.c * M,
                                  xs.c, M);
          Eigen::Map<RM> gw(pw->grad.data(), ws.n, K);
          gw.noalias() += xm * km.transpose();
        }
      }
    });
  }
  return out;
}

// Adds a per-channel bias (1, C, 1, 1) to a feature map.
template <typename S>
Tensor<S> bias_add(const Tensor<S>& x, const Tensor<S>& b) {
  const Shape4 bs = b.shape();
  ACV_CHECK_CFG(bs.n == 1 && bs.h == 1 && bs.w == 1 && bs.c == x.shape().c,
                "bias_add: bias ", bs.str(), " for input ", x.shape().str());
  return add(x, b);
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 int stride, int pad) {
  return bias_add(conv2d(x, w, stride, pad), b);
}

template <typename S>
Tensor<S> conv2d_transpose(const Tensor<S>& x, const Tensor<S>& w,
                           const Tensor<S>& b, int stride, int pad) {
  return bias_add(conv2d_transpose(x, w, stride, pad), b);
}

}  // namespace acv

#endif  // ACV_CONV_HPP_
