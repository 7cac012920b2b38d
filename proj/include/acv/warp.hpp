#ifndef ACV_WARP_HPP_
#define ACV_WARP_HPP_

#include <cmath>

#include "acv/tensor.hpp"

namespace acv {

namespace detail {

template <typename S>
struct Sample {
  int x0, x1, y0, y1;
  S fx, fy;
  bool in_x, in_y;  // position gradient passes through only when unclamped
};

template <typename S>
Sample<S> sample_at(S xf, S yf, int W, int H) {
  Sample<S> s;
  s.in_x = xf >= S(0) && xf <= S(W - 1);
  s.in_y = yf >= S(0) && yf <= S(H - 1);
  S xc = std::min(std::max(xf, S(0)), S(W - 1));
  S yc = std::min(std::max(yf, S(0)), S(H - 1));
  s.x0 = int(std::floor(xc));
  s.y0 = int(std::floor(yc));
  if (s.x0 > W - 2) s.x0 = W - 2 < 0 ? 0 : W - 2;
  if (s.y0 > H - 2) s.y0 = H - 2 < 0 ? 0 : H - 2;
  s.x1 = std::min(s.x0 + 1, W - 1);
  s.y1 = std::min(s.y0 + 1, H - 1);
  s.fx = xc - S(s.x0);
  s.fy = yc - S(s.y0);
  return s;
}

}  // namespace detail

// Backward warp with border-clamped bilinear sampling:
// out[n,c,y,x] = image[n,c] sampled at (x + flow_u, y + flow_v), where flow
// channel 0 holds the horizontal and channel 1 the vertical displacement.
// Sample positions clamped to the image rectangle; the position gradient is
// zeroed on the clamped axis.
template <typename S>
Tensor<S> warp_bilinear(const Tensor<S>& image, const Tensor<S>& flow) {
  const Shape4 is = image.shape(), fs = flow.shape();
  ACV_CHECK_CFG(fs.c == 2 && fs.n == is.n && fs.h == is.h && fs.w == is.w,
                "warp_bilinear: flow ", fs.str(), " for image ", is.str());
  const int N = is.n, C = is.c, H = is.h, W = is.w;
  const std::int64_t plane = std::int64_t(H) * W;
  Tensor<S> out = Tensor<S>::zeros(is);
  const auto& iv = image.value();
  const auto& fv = flow.value();
  auto& ov = out.mutable_value();
  for (int n = 0; n < N; ++n) {
    const S* u = fv.data() + std::int64_t(n) * 2 * plane;
    const S* v = u + plane;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        std::int64_t q = std::int64_t(y) * W + x;
        auto sp = detail::sample_at(S(x) + u[q], S(y) + v[q], W, H);
        for (int c = 0; c < C; ++c) {
          const S* img = iv.data() + (std::int64_t(n) * C + c) * plane;
          S top = img[sp.y0 * W + sp.x0] * (1 - sp.fx) +
                  img[sp.y0 * W + sp.x1] * sp.fx;
          S bot = img[sp.y1 * W + sp.x0] * (1 - sp.fx) +
                  img[sp.y1 * W + sp.x1] * sp.fx;
          ov[(std::int64_t(n) * C + c) * plane + q] =
              top * (1 - sp.fy) + bot * sp.fy;
        }
      }
  }
  if (detail::track<S>({&image, &flow})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record([pi = image.payload(), pf = flow.payload(),
                               po = out.payload(), N, C, H, W, plane] {
      if (pi->requires_grad) detail::ensure_grad<S>(pi);
      if (pf->requires_grad) detail::ensure_grad<S>(pf);
      for (int n = 0; n < N; ++n) {
        const S* u = pf->value.data() + std::int64_t(n) * 2 * plane;
        const S* v = u + plane;
        S* gu = pf->requires_grad
                    ? pf->grad.data() + std::int64_t(n) * 2 * plane
                    : nullptr;
        S* gv = gu ? gu + plane : nullptr;
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x) {
            std::int64_t q = std::int64_t(y) * W + x;
            auto sp = detail::sample_at(S(x) + u[q], S(y) + v[q], W, H);
            S gx_acc = 0, gy_acc = 0;
            for (int c = 0; c < C; ++c) {
              const S* img = pi->value.data() + (std::int64_t(n) * C + c) * plane;
              S go = po->grad[(std::int64_t(n) * C + c) * plane + q];
              if (go == S(0)) continue;
              if (pi->requires_grad) {
                S* gi = pi->grad.data() + (std::int64_t(n) * C + c) * plane;
                gi[sp.y0 * W + sp.x0] += go * (1 - sp.fy) * (1 - sp.fx);
                gi[sp.y0 * W + sp.x1] += go * (1 - sp.fy) * sp.fx;
                gi[sp.y1 * W + sp.x0] += go * sp.fy * (1 - sp.fx);
                gi[sp.y1 * W + sp.x1] += go * sp.fy * sp.fx;
              }
              if (gu) {
                S top_dx = img[sp.y0 * W + sp.x1] - img[sp.y0 * W + sp.x0];
                S bot_dx = img[sp.y1 * W + sp.x1] - img[sp.y1 * W + sp.x0];
                S left_dy = img[sp.y1 * W + sp.x0] - img[sp.y0 * W + sp.x0];
                S right_dy = img[sp.y1 * W + sp.x1] - img[sp.y0 * W + sp.x1];
                gx_acc += go * (top_dx * (1 - sp.fy) + bot_dx * sp.fy);
                gy_acc += go * (left_dy * (1 - sp.fx) + right_dy * sp.fx);
              }
            }
            if (gu) {
              if (sp.in_x) gu[q] += gx_acc;
              if (sp.in_y) gv[q] += gy_acc;
            }
          }
      }
    });
  }
  return out;
}

}  // namespace acv

#endif  // ACV_WARP_HPP_
