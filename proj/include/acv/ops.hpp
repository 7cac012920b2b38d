#ifndef ACV_OPS_HPP_
#define ACV_OPS_HPP_

#include <array>
#include <cmath>
#include <vector>

#include "acv/tensor.hpp"

namespace acv {

namespace detail {

// Element strides of an NCHW-flat shape, zeroed on broadcast (size-1) dims.
struct BcastPlan {
  Shape4 out;
  std::int64_t sa[4];
  std::int64_t sb[4];
  bool same = false;
};

inline std::array<std::int64_t, 4> strides_of(const Shape4& s) {
  return {std::int64_t(s.c) * s.h * s.w, std::int64_t(s.h) * s.w,
          std::int64_t(s.w), 1};
}

inline BcastPlan broadcast_plan(const Shape4& a, const Shape4& b, const char* op) {
  BcastPlan p;
  for (int i = 0; i < 4; ++i) {
    int da = a.dim(i), db = b.dim(i);
    ACV_CHECK_CFG(da == db || da == 1 || db == 1, op, ": shapes ", a.str(),
                  " and ", b.str(), " do not broadcast");
    p.out.set_dim(i, da == 1 ? db : da);
  }
  auto sa = strides_of(a), sb = strides_of(b);
  for (int i = 0; i < 4; ++i) {
    p.sa[i] = a.dim(i) == 1 && p.out.dim(i) != 1 ? 0 : sa[i];
    p.sb[i] = b.dim(i) == 1 && p.out.dim(i) != 1 ? 0 : sb[i];
  }
  p.same = (a == b);
  return p;
}

// Applies fn(out_flat_index, a_flat_index, b_flat_index) over the broadcast
// output domain.
template <typename Fn>
void for_each_bcast(const BcastPlan& p, Fn&& fn) {
  std::int64_t io = 0;
  for (int n = 0; n < p.out.n; ++n)
    for (int c = 0; c < p.out.c; ++c)
      for (int y = 0; y < p.out.h; ++y) {
        std::int64_t ia = n * p.sa[0] + c * p.sa[1] + y * p.sa[2];
        std::int64_t ib = n * p.sb[0] + c * p.sb[1] + y * p.sb[2];
        for (int x = 0; x < p.out.w; ++x, ++io)
          fn(io, ia + x * p.sa[3], ib + x * p.sb[3]);
      }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Binary elementwise (with singleton-dim broadcasting)
// ---------------------------------------------------------------------------

#define ACV_DEFINE_BINARY(name, FWD_SAME, FWD_ELEM, BWD_A_SAME, BWD_B_SAME,  \
                          BWD_A_ELEM, BWD_B_ELEM)                            \
  template <typename S>                                                      \
  Tensor<S> name(const Tensor<S>& a, const Tensor<S>& b) {                   \
    auto plan = detail::broadcast_plan(a.shape(), b.shape(), #name);         \
    Tensor<S> out = Tensor<S>::zeros(plan.out);                              \
    const auto& av = a.value();                                              \
    const auto& bv = b.value();                                              \
    auto& ov = out.mutable_value();                                          \
    if (plan.same) {                                                         \
      ov = FWD_SAME;                                                         \
    } else {                                                                 \
      detail::for_each_bcast(plan, [&](std::int64_t io, std::int64_t ia,     \
                                       std::int64_t ib) {                    \
        ov[io] = FWD_ELEM;                                                   \
      });                                                                    \
    }                                                                        \
    if (detail::track<S>({&a, &b})) {                                        \
      out.set_requires_grad(true);                                           \
      Tape<S>::active()->record([pa = a.payload(), pb = b.payload(),         \
                                 po = out.payload(), plan] {                 \
        const auto& av = pa->value;                                          \
        const auto& bv = pb->value;                                          \
        const auto& go = po->grad;                                           \
        (void)av;                                                            \
        (void)bv;                                                            \
        if (plan.same) {                                                     \
          if (pa->requires_grad) {                                           \
            detail::ensure_grad<S>(pa);                                      \
            pa->grad += BWD_A_SAME;                                          \
          }                                                                  \
          if (pb->requires_grad) {                                           \
            detail::ensure_grad<S>(pb);                                      \
            pb->grad += BWD_B_SAME;                                          \
          }                                                                  \
        } else {                                                             \
          if (pa->requires_grad) detail::ensure_grad<S>(pa);                 \
          if (pb->requires_grad) detail::ensure_grad<S>(pb);                 \
          detail::for_each_bcast(plan, [&](std::int64_t io, std::int64_t ia, \
                                           std::int64_t ib) {                \
            (void)ia;                                                        \
            (void)ib;                                                        \
            if (pa->requires_grad) pa->grad[ia] += BWD_A_ELEM;               \
            if (pb->requires_grad) pb->grad[ib] += BWD_B_ELEM;               \
          });                                                                \
        }                                                                    \
      });                                                                    \
    }                                                                        \
    return out;                                                              \
  }

ACV_DEFINE_BINARY(add, av + bv, av[ia] + bv[ib], go, go, go[io], go[io])
ACV_DEFINE_BINARY(sub, av - bv, av[ia] - bv[ib], go, -go, go[io], -go[io])
ACV_DEFINE_BINARY(mul, av * bv, av[ia] * bv[ib], go * bv, go * av,
                  go[io] * bv[ib], go[io] * av[ia])
ACV_DEFINE_BINARY(div, av / bv, av[ia] / bv[ib], go / bv,
                  -go * av / (bv * bv), go[io] / bv[ib],
                  -go[io] * av[ia] / (bv[ib] * bv[ib]))

#undef ACV_DEFINE_BINARY

// ---------------------------------------------------------------------------
// Unary elementwise
// ---------------------------------------------------------------------------

namespace detail {

// fwd: value array -> value array; local: (x, y) -> dy/dx, vectorized.
template <typename S, typename Fwd, typename Local>
Tensor<S> unary_op(const Tensor<S>& x, Fwd&& fwd, Local&& local) {
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  out.mutable_value() = fwd(x.value());
  if (track<S>({&x})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record(
        [px = x.payload(), po = out.payload(), local] {
          if (!px->requires_grad) return;
          ensure_grad<S>(px);
          px->grad += po->grad * local(px->value, po->value);
        });
  }
  return out;
}

}  // namespace detail

template <typename S>
Tensor<S> neg(const Tensor<S>& x) {
  return detail::unary_op(
      x, [](const ArrayX<S>& v) { return ArrayX<S>(-v); },
      [](const ArrayX<S>& v, const ArrayX<S>&) {
        return ArrayX<S>::Constant(v.size(), S(-1));
      });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S k) {
  return detail::unary_op(
      x, [k](const ArrayX<S>& v) { return ArrayX<S>(v * k); },
      [k](const ArrayX<S>& v, const ArrayX<S>&) {
        return ArrayX<S>::Constant(v.size(), k);
      });
}

template <typename S>
Tensor<S> offset(const Tensor<S>& x, S k) {
  return detail::unary_op(
      x, [k](const ArrayX<S>& v) { return ArrayX<S>(v + k); },
      [](const ArrayX<S>& v, const ArrayX<S>&) {
        return ArrayX<S>::Constant(v.size(), S(1));
      });
}

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& x, S slope) {
  return detail::unary_op(
      x,
      [slope](const ArrayX<S>& v) {
        return ArrayX<S>((v > S(0)).select(v, v * slope));
      },
      [slope](const ArrayX<S>& v, const ArrayX<S>&) {
        return ArrayX<S>((v > S(0))
                             .select(ArrayX<S>::Constant(v.size(), S(1)),
                                     ArrayX<S>::Constant(v.size(), slope)));
      });
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& x) {
  return detail::unary_op(
      x, [](const ArrayX<S>& v) { return ArrayX<S>(v.tanh()); },
      [](const ArrayX<S>&, const ArrayX<S>& y) { return ArrayX<S>(1 - y * y); });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  return detail::unary_op(
      x,
      [](const ArrayX<S>& v) { return ArrayX<S>(((v * S(0.5)).tanh() + S(1)) * S(0.5)); },
      [](const ArrayX<S>&, const ArrayX<S>& y) { return ArrayX<S>(y * (1 - y)); });
}

template <typename S>
Tensor<S> softplus(const Tensor<S>& x) {
  return detail::unary_op(
      x,
      [](const ArrayX<S>& v) {
        // log1p(exp(v)) with branch for large v to stay finite.
        return ArrayX<S>(v.unaryExpr([](S e) {
          return e > S(30) ? e : S(std::log1p(std::exp(double(e))));
        }));
      },
      [](const ArrayX<S>& v, const ArrayX<S>&) {
        return ArrayX<S>(((v * S(0.5)).tanh() + S(1)) * S(0.5));
      });
}

template <typename S>
Tensor<S> exp(const Tensor<S>& x) {
  return detail::unary_op(
      x, [](const ArrayX<S>& v) { return ArrayX<S>(v.exp()); },
      [](const ArrayX<S>&, const ArrayX<S>& y) { return y; });
}

template <typename S>
Tensor<S> log(const Tensor<S>& x) {
  return detail::unary_op(
      x, [](const ArrayX<S>& v) { return ArrayX<S>(v.log()); },
      [](const ArrayX<S>& v, const ArrayX<S>&) { return ArrayX<S>(v.inverse()); });
}

template <typename S>
Tensor<S> exp2(const Tensor<S>& x) {
  const S ln2 = S(0.6931471805599453);
  return detail::unary_op(
      x,
      [ln2](const ArrayX<S>& v) { return ArrayX<S>((v * ln2).exp()); },
      [ln2](const ArrayX<S>&, const ArrayX<S>& y) { return ArrayX<S>(y * ln2); });
}

template <typename S>
Tensor<S> log2(const Tensor<S>& x) {
  const S inv_ln2 = S(1.4426950408889634);
  return detail::unary_op(
      x,
      [inv_ln2](const ArrayX<S>& v) { return ArrayX<S>(v.log() * inv_ln2); },
      [inv_ln2](const ArrayX<S>& v, const ArrayX<S>&) {
        return ArrayX<S>(v.inverse() * inv_ln2);
      });
}

template <typename S>
Tensor<S> erf(const Tensor<S>& x) {
  const S two_over_sqrt_pi = S(1.1283791670955126);
  return detail::unary_op(
      x,
      [](const ArrayX<S>& v) {
        return ArrayX<S>(v.unaryExpr([](S e) { return S(std::erf(double(e))); }));
      },
      [two_over_sqrt_pi](const ArrayX<S>& v, const ArrayX<S>&) {
        return ArrayX<S>((-v * v).exp() * two_over_sqrt_pi);
      });
}

// Zero gradient outside [lo, hi]; boundary values pass through.
template <typename S>
Tensor<S> clamp(const Tensor<S>& x, S lo, S hi) {
  ACV_CHECK_CFG(lo <= hi, "clamp: lo ", lo, " > hi ", hi);
  return detail::unary_op(
      x,
      [lo, hi](const ArrayX<S>& v) { return ArrayX<S>(v.max(lo).min(hi)); },
      [lo, hi](const ArrayX<S>& v, const ArrayX<S>&) {
        return ArrayX<S>((v >= lo && v <= hi)
                             .select(ArrayX<S>::Constant(v.size(), S(1)),
                                     ArrayX<S>::Constant(v.size(), S(0))));
      });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::scalar(x.value().sum());
  if (detail::track<S>({&x})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record([px = x.payload(), po = out.payload()] {
      if (!px->requires_grad) return;
      detail::ensure_grad<S>(px);
      px->grad += po->grad[0];
    });
  }
  return out;
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  return scale(sum(x), S(1) / S(x.size()));
}

// Non-overlapping block sums over the spatial dims.
template <typename S>
Tensor<S> sum_pool(const Tensor<S>& x, int fy, int fx) {
  const Shape4 s = x.shape();
  ACV_CHECK_CFG(fy >= 1 && fx >= 1 && s.h % fy == 0 && s.w % fx == 0,
                "sum_pool: factors (", fy, ",", fx, ") do not divide ", s.str());
  Shape4 os(s.n, s.c, s.h / fy, s.w / fx);
  Tensor<S> out = Tensor<S>::zeros(os);
  const auto& xv = x.value();
  auto& ov = out.mutable_value();
  std::int64_t io = 0;
  for (int n = 0; n < os.n; ++n)
    for (int c = 0; c < os.c; ++c)
      for (int y = 0; y < os.h; ++y)
        for (int xo = 0; xo < os.w; ++xo, ++io) {
          S acc = 0;
          for (int dy = 0; dy < fy; ++dy) {
            std::int64_t base =
                ((std::int64_t(n) * s.c + c) * s.h + y * fy + dy) * s.w + xo * fx;
            for (int dx = 0; dx < fx; ++dx) acc += xv[base + dx];
          }
          ov[io] = acc;
        }
  if (detail::track<S>({&x})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record([px = x.payload(), po = out.payload(), s, os, fy,
                               fx] {
      if (!px->requires_grad) return;
      detail::ensure_grad<S>(px);
      std::int64_t io = 0;
      for (int n = 0; n < os.n; ++n)
        for (int c = 0; c < os.c; ++c)
          for (int y = 0; y < os.h; ++y)
            for (int xo = 0; xo < os.w; ++xo, ++io) {
              S g = po->grad[io];
              for (int dy = 0; dy < fy; ++dy) {
                std::int64_t base =
                    ((std::int64_t(n) * s.c + c) * s.h + y * fy + dy) * s.w +
                    xo * fx;
                for (int dx = 0; dx < fx; ++dx) px->grad[base + dx] += g;
              }
            }
    });
  }
  return out;
}

template <typename S>
Tensor<S> avg_pool(const Tensor<S>& x, int f) {
  return scale(sum_pool(x, f, f), S(1) / S(f * f));
}

// Reduces the channel dim: out (N,1,H,W) = sum over c of x (N,C,H,W).
template <typename S>
Tensor<S> sum_channels(const Tensor<S>& x) {
  const Shape4 s = x.shape();
  Shape4 os(s.n, 1, s.h, s.w);
  Tensor<S> out = Tensor<S>::zeros(os);
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  const auto& xv = x.value();
  auto& ov = out.mutable_value();
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const std::int64_t xb = (std::int64_t(n) * s.c + c) * plane;
      const std::int64_t ob = std::int64_t(n) * plane;
      for (std::int64_t i = 0; i < plane; ++i) ov[ob + i] += xv[xb + i];
    }
  if (detail::track<S>({&x})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record([px = x.payload(), po = out.payload(), s,
                               plane] {
      if (!px->requires_grad) return;
      detail::ensure_grad<S>(px);
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
          const std::int64_t xb = (std::int64_t(n) * s.c + c) * plane;
          const std::int64_t ob = std::int64_t(n) * plane;
          for (std::int64_t i = 0; i < plane; ++i)
            px->grad[xb + i] += po->grad[ob + i];
        }
    });
  }
  return out;
}

// Inserts factor-1 zeros between samples: out[.., y*fy, x*fx] = in[.., y, x],
// all other positions zero. The adjoint of strided point sampling.
template <typename S>
Tensor<S> zero_upsample(const Tensor<S>& x, int fy, int fx) {
  const Shape4 s = x.shape();
  ACV_CHECK_CFG(fy >= 1 && fx >= 1, "zero_upsample: factors (", fy, ",", fx,
                ")");
  Shape4 os(s.n, s.c, s.h * fy, s.w * fx);
  Tensor<S> out = Tensor<S>::zeros(os);
  const auto& xv = x.value();
  auto& ov = out.mutable_value();
  std::int64_t ii = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int xx = 0; xx < s.w; ++xx, ++ii)
          ov[((std::int64_t(n) * s.c + c) * os.h + std::int64_t(y) * fy) *
                 os.w +
             std::int64_t(xx) * fx] = xv[ii];
  if (detail::track<S>({&x})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record([px = x.payload(), po = out.payload(), s, os, fy,
                               fx] {
      if (!px->requires_grad) return;
      detail::ensure_grad<S>(px);
      std::int64_t ii = 0;
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
          for (int y = 0; y < s.h; ++y)
            for (int xx = 0; xx < s.w; ++xx, ++ii)
              px->grad[ii] +=
                  po->grad[((std::int64_t(n) * s.c + c) * os.h +
                            std::int64_t(y) * fy) *
                               os.w +
                           std::int64_t(xx) * fx];
    });
  }
  return out;
}

// Mean squared error over all elements.
template <typename S>
Tensor<S> mse(const Tensor<S>& a, const Tensor<S>& b) {
  ACV_CHECK_CFG(a.shape() == b.shape(), "mse: shapes ", a.shape().str(), " vs ",
                b.shape().str());
  Tensor<S> d = sub(a, b);
  return mean(mul(d, d));
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> concat_channels(const std::vector<Tensor<S>>& parts) {
  ACV_CHECK_CFG(!parts.empty(), "concat_channels: no inputs");
  const Shape4 s0 = parts[0].shape();
  int ctotal = 0;
  for (const auto& t : parts) {
    const Shape4 s = t.shape();
    ACV_CHECK_CFG(s.n == s0.n && s.h == s0.h && s.w == s0.w,
                  "concat_channels: spatial/batch mismatch ", s.str(), " vs ",
                  s0.str());
    ctotal += s.c;
  }
  Shape4 os(s0.n, ctotal, s0.h, s0.w);
  Tensor<S> out = Tensor<S>::zeros(os);
  auto& ov = out.mutable_value();
  const std::int64_t plane = std::int64_t(s0.h) * s0.w;
  bool any_grad = false;
  for (const auto& t : parts) any_grad |= t.requires_grad();
  int coff = 0;
  for (const auto& t : parts) {
    const auto& tv = t.value();
    const int tc = t.shape().c;
    for (int n = 0; n < os.n; ++n) {
      std::int64_t dst = (std::int64_t(n) * ctotal + coff) * plane;
      std::int64_t src = std::int64_t(n) * tc * plane;
      for (std::int64_t i = 0; i < tc * plane; ++i) ov[dst + i] = tv[src + i];
    }
    coff += tc;
  }
  if (Tape<S>::active() != nullptr && any_grad) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<typename Tensor<S>::Payload>> ps;
    for (const auto& t : parts) ps.push_back(t.payload());
    Tape<S>::active()->record([ps, po = out.payload(), os, plane, ctotal] {
      int coff = 0;
      for (const auto& p : ps) {
        const int tc = p->shape.c;
        if (p->requires_grad) {
          detail::ensure_grad<S>(p);
          for (int n = 0; n < os.n; ++n) {
            std::int64_t src = (std::int64_t(n) * ctotal + coff) * plane;
            std::int64_t dst = std::int64_t(n) * tc * plane;
            for (std::int64_t i = 0; i < tc * plane; ++i)
              p->grad[dst + i] += po->grad[src + i];
          }
        }
        coff += tc;
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  return concat_channels<S>(std::vector<Tensor<S>>{a, b});
}

template <typename S>
std::vector<Tensor<S>> split_channels(const Tensor<S>& x,
                                      const std::vector<int>& sizes) {
  const Shape4 s = x.shape();
  int ctotal = 0;
  for (int c : sizes) ctotal += c;
  ACV_CHECK_CFG(ctotal == s.c, "split_channels: sizes sum ", ctotal,
                " != channels ", s.c);
  const std::int64_t plane = std::int64_t(s.h) * s.w;
  std::vector<Tensor<S>> outs;
  int coff = 0;
  for (int tc : sizes) {
    Tensor<S> out = Tensor<S>::zeros(Shape4(s.n, tc, s.h, s.w));
    auto& ov = out.mutable_value();
    const auto& xv = x.value();
    for (int n = 0; n < s.n; ++n) {
      std::int64_t src = (std::int64_t(n) * s.c + coff) * plane;
      std::int64_t dst = std::int64_t(n) * tc * plane;
      for (std::int64_t i = 0; i < tc * plane; ++i) ov[dst + i] = xv[src + i];
    }
    if (detail::track<S>({&x})) {
      out.set_requires_grad(true);
      Tape<S>::active()->record(
          [px = x.payload(), po = out.payload(), s, plane, coff, tc] {
            if (!px->requires_grad) return;
            detail::ensure_grad<S>(px);
            for (int n = 0; n < s.n; ++n) {
              std::int64_t dst = (std::int64_t(n) * s.c + coff) * plane;
              std::int64_t src = std::int64_t(n) * tc * plane;
              for (std::int64_t i = 0; i < tc * plane; ++i)
                px->grad[dst + i] += po->grad[src + i];
            }
          });
    }
    outs.push_back(out);
    coff += tc;
  }
  return outs;
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape4 shape) {
  ACV_CHECK_CFG(shape.count() == x.size(), "reshape: ", x.shape().str(),
                " has ", x.size(), " elements, target ", shape.str());
  Tensor<S> out = Tensor<S>::zeros(shape);
  out.mutable_value() = x.value();
  if (detail::track<S>({&x})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record([px = x.payload(), po = out.payload()] {
      if (!px->requires_grad) return;
      detail::ensure_grad<S>(px);
      px->grad += po->grad;
    });
  }
  return out;
}

// out dim i takes input dim perm[i].
template <typename S>
Tensor<S> permute(const Tensor<S>& x, std::array<int, 4> perm) {
  bool seen[4] = {false, false, false, false};
  for (int i : perm) {
    ACV_CHECK_CFG(i >= 0 && i < 4 && !seen[i], "permute: invalid permutation");
    seen[i] = true;
  }
  const Shape4 s = x.shape();
  Shape4 os;
  for (int i = 0; i < 4; ++i) os.set_dim(i, s.dim(perm[i]));
  auto sstr = detail::strides_of(s);
  std::int64_t sp[4];
  for (int i = 0; i < 4; ++i) sp[i] = sstr[perm[i]];
  Tensor<S> out = Tensor<S>::zeros(os);
  const auto& xv = x.value();
  auto& ov = out.mutable_value();
  std::int64_t io = 0;
  for (int a = 0; a < os.n; ++a)
    for (int b = 0; b < os.c; ++b)
      for (int cc = 0; cc < os.h; ++cc)
        for (int d = 0; d < os.w; ++d, ++io)
          ov[io] = xv[a * sp[0] + b * sp[1] + cc * sp[2] + d * sp[3]];
  if (detail::track<S>({&x})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record([px = x.payload(), po = out.payload(), os, sp] {
      if (!px->requires_grad) return;
      detail::ensure_grad<S>(px);
      std::int64_t io = 0;
      for (int a = 0; a < os.n; ++a)
        for (int b = 0; b < os.c; ++b)
          for (int cc = 0; cc < os.h; ++cc)
            for (int d = 0; d < os.w; ++d, ++io)
              px->grad[a * sp[0] + b * sp[1] + cc * sp[2] + d * sp[3]] +=
                  po->grad[io];
    });
  }
  return out;
}

template <typename S>
Tensor<S> crop(const Tensor<S>& x, int y0, int x0, int ch, int cw) {
  const Shape4 s = x.shape();
  ACV_CHECK_CFG(y0 >= 0 && x0 >= 0 && ch >= 1 && cw >= 1 && y0 + ch <= s.h &&
                    x0 + cw <= s.w,
                "crop: window ", ch, "x", cw, "@(", y0, ",", x0,
                ") outside ", s.str());
  Shape4 os(s.n, s.c, ch, cw);
  Tensor<S> out = Tensor<S>::zeros(os);
  const auto& xv = x.value();
  auto& ov = out.mutable_value();
  std::int64_t io = 0;
  for (int n = 0; n < os.n; ++n)
    for (int c = 0; c < os.c; ++c)
      for (int y = 0; y < ch; ++y) {
        std::int64_t src = ((std::int64_t(n) * s.c + c) * s.h + y0 + y) * s.w + x0;
        for (int xx = 0; xx < cw; ++xx, ++io) ov[io] = xv[src + xx];
      }
  if (detail::track<S>({&x})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record(
        [px = x.payload(), po = out.payload(), s, os, y0, x0] {
          if (!px->requires_grad) return;
          detail::ensure_grad<S>(px);
          std::int64_t io = 0;
          for (int n = 0; n < os.n; ++n)
            for (int c = 0; c < os.c; ++c)
              for (int y = 0; y < os.h; ++y) {
                std::int64_t dst =
                    ((std::int64_t(n) * s.c + c) * s.h + y0 + y) * s.w + x0;
                for (int xx = 0; xx < os.w; ++xx, ++io)
                  px->grad[dst + xx] += po->grad[io];
              }
        });
  }
  return out;
}

namespace detail {

// Per-axis nearest mapping: replicate when upsampling by an integer factor,
// strided pick when downsampling by one.
inline std::vector<int> nearest_map(int from, int to, const char* op) {
  std::vector<int> m(to);
  if (to % from == 0) {
    int f = to / from;
    for (int i = 0; i < to; ++i) m[i] = i / f;
  } else if (from % to == 0) {
    int f = from / to;
    for (int i = 0; i < to; ++i) m[i] = i * f;
  } else {
    throw ConfigError(std::string(op) + ": non-integer resize ratio " +
                      std::to_string(from) + " -> " + std::to_string(to));
  }
  return m;
}

}  // namespace detail

template <typename S>
Tensor<S> resize_nearest(const Tensor<S>& x, int th, int tw) {
  const Shape4 s = x.shape();
  ACV_CHECK_CFG(th >= 1 && tw >= 1, "resize_nearest: target ", th, "x", tw);
  auto my = detail::nearest_map(s.h, th, "resize_nearest");
  auto mx = detail::nearest_map(s.w, tw, "resize_nearest");
  Shape4 os(s.n, s.c, th, tw);
  Tensor<S> out = Tensor<S>::zeros(os);
  const auto& xv = x.value();
  auto& ov = out.mutable_value();
  std::int64_t io = 0;
  for (int n = 0; n < os.n; ++n)
    for (int c = 0; c < os.c; ++c) {
      std::int64_t base = (std::int64_t(n) * s.c + c) * s.h;
      for (int y = 0; y < th; ++y) {
        std::int64_t row = (base + my[y]) * s.w;
        for (int xx = 0; xx < tw; ++xx, ++io) ov[io] = xv[row + mx[xx]];
      }
    }
  if (detail::track<S>({&x})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record(
        [px = x.payload(), po = out.payload(), s, os, my, mx] {
          if (!px->requires_grad) return;
          detail::ensure_grad<S>(px);
          std::int64_t io = 0;
          for (int n = 0; n < os.n; ++n)
            for (int c = 0; c < os.c; ++c) {
              std::int64_t base = (std::int64_t(n) * s.c + c) * s.h;
              for (int y = 0; y < os.h; ++y) {
                std::int64_t row = (base + my[y]) * s.w;
                for (int xx = 0; xx < os.w; ++xx, ++io)
                  px->grad[row + mx[xx]] += po->grad[io];
              }
            }
        });
  }
  return out;
}

template <typename S>
Tensor<S> resize_nearest(const Tensor<S>& x, int factor) {
  return resize_nearest(x, x.shape().h * factor, x.shape().w * factor);
}

// Per-channel small matmul: w is (C, Dout, Din, 1), x is (C, Din, 1, M);
// result (C, Dout, 1, M). Backbone of the factorized-prior evaluation.
template <typename S>
Tensor<S> channel_matmul(const Tensor<S>& w, const Tensor<S>& x) {
  const Shape4 ws = w.shape(), xs = x.shape();
  ACV_CHECK_CFG(ws.n == xs.n && ws.h == xs.c && ws.w == 1 && xs.h == 1,
                "channel_matmul: incompatible shapes ", ws.str(), " x ",
                xs.str());
  const int C = ws.n, Do = ws.c, Di = ws.h, M = xs.w;
  Shape4 os(C, Do, 1, M);
  Tensor<S> out = Tensor<S>::zeros(os);
  using RM =
      Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  for (int c = 0; c < C; ++c) {
    Eigen::Map<const RM> wm(w.value().data() + std::int64_t(c) * Do * Di, Do, Di);
    Eigen::Map<const RM> xm(x.value().data() + std::int64_t(c) * Di * M, Di, M);
    Eigen::Map<RM> om(out.mutable_value().data() + std::int64_t(c) * Do * M, Do,
                      M);
    om.noalias() = wm * xm;
  }
  if (detail::track<S>({&w, &x})) {
    out.set_requires_grad(true);
    Tape<S>::active()->record([pw = w.payload(), px = x.payload(),
                               po = out.payload(), C, Do, Di, M] {
      if (pw->requires_grad) detail::ensure_grad<S>(pw);
      if (px->requires_grad) detail::ensure_grad<S>(px);
      for (int c = 0; c < C; ++c) {
        Eigen::Map<const RM> wm(pw->value.data() + std::int64_t(c) * Do * Di,
                                Do, Di);
        Eigen::Map<const RM> xm(px->value.data() + std::int64_t(c) * Di * M, Di,
                                M);
        Eigen::Map<const RM> gm(po->grad.data() + std::int64_t(c) * Do * M, Do,
                                M);
        if (pw->requires_grad) {
          Eigen::Map<RM> gw(pw->grad.data() + std::int64_t(c) * Do * Di, Do, Di);
          gw.noalias() += gm * xm.transpose();
        }
        if (px->requires_grad) {
          Eigen::Map<RM> gx(px->grad.data() + std::int64_t(c) * Di * M, Di, M);
          gx.noalias() += wm.transpose() * gm;
        }
      }
    });
  }
  return out;
}

}  // namespace acv

#endif  // ACV_OPS_HPP_
