#ifndef ACV_MOTION_NETS_HPP_
#define ACV_MOTION_NETS_HPP_

#include <string>

#include "acv/nn.hpp"
#include "acv/ops.hpp"
#include "acv/warp.hpp"

namespace acv {

// Two-scale coarse-to-fine flow estimator, five 3x3 convs per scale.
// Prediction heads start at zero, so the untrained net outputs exactly zero
// flow and training starts from "copy the reference". A tanh soft-bound keeps
// each component inside (-max_flow, max_flow), which the caller asserts.
template <typename S>
struct FlowNet {
  Conv<S> coarse1, coarse2, coarse3, coarse4, coarse_head;
  Conv<S> fine1, fine2, fine3, fine4, fine_head;
  S max_flow = S(16);

  FlowNet() = default;

  FlowNet(ParamStore<S>& store, const std::string& name, int ch, S max_flow_,
          Pcg32& rng)
      : max_flow(max_flow_) {
    coarse1 = Conv<S>(store, name + ".coarse1", 6, ch, 3, 1, 1, rng);
    coarse2 = Conv<S>(store, name + ".coarse2", ch, ch, 3, 1, 1, rng);
    coarse3 = Conv<S>(store, name + ".coarse3", ch, ch, 3, 1, 1, rng);
    coarse4 = Conv<S>(store, name + ".coarse4", ch, ch, 3, 1, 1, rng);
    coarse_head =
        Conv<S>(store, name + ".coarse_head", ch, 2, 3, 1, 1, rng, true);
    fine1 = Conv<S>(store, name + ".fine1", 8, ch, 3, 1, 1, rng);
    fine2 = Conv<S>(store, name + ".fine2", ch, ch, 3, 1, 1, rng);
    fine3 = Conv<S>(store, name + ".fine3", ch, ch, 3, 1, 1, rng);
    fine4 = Conv<S>(store, name + ".fine4", ch, ch, 3, 1, 1, rng);
    fine_head = Conv<S>(store, name + ".fine_head", ch, 2, 3, 1, 1, rng, true);
  }

  Tensor<S> operator()(const Tensor<S>& x_t, const Tensor<S>& ref) const {
    ACV_CHECK_CFG(x_t.shape() == ref.shape(), "flow net: ",
                  x_t.shape().str(), " vs ", ref.shape().str());
    const Shape4 s = x_t.shape();
    ACV_CHECK_CFG(s.h % 2 == 0 && s.w % 2 == 0, "flow net: odd dims ",
                  s.str());
    const S slope = S(0.2);

    Tensor<S> t = concat_channels(avg_pool(x_t, 2), avg_pool(ref, 2));
    t = leaky_relu(coarse1(t), slope);
    t = leaky_relu(coarse2(t), slope);
    t = leaky_relu(coarse3(t), slope);
    t = leaky_relu(coarse4(t), slope);
    Tensor<S> flow_half = coarse_head(t);

    // upsampled displacement doubles with resolution
    Tensor<S> flow_up = scale(resize_nearest(flow_half, s.h, s.w), S(2));
    Tensor<S> ref_w = warp_bilinear(ref, flow_up);
    Tensor<S> u = concat_channels<S>({x_t, ref_w, flow_up});
    u = leaky_relu(fine1(u), slope);
    u = leaky_relu(fine2(u), slope);
    u = leaky_relu(fine3(u), slope);
    u = leaky_relu(fine4(u), slope);
    Tensor<S> flow = add(flow_up, fine_head(u));

    flow = scale(tanh(scale(flow, S(1) / max_flow)), max_flow);
    ACV_CHECK(flow.value().isFinite().all(),
              "flow net produced non-finite values");
    ACV_CHECK(flow.value().abs().maxCoeff() <= double(max_flow),
              "flow exceeds the configured bound ", double(max_flow));
    return flow;
  }
};

// Residual refinement of the warped reference:
//   x_c = clamp(warped + net(concat(warped, ref, flow)), 0, 1).
// Zero-initialized head, so at init x_c = clamp(warped).
template <typename S>
struct McNet {
  Conv<S> c1, c2, c3, head;

  McNet() = default;

  McNet(ParamStore<S>& store, const std::string& name, int ch, Pcg32& rng) {
    c1 = Conv<S>(store, name + ".c1", 8, ch, 3, 1, 1, rng);
    c2 = Conv<S>(store, name + ".c2", ch, ch, 3, 1, 1, rng);
    c3 = Conv<S>(store, name + ".c3", ch, ch, 3, 1, 1, rng);
    head = Conv<S>(store, name + ".head", ch, 3, 3, 1, 1, rng, true);
  }

  Tensor<S> operator()(const Tensor<S>& warped, const Tensor<S>& ref,
                       const Tensor<S>& flow) const {
    const S slope = S(0.2);
    Tensor<S> t = concat_channels<S>({warped, ref, flow});
    t = leaky_relu(c1(t), slope);
    t = leaky_relu(c2(t), slope);
    t = leaky_relu(c3(t), slope);
    return clamp(add(warped, head(t)), S(0), S(1));
  }
};

}  // namespace acv

#endif  // ACV_MOTION_NETS_HPP_
