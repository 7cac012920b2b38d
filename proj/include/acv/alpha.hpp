#ifndef ACV_ALPHA_HPP_
#define ACV_ALPHA_HPP_

#include <string>

#include "acv/nn.hpp"
#include "acv/ops.hpp"

namespace acv {

// Per-patch coding preference in [-1,1]: positive favors spending fewer bits
// on motion, negative more. Stored as a (1,1,H/P,W/P) grid over the padded
// frame.
inline Shape4 alpha_grid_shape(int frame_h, int frame_w, int patch) {
  ACV_CHECK_CFG(patch > 0 && frame_h % patch == 0 && frame_w % patch == 0,
                "alpha grid: frame ", frame_h, "x", frame_w,
                " not divisible by patch ", patch);
  return Shape4(1, 1, frame_h / patch, frame_w / patch);
}

template <typename S>
Tensor<S> alpha_uniform(S value, int frame_h, int frame_w, int patch) {
  ACV_CHECK(value >= S(-1) && value <= S(1), "alpha value ", value,
            " outside [-1,1]");
  return Tensor<S>::full(alpha_grid_shape(frame_h, frame_w, patch), value);
}

// i.i.d. per patch: alpha = tanh(g), g ~ N(0,1).
template <typename S>
Tensor<S> alpha_random(int frame_h, int frame_w, int patch, Pcg32& rng) {
  Tensor<S> a = Tensor<S>::zeros(alpha_grid_shape(frame_h, frame_w, patch));
  for (std::int64_t i = 0; i < a.size(); ++i)
    a.mutable_value()[i] = std::tanh(S(rng.normal()));
  return a;
}

// Nearest-neighbor replication of the patch grid to a codec stage's spatial
// dims; every pixel carries exactly its patch's value.
template <typename S>
Tensor<S> scale_alpha(const Tensor<S>& grid, int target_h, int target_w) {
  return resize_nearest(grid, target_h, target_w);
}

// Feature modulation gamma * F + beta, with (gamma, beta) predicted from the
// alpha map plus a companion signal (the stage input, resized to F's dims).
// The last conv starts at zero, so the layer is the identity at init
// (gamma = 1 + dgamma).
template <typename S>
struct SftLayer {
  Conv<S> c1, c2, head;
  int features = 0;

  SftLayer() = default;

  SftLayer(ParamStore<S>& store, const std::string& name, int companion_ch,
           int feature_ch, int hidden, Pcg32& rng)
      : features(feature_ch) {
    c1 = Conv<S>(store, name + ".c1", 1 + companion_ch, hidden, 3, 1, 1, rng);
    c2 = Conv<S>(store, name + ".c2", hidden, hidden, 3, 1, 1, rng);
    head = Conv<S>(store, name + ".head", hidden, 2 * feature_ch, 3, 1, 1, rng,
                   /*zero_init=*/true);
  }

  Tensor<S> operator()(const Tensor<S>& f, const Tensor<S>& alpha_scaled,
                       const Tensor<S>& companion) const {
    const Shape4 fs = f.shape();
    ACV_CHECK_CFG(alpha_scaled.shape().h == fs.h &&
                      alpha_scaled.shape().w == fs.w &&
                      companion.shape().h == fs.h &&
                      companion.shape().w == fs.w,
                  "sft: feature ", fs.str(), " vs alpha ",
                  alpha_scaled.shape().str(), " vs companion ",
                  companion.shape().str());
    ACV_CHECK_CFG(fs.c == features, "sft: ", fs.c, " feature channels, layer"
                  " built for ", features);
    Tensor<S> t = leaky_relu(c1(concat_channels(alpha_scaled, companion)),
                             S(0.2));
    t = leaky_relu(c2(t), S(0.2));
    Tensor<S> gb = head(t);
    auto parts = split_channels(gb, {features, features});
    Tensor<S> gamma = offset(parts[0], S(1));
    return add(mul(gamma, f), parts[1]);
  }
};

// Decoder-side alpha estimate from a quantized hyper latent: two upsampling
// stages, tanh into (-1,1), then nearest resize onto the patch grid.
template <typename S>
struct AlphaExtractor {
  Deconv<S> d1, d2;

  AlphaExtractor() = default;

  AlphaExtractor(ParamStore<S>& store, const std::string& name, int hyper_ch,
                 int hidden, Pcg32& rng) {
    d1 = Deconv<S>(store, name + ".d1", hyper_ch, hidden, 4, 2, 1, rng);
    d2 = Deconv<S>(store, name + ".d2", hidden, 1, 4, 2, 1, rng);
  }

  Tensor<S> operator()(const Tensor<S>& h_hat, int grid_h, int grid_w) const {
    Tensor<S> a = tanh(d2(leaky_relu(d1(h_hat), S(0.2))));
    return resize_nearest(a, grid_h, grid_w);
  }
};

}  // namespace acv

#endif  // ACV_ALPHA_HPP_
