#ifndef ACV_CODECS_HPP_
#define ACV_CODECS_HPP_

#include <string>
#include <vector>

#include "acv/alpha.hpp"
#include "acv/coder.hpp"
#include "acv/entropy.hpp"
#include "acv/nn.hpp"

namespace acv {

// ---------------------------------------------------------------------------
// Rate attribution
// ---------------------------------------------------------------------------

// Assigns each latent element's bits to the patch containing its spatial
// anchor (element position x downsample factor). Differentiable, so patch
// rates can carry loss weights back into the codec.
template <typename S>
Tensor<S> attribute_bits_to_patches(const Tensor<S>& per_element_bits,
                                    int patch, int factor) {
  ACV_CHECK_CFG(patch > 0 && factor > 0,
                "attribute_bits_to_patches: patch ", patch, ", factor ",
                factor);
  Tensor<S> g = sum_channels(per_element_bits);
  if (patch % factor == 0) {
    const int f = patch / factor;
    return sum_pool(g, f, f);
  }
  ACV_CHECK_CFG(factor % patch == 0,
                "attribute_bits_to_patches: factor ", factor,
                " incompatible with patch ", patch);
  const int f = factor / patch;
  return zero_upsample(g, f, f);
}

// ---------------------------------------------------------------------------
// Conditioned transform pair (strided 4-stage analysis / synthesis)
// ---------------------------------------------------------------------------

// Four stride-2 convs with two SFT injections at the middle stages. The
// companion signal for each SFT is the transform's own input, resized.
template <typename S>
struct CondAnalysis {
  Conv<S> c1, c2, c3, c4;
  SftLayer<S> sft1, sft2;

  CondAnalysis() = default;

  CondAnalysis(ParamStore<S>& store, const std::string& name, int cin, int n,
               int m, int sft_hidden, Pcg32& rng) {
    c1 = Conv<S>(store, name + ".c1", cin, n, 3, 2, 1, rng);
    c2 = Conv<S>(store, name + ".c2", n, n, 3, 2, 1, rng);
    c3 = Conv<S>(store, name + ".c3", n, n, 3, 2, 1, rng);
    c4 = Conv<S>(store, name + ".c4", n, m, 3, 2, 1, rng);
    sft1 = SftLayer<S>(store, name + ".sft1", cin, n, sft_hidden, rng);
    sft2 = SftLayer<S>(store, name + ".sft2", cin, n, sft_hidden, rng);
  }

  Tensor<S> operator()(const Tensor<S>& x, const Tensor<S>& alpha_grid,
                       bool bypass_sft) const {
    const S slope = S(0.2);
    Tensor<S> t = leaky_relu(c1(x), slope);
    t = leaky_relu(c2(t), slope);
    if (!bypass_sft)
      t = sft1(t, scale_alpha(alpha_grid, t.shape().h, t.shape().w),
               resize_nearest(x, t.shape().h, t.shape().w));
    t = leaky_relu(c3(t), slope);
    if (!bypass_sft)
      t = sft2(t, scale_alpha(alpha_grid, t.shape().h, t.shape().w),
               resize_nearest(x, t.shape().h, t.shape().w));
    return c4(t);
  }
};

template <typename S>
struct CondSynthesis {
  Deconv<S> d1, d2, d3, d4;
  SftLayer<S> sft1, sft2;

  CondSynthesis() = default;

  CondSynthesis(ParamStore<S>& store, const std::string& name, int m, int n,
                int cout, int sft_hidden, Pcg32& rng) {
    d1 = Deconv<S>(store, name + ".d1", m, n, 4, 2, 1, rng);
    d2 = Deconv<S>(store, name + ".d2", n, n, 4, 2, 1, rng);
    d3 = Deconv<S>(store, name + ".d3", n, n, 4, 2, 1, rng);
    d4 = Deconv<S>(store, name + ".d4", n, cout, 4, 2, 1, rng);
    sft1 = SftLayer<S>(store, name + ".sft1", m, n, sft_hidden, rng);
    sft2 = SftLayer<S>(store, name + ".sft2", m, n, sft_hidden, rng);
  }

  Tensor<S> operator()(const Tensor<S>& z, const Tensor<S>& alpha_grid,
                       bool bypass_sft) const {
    const S slope = S(0.2);
    Tensor<S> t = leaky_relu(d1(z), slope);
    if (!bypass_sft)
      t = sft1(t, scale_alpha(alpha_grid, t.shape().h, t.shape().w),
               resize_nearest(z, t.shape().h, t.shape().w));
    t = leaky_relu(d2(t), slope);
    if (!bypass_sft)
      t = sft2(t, scale_alpha(alpha_grid, t.shape().h, t.shape().w),
               resize_nearest(z, t.shape().h, t.shape().w));
    t = leaky_relu(d3(t), slope);
    return d4(t);
  }
};

// ---------------------------------------------------------------------------
// Hyper codec: side-information autoencoder over a main latent
// ---------------------------------------------------------------------------

template <typename S>
struct HyperCodec {
  Conv<S> e1, e2;
  Deconv<S> d1, d2;
  int hyper_ch = 0;

  HyperCodec() = default;

  HyperCodec(ParamStore<S>& store, const std::string& name, int m, int n,
             Pcg32& rng)
      : hyper_ch(n) {
    e1 = Conv<S>(store, name + ".e1", m, n, 3, 2, 1, rng);
    e2 = Conv<S>(store, name + ".e2", n, n, 3, 2, 1, rng);
    d1 = Deconv<S>(store, name + ".d1", n, n, 4, 2, 1, rng);
    d2 = Deconv<S>(store, name + ".d2", n, 2 * m, 4, 2, 1, rng);
  }

  Tensor<S> encode(const Tensor<S>& y) const {
    return e2(leaky_relu(e1(y), S(0.2)));
  }

  // -> (mean, sigma) for the main latent's conditional Gaussian
  std::pair<Tensor<S>, Tensor<S>> decode(const Tensor<S>& h_hat) const {
    Tensor<S> t = d2(leaky_relu(d1(h_hat), S(0.2)));
    auto parts = split_channels(t, {t.shape().c / 2, t.shape().c / 2});
    return {parts[0], scale_from_raw(parts[1])};
  }
};

// ---------------------------------------------------------------------------
// Shared coding result types
// ---------------------------------------------------------------------------

template <typename S>
struct CodedLatent {
  Tensor<S> main_hat;              // quantized main latent (graph-connected)
  Tensor<S> hyper_hat;             // quantized hyper latent
  Tensor<S> main_bits, hyper_bits;  // per-element estimated bits
  std::vector<std::uint8_t> hyper_bytes, main_bytes;  // emitted (round mode)
  std::size_t payload_bytes = 0;   // range payload across both substreams
};

// Quantizes a (main, hyper) latent pair, estimates rates, and optionally
// range-codes both substreams. The hyper latent is coded first: the decoder
// needs it to rebuild the Gaussian parameters for the main latent.
template <typename S>
CodedLatent<S> code_latent_pair(const Tensor<S>& main,
                                const HyperCodec<S>& hyper,
                                const FactorizedPrior<S>& prior,
                                CodingCtx<S>& ctx) {
  CodedLatent<S> out;
  Tensor<S> h = hyper.encode(main);
  out.hyper_hat = quantize(h, ctx);
  auto [mean, sigma] = hyper.decode(out.hyper_hat);
  out.main_hat = quantize(main, ctx);
  out.hyper_bits = bits_from_likelihood(prior.likelihood(out.hyper_hat));
  out.main_bits = bits_from_likelihood(
      gaussian_likelihood(out.main_hat, mean, sigma));
  if (ctx.emit) {
    ACV_CHECK(ctx.mode == QuantMode::kRound,
              "bitstream emission requires round quantization");
    auto he = encode_factorized(out.hyper_hat, prior);
    auto me = encode_gaussian(out.main_hat, mean, sigma);
    out.hyper_bytes = std::move(he.body);
    out.main_bytes = std::move(me.body);
    out.payload_bytes = he.payload_bytes + me.payload_bytes;
  }
  return out;
}

// Decoder-side counterpart; shapes are derived from the model geometry.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> decode_latent_pair(
    const std::vector<std::uint8_t>& hyper_bytes,
    const std::vector<std::uint8_t>& main_bytes, Shape4 hyper_shape,
    const HyperCodec<S>& hyper, const FactorizedPrior<S>& prior) {
  Tensor<S> h_hat = decode_factorized(hyper_bytes.data(), hyper_bytes.size(),
                                      hyper_shape, prior);
  auto [mean, sigma] = hyper.decode(h_hat);
  Tensor<S> main_hat =
      decode_gaussian(main_bytes.data(), main_bytes.size(), mean, sigma);
  return {main_hat, h_hat};
}

// ---------------------------------------------------------------------------
// Intra codec: plain hyperprior autoencoder for I-frames
// ---------------------------------------------------------------------------

template <typename S>
struct IntraResult {
  Tensor<S> recon;
  Tensor<S> total_bits;  // scalar, differentiable
  std::vector<std::uint8_t> hyper_bytes, main_bytes;
  std::size_t payload_bytes = 0;
};

template <typename S>
struct IntraCodec {
  Conv<S> a1, a2, a3, a4;
  Deconv<S> s1, s2, s3, s4;
  HyperCodec<S> hyper;
  FactorizedPrior<S> prior;
  int m_ch = 0;

  IntraCodec() = default;

  IntraCodec(ParamStore<S>& store, const std::string& name, int n, int m,
             Pcg32& rng)
      : m_ch(m) {
    a1 = Conv<S>(store, name + ".a1", 3, n, 3, 2, 1, rng);
    a2 = Conv<S>(store, name + ".a2", n, n, 3, 2, 1, rng);
    a3 = Conv<S>(store, name + ".a3", n, n, 3, 2, 1, rng);
    a4 = Conv<S>(store, name + ".a4", n, m, 3, 2, 1, rng);
    s1 = Deconv<S>(store, name + ".s1", m, n, 4, 2, 1, rng);
    s2 = Deconv<S>(store, name + ".s2", n, n, 4, 2, 1, rng);
    s3 = Deconv<S>(store, name + ".s3", n, n, 4, 2, 1, rng);
    s4 = Deconv<S>(store, name + ".s4", n, 3, 4, 2, 1, rng);
    hyper = HyperCodec<S>(store, name + ".hyper", m, n, rng);
    prior = FactorizedPrior<S>(store, name + ".prior", n, rng);
  }

  Tensor<S> analysis(const Tensor<S>& x) const {
    const S slope = S(0.2);
    return a4(leaky_relu(a3(leaky_relu(a2(leaky_relu(a1(x), slope)), slope)),
                         slope));
  }

  Tensor<S> synthesis(const Tensor<S>& y) const {
    const S slope = S(0.2);
    return clamp(
        s4(leaky_relu(s3(leaky_relu(s2(leaky_relu(s1(y), slope)), slope)),
                      slope)),
        S(0), S(1));
  }

  IntraResult<S> code(const Tensor<S>& x, CodingCtx<S>& ctx) const {
    IntraResult<S> out;
    Tensor<S> y = analysis(x);
    CodedLatent<S> coded = code_latent_pair(y, hyper, prior, ctx);
    out.recon = synthesis(coded.main_hat);
    out.total_bits = add(sum(coded.main_bits), sum(coded.hyper_bits));
    out.hyper_bytes = std::move(coded.hyper_bytes);
    out.main_bytes = std::move(coded.main_bytes);
    out.payload_bytes = coded.payload_bytes;
    return out;
  }

  Tensor<S> decode(const std::vector<std::uint8_t>& hyper_bytes,
                   const std::vector<std::uint8_t>& main_bytes, int frame_h,
                   int frame_w) const {
    Shape4 hs(1, hyper.hyper_ch, frame_h / 64, frame_w / 64);
    auto [y_hat, h_hat] =
        decode_latent_pair(hyper_bytes, main_bytes, hs, hyper, prior);
    return synthesis(y_hat);
  }
};

// ---------------------------------------------------------------------------
// Motion codec: one-step conditional autoencoder over the 2-channel flow
// ---------------------------------------------------------------------------

template <typename S>
struct MotionResult {
  Tensor<S> flow_hat;    // decoder-path reconstruction (uses extracted alpha)
  Tensor<S> alpha_hat;   // decoder-side alpha estimate, patch grid
  Tensor<S> patch_bits;  // (1,1,Hp,Wp), differentiable
  Tensor<S> total_bits;  // scalar == sum(patch_bits) by construction
  std::vector<std::uint8_t> hyper_bytes, main_bytes;
  std::size_t payload_bytes = 0;
};

template <typename S>
struct MotionCodec {
  CondAnalysis<S> enc;
  CondSynthesis<S> dec;
  HyperCodec<S> hyper;
  FactorizedPrior<S> prior;
  AlphaExtractor<S> extractor;
  int m_ch = 0;

  MotionCodec() = default;

  MotionCodec(ParamStore<S>& store, const std::string& name, int n, int m,
              int sft_hidden, Pcg32& rng)
      : m_ch(m) {
    enc = CondAnalysis<S>(store, name + ".enc", 2, n, m, sft_hidden, rng);
    dec = CondSynthesis<S>(store, name + ".dec", m, n, 2, sft_hidden, rng);
    hyper = HyperCodec<S>(store, name + ".hyper", m, n, rng);
    prior = FactorizedPrior<S>(store, name + ".prior", n, rng);
    extractor = AlphaExtractor<S>(store, name + ".extract", n, n, rng);
  }

  MotionResult<S> code(const Tensor<S>& flow, const Tensor<S>& alpha_grid,
                       int patch, CodingCtx<S>& ctx, bool bypass_sft) const {
    MotionResult<S> out;
    Tensor<S> z = enc(flow, alpha_grid, bypass_sft);
    CodedLatent<S> coded = code_latent_pair(z, hyper, prior, ctx);
    const Shape4 gs = alpha_grid.shape();
    out.alpha_hat = bypass_sft
                        ? Tensor<S>::zeros(gs)
                        : extractor(coded.hyper_hat, gs.h, gs.w);
    out.flow_hat = dec(coded.main_hat, out.alpha_hat, bypass_sft);
    out.patch_bits =
        add(attribute_bits_to_patches(coded.main_bits, patch, 16),
            attribute_bits_to_patches(coded.hyper_bits, patch, 64));
    out.total_bits = sum(out.patch_bits);
    out.hyper_bytes = std::move(coded.hyper_bytes);
    out.main_bytes = std::move(coded.main_bytes);
    out.payload_bytes = coded.payload_bytes;
    return out;
  }

  // Decode from bytes alone (plus geometry); mirrors code()'s decode path.
  Tensor<S> decode(const std::vector<std::uint8_t>& hyper_bytes,
                   const std::vector<std::uint8_t>& main_bytes, int frame_h,
                   int frame_w, int patch, bool bypass_sft) const {
    Shape4 hs(1, hyper.hyper_ch, frame_h / 64, frame_w / 64);
    auto [z_hat, h_hat] =
        decode_latent_pair(hyper_bytes, main_bytes, hs, hyper, prior);
    Tensor<S> alpha_hat =
        bypass_sft
            ? Tensor<S>::zeros(Shape4(1, 1, frame_h / patch, frame_w / patch))
            : extractor(h_hat, frame_h / patch, frame_w / patch);
    return dec(z_hat, alpha_hat, bypass_sft);
  }
};

// ---------------------------------------------------------------------------
// Conditional inter codec: two coupled autoencoding steps
// ---------------------------------------------------------------------------
//
// Encoding walks (x_0, z_0=0) forward:
//   z_1 = E1(x_0)        x_1 = x_0 - D1(z_1)        z_2 = z_1 + E2(x_1)
// and transmits quantized z_2 plus its hyper latent. Decoding substitutes the
// motion-compensated prediction for the untransmitted x_2 and inverts:
//   x_1 = x_c + D2(z_2)  z_1 = z_2 - E2(x_1)        x_0 = x_1 + D1(z_1)
// Encoder-side transforms see the true alpha; every decode-path run uses the
// estimate extracted from the hyper latent, exactly as a real decoder must.
template <typename S>
struct InterResult {
  Tensor<S> recon;       // decoder-path x_0
  Tensor<S> alpha_hat;   // patch grid
  Tensor<S> patch_bits;  // (1,1,Hp,Wp)
  Tensor<S> total_bits;  // scalar == sum(patch_bits)
  std::vector<std::uint8_t> hyper_bytes, main_bytes;
  std::size_t payload_bytes = 0;
};

template <typename S>
struct InterCodec {
  CondAnalysis<S> enc1, enc2;
  CondSynthesis<S> dec1, dec2;
  HyperCodec<S> hyper;
  FactorizedPrior<S> prior;
  AlphaExtractor<S> extractor;
  int m_ch = 0;

  InterCodec() = default;

  InterCodec(ParamStore<S>& store, const std::string& name, int n, int m,
             int sft_hidden, Pcg32& rng)
      : m_ch(m) {
    enc1 = CondAnalysis<S>(store, name + ".enc1", 3, n, m, sft_hidden, rng);
    enc2 = CondAnalysis<S>(store, name + ".enc2", 3, n, m, sft_hidden, rng);
    dec1 = CondSynthesis<S>(store, name + ".dec1", m, n, 3, sft_hidden, rng);
    dec2 = CondSynthesis<S>(store, name + ".dec2", m, n, 3, sft_hidden, rng);
    hyper = HyperCodec<S>(store, name + ".hyper", m, n, rng);
    prior = FactorizedPrior<S>(store, name + ".prior", n, rng);
    extractor = AlphaExtractor<S>(store, name + ".extract", n, n, rng);
  }

  // Encoder-side forward walk; returns (z_2, x_1).
  std::pair<Tensor<S>, Tensor<S>> analysis(const Tensor<S>& x0,
                                           const Tensor<S>& alpha_grid,
                                           bool bypass_sft) const {
    Tensor<S> z1 = enc1(x0, alpha_grid, bypass_sft);
    Tensor<S> x1 = sub(x0, dec1(z1, alpha_grid, bypass_sft));
    Tensor<S> z2 = add(z1, enc2(x1, alpha_grid, bypass_sft));
    return {z2, x1};
  }

  // The untransmitted second image track (test hook for invertibility).
  Tensor<S> x2_of(const Tensor<S>& x1, const Tensor<S>& z2,
                  const Tensor<S>& alpha_grid, bool bypass_sft) const {
    return sub(x1, dec2(z2, alpha_grid, bypass_sft));
  }

  // Inverse walk from (z_2, x_2-substitute) back to the image.
  Tensor<S> synthesis(const Tensor<S>& z2, const Tensor<S>& x2_init,
                      const Tensor<S>& alpha_grid, bool bypass_sft) const {
    Tensor<S> x1 = add(x2_init, dec2(z2, alpha_grid, bypass_sft));
    Tensor<S> z1 = sub(z2, enc2(x1, alpha_grid, bypass_sft));
    return add(x1, dec1(z1, alpha_grid, bypass_sft));
  }

  InterResult<S> code(const Tensor<S>& x_t, const Tensor<S>& x_c,
                      const Tensor<S>& alpha_grid, int patch,
                      CodingCtx<S>& ctx, bool bypass_sft) const {
    ACV_CHECK_CFG(x_t.shape() == x_c.shape(), "inter codec: ",
                  x_t.shape().str(), " vs condition ", x_c.shape().str());
    InterResult<S> out;
    auto [z2, x1] = analysis(x_t, alpha_grid, bypass_sft);
    CodedLatent<S> coded = code_latent_pair(z2, hyper, prior, ctx);
    const Shape4 gs = alpha_grid.shape();
    out.alpha_hat = bypass_sft
                        ? Tensor<S>::zeros(gs)
                        : extractor(coded.hyper_hat, gs.h, gs.w);
    out.recon = synthesis(coded.main_hat, x_c, out.alpha_hat, bypass_sft);
    out.patch_bits =
        add(attribute_bits_to_patches(coded.main_bits, patch, 16),
            attribute_bits_to_patches(coded.hyper_bits, patch, 64));
    out.total_bits = sum(out.patch_bits);
    out.hyper_bytes = std::move(coded.hyper_bytes);
    out.main_bytes = std::move(coded.main_bytes);
    out.payload_bytes = coded.payload_bytes;
    return out;
  }

  Tensor<S> decode(const std::vector<std::uint8_t>& hyper_bytes,
                   const std::vector<std::uint8_t>& main_bytes,
                   const Tensor<S>& x_c, int patch, bool bypass_sft) const {
    const Shape4 s = x_c.shape();
    Shape4 hs(1, hyper.hyper_ch, s.h / 64, s.w / 64);
    auto [z2_hat, h_hat] =
        decode_latent_pair(hyper_bytes, main_bytes, hs, hyper, prior);
    Tensor<S> alpha_hat =
        bypass_sft
            ? Tensor<S>::zeros(Shape4(1, 1, s.h / patch, s.w / patch))
            : extractor(h_hat, s.h / patch, s.w / patch);
    return synthesis(z2_hat, x_c, alpha_hat, bypass_sft);
  }
};

}  // namespace acv

#endif  // ACV_CODECS_HPP_
