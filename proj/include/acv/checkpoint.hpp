#ifndef ACV_CHECKPOINT_HPP_
#define ACV_CHECKPOINT_HPP_

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "json.hpp"

#include "acv/bitstream.hpp"
#include "acv/nn.hpp"

namespace acv {

// Parameter snapshot: "ACVP", model hash u64, parameter count u32, then per
// parameter a u16-length-prefixed name, the shape as 4xu32, and f32
// little-endian values. Weights are stored in f32 regardless of the scalar
// mode, so double-verification models round-trip through the same files.
inline constexpr std::uint8_t kParamsMagic[4] = {'A', 'C', 'V', 'P'};

template <typename S>
std::vector<std::uint8_t> serialize_params(const ParamStore<S>& store,
                                           std::uint64_t model_hash) {
  std::vector<std::uint8_t> out(kParamsMagic, kParamsMagic + 4);
  detail::put_u64le(out, model_hash);
  detail::put_u32le(out, std::uint32_t(store.size()));
  for (const auto& p : store.all()) {
    ACV_CHECK(p.name.size() <= 0xffff, "parameter name too long: ", p.name);
    detail::put_u16le(out, std::uint16_t(p.name.size()));
    out.insert(out.end(), p.name.begin(), p.name.end());
    const Shape4 s = p.value.shape();
    detail::put_u32le(out, std::uint32_t(s.n));
    detail::put_u32le(out, std::uint32_t(s.c));
    detail::put_u32le(out, std::uint32_t(s.h));
    detail::put_u32le(out, std::uint32_t(s.w));
    const auto& v = p.value.value();
    for (std::int64_t i = 0; i < v.size(); ++i) {
      const float f = float(v[i]);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      detail::put_u32le(out, bits);
    }
  }
  return out;
}

// Restores into an already-built model: the store must list exactly the same
// parameters in the same order. A differing architecture is a contract
// violation, a damaged file a corrupt stream.
template <typename S>
void load_params_bytes(ParamStore<S>& store, std::uint64_t model_hash,
                       const std::uint8_t* data, std::size_t n) {
  detail::ByteReader r{data, n};
  ACV_CHECK_STREAM(n >= 4 && std::equal(kParamsMagic, kParamsMagic + 4, data),
                   "bad parameter snapshot magic");
  r.pos = 4;
  const std::uint64_t hash = r.u64("model hash");
  ACV_CHECK(hash == model_hash, "parameter snapshot for model ", hash,
            ", expected ", model_hash);
  const std::uint32_t count = r.u32("parameter count");
  ACV_CHECK(count == store.size(), "snapshot has ", count, " parameters, model ",
            store.size());
  for (auto& p : store.all()) {
    const std::uint16_t len = r.u16("name length");
    std::vector<std::uint8_t> name = r.bytes(len, "name");
    ACV_CHECK(std::string(name.begin(), name.end()) == p.name,
              "snapshot parameter ", std::string(name.begin(), name.end()),
              " does not match model parameter ", p.name);
    const int sn = int(r.u32("shape.n"));
    const int sc = int(r.u32("shape.c"));
    const int sh = int(r.u32("shape.h"));
    const int sw = int(r.u32("shape.w"));
    Shape4 s(sn, sc, sh, sw);
    ACV_CHECK(s == p.value.shape(), "snapshot shape ", s.str(), " for ",
              p.name, ", model has ", p.value.shape().str());
    auto& v = p.value.mutable_value();
    for (std::int64_t i = 0; i < v.size(); ++i) {
      const std::uint32_t bits = r.u32("values");
      float f;
      std::memcpy(&f, &bits, 4);
      v[i] = S(f);
    }
  }
  ACV_CHECK_STREAM(r.pos == n, "trailing bytes in parameter snapshot");
}

template <typename S>
void save_params(const ParamStore<S>& store, std::uint64_t model_hash,
                 const std::string& path) {
  write_file_bytes(path, serialize_params(store, model_hash));
}

template <typename S>
void load_params(ParamStore<S>& store, std::uint64_t model_hash,
                 const std::string& path) {
  std::vector<std::uint8_t> bytes = read_file_bytes(path);
  load_params_bytes(store, model_hash, bytes.data(), bytes.size());
}

// Sidecar describing how a snapshot was produced, as JSON for tooling.
// Carries the full architecture knobs so a checkpoint alone is enough to
// rebuild its model.
struct CheckpointManifest {
  std::uint64_t model_hash = 0;
  double width_mult = 0.0;
  int patch = 16;
  double max_flow = 16.0;
  int stage = 0;
  std::int64_t iteration = 0;
  double lambda = 0.0;
  std::uint64_t seed = 0;
};

inline void save_manifest(const CheckpointManifest& m, const std::string& path) {
  nlohmann::json j = {
      {"model_hash", m.model_hash}, {"width_mult", m.width_mult},
      {"patch", m.patch},           {"max_flow", m.max_flow},
      {"stage", m.stage},           {"iteration", m.iteration},
      {"lambda", m.lambda},         {"seed", m.seed},
  };
  std::ofstream out(path);
  ACV_CHECK_IO(out.good(), "cannot open ", path, " for writing");
  out << j.dump(2) << "\n";
  ACV_CHECK_IO(out.good(), "write failed: ", path);
}

inline CheckpointManifest load_manifest(const std::string& path) {
  std::vector<std::uint8_t> bytes = read_file_bytes(path);
  CheckpointManifest m;
  try {
    nlohmann::json j = nlohmann::json::parse(bytes.begin(), bytes.end());
    m.model_hash = j.at("model_hash").get<std::uint64_t>();
    m.width_mult = j.at("width_mult").get<double>();
    m.patch = j.at("patch").get<int>();
    m.max_flow = j.at("max_flow").get<double>();
    m.stage = j.at("stage").get<int>();
    m.iteration = j.at("iteration").get<std::int64_t>();
    m.lambda = j.at("lambda").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptStreamError(path + ": " + e.what());
  }
  return m;
}

}  // namespace acv

#endif  // ACV_CHECKPOINT_HPP_
