#ifndef ACV_NN_HPP_
#define ACV_NN_HPP_

#include <cmath>
#include <deque>
#include <map>
#include <string>

#include "acv/conv.hpp"
#include "acv/ops.hpp"
#include "acv/tensor.hpp"

namespace acv {

// Owns every trainable tensor of a model, keyed by a dotted path. Layers keep
// shared handles, so optimizer updates through the store are visible
// everywhere without re-lookup. Deque storage keeps returned references valid
// across later create() calls.
template <typename S>
class ParamStore {
 public:
  Tensor<S>& create(const std::string& name, Shape4 shape) {
    ACV_CHECK(!by_name_.count(name), "ParamStore: duplicate parameter ", name);
    params_.emplace_back(name, shape);
    by_name_[name] = params_.size() - 1;
    return params_.back().value;
  }

  bool has(const std::string& name) const { return by_name_.count(name) > 0; }

  Tensor<S>& get(const std::string& name) {
    auto it = by_name_.find(name);
    ACV_CHECK(it != by_name_.end(), "ParamStore: unknown parameter ", name);
    return params_[it->second].value;
  }

  std::deque<Parameter<S>>& all() { return params_; }
  const std::deque<Parameter<S>>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  std::int64_t element_count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
  }

 private:
  std::deque<Parameter<S>> params_;
  std::map<std::string, std::size_t> by_name_;
};

namespace nninit {

// Fan-in-scaled uniform, the usual default for conv stacks.
template <typename S>
void uniform_fan_in(Tensor<S>& w, Tensor<S>& b, std::int64_t fan_in,
                    Pcg32& rng) {
  double k = 1.0 / std::sqrt(double(fan_in));
  fill_uniform(w, rng, -k, k);
  fill_uniform(b, rng, -k, k);
}

}  // namespace nninit

// Strided convolution layer; weight (cout, cin, k, k), bias (1, cout, 1, 1).
template <typename S>
struct Conv {
  Tensor<S> w, b;
  int stride = 1, pad = 0;

  Conv() = default;

  Conv(ParamStore<S>& store, const std::string& name, int cin, int cout, int k,
       int stride_, int pad_, Pcg32& rng, bool zero_init = false)
      : stride(stride_), pad(pad_) {
    w = store.create(name + ".w", Shape4(cout, cin, k, k));
    b = store.create(name + ".b", Shape4(1, cout, 1, 1));
    if (!zero_init) nninit::uniform_fan_in(w, b, std::int64_t(cin) * k * k, rng);
  }

  Tensor<S> operator()(const Tensor<S>& x) const {
    return bias_add(conv2d(x, w, stride, pad), b);
  }
};

// Transposed convolution layer; weight (cin, cout, k, k), bias (1, cout, 1, 1).
template <typename S>
struct Deconv {
  Tensor<S> w, b;
  int stride = 1, pad = 0;

  Deconv() = default;

  Deconv(ParamStore<S>& store, const std::string& name, int cin, int cout,
         int k, int stride_, int pad_, Pcg32& rng, bool zero_init = false)
      : stride(stride_), pad(pad_) {
    w = store.create(name + ".w", Shape4(cin, cout, k, k));
    b = store.create(name + ".b", Shape4(1, cout, 1, 1));
    if (!zero_init) nninit::uniform_fan_in(w, b, std::int64_t(cin) * k * k, rng);
  }

  Tensor<S> operator()(const Tensor<S>& x) const {
    return bias_add(conv2d_transpose(x, w, stride, pad), b);
  }
};

}  // namespace acv

#endif  // ACV_NN_HPP_
