#ifndef ACV_TENSOR_HPP_
#define ACV_TENSOR_HPP_

#include <Eigen/Core>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "acv/common.hpp"
#include "acv/rng.hpp"

namespace acv {

template <typename S>
using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;

template <typename S>
class Tape;

// Dense 4-D array (batch, channel, height, width), NCHW-flat storage, with
// optional gradient tracking. Handles share payloads; operations return fresh
// tensors and record their reverse step on the active Tape.
template <typename S>
class Tensor {
 public:
  struct Payload {
    Shape4 shape;
    ArrayX<S> value;
    ArrayX<S> grad;        // allocated lazily, same length as value
    bool requires_grad = false;
  };

  Tensor() = default;

  static Tensor zeros(Shape4 shape) {
    Tensor t;
    t.p_ = std::make_shared<Payload>();
    t.p_->shape = shape;
    t.p_->value = ArrayX<S>::Zero(shape.count());
    return t;
  }

  static Tensor full(Shape4 shape, S v) {
    Tensor t = zeros(shape);
    t.p_->value.setConstant(v);
    return t;
  }

  static Tensor scalar(S v) { return full(Shape4(1, 1, 1, 1), v); }

  static Tensor from(Shape4 shape, std::initializer_list<S> vals) {
    ACV_CHECK(std::int64_t(vals.size()) == shape.count(),
              "Tensor::from: ", vals.size(), " values for shape ", shape.str());
    Tensor t = zeros(shape);
    std::int64_t i = 0;
    for (S v : vals) t.p_->value[i++] = v;
    return t;
  }

  static Tensor from_array(Shape4 shape, ArrayX<S> vals) {
    ACV_CHECK(vals.size() == shape.count(),
              "Tensor::from_array: size mismatch for shape ", shape.str());
    Tensor t;
    t.p_ = std::make_shared<Payload>();
    t.p_->shape = shape;
    t.p_->value = std::move(vals);
    return t;
  }

  bool defined() const { return p_ != nullptr; }
  const Shape4& shape() const { return p_->shape; }
  std::int64_t size() const { return p_->shape.count(); }

  const ArrayX<S>& value() const { return p_->value; }
  ArrayX<S>& mutable_value() { return p_->value; }

  bool requires_grad() const { return p_ && p_->requires_grad; }
  void set_requires_grad(bool rg) {
    p_->requires_grad = rg;
    if (rg && p_->grad.size() != p_->value.size()) {
      p_->grad = ArrayX<S>::Zero(p_->value.size());
    }
  }

  const ArrayX<S>& grad() const {
    ACV_CHECK(p_->requires_grad, "Tensor::grad: tensor does not track gradients");
    return p_->grad;
  }
  ArrayX<S>& mutable_grad() {
    ACV_CHECK(p_->requires_grad, "Tensor::mutable_grad: tensor does not track gradients");
    return p_->grad;
  }
  void zero_grad() {
    if (p_ && p_->requires_grad) p_->grad.setZero();
  }

  S item() const {
    ACV_CHECK(size() == 1, "Tensor::item: tensor of shape ", shape().str(),
              " is not a scalar");
    return p_->value[0];
  }

  std::int64_t index(int n, int c, int y, int x) const {
    const Shape4& s = p_->shape;
    return ((std::int64_t(n) * s.c + c) * s.h + y) * s.w + x;
  }
  S at(int n, int c, int y, int x) const { return p_->value[index(n, c, y, x)]; }
  S& at(int n, int c, int y, int x) { return p_->value[index(n, c, y, x)]; }

  // Deep copy of the value, no gradient tracking.
  Tensor detach() const {
    Tensor t;
    t.p_ = std::make_shared<Payload>();
    t.p_->shape = p_->shape;
    t.p_->value = p_->value;
    return t;
  }

  // Convert between scalar types (e.g. checkpoint f32 -> verification f64).
  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> t = Tensor<T>::zeros(p_->shape);
    t.mutable_value() = p_->value.template cast<T>();
    return t;
  }

  const std::shared_ptr<Payload>& payload() const { return p_; }

 private:
  std::shared_ptr<Payload> p_;
};

// Execution log for one forward pass. Reverse steps run in exact reverse
// execution order; a tape is consumed by exactly one backward() call.
// Tapes nest per thread; ops record on the innermost active tape.
template <typename S>
class Tape {
 public:
  Tape() : prev_(active_) { active_ = this; }
  ~Tape() { active_ = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

  std::size_t op_count() const { return steps_.size(); }
  bool consumed() const { return consumed_; }

  // Seeds d(loss)/d(loss) = 1 and replays the log backwards.
  void backward(const Tensor<S>& loss) {
    ACV_CHECK(!consumed_, "Tape::backward: tape already consumed");
    ACV_CHECK(loss.size() == 1,
              "Tape::backward: loss has shape ", loss.shape().str(),
              ", expected a scalar");
    consumed_ = true;
    if (loss.requires_grad()) {
      loss.payload()->grad[0] += S(1);
      for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    }
    steps_.clear();
  }

 private:
  std::vector<std::function<void()>> steps_;
  bool consumed_ = false;
  Tape* prev_ = nullptr;
  inline static thread_local Tape* active_ = nullptr;
};

namespace detail {

// Output of an op tracks gradients only while a tape is active.
template <typename S>
bool track(std::initializer_list<const Tensor<S>*> inputs) {
  if (Tape<S>::active() == nullptr) return false;
  for (const Tensor<S>* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <typename S>
void ensure_grad(const std::shared_ptr<typename Tensor<S>::Payload>& p) {
  if (p->grad.size() != p->value.size()) p->grad = ArrayX<S>::Zero(p->value.size());
}

}  // namespace detail

// Named trainable tensor. Parameters keep requires_grad on for their whole
// life; gradients accumulate across backward calls until zero_grad().
template <typename S>
struct Parameter {
  std::string name;
  Tensor<S> value;

  Parameter(std::string name_, Shape4 shape) : name(std::move(name_)) {
    value = Tensor<S>::zeros(shape);
    value.set_requires_grad(true);
  }
};

template <typename S>
void fill_uniform(Tensor<S>& t, Pcg32& rng, double lo, double hi) {
  auto& v = t.mutable_value();
  for (std::int64_t i = 0; i < v.size(); ++i) v[i] = S(rng.uniform(lo, hi));
}

template <typename S>
void fill_normal(Tensor<S>& t, Pcg32& rng, double mean, double stddev) {
  auto& v = t.mutable_value();
  for (std::int64_t i = 0; i < v.size(); ++i) v[i] = S(mean + stddev * rng.normal());
}

}  // namespace acv

#endif  // ACV_TENSOR_HPP_
