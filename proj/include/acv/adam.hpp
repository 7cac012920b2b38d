#ifndef ACV_ADAM_HPP_
#define ACV_ADAM_HPP_

#include <cmath>
#include <vector>

#include "acv/nn.hpp"

namespace acv {

// Adam over a fixed set of shared tensor handles. Works for whole-model
// training (all store parameters) and for tiny per-frame side optimizations
// alike. A tensor whose gradient was never touched this step counts as zero.
template <typename S>
class Adam {
 public:
  double lr = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  Adam(std::vector<Tensor<S>> targets, double lr_) : lr(lr_),
                                                     targets_(std::move(targets)) {
    for (auto& t : targets_) {
      ACV_CHECK(t.defined() && t.requires_grad(),
                "Adam: target without gradient tracking");
      m_.emplace_back(ArrayX<S>::Zero(t.size()));
      v_.emplace_back(ArrayX<S>::Zero(t.size()));
    }
  }

  std::int64_t steps() const { return t_; }

  void step() {
    ++t_;
    const S c1 = S(1) - S(std::pow(beta1, double(t_)));
    const S c2 = S(1) - S(std::pow(beta2, double(t_)));
    for (std::size_t i = 0; i < targets_.size(); ++i) {
      auto& t = targets_[i];
      const bool has_grad = t.grad().size() > 0;
      if (has_grad) {
        const auto& g = t.grad();
        m_[i] = S(beta1) * m_[i] + (S(1) - S(beta1)) * g;
        v_[i] = S(beta2) * v_[i] + (S(1) - S(beta2)) * g.square();
      } else {
        m_[i] *= S(beta1);
        v_[i] *= S(beta2);
      }
      t.mutable_value() -=
          S(lr) * (m_[i] / c1) / ((v_[i] / c2).sqrt() + S(eps));
    }
  }

 private:
  std::vector<Tensor<S>> targets_;
  std::vector<ArrayX<S>> m_, v_;
  std::int64_t t_ = 0;
};

// All trainable tensors of a model, in creation order.
template <typename S>
Adam<S> adam_for(ParamStore<S>& store, double lr) {
  std::vector<Tensor<S>> targets;
  for (auto& p : store.all()) targets.push_back(p.value);
  return Adam<S>(std::move(targets), lr);
}

}  // namespace acv

#endif  // ACV_ADAM_HPP_
