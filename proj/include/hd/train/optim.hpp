#pragma once

#include <unordered_map>

#include "hd/core/graph.hpp"

namespace hd {

// AdamW with decoupled weight decay. Moment buffers are keyed by parameter
// identity, so one optimizer instance can serve any stable parameter set.
template <class T>
class AdamW {
 public:
  explicit AdamW(double lr = 1e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
                 double weight_decay = 0.01)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  void step(const std::vector<ParamTensor<T>*>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (ParamTensor<T>* p : params) {
      if (!p->trainable) continue;
      Moments& m = moments_[p];
      if (m.m.empty()) {
        m.m = Tensor<double>(p->value.shape());
        m.v = Tensor<double>(p->value.shape());
      }
      for (std::int64_t i = 0; i < p->value.numel(); ++i) {
        const double g = static_cast<double>(p->grad[i]);
        m.m[i] = beta1_ * m.m[i] + (1.0 - beta1_) * g;
        m.v[i] = beta2_ * m.v[i] + (1.0 - beta2_) * g * g;
        const double update = (m.m[i] / bc1) / (std::sqrt(m.v[i] / bc2) + eps_) +
                              weight_decay_ * static_cast<double>(p->value[i]);
        p->value[i] -= static_cast<T>(lr_ * update);
      }
    }
  }

  void zero_grad(const std::vector<ParamTensor<T>*>& params) {
    for (ParamTensor<T>* p : params) p->zero_grad();
  }

 private:
  struct Moments {
    Tensor<double> m, v;
  };
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  int t_ = 0;
  std::unordered_map<ParamTensor<T>*, Moments> moments_;
};

// Multiplies the learning rate by gamma once the given epoch is reached.
struct StepLR {
  double base_lr = 1e-4;
  int step_epoch = 8;
  double gamma = 0.1;

  double at_epoch(int epoch) const { return epoch >= step_epoch ? base_lr * gamma : base_lr; }
};

}  // namespace hd
