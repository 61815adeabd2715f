#pragma once

#include <cmath>
#include <limits>

#include "posecode/nn/layers.hpp"

namespace posecode::nn {

// Adam with bias correction.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore<Scalar>& params, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& p : params) {
      p.adam_m = static_cast<Scalar>(beta1_) * p.adam_m +
                 static_cast<Scalar>(1.0 - beta1_) * p.grad;
      p.adam_v = static_cast<Scalar>(beta2_) * p.adam_v +
                 (static_cast<Scalar>(1.0 - beta2_) * p.grad.array().square()).matrix();
      p.value.array() -= static_cast<Scalar>(lr / bc1) * p.adam_m.array() /
                         ((p.adam_v.array() / static_cast<Scalar>(bc2)).sqrt() +
                          static_cast<Scalar>(eps_));
    }
  }

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// Reduce-on-plateau: after `patience` epochs without improvement the
// learning rate is multiplied by `factor`.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, int patience, double factor)
      : lr_(lr), patience_(patience), factor_(factor) {}

  // Returns true when the learning rate was just reduced.
  bool observe(double metric) {
    if (metric < best_ - 1e-12) {
      best_ = metric;
      bad_ = 0;
      return false;
    }
    if (++bad_ > patience_) {
      lr_ *= factor_;
      bad_ = 0;
      return true;
    }
    return false;
  }

  double lr() const { return lr_; }

 private:
  double lr_;
  int patience_;
  double factor_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_ = 0;
};

}  // namespace posecode::nn
