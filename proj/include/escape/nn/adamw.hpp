#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "escape/nn/tensor.hpp"

namespace escape::nn {

struct AdamWOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// AdamW with decoupled weight decay and bias-corrected moments:
///   w <- w - lr*wd*w
///   w <- w - lr * m_hat / (sqrt(v_hat) + eps)
template <class T>
class AdamW {
 public:
  AdamW(ParameterStore<T>& params, AdamWOptions options) : params_(&params), options_(options) {
    first_.resize(params.size());
    second_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      first_[i].assign(params[i].value.size(), T(0));
      second_[i].assign(params[i].value.size(), T(0));
    }
  }

  const AdamWOptions& options() const { return options_; }
  std::int64_t steps() const { return step_; }
  void set_steps(std::int64_t steps) { step_ = steps; }
  std::vector<T>& first_moment(std::size_t i) { return first_[i]; }
  std::vector<T>& second_moment(std::size_t i) { return second_[i]; }
  const std::vector<T>& first_moment(std::size_t i) const { return first_[i]; }
  const std::vector<T>& second_moment(std::size_t i) const { return second_[i]; }

  /// Applies one update using each parameter's accumulated gradient (an
  /// absent gradient counts as zero).
  void step() {
    ++step_;
    const double correction1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
    const double correction2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
    const T lr = static_cast<T>(options_.lr);
    const T decay = static_cast<T>(1.0 - options_.lr * options_.weight_decay);
    const T b1 = static_cast<T>(options_.beta1), b2 = static_cast<T>(options_.beta2);
    const T c1 = static_cast<T>(correction1), c2 = static_cast<T>(correction2);
    const T eps = static_cast<T>(options_.eps);
    for (std::size_t i = 0; i < params_->size(); ++i) {
      Tensor<T>& w = (*params_)[i].value;
      const auto g = w.grad();
      auto& m = first_[i];
      auto& v = second_[i];
      for (std::size_t k = 0; k < w.size(); ++k) {
        const T gk = g.empty() ? T(0) : g[k];
        w[k] *= decay;
        m[k] = b1 * m[k] + (T(1) - b1) * gk;
        v[k] = b2 * v[k] + (T(1) - b2) * gk * gk;
        const T m_hat = m[k] / c1;
        const T v_hat = v[k] / c2;
        w[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
      }
    }
  }

 private:
  ParameterStore<T>* params_;
  AdamWOptions options_;
  std::vector<std::vector<T>> first_;
  std::vector<std::vector<T>> second_;
  std::int64_t step_ = 0;
};

}  // namespace escape::nn
