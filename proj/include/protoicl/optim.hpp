#pragma once

#include <cstdint>

#include "protoicl/net.hpp"

namespace protoicl {

struct AMSGradConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool bias_correction = true;
};

/// AMSGrad over a fixed-length parameter block.
///
///   m <- b1 m + (1 - b1) g
///   v <- b2 v + (1 - b2) g^2
///   v_max <- max(v_max, v)
///   theta <- theta - lr * m_hat / (sqrt(v_max_hat) + eps)
///
/// with m_hat = m / (1 - b1^t) and v_max_hat = v_max / (1 - b2^t) when bias
/// correction is on.
class AMSGrad {
 public:
  AMSGrad() = default;
  AMSGrad(Eigen::Index size, const AMSGradConfig& config);

  /// Updates `params` in place and returns the applied change. Throws
  /// InputError on non-finite gradients, leaving the state untouched.
  ParamVector step(Eigen::Ref<ParamVector> params, const Eigen::Ref<const ParamVector>& grads);

  void set_learning_rate(double lr) { config_.lr = lr; }
  [[nodiscard]] const AMSGradConfig& config() const { return config_; }
  [[nodiscard]] Eigen::Index size() const { return m_.size(); }
  [[nodiscard]] std::int64_t step_count() const { return step_count_; }
  [[nodiscard]] const ParamVector& first_moment() const { return m_; }
  [[nodiscard]] const ParamVector& second_moment() const { return v_; }
  [[nodiscard]] const ParamVector& second_moment_max() const { return v_max_; }

  /// Rebuilds an optimizer from serialized state.
  static AMSGrad restore(const AMSGradConfig& config, ParamVector m, ParamVector v, ParamVector v_max,
                         std::int64_t step_count);

 private:
  AMSGradConfig config_;
  ParamVector m_;
  ParamVector v_;
  ParamVector v_max_;
  std::int64_t step_count_ = 0;
};

}  // namespace protoicl
