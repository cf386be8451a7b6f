#include "protoicl/optim.hpp"

#include <cmath>

#include "protoicl/errors.hpp"

namespace protoicl {

AMSGrad::AMSGrad(Eigen::Index size, const AMSGradConfig& config)
    : config_(config),
      m_(ParamVector::Zero(size)),
      v_(ParamVector::Zero(size)),
      v_max_(ParamVector::Zero(size)) {
  if (!(config.lr >= 0.0) || config.beta1 < 0.0 || config.beta1 >= 1.0 || config.beta2 < 0.0 ||
      config.beta2 >= 1.0 || !(config.eps > 0.0)) {
    throw ConfigError("AMSGrad: invalid hyperparameters");
  }
}

ParamVector AMSGrad::step(Eigen::Ref<ParamVector> params, const Eigen::Ref<const ParamVector>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw InputError("AMSGrad: parameter / gradient length does not match the optimizer");
  }
  if (!grads.allFinite()) {
    throw InputError("AMSGrad: non-finite gradient, step rejected");
  }
  ++step_count_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grads;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grads.cwiseAbs2();
  v_max_ = v_max_.cwiseMax(v_);

  double m_scale = 1.0;
  double v_scale = 1.0;
  if (config_.bias_correction) {
    const auto t = static_cast<double>(step_count_);
    m_scale = 1.0 / (1.0 - std::pow(config_.beta1, t));
    v_scale = 1.0 / (1.0 - std::pow(config_.beta2, t));
  }
  ParamVector delta =
      -config_.lr * (m_scale * m_).array() / ((v_scale * v_max_).array().sqrt() + config_.eps);
  params += delta;
  return delta;
}

AMSGrad AMSGrad::restore(const AMSGradConfig& config, ParamVector m, ParamVector v, ParamVector v_max,
                         std::int64_t step_count) {
  if (v.size() != m.size() || v_max.size() != m.size()) {
    throw InputError("AMSGrad restore: moment lengths differ");
  }
  AMSGrad opt(m.size(), config);
  opt.m_ = std::move(m);
  opt.v_ = std::move(v);
  opt.v_max_ = std::move(v_max);
  opt.step_count_ = step_count;
  return opt;
}

}  // namespace protoicl
