#include "protoicl/importance.hpp"

#include <string>

#include <spdlog/spdlog.h>

#include "protoicl/errors.hpp"

namespace protoicl {

SIState::SIState(const ParamVector& theta_start, double damping)
    : omega_accum(ParamVector::Zero(theta_start.size())),
      omega(ParamVector::Zero(theta_start.size())),
      theta_ref(theta_start),
      theta_task_start(theta_start),
      xi(damping) {
  if (!(damping > 0.0)) {
    throw ConfigError("SI damping must be positive");
  }
}

MASState::MASState(const ParamVector& theta_start)
    : grad_norm_sum(ParamVector::Zero(theta_start.size())),
      omega(ParamVector::Zero(theta_start.size())),
      theta_ref(theta_start) {}

std::string_view to_string(RegularizerKind kind) {
  switch (kind) {
    case RegularizerKind::SI:
      return "si";
    case RegularizerKind::MAS:
      return "mas";
    case RegularizerKind::None:
      break;
  }
  return "none";
}

RegularizerKind parse_regularizer(std::string_view text) {
  if (text == "si" || text == "SI") return RegularizerKind::SI;
  if (text == "mas" || text == "MAS") return RegularizerKind::MAS;
  if (text == "none") return RegularizerKind::None;
  throw ConfigError("unknown regularizer '" + std::string(text) + "' (expected si, mas or none)");
}

ImportanceState make_importance(RegularizerKind kind, const ParamVector& theta_start, double si_damping) {
  switch (kind) {
    case RegularizerKind::SI:
      return SIState(theta_start, si_damping);
    case RegularizerKind::MAS:
      return MASState(theta_start);
    case RegularizerKind::None:
      break;
  }
  return std::monostate{};
}

void si_accumulate_step(SIState& state, const ParamVector& grads_before_update, const ParamVector& delta_theta) {
  if (grads_before_update.size() != state.omega_accum.size() || delta_theta.size() != state.omega_accum.size()) {
    throw InputError("SI accumulate: gradient / step length does not match the state");
  }
  state.omega_accum.noalias() -= grads_before_update.cwiseProduct(delta_theta);
  ++state.steps_since_consolidation;
}

bool si_consolidate(SIState& state, const ParamVector& theta_now) {
  if (theta_now.size() != state.omega.size()) {
    throw InputError("SI consolidate: parameter length does not match the state");
  }
  if (state.steps_since_consolidation == 0 && state.consolidations > 0) {
    spdlog::warn("SI consolidation requested twice without intervening steps; ignored");
    return false;
  }
  const ParamVector delta = theta_now - state.theta_task_start;
  state.omega.array() += state.omega_accum.array().max(0.0) / (delta.array().square() + state.xi);
  state.omega_accum.setZero();
  state.theta_ref = theta_now;
  state.theta_task_start = theta_now;
  state.steps_since_consolidation = 0;
  ++state.consolidations;
  return true;
}

void mas_accumulate_batch(MASState& state, const Matrix& per_sample_grads) {
  if (per_sample_grads.rows() == 0) {
    return;
  }
  if (per_sample_grads.cols() != state.grad_norm_sum.size()) {
    throw InputError("MAS accumulate: gradient width does not match the state");
  }
  state.grad_norm_sum += per_sample_grads.cwiseAbs().colwise().sum().transpose();
  state.sample_count += static_cast<std::size_t>(per_sample_grads.rows());
}

void mas_accumulate_sum(MASState& state, const ParamVector& abs_grad_sum, std::size_t samples) {
  if (abs_grad_sum.size() != state.grad_norm_sum.size()) {
    throw InputError("MAS accumulate: gradient length does not match the state");
  }
  state.grad_norm_sum += abs_grad_sum.cwiseAbs();
  state.sample_count += samples;
}

void mas_consolidate(MASState& state, const ParamVector& theta_now) {
  if (state.sample_count == 0) {
    throw UsageError("MAS consolidation without any accumulated samples");
  }
  if (theta_now.size() != state.omega.size()) {
    throw InputError("MAS consolidate: parameter length does not match the state");
  }
  state.omega += state.grad_norm_sum / static_cast<double>(state.sample_count);
  state.grad_norm_sum.setZero();
  state.sample_count = 0;
  state.theta_ref = theta_now;
  ++state.consolidations;
}

PenaltyResult reg_penalty(const ParamVector& omega, const ParamVector& theta_ref, const ParamVector& theta_now) {
  if (omega.size() != theta_now.size() || theta_ref.size() != theta_now.size()) {
    throw InputError("penalty: importance / reference length does not match the parameters");
  }
  const ParamVector drift = theta_ref - theta_now;
  PenaltyResult out;
  out.value = omega.dot(drift.cwiseProduct(drift));
  out.grad = -2.0 * omega.cwiseProduct(drift);
  return out;
}

PenaltyResult reg_penalty(const SIState& state, const ParamVector& theta_now) {
  return reg_penalty(state.omega, state.theta_ref, theta_now);
}

PenaltyResult reg_penalty(const MASState& state, const ParamVector& theta_now) {
  return reg_penalty(state.omega, state.theta_ref, theta_now);
}

PenaltyResult reg_penalty(const ImportanceState& state, const ParamVector& theta_now) {
  if (const auto* si = std::get_if<SIState>(&state)) return reg_penalty(*si, theta_now);
  if (const auto* mas = std::get_if<MASState>(&state)) return reg_penalty(*mas, theta_now);
  return {0.0, ParamVector::Zero(theta_now.size())};
}

const ParamVector* importance_omega(const ImportanceState& state) {
  if (const auto* si = std::get_if<SIState>(&state)) return &si->omega;
  if (const auto* mas = std::get_if<MASState>(&state)) return &mas->omega;
  return nullptr;
}

}  // namespace protoicl
