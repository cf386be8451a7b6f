#pragma once

#include <cstddef>
#include <string_view>
#include <variant>

#include "protoicl/losses.hpp"
#include "protoicl/net.hpp"

namespace protoicl {

/// Synaptic Intelligence bookkeeping. `omega_accum` is the running path
/// integral for the current task, `omega` the normalised importance summed
/// over all finished tasks.
struct SIState {
  ParamVector omega_accum;
  ParamVector omega;
  ParamVector theta_ref;
  ParamVector theta_task_start;
  double xi = 1e-3;
  std::size_t steps_since_consolidation = 0;
  std::size_t consolidations = 0;

  SIState() = default;
  explicit SIState(const ParamVector& theta_start, double damping = 1e-3);
};

/// Memory Aware Synapses bookkeeping: running sum of per-sample |dF/dtheta|.
struct MASState {
  ParamVector grad_norm_sum;
  std::size_t sample_count = 0;
  ParamVector omega;
  ParamVector theta_ref;
  std::size_t consolidations = 0;

  MASState() = default;
  explicit MASState(const ParamVector& theta_start);
};

enum class RegularizerKind { None, SI, MAS };

[[nodiscard]] std::string_view to_string(RegularizerKind kind);
[[nodiscard]] RegularizerKind parse_regularizer(std::string_view text);

using ImportanceState = std::variant<std::monostate, SIState, MASState>;

[[nodiscard]] ImportanceState make_importance(RegularizerKind kind, const ParamVector& theta_start,
                                              double si_damping = 1e-3);

/// omega_accum -= grads * delta_theta (element-wise). `grads` must be taken at
/// the pre-update parameters and `delta_theta` is the applied step.
void si_accumulate_step(SIState& state, const ParamVector& grads_before_update, const ParamVector& delta_theta);

/// Folds the task's path integral into omega:
///   omega += max(0, omega_accum) / ((theta_now - theta_task_start)^2 + xi)
/// then resets the accumulator and moves both references to theta_now.
/// Returns false (and changes nothing) if no step happened since the last call.
bool si_consolidate(SIState& state, const ParamVector& theta_now);

/// Adds per-sample gradient magnitudes. Rows of `per_sample_grads` are samples.
void mas_accumulate_batch(MASState& state, const Matrix& per_sample_grads);

/// Adds a pre-reduced sum of |gradient| covering `samples` inputs.
void mas_accumulate_sum(MASState& state, const ParamVector& abs_grad_sum, std::size_t samples);

/// omega += grad_norm_sum / sample_count; resets the sums; theta_ref <- theta_now.
/// Throws UsageError when no sample was accumulated.
void mas_consolidate(MASState& state, const ParamVector& theta_now);

/// sum_k omega_k (theta_ref_k - theta_k)^2 and its gradient w.r.t. theta.
[[nodiscard]] PenaltyResult reg_penalty(const ParamVector& omega, const ParamVector& theta_ref,
                                        const ParamVector& theta_now);
[[nodiscard]] PenaltyResult reg_penalty(const SIState& state, const ParamVector& theta_now);
[[nodiscard]] PenaltyResult reg_penalty(const MASState& state, const ParamVector& theta_now);
/// Zero penalty (with a zero gradient) for the monostate.
[[nodiscard]] PenaltyResult reg_penalty(const ImportanceState& state, const ParamVector& theta_now);

/// Consolidated importance, or nullptr when no regularizer is active.
[[nodiscard]] const ParamVector* importance_omega(const ImportanceState& state);

}  // namespace protoicl
