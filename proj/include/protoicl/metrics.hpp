#pragma once

#include <optional>
#include <span>
#include <vector>

#include "protoicl/prototypes.hpp"

namespace protoicl {

/// Accuracies measured after training session `session_index` (2..T).
struct SessionRecord {
  int session_index = 0;
  double alpha_base = 0.0;
  double alpha_new = 0.0;
  double alpha_all = 0.0;

  bool operator==(const SessionRecord&) const = default;
};

struct EvalConfig {
  double alpha_ideal = 1.0;
  int total_tasks = 2;

  void validate() const;
};

struct PsiMetrics {
  double psi_base = 0.0;
  double psi_new = 0.0;
  double psi_all = 0.0;
};

/// Per-session trace plus the summary once every session is in.
struct RunMetrics {
  std::vector<SessionRecord> sessions;
  double alpha_ideal = 1.0;
  std::optional<PsiMetrics> psi;
  /// Base-class test accuracy right after base training (and LOF refinement).
  double base_accuracy_after_base = 0.0;
};

/// Fraction of matching entries. Throws InputError on empty or unequal input.
[[nodiscard]] double accuracy(std::span<const ClassId> predictions, std::span<const ClassId> labels);

///   psi_base = 1/(T-1) sum_i alpha_base_i / alpha_ideal
///   psi_new  = 1/(T-1) sum_i alpha_new_i
///   psi_all  = 1/(T-1) sum_i alpha_all_i / alpha_ideal
/// over sessions i = 2..T. Throws InputError listing missing or duplicate sessions.
[[nodiscard]] PsiMetrics psi_metrics(std::span<const SessionRecord> records, const EvalConfig& cfg);

}  // namespace protoicl
