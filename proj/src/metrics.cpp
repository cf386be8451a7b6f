#include "protoicl/metrics.hpp"

#include <string>

#include "protoicl/errors.hpp"

namespace protoicl {

void EvalConfig::validate() const {
  if (!(alpha_ideal > 0.0 && alpha_ideal <= 1.0)) {
    throw ConfigError("alpha_ideal must be in (0, 1]");
  }
  if (total_tasks < 2) {
    throw ConfigError("at least two tasks are needed for incremental metrics");
  }
}

double accuracy(std::span<const ClassId> predictions, std::span<const ClassId> labels) {
  if (predictions.size() != labels.size()) {
    throw InputError("accuracy: prediction and label counts differ");
  }
  if (labels.empty()) {
    throw InputError("accuracy of an empty set is undefined");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    correct += predictions[i] == labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

PsiMetrics psi_metrics(std::span<const SessionRecord> records, const EvalConfig& cfg) {
  cfg.validate();
  const auto sessions = static_cast<std::size_t>(cfg.total_tasks - 1);
  std::vector<int> seen(sessions, 0);
  for (const auto& r : records) {
    if (r.session_index < 2 || r.session_index > cfg.total_tasks) {
      throw InputError("session index " + std::to_string(r.session_index) + " outside 2.." +
                       std::to_string(cfg.total_tasks));
    }
    ++seen[static_cast<std::size_t>(r.session_index - 2)];
  }
  std::string missing;
  for (std::size_t i = 0; i < sessions; ++i) {
    if (seen[i] != 1) {
      missing += (missing.empty() ? "" : ", ") + std::to_string(i + 2) + (seen[i] == 0 ? "" : " (duplicate)");
    }
  }
  if (!missing.empty()) {
    throw InputError("session records incomplete: " + missing);
  }

  PsiMetrics psi;
  for (const auto& r : records) {
    psi.psi_base += r.alpha_base;
    psi.psi_new += r.alpha_new;
    psi.psi_all += r.alpha_all;
  }
  const auto count = static_cast<double>(sessions);
  psi.psi_base /= count * cfg.alpha_ideal;
  psi.psi_new /= count;
  psi.psi_all /= count * cfg.alpha_ideal;
  return psi;
}

}  // namespace protoicl
