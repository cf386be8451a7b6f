#include "protoicl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "protoicl/errors.hpp"

namespace protoicl {

GradCheckReport finite_diff_check(const Network& net, const LossValueFn& loss, const ParamVector& analytic,
                                  std::mt19937_64& rng, const GradCheckOptions& options) {
  if (analytic.size() != net.param_count()) {
    throw InputError("gradient check: analytic gradient has wrong length");
  }
  std::vector<Eigen::Index> indices(static_cast<std::size_t>(net.param_count()));
  std::iota(indices.begin(), indices.end(), Eigen::Index{0});
  if (indices.size() > options.sample_count) {
    std::shuffle(indices.begin(), indices.end(), rng);
    indices.resize(options.sample_count);
    std::sort(indices.begin(), indices.end());
  }

  Network probe = net;
  auto evaluate = [&](Eigen::Index k) {
    const double value = loss(probe);
    if (!std::isfinite(value)) {
      throw InputError("gradient check aborted: non-finite loss while probing parameter " + std::to_string(k));
    }
    return value;
  };

  GradCheckReport report;
  for (const Eigen::Index k : indices) {
    const double original = probe.params()[k];
    probe.params()[k] = original + options.step;
    const double plus = evaluate(k);
    probe.params()[k] = original - options.step;
    const double minus = evaluate(k);
    probe.params()[k] = original;

    const double numeric = (plus - minus) / (2.0 * options.step);
    const double a = analytic[k];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.magnitude_floor});
    const double rel = std::abs(a - numeric) / denom;
    if (rel > report.max_relative_error || report.worst_index < 0) {
      report.max_relative_error = rel;
      report.worst_index = k;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
    ++report.checked;
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace protoicl
