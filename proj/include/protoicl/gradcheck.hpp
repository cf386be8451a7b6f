#pragma once

#include <cstddef>
#include <functional>
#include <random>

#include "protoicl/net.hpp"

namespace protoicl {

struct GradCheckReport {
  double max_relative_error = 0.0;
  Eigen::Index worst_index = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  bool passed = false;
};

struct GradCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  /// Parameters probed; all of them when the network is smaller.
  std::size_t sample_count = 100;
  /// Denominator floor, so vanishing gradients are compared absolutely.
  double magnitude_floor = 1e-5;
};

using LossValueFn = std::function<double(const Network&)>;

/// Compares `analytic` against central differences of `loss` on a random
/// subset of parameters. Relative error is |a - n| / max(|a|, |n|, floor).
/// Throws InputError if the loss is non-finite at any probe.
[[nodiscard]] GradCheckReport finite_diff_check(const Network& net, const LossValueFn& loss,
                                                const ParamVector& analytic, std::mt19937_64& rng,
                                                const GradCheckOptions& options = {});

}  // namespace protoicl
