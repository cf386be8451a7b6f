#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "protoicl/net.hpp"
#include "protoicl/prototypes.hpp"

namespace protoicl {

/// Cosine distances below this are raised to it, so duplicate directions do
/// not produce infinite densities.
inline constexpr double kLofDistanceFloor = 1e-12;

struct LOFConfig {
  std::size_t k_neighbors = 20;
  /// Points scoring above this are outliers.
  double threshold = 1.5;

  /// Throws ConfigError unless k >= 1 and threshold > 1.
  void validate() const;
};

/// Local Outlier Factor of every row under cosine distance 1 - cos(u, v).
/// The k-neighbourhood is exactly the k nearest other points, ties broken by
/// row index. Requires rows > k.
[[nodiscard]] std::vector<double> lof_scores(const Matrix& points, const LOFConfig& cfg);

struct ClassRefinement {
  Vector mean;
  std::size_t kept = 0;
  std::size_t excluded = 0;
  /// Filtering was skipped (too few points) or undone (everything flagged).
  bool unfiltered = false;
};

/// Per class: drops rows whose LOF exceeds the threshold and averages the rest.
[[nodiscard]] std::map<ClassId, ClassRefinement> exclude_and_mean(const std::map<ClassId, Matrix>& points_by_class,
                                                                  const LOFConfig& cfg);

}  // namespace protoicl
