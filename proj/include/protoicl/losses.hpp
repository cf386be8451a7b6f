#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "protoicl/net.hpp"
#include "protoicl/prototypes.hpp"

namespace protoicl {

/// Norms below this make a cosine similarity degenerate.
inline constexpr double kCosineNormFloor = 1e-12;

struct LossWeights {
  double mse = 1.0;
  double cos = 10.0;
  double l1 = 1e-3;
  double reg = 10.0;
  double center = 1.0;

  /// Throws ConfigError on a negative weight.
  void validate() const;
};

struct PairSample {
  Eigen::Index index_a = 0;
  Eigen::Index index_b = 0;
  bool same_class = false;
};

struct CosineResult {
  double value = 0.0;
  bool degenerate = false;
};

template <class A, class B>
[[nodiscard]] CosineResult cosine_similarity(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu < kCosineNormFloor || nv < kCosineNormFloor) {
    return {0.0, true};
  }
  const double c = u.dot(v) / (nu * nv);
  return {std::clamp(c, -1.0, 1.0), false};
}

/// Value of a loss term and its gradient w.r.t. the matrix it was evaluated on.
struct TermResult {
  double value = 0.0;
  Matrix grad;
};

/// Mean over rows of the squared L2 distance between reconstruction and target.
[[nodiscard]] TermResult loss_mse(const Matrix& recon, const Matrix& target);

/// Mean over pairs of 1 - cos (same class) or max(0, cos) (different class),
/// evaluated on code vectors. Degenerate pairs count as zero with no gradient.
[[nodiscard]] TermResult loss_cos(const Matrix& codes, std::span<const PairSample> pairs);

/// Mean over rows of the L1 norm of the code.
[[nodiscard]] TermResult loss_l1(const Matrix& codes);

/// Mean over rows of the squared distance from each code to its own class mean.
[[nodiscard]] TermResult loss_center(const Matrix& codes, std::span<const ClassId> labels,
                                     const PrototypeStore& means);

/// `count` random pairs of distinct rows. Pairs are drawn independently, so the
/// same pair may occur twice. Fewer than two rows gives an empty list.
[[nodiscard]] std::vector<PairSample> sample_pairs(std::span<const ClassId> labels, std::size_t count,
                                                   std::mt19937_64& rng);

struct LossBatch {
  const Matrix& features;
  std::span<const ClassId> labels;
  std::span<const PairSample> pairs;
};

struct LossBreakdown {
  double total = 0.0;
  double mse = 0.0;
  double cos = 0.0;
  double l1 = 0.0;
  double center = 0.0;
  double reg = 0.0;
};

struct LossResult {
  LossBreakdown parts;
  ParamVector grad;
};

/// Drift penalty value and its gradient, supplied by the importance module.
struct PenaltyResult {
  double value = 0.0;
  ParamVector grad;
};

/// weights.mse * MSE + weights.cos * COS + weights.l1 * L1.
[[nodiscard]] LossResult loss_base(const Network& net, const LossBatch& batch, const LossWeights& weights);

/// weights.center * CENTER + weights.cos * COS. Only encoder gradients are non-zero.
[[nodiscard]] LossResult loss_add(const Network& net, const LossBatch& batch, const LossWeights& weights,
                                  const PrototypeStore& means);

/// loss_base plus weights.reg times the supplied drift penalty.
[[nodiscard]] LossResult loss_inc(const Network& net, const LossBatch& batch, const LossWeights& weights,
                                  const PenaltyResult& penalty);

}  // namespace protoicl
