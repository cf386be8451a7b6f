#include "protoicl/outlier.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include <spdlog/spdlog.h>

#include "protoicl/errors.hpp"

namespace protoicl {

void LOFConfig::validate() const {
  if (k_neighbors < 1) {
    throw ConfigError("LOF needs k_neighbors >= 1");
  }
  if (!(threshold > 1.0)) {
    throw ConfigError("LOF threshold must be greater than 1");
  }
}

std::vector<double> lof_scores(const Matrix& points, const LOFConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(points.rows());
  const std::size_t k = cfg.k_neighbors;
  if (n <= k) {
    throw ConfigError("LOF needs more points (" + std::to_string(n) + ") than neighbours (" + std::to_string(k) + ")");
  }

  Matrix unit = points;
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    const double norm = unit.row(i).norm();
    if (norm > 0.0) {
      unit.row(i) /= norm;
    }
  }
  const Matrix gram = unit * unit.transpose();
  auto distance = [&](std::size_t a, std::size_t b) {
    return std::max(1.0 - std::clamp(gram(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)), -1.0, 1.0),
                    kLofDistanceFloor);
  };

  std::vector<std::vector<std::size_t>> neighbours(n);
  std::vector<double> k_distance(n);
  std::vector<std::size_t> order(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t w = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) order[w++] = j;
    }
    auto closer = [&](std::size_t a, std::size_t b) {
      const double da = distance(i, a);
      const double db = distance(i, b);
      return da < db || (da == db && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), closer);
    neighbours[i].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    k_distance[i] = distance(i, neighbours[i].back());
  }

  std::vector<double> lrd(n);
  for (std::size_t i = 0; i < n; ++i) {
    double reach = 0.0;
    for (const std::size_t j : neighbours[i]) {
      reach += std::max(k_distance[j], distance(i, j));
    }
    lrd[i] = static_cast<double>(k) / reach;
  }

  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    double ratio = 0.0;
    for (const std::size_t j : neighbours[i]) {
      ratio += lrd[j];
    }
    scores[i] = ratio / (static_cast<double>(k) * lrd[i]);
  }
  return scores;
}

std::map<ClassId, ClassRefinement> exclude_and_mean(const std::map<ClassId, Matrix>& points_by_class,
                                                    const LOFConfig& cfg) {
  cfg.validate();
  std::map<ClassId, ClassRefinement> out;
  for (const auto& [id, points] : points_by_class) {
    if (points.rows() == 0) {
      throw DataError("LOF refinement: class " + std::to_string(id) + " has no points");
    }
    ClassRefinement result;
    const Vector full_mean = points.colwise().mean().transpose();
    if (static_cast<std::size_t>(points.rows()) <= cfg.k_neighbors) {
      spdlog::info("LOF: class {} has only {} points (k = {}), using the unfiltered mean", id, points.rows(),
                   cfg.k_neighbors);
      result.mean = full_mean;
      result.kept = static_cast<std::size_t>(points.rows());
      result.unfiltered = true;
      out.emplace(id, std::move(result));
      continue;
    }

    const std::vector<double> scores = lof_scores(points, cfg);
    Vector sum = Vector::Zero(points.cols());
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] > cfg.threshold) {
        ++result.excluded;
      } else {
        sum += points.row(static_cast<Eigen::Index>(i)).transpose();
        ++result.kept;
      }
    }
    if (result.kept == 0) {
      spdlog::warn("LOF flagged every point of class {}; falling back to the unfiltered mean", id);
      result.mean = full_mean;
      result.kept = scores.size();
      result.excluded = 0;
      result.unfiltered = true;
    } else {
      result.mean = sum / static_cast<double>(result.kept);
    }
    out.emplace(id, std::move(result));
  }
  return out;
}

}  // namespace protoicl
