#include "protoicl/losses.hpp"

#include <string>

#include <spdlog/spdlog.h>

#include "protoicl/errors.hpp"

namespace protoicl {

void LossWeights::validate() const {
  for (const double w : {mse, cos, l1, reg, center}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ConfigError("loss weights must be finite and nonnegative");
    }
  }
}

TermResult loss_mse(const Matrix& recon, const Matrix& target) {
  if (recon.rows() != target.rows() || recon.cols() != target.cols()) {
    throw InputError("mse: reconstruction and target shapes differ");
  }
  TermResult out;
  if (recon.rows() == 0) {
    out.grad = Matrix::Zero(recon.rows(), recon.cols());
    return out;
  }
  const Matrix diff = recon - target;
  const double n = static_cast<double>(recon.rows());
  out.value = diff.squaredNorm() / n;
  out.grad = (2.0 / n) * diff;
  return out;
}

TermResult loss_cos(const Matrix& codes, std::span<const PairSample> pairs) {
  TermResult out;
  out.grad = Matrix::Zero(codes.rows(), codes.cols());
  if (pairs.empty()) {
    spdlog::debug("cosine embedding loss evaluated on an empty pair list");
    return out;
  }
  const double scale = 1.0 / static_cast<double>(pairs.size());
  for (const auto& p : pairs) {
    if (p.index_a < 0 || p.index_b < 0 || p.index_a >= codes.rows() || p.index_b >= codes.rows()) {
      throw InputError("cosine loss: pair index out of range");
    }
    const auto u = codes.row(p.index_a);
    const auto v = codes.row(p.index_b);
    const CosineResult c = cosine_similarity(u, v);
    if (c.degenerate) {
      continue;
    }
    double sign = 0.0;
    if (p.same_class) {
      out.value += scale * (1.0 - c.value);
      sign = -1.0;
    } else if (c.value > 0.0) {
      out.value += scale * c.value;
      sign = 1.0;
    }
    if (sign == 0.0) {
      continue;
    }
    const double nu = u.norm();
    const double nv = v.norm();
    const double raw = u.dot(v) / (nu * nv);
    const RowVector du = v / (nu * nv) - raw * u / (nu * nu);
    const RowVector dv = u / (nu * nv) - raw * v / (nv * nv);
    out.grad.row(p.index_a) += sign * scale * du;
    out.grad.row(p.index_b) += sign * scale * dv;
  }
  return out;
}

TermResult loss_l1(const Matrix& codes) {
  TermResult out;
  out.grad = Matrix::Zero(codes.rows(), codes.cols());
  if (codes.rows() == 0) {
    return out;
  }
  const double n = static_cast<double>(codes.rows());
  out.value = codes.cwiseAbs().sum() / n;
  out.grad = codes.unaryExpr([n](double v) { return (v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0)) / n; });
  return out;
}

TermResult loss_center(const Matrix& codes, std::span<const ClassId> labels, const PrototypeStore& means) {
  if (static_cast<Eigen::Index>(labels.size()) != codes.rows()) {
    throw InputError("center loss: label count does not match code rows");
  }
  TermResult out;
  out.grad = Matrix::Zero(codes.rows(), codes.cols());
  if (codes.rows() == 0) {
    return out;
  }
  const double n = static_cast<double>(codes.rows());
  for (Eigen::Index i = 0; i < codes.rows(); ++i) {
    const ClassId y = labels[static_cast<std::size_t>(i)];
    if (!means.contains(y)) {
      throw ConfigError("center loss: no mean for class " + std::to_string(y));
    }
    const RowVector diff = codes.row(i) - means.at(y).mean.transpose();
    out.value += diff.squaredNorm() / n;
    out.grad.row(i) = (2.0 / n) * diff;
  }
  return out;
}

std::vector<PairSample> sample_pairs(std::span<const ClassId> labels, std::size_t count, std::mt19937_64& rng) {
  std::vector<PairSample> pairs;
  const std::size_t n = labels.size();
  if (n < 2) {
    return pairs;
  }
  pairs.reserve(count);
  std::uniform_int_distribution<std::size_t> first(0, n - 1);
  std::uniform_int_distribution<std::size_t> second(0, n - 2);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t a = first(rng);
    std::size_t b = second(rng);
    if (b >= a) {
      ++b;
    }
    pairs.push_back({static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b), labels[a] == labels[b]});
  }
  return pairs;
}

namespace {

void check_batch(const Network& net, const LossBatch& batch) {
  if (batch.features.cols() != net.input_dim()) {
    throw InputError("loss: batch columns do not match the encoder input dim");
  }
  if (!batch.labels.empty() && static_cast<Eigen::Index>(batch.labels.size()) != batch.features.rows()) {
    throw InputError("loss: label count does not match batch rows");
  }
}

}  // namespace

LossResult loss_base(const Network& net, const LossBatch& batch, const LossWeights& weights) {
  check_batch(net, batch);
  const ForwardTrace trace = forward(net, batch.features, true);
  const TermResult mse = loss_mse(trace.reconstruction, batch.features);
  const TermResult cos = loss_cos(trace.codes, batch.pairs);
  const TermResult l1 = loss_l1(trace.codes);

  LossResult out;
  out.parts.mse = mse.value;
  out.parts.cos = cos.value;
  out.parts.l1 = l1.value;
  out.parts.total = weights.mse * mse.value + weights.cos * cos.value + weights.l1 * l1.value;

  Upstream up;
  up.reconstruction = weights.mse * mse.grad;
  up.codes = weights.cos * cos.grad + weights.l1 * l1.grad;
  out.grad = backward(net, trace, up);
  return out;
}

LossResult loss_add(const Network& net, const LossBatch& batch, const LossWeights& weights,
                    const PrototypeStore& means) {
  check_batch(net, batch);
  const ForwardTrace trace = forward(net, batch.features, false);
  const TermResult center = loss_center(trace.codes, batch.labels, means);
  const TermResult cos = loss_cos(trace.codes, batch.pairs);

  LossResult out;
  out.parts.center = center.value;
  out.parts.cos = cos.value;
  out.parts.total = weights.center * center.value + weights.cos * cos.value;

  Upstream up;
  up.codes = weights.center * center.grad + weights.cos * cos.grad;
  out.grad = backward(net, trace, up);
  return out;
}

LossResult loss_inc(const Network& net, const LossBatch& batch, const LossWeights& weights,
                    const PenaltyResult& penalty) {
  LossResult out = loss_base(net, batch, weights);
  if (penalty.grad.size() != 0 && penalty.grad.size() != net.param_count()) {
    throw InputError("loss_inc: penalty gradient has wrong length");
  }
  out.parts.reg = penalty.value;
  out.parts.total += weights.reg * penalty.value;
  if (penalty.grad.size() != 0) {
    out.grad += weights.reg * penalty.grad;
  }
  return out;
}

}  // namespace protoicl
