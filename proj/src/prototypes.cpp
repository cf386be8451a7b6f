#include "protoicl/prototypes.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "protoicl/errors.hpp"
#include "protoicl/losses.hpp"

namespace protoicl {

const Prototype& PrototypeStore::at(ClassId id) const {
  const auto it = classes_.find(id);
  if (it == classes_.end()) {
    throw DataError("no prototype for class " + std::to_string(id));
  }
  return it->second;
}

std::vector<ClassId> PrototypeStore::class_ids() const {
  std::vector<ClassId> ids;
  ids.reserve(classes_.size());
  for (const auto& [id, proto] : classes_) {
    ids.push_back(id);
  }
  return ids;
}

void PrototypeStore::check_mean(ClassId id, const Vector& mean) const {
  if (mean.size() != code_dim_) {
    throw InputError("prototype for class " + std::to_string(id) + " has dim " + std::to_string(mean.size()) +
                     ", store expects " + std::to_string(code_dim_));
  }
  if (!mean.allFinite()) {
    throw DataError("prototype for class " + std::to_string(id) + " is not finite");
  }
  if (mean.norm() < kCosineNormFloor) {
    throw DataError("prototype for class " + std::to_string(id) + " has zero norm");
  }
}

void PrototypeStore::add(ClassId id, Vector mean, std::size_t count) {
  if (classes_.contains(id)) {
    throw DataError("class " + std::to_string(id) + " already has a prototype");
  }
  if (count == 0) {
    throw DataError("class " + std::to_string(id) + " has no samples");
  }
  check_mean(id, mean);
  classes_.emplace(id, Prototype{std::move(mean), count});
}

void PrototypeStore::replace_means(const std::map<ClassId, Vector>& new_means) {
  for (const auto& [id, mean] : new_means) {
    if (!classes_.contains(id)) {
      throw DataError("cannot replace mean of unknown class " + std::to_string(id));
    }
    check_mean(id, mean);
  }
  for (const auto& [id, mean] : new_means) {
    classes_.at(id).mean = mean;
  }
}

Prediction predict(const PrototypeStore& store, const Eigen::Ref<const RowVector>& code) {
  if (store.empty()) {
    throw UsageError("predict on an empty prototype store");
  }
  if (code.size() != store.code_dim()) {
    throw InputError("predict: code dimension does not match the store");
  }
  Prediction best{store.classes().begin()->first, false};
  if (code.norm() < kCosineNormFloor) {
    best.degenerate = true;
    return best;
  }
  double best_sim = -2.0;
  for (const auto& [id, proto] : store.classes()) {
    const double sim = cosine_similarity(code, proto.mean.transpose()).value;
    // strict comparison: ascending map order makes ties resolve to the lowest id
    if (sim > best_sim) {
      best_sim = sim;
      best.label = id;
    }
  }
  return best;
}

std::vector<ClassId> predict_batch(const PrototypeStore& store, const Matrix& codes) {
  std::vector<ClassId> out;
  out.reserve(static_cast<std::size_t>(codes.rows()));
  for (Eigen::Index i = 0; i < codes.rows(); ++i) {
    out.push_back(predict(store, codes.row(i)).label);
  }
  return out;
}

std::map<ClassId, Prototype> class_means(const Network& net, const Matrix& features,
                                         std::span<const ClassId> labels, std::size_t batch_size) {
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw InputError("class means: label count does not match feature rows");
  }
  batch_size = std::max<std::size_t>(batch_size, 1);
  std::map<ClassId, Prototype> sums;
  const auto n = static_cast<std::size_t>(features.rows());
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t len = std::min(batch_size, n - start);
    const Matrix codes = forward_encode(
        net, features.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)));
    for (std::size_t r = 0; r < len; ++r) {
      auto& slot = sums[labels[start + r]];
      if (slot.count == 0) {
        slot.mean = Vector::Zero(codes.cols());
      }
      slot.mean += codes.row(static_cast<Eigen::Index>(r)).transpose();
      ++slot.count;
    }
  }
  for (auto& [id, slot] : sums) {
    slot.mean /= static_cast<double>(slot.count);
  }
  return sums;
}

void compute_class_means(const Network& net, const Matrix& features, std::span<const ClassId> labels,
                         PrototypeStore& store, std::span<const ClassId> required, std::size_t batch_size) {
  auto means = class_means(net, features, labels, batch_size);
  for (const ClassId id : required) {
    if (!means.contains(id)) {
      throw DataError("class " + std::to_string(id) + " has no training samples");
    }
  }
  for (const auto& [id, proto] : means) {
    if (store.contains(id)) {
      throw DataError("class " + std::to_string(id) + " is already in the prototype store");
    }
  }
  for (auto& [id, proto] : means) {
    store.add(id, std::move(proto.mean), proto.count);
  }
}

}  // namespace protoicl
