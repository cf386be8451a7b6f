#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "protoicl/net.hpp"

namespace protoicl {

using ClassId = int;

struct Prototype {
  Vector mean;
  std::size_t count = 0;
};

/// Per-class mean code vectors. Means are stored un-normalised; the classifier
/// only ever looks at their direction.
class PrototypeStore {
 public:
  PrototypeStore() = default;
  explicit PrototypeStore(Eigen::Index code_dim) : code_dim_(code_dim) {}

  [[nodiscard]] Eigen::Index code_dim() const { return code_dim_; }
  [[nodiscard]] std::size_t size() const { return classes_.size(); }
  [[nodiscard]] bool empty() const { return classes_.empty(); }
  [[nodiscard]] bool contains(ClassId id) const { return classes_.contains(id); }
  [[nodiscard]] const Prototype& at(ClassId id) const;
  [[nodiscard]] const std::map<ClassId, Prototype>& classes() const { return classes_; }
  [[nodiscard]] std::vector<ClassId> class_ids() const;

  /// Adds a new class. Throws DataError if it already exists, InputError on a
  /// dimension mismatch and DataError on a zero-norm mean or zero count.
  void add(ClassId id, Vector mean, std::size_t count);

  /// Replaces the means of existing classes; counts are kept unless given.
  void replace_means(const std::map<ClassId, Vector>& new_means);

 private:
  void check_mean(ClassId id, const Vector& mean) const;

  Eigen::Index code_dim_ = 0;
  std::map<ClassId, Prototype> classes_;
};

struct Prediction {
  ClassId label = 0;
  /// Set when the query code has (near) zero norm.
  bool degenerate = false;
};

/// Cosine nearest-class-mean rule: the class whose mean has the highest cosine
/// similarity to `code`. Ties go to the lowest class id.
[[nodiscard]] Prediction predict(const PrototypeStore& store, const Eigen::Ref<const RowVector>& code);
[[nodiscard]] std::vector<ClassId> predict_batch(const PrototypeStore& store, const Matrix& codes);

/// Streaming (sum + count) class means of h(x) over the given samples, fed in
/// mini-batches. Returned in ascending class order.
[[nodiscard]] std::map<ClassId, Prototype> class_means(const Network& net, const Matrix& features,
                                                       std::span<const ClassId> labels,
                                                       std::size_t batch_size = 256);

/// Computes the means for every class present in `labels` and appends them to
/// `store`; existing classes are never touched. Throws DataError if a class is
/// already present or `required` names a class with no samples.
void compute_class_means(const Network& net, const Matrix& features, std::span<const ClassId> labels,
                         PrototypeStore& store, std::span<const ClassId> required = {},
                         std::size_t batch_size = 256);

}  // namespace protoicl
