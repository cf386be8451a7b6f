#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "protoicl/net.hpp"
#include "protoicl/prototypes.hpp"

namespace protoicl {

enum class Split { Train, Test };

/// Precomputed embeddings phi(x) with integer labels 0..num_classes-1.
struct EmbeddingDataset {
  Matrix features;
  std::vector<ClassId> labels;
  int num_classes = 0;
  Split split = Split::Train;

  [[nodiscard]] std::size_t size() const { return labels.size(); }
  [[nodiscard]] Eigen::Index dim() const { return features.cols(); }

  /// Throws DataError unless N > 0, rows match labels, values are finite and
  /// every class 0..num_classes-1 occurs.
  void validate() const;

  [[nodiscard]] EmbeddingDataset subset(std::span<const std::size_t> indices) const;
  /// Rows whose label is in `classes`, in dataset order.
  [[nodiscard]] std::vector<std::size_t> indices_of(std::span<const ClassId> classes) const;
};

inline constexpr char kDatasetMagic[4] = {'P', 'I', 'C', 'L'};
inline constexpr std::uint32_t kDatasetVersion = 1;

/// Binary layout (little endian): "PICL", u32 version, u64 N, u32 D, u32 C,
/// N*D f32 row-major features, N u32 labels. Features are narrowed to f32.
void save_dataset(const EmbeddingDataset& data, const std::filesystem::path& path);
/// CSV with header `label,f0,...,f{D-1}`.
void save_dataset_csv(const EmbeddingDataset& data, const std::filesystem::path& path);

/// Reads the binary format, or CSV when the file does not start with the
/// magic and has a .csv extension. Throws InputError on malformed files and
/// DataError on invariant violations.
[[nodiscard]] EmbeddingDataset load_dataset(const std::filesystem::path& path, Split split = Split::Train);

struct SynthConfig {
  int num_classes = 10;
  int dim = 64;
  int train_per_class = 200;
  int test_per_class = 50;
  double stddev = 0.1;
  double scale = 1.0;
  /// Class directions must pairwise have cosine below this.
  double max_direction_cosine = 0.8;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Class directions drawn uniformly on the unit sphere (rejection-sampled to
/// keep them apart), samples = scale * direction + N(0, stddev^2) noise, with
/// independent draws for the two splits. Values are rounded to f32 so a
/// save/load round trip is exact.
[[nodiscard]] std::pair<EmbeddingDataset, EmbeddingDataset> generate_synthetic(const SynthConfig& cfg);

struct ClassOrder {
  bool shuffled = false;
  std::uint64_t seed = 0;

  /// "ascending" or "shuffled:<seed>".
  static ClassOrder parse(const std::string& text);
  [[nodiscard]] std::string to_string() const;
};

struct Task {
  int task_id = 1;
  std::vector<ClassId> classes;
  /// Rows of the training set belonging to this task.
  std::vector<std::size_t> sample_indices;
};

struct TaskStream {
  std::vector<Task> tasks;
  int base_class_count = 0;

  [[nodiscard]] int total_tasks() const { return static_cast<int>(tasks.size()); }
};

/// Class sets per task: `base_classes` first, then `per_increment` each.
/// Throws ConfigError unless base + k * per_increment == num_classes, k >= 1.
[[nodiscard]] std::vector<std::vector<ClassId>> plan_tasks(int num_classes, int base_classes, int per_increment,
                                                           const ClassOrder& order = {});

[[nodiscard]] TaskStream split_tasks(const EmbeddingDataset& train, int base_classes, int per_increment,
                                     const ClassOrder& order = {});

}  // namespace protoicl
