#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "protoicl/dataset.hpp"
#include "protoicl/trainer.hpp"

namespace protoicl {

struct StreamConfig {
  /// 0 means half of all classes.
  int base_classes = 0;
  int classes_per_task = 1;
  ClassOrder class_order{};

  [[nodiscard]] int resolved_base(int num_classes) const { return base_classes > 0 ? base_classes : num_classes / 2; }
};

/// Everything a `run` needs. Text form:
///
///   # comment
///   [train]
///   batch_size = 64
///   regularizer = si
///
/// Unknown sections or keys are errors. Values may be quoted.
struct RunConfig {
  ModelConfig model{};
  TrainConfig train{};
  StreamConfig stream{};
  SynthConfig synth{};
  /// Embedding files; synthetic data is generated when both are empty.
  std::string train_path;
  std::string test_path;
  /// Measured with a joint offline run when unset.
  std::optional<double> alpha_ideal;

  [[nodiscard]] static RunConfig parse(std::string_view text);
  [[nodiscard]] static RunConfig load(const std::filesystem::path& path);

  /// Every key with its effective value; parse(to_text()) reproduces the config.
  [[nodiscard]] std::string to_text() const;

  [[nodiscard]] bool uses_synthetic() const { return train_path.empty() && test_path.empty(); }

  /// Cross-field checks that need the class count of the data.
  void validate(int num_classes) const;
};

}  // namespace protoicl
