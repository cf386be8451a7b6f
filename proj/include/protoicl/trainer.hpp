#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "protoicl/dataset.hpp"
#include "protoicl/importance.hpp"
#include "protoicl/losses.hpp"
#include "protoicl/metrics.hpp"
#include "protoicl/net.hpp"
#include "protoicl/optim.hpp"
#include "protoicl/outlier.hpp"
#include "protoicl/prototypes.hpp"

namespace protoicl {

/// Fixed rate, or step decay: initial * factor^(epoch / period).
struct LrSchedule {
  double initial = 1e-3;
  double decay_factor = 1.0;
  int decay_period = 0;

  [[nodiscard]] double at(int epoch) const;
};

/// Layer widths; 0 stands for input_dim / 4.
struct ModelConfig {
  std::vector<Eigen::Index> hidden_dims{0};
  Eigen::Index code_dim = 0;

  [[nodiscard]] Network build(Eigen::Index input_dim) const;
};

struct TrainConfig {
  std::size_t batch_size = 64;
  int epochs_base = 30;
  int epochs_add = 10;
  int epochs_inc = 15;
  LrSchedule lr_base{};
  LrSchedule lr_add{};
  LrSchedule lr_inc{};
  AMSGradConfig optimizer{};
  LossWeights weights{};
  RegularizerKind regularizer = RegularizerKind::SI;
  double si_damping = 1e-3;
  /// Approximate MAS importance from mini-batch gradients instead of a
  /// per-sample pass.
  bool mas_per_batch = false;
  bool use_lof = false;
  LOFConfig lof{};
  std::uint64_t seed = 1;

  void validate() const;
};

enum class Phase { Base, Additional, Incremental };

/// Summary of the LOF refinement applied after base training.
struct RefinementReport {
  std::map<ClassId, ClassRefinement> classes;
  double max_mean_shift = 0.0;
};

/// Everything a checkpoint has to carry to continue a stream bit-identically.
struct LearnerState {
  Network net;
  ImportanceState importance;
  PrototypeStore prototypes;
  AMSGrad optimizer;
  std::mt19937_64 shuffle_rng;
  std::mt19937_64 pair_rng;
  int tasks_completed = 0;
  std::vector<ClassId> base_classes;
};

/// Autoencoder + prototype classifier trained task by task.
class ContinualLearner {
 public:
  /// Fresh Glorot-initialised model.
  ContinualLearner(const ModelConfig& model, Eigen::Index input_dim, const TrainConfig& cfg);
  /// Starts from the given network (not re-initialised).
  ContinualLearner(Network net, const TrainConfig& cfg);
  ContinualLearner(LearnerState state, const TrainConfig& cfg);

  /// Trains encoder and decoder on L_base, stores the class means, optionally
  /// refines them with LOF plus encoder-only L_add training, then consolidates
  /// the importance state.
  void train_base(const EmbeddingDataset& task);

  /// Encoder-only training on L_base plus the drift penalty, then appends the
  /// new class means and consolidates. Throws DataError if a class is known.
  void train_incremental(const EmbeddingDataset& task);

  [[nodiscard]] std::vector<ClassId> predict(const Matrix& features) const;
  /// Accuracy on the test rows whose label is in `classes`.
  [[nodiscard]] double accuracy_on(const EmbeddingDataset& test, std::span<const ClassId> classes) const;

  [[nodiscard]] const Network& network() const { return state_.net; }
  [[nodiscard]] const PrototypeStore& prototypes() const { return state_.prototypes; }
  [[nodiscard]] const ImportanceState& importance() const { return state_.importance; }
  [[nodiscard]] const LearnerState& state() const { return state_; }
  [[nodiscard]] const TrainConfig& config() const { return cfg_; }
  [[nodiscard]] int tasks_completed() const { return state_.tasks_completed; }
  [[nodiscard]] const std::optional<RefinementReport>& refinement() const { return refinement_; }

 private:
  /// Mini-batch optimisation over `epochs`; only the first `trainable` parameters move.
  void run_phase(Phase phase, const EmbeddingDataset& data, int epochs, const LrSchedule& lr, Eigen::Index trainable);
  /// Per-sample |dF/dtheta| pass for MAS, F being the phase objective without the penalty.
  void mas_sample_pass(Phase phase, const EmbeddingDataset& data);
  [[nodiscard]] LossResult phase_loss(Phase phase, const LossBatch& batch) const;
  void consolidate();

  LearnerState state_;
  TrainConfig cfg_;
  std::optional<RefinementReport> refinement_;
};

struct JointResult {
  double test_accuracy = 0.0;
  PrototypeStore prototypes;
};

/// Offline upper bound: the same model trained on L_base with every class at
/// once, for epochs_base epochs. Its test accuracy is alpha_ideal.
[[nodiscard]] JointResult train_joint(const EmbeddingDataset& train, const EmbeddingDataset& test,
                                      const ModelConfig& model, const TrainConfig& cfg);

struct StreamOptions {
  double alpha_ideal = 1.0;
  /// Writes task_<n>.ckpt after every task when set.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Stop once this many tasks are done (the run is then resumable).
  std::optional<int> stop_after_tasks;
  std::optional<std::filesystem::path> resume_from;
  /// Stored in checkpoints; resuming with a different fingerprint is refused.
  std::string fingerprint;
};

/// Base task, then every incremental task, evaluating after each session >= 2.
/// `psi` is filled once the final session is done.
[[nodiscard]] RunMetrics run_stream(const EmbeddingDataset& train, const EmbeddingDataset& test,
                                    const TaskStream& stream, const ModelConfig& model, const TrainConfig& cfg,
                                    const StreamOptions& options = {});

}  // namespace protoicl
