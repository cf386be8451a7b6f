#include "protoicl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include <spdlog/spdlog.h>

#include "protoicl/checkpoint.hpp"
#include "protoicl/errors.hpp"
#include "protoicl/rng.hpp"

namespace protoicl {

double LrSchedule::at(int epoch) const {
  if (decay_period <= 0) {
    return initial;
  }
  return initial * std::pow(decay_factor, epoch / decay_period);
}

Network ModelConfig::build(Eigen::Index input_dim) const {
  const Eigen::Index quarter = std::max<Eigen::Index>(input_dim / 4, 1);
  std::vector<Eigen::Index> hidden;
  for (const auto h : hidden_dims) {
    hidden.push_back(h > 0 ? h : quarter);
  }
  return Network::symmetric(input_dim, hidden, code_dim > 0 ? code_dim : quarter);
}

void TrainConfig::validate() const {
  if (batch_size < 2) {
    throw ConfigError("batch_size must be at least 2");
  }
  if (epochs_base < 0 || epochs_add < 0 || epochs_inc < 0) {
    throw ConfigError("epoch counts must be nonnegative");
  }
  for (const auto* s : {&lr_base, &lr_add, &lr_inc}) {
    if (!(s->initial >= 0.0) || !(s->decay_factor > 0.0) || s->decay_period < 0) {
      throw ConfigError("invalid learning-rate schedule");
    }
  }
  if (!(si_damping > 0.0)) {
    throw ConfigError("si_damping must be positive");
  }
  weights.validate();
  lof.validate();
}

namespace {

std::vector<ClassId> unique_labels(std::span<const ClassId> labels) {
  const std::set<ClassId> s(labels.begin(), labels.end());
  return {s.begin(), s.end()};
}

Matrix gather_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

const char* phase_name(Phase phase) {
  switch (phase) {
    case Phase::Base:
      return "base";
    case Phase::Additional:
      return "additional";
    case Phase::Incremental:
      return "incremental";
  }
  return "?";
}

}  // namespace

ContinualLearner::ContinualLearner(const ModelConfig& model, Eigen::Index input_dim, const TrainConfig& cfg)
    : ContinualLearner(
          [&] {
            Network net = model.build(input_dim);
            auto rng = make_rng(cfg.seed, RngStream::Init);
            net.init_glorot(rng);
            return net;
          }(),
          cfg) {}

ContinualLearner::ContinualLearner(Network net, const TrainConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  state_.importance = make_importance(cfg.regularizer, net.params(), cfg.si_damping);
  state_.prototypes = PrototypeStore(net.code_dim());
  state_.optimizer = AMSGrad(net.param_count(), cfg.optimizer);
  state_.shuffle_rng = make_rng(cfg.seed, RngStream::Shuffle);
  state_.pair_rng = make_rng(cfg.seed, RngStream::Pairs);
  state_.net = std::move(net);
}

ContinualLearner::ContinualLearner(LearnerState state, const TrainConfig& cfg) : state_(std::move(state)), cfg_(cfg) {
  cfg_.validate();
  const bool matches = (cfg.regularizer == RegularizerKind::None && std::holds_alternative<std::monostate>(state_.importance)) ||
                       (cfg.regularizer == RegularizerKind::SI && std::holds_alternative<SIState>(state_.importance)) ||
                       (cfg.regularizer == RegularizerKind::MAS && std::holds_alternative<MASState>(state_.importance));
  if (!matches) {
    throw ConfigError("restored importance state does not match the configured regularizer");
  }
}

LossResult ContinualLearner::phase_loss(Phase phase, const LossBatch& batch) const {
  switch (phase) {
    case Phase::Base:
      return loss_base(state_.net, batch, cfg_.weights);
    case Phase::Additional:
      return loss_add(state_.net, batch, cfg_.weights, state_.prototypes);
    case Phase::Incremental:
      return loss_inc(state_.net, batch, cfg_.weights, reg_penalty(state_.importance, state_.net.params()));
  }
  throw UsageError("unknown training phase");
}

void ContinualLearner::run_phase(Phase phase, const EmbeddingDataset& data, int epochs, const LrSchedule& lr,
                                 Eigen::Index trainable) {
  state_.optimizer = AMSGrad(trainable, cfg_.optimizer);
  auto* si = std::get_if<SIState>(&state_.importance);
  auto* mas = cfg_.mas_per_batch ? std::get_if<MASState>(&state_.importance) : nullptr;

  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  ParamVector full_delta = ParamVector::Zero(state_.net.param_count());
  std::vector<ClassId> labels;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    state_.optimizer.set_learning_rate(lr.at(epoch));
    std::shuffle(order.begin(), order.end(), state_.shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg_.batch_size) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(cfg_.batch_size, n - start));
      const Matrix x = gather_rows(data.features, rows);
      labels.clear();
      for (const auto r : rows) labels.push_back(data.labels[r]);
      const auto pairs = sample_pairs(labels, rows.size(), state_.pair_rng);

      const LossResult result = phase_loss(phase, {x, labels, pairs});
      if (!std::isfinite(result.parts.total) || !result.grad.allFinite()) {
        throw TrainingDiverged(std::string("non-finite loss in ") + phase_name(phase) + " phase, epoch " +
                               std::to_string(epoch));
      }
      auto params = state_.net.params().head(trainable);
      const ParamVector delta = state_.optimizer.step(params, result.grad.head(trainable));
      if (si != nullptr) {
        full_delta.head(trainable) = delta;
        si_accumulate_step(*si, result.grad, full_delta);
      }
      if (mas != nullptr) {
        ParamVector objective = result.grad;
        if (phase == Phase::Incremental) {
          objective -= cfg_.weights.reg * reg_penalty(*mas, state_.net.params()).grad;
        }
        mas_accumulate_sum(*mas, objective.cwiseAbs() * static_cast<double>(rows.size()), rows.size());
      }
      epoch_loss += result.parts.total;
      ++batches;
    }
    spdlog::debug("{} epoch {}: mean loss {:.6f}", phase_name(phase), epoch, epoch_loss / std::max<std::size_t>(batches, 1));
  }
}

void ContinualLearner::mas_sample_pass(Phase phase, const EmbeddingDataset& data) {
  auto* mas = std::get_if<MASState>(&state_.importance);
  if (mas == nullptr || cfg_.mas_per_batch) {
    return;
  }
  const Network& net = state_.net;
  const auto n = static_cast<std::size_t>(data.size());
  const LossWeights& w = cfg_.weights;
  constexpr std::size_t kChunk = 64;
  Matrix chunk(static_cast<Eigen::Index>(std::min(kChunk, n)), net.param_count());
  std::size_t filled = 0;
  std::uniform_int_distribution<std::size_t> partner_dist(0, n > 1 ? n - 2 : 0);

  for (std::size_t i = 0; i < n; ++i) {
    // F(x_i): the sample's own terms plus one cosine pair with a random partner
    const bool paired = n > 1;
    std::size_t j = 0;
    if (paired) {
      j = partner_dist(state_.pair_rng);
      if (j >= i) ++j;
    }
    Matrix x(paired ? 2 : 1, data.dim());
    x.row(0) = data.features.row(static_cast<Eigen::Index>(i));
    if (paired) x.row(1) = data.features.row(static_cast<Eigen::Index>(j));

    const bool decode = phase != Phase::Additional;
    const ForwardTrace trace = forward(net, x, decode);
    Upstream up;
    up.codes = Matrix::Zero(x.rows(), net.code_dim());
    const Matrix own_code = trace.codes.topRows(1);
    if (decode) {
      up.reconstruction = Matrix::Zero(x.rows(), x.cols());
      const Matrix own_recon = trace.reconstruction.topRows(1);
      const Matrix own_input = x.topRows(1);
      up.reconstruction.row(0) = w.mse * loss_mse(own_recon, own_input).grad.row(0);
      up.codes.row(0) += w.l1 * loss_l1(own_code).grad.row(0);
    } else {
      const ClassId y = data.labels[i];
      up.codes.row(0) += w.center * loss_center(own_code, std::span<const ClassId>(&y, 1), state_.prototypes).grad.row(0);
    }
    if (paired) {
      const PairSample pair{0, 1, data.labels[i] == data.labels[j]};
      up.codes += w.cos * loss_cos(trace.codes, std::span<const PairSample>(&pair, 1)).grad;
    }
    chunk.row(static_cast<Eigen::Index>(filled++)) = backward(net, trace, up).transpose();
    if (filled == static_cast<std::size_t>(chunk.rows()) || i + 1 == n) {
      mas_accumulate_batch(*mas, chunk.topRows(static_cast<Eigen::Index>(filled)));
      filled = 0;
    }
  }
}

void ContinualLearner::consolidate() {
  if (auto* si = std::get_if<SIState>(&state_.importance)) {
    si_consolidate(*si, state_.net.params());
  } else if (auto* mas = std::get_if<MASState>(&state_.importance)) {
    mas_consolidate(*mas, state_.net.params());
  }
}

void ContinualLearner::train_base(const EmbeddingDataset& task) {
  if (state_.tasks_completed != 0) {
    throw UsageError("base training must be the first task");
  }
  if (task.size() == 0) {
    throw DataError("base task has no samples");
  }
  const auto classes = unique_labels(task.labels);
  state_.base_classes = classes;

  run_phase(Phase::Base, task, cfg_.epochs_base, cfg_.lr_base, state_.net.param_count());
  mas_sample_pass(Phase::Base, task);
  compute_class_means(state_.net, task.features, task.labels, state_.prototypes, classes);

  if (cfg_.use_lof) {
    const Matrix codes = forward_encode(state_.net, task.features);
    std::map<ClassId, std::vector<std::size_t>> rows_by_class;
    for (std::size_t i = 0; i < task.size(); ++i) {
      rows_by_class[task.labels[i]].push_back(i);
    }
    std::map<ClassId, Matrix> points;
    for (const auto& [id, rows] : rows_by_class) {
      points.emplace(id, gather_rows(codes, rows));
    }
    RefinementReport report;
    report.classes = exclude_and_mean(points, cfg_.lof);
    std::map<ClassId, Vector> new_means;
    for (const auto& [id, refined] : report.classes) {
      report.max_mean_shift =
          std::max(report.max_mean_shift, (refined.mean - state_.prototypes.at(id).mean).cwiseAbs().maxCoeff());
      new_means.emplace(id, refined.mean);
    }
    state_.prototypes.replace_means(new_means);
    refinement_ = std::move(report);

    run_phase(Phase::Additional, task, cfg_.epochs_add, cfg_.lr_add, state_.net.encoder_param_count());
    mas_sample_pass(Phase::Additional, task);
  }

  consolidate();
  state_.tasks_completed = 1;
}

void ContinualLearner::train_incremental(const EmbeddingDataset& task) {
  if (state_.tasks_completed == 0) {
    throw UsageError("incremental training before base training");
  }
  if (task.size() == 0) {
    throw DataError("incremental task has no samples");
  }
  const auto classes = unique_labels(task.labels);
  for (const ClassId id : classes) {
    if (state_.prototypes.contains(id)) {
      throw DataError("class " + std::to_string(id) + " was already learned by an earlier task");
    }
  }
  run_phase(Phase::Incremental, task, cfg_.epochs_inc, cfg_.lr_inc, state_.net.encoder_param_count());
  mas_sample_pass(Phase::Incremental, task);
  compute_class_means(state_.net, task.features, task.labels, state_.prototypes, classes);
  consolidate();
  ++state_.tasks_completed;
}

std::vector<ClassId> ContinualLearner::predict(const Matrix& features) const {
  return predict_batch(state_.prototypes, forward_encode(state_.net, features));
}

double ContinualLearner::accuracy_on(const EmbeddingDataset& test, std::span<const ClassId> classes) const {
  const auto rows = test.indices_of(classes);
  if (rows.empty()) {
    throw DataError("no test samples for the requested classes");
  }
  const auto sub = test.subset(rows);
  return accuracy(predict(sub.features), sub.labels);
}

JointResult train_joint(const EmbeddingDataset& train, const EmbeddingDataset& test, const ModelConfig& model,
                        const TrainConfig& cfg) {
  TrainConfig joint = cfg;
  joint.regularizer = RegularizerKind::None;
  joint.use_lof = false;
  ContinualLearner learner(model, train.dim(), joint);
  learner.train_base(train);
  const auto all = unique_labels(test.labels);
  JointResult out;
  out.test_accuracy = learner.accuracy_on(test, all);
  out.prototypes = learner.prototypes();
  return out;
}

RunMetrics run_stream(const EmbeddingDataset& train, const EmbeddingDataset& test, const TaskStream& stream,
                      const ModelConfig& model, const TrainConfig& cfg, const StreamOptions& options) {
  if (stream.tasks.size() < 2) {
    throw ConfigError("a stream needs a base task and at least one incremental task");
  }
  if (train.dim() != test.dim()) {
    throw DataError("train and test embeddings have different dimensions");
  }

  RunMetrics metrics;
  metrics.alpha_ideal = options.alpha_ideal;
  std::optional<ContinualLearner> learner;
  if (options.resume_from) {
    auto ck = load_checkpoint(*options.resume_from);
    if (ck.fingerprint != options.fingerprint) {
      throw ConfigError("checkpoint " + options.resume_from->string() + " was written by a different configuration");
    }
    learner.emplace(std::move(ck.state), cfg);
    metrics = std::move(ck.metrics);
    spdlog::info("resumed after task {}", learner->tasks_completed());
  } else {
    learner.emplace(model, train.dim(), cfg);
  }

  const auto& base_classes = stream.tasks.front().classes;
  std::vector<ClassId> seen;
  for (int t = 0; t < learner->tasks_completed(); ++t) {
    const auto& c = stream.tasks[static_cast<std::size_t>(t)].classes;
    seen.insert(seen.end(), c.begin(), c.end());
  }

  auto save = [&](const std::string& file) {
    if (options.checkpoint_dir) {
      save_checkpoint(learner->state(), metrics, options.fingerprint, *options.checkpoint_dir / file);
    }
  };

  for (int t = learner->tasks_completed(); t < stream.total_tasks(); ++t) {
    const Task& task = stream.tasks[static_cast<std::size_t>(t)];
    const EmbeddingDataset data = train.subset(task.sample_indices);
    try {
      if (t == 0) {
        learner->train_base(data);
      } else {
        learner->train_incremental(data);
      }
    } catch (const TrainingDiverged&) {
      save("abort.ckpt");
      throw;
    }
    seen.insert(seen.end(), task.classes.begin(), task.classes.end());

    if (t == 0) {
      metrics.base_accuracy_after_base = learner->accuracy_on(test, base_classes);
      spdlog::info("task 1 (base, {} classes): base accuracy {:.4f}", base_classes.size(),
                   metrics.base_accuracy_after_base);
    } else {
      SessionRecord rec;
      rec.session_index = t + 1;
      rec.alpha_base = learner->accuracy_on(test, base_classes);
      rec.alpha_new = learner->accuracy_on(test, task.classes);
      rec.alpha_all = learner->accuracy_on(test, seen);
      metrics.sessions.push_back(rec);
      spdlog::info("task {}: base {:.4f} new {:.4f} all {:.4f}", rec.session_index, rec.alpha_base, rec.alpha_new,
                   rec.alpha_all);
    }
    save("task_" + std::to_string(t + 1) + ".ckpt");
    if (options.stop_after_tasks && learner->tasks_completed() >= *options.stop_after_tasks &&
        learner->tasks_completed() < stream.total_tasks()) {
      return metrics;
    }
  }
  metrics.psi = psi_metrics(metrics.sessions, {metrics.alpha_ideal, stream.total_tasks()});
  return metrics;
}

}  // namespace protoicl
