// protoicl command line: synthetic data, continual runs, joint baseline,
// checkpoint evaluation and the gradient self-check.

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <sstream>

#include "protoicl/checkpoint.hpp"
#include "protoicl/config.hpp"
#include "protoicl/dataset.hpp"
#include "protoicl/errors.hpp"
#include "protoicl/fileio.hpp"
#include "protoicl/gradcheck.hpp"
#include "protoicl/importance.hpp"
#include "protoicl/losses.hpp"
#include "protoicl/metrics.hpp"
#include "protoicl/rng.hpp"
#include "protoicl/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace protoicl;

namespace {

constexpr int kExitUsage = 2;

struct Datasets {
  EmbeddingDataset train;
  EmbeddingDataset test;
};

Datasets load_data(const RunConfig& cfg) {
  if (cfg.uses_synthetic()) {
    auto [train, test] = generate_synthetic(cfg.synth);
    return {std::move(train), std::move(test)};
  }
  auto train = load_dataset(cfg.train_path, Split::Train);
  auto test = load_dataset(cfg.test_path, Split::Test);
  if (train.dim() != test.dim() || train.num_classes != test.num_classes) {
    throw DataError("train and test files disagree on dimension or class count");
  }
  return {std::move(train), std::move(test)};
}

json psi_json(const PsiMetrics& p) {
  return {{"psi_base", p.psi_base}, {"psi_new", p.psi_new}, {"psi_all", p.psi_all}};
}

std::string metrics_csv(const RunMetrics& m) {
  std::ostringstream out;
  out.precision(17);
  out << "session_index,alpha_base,alpha_new,alpha_all\n";
  for (const auto& r : m.sessions) {
    out << r.session_index << ',' << r.alpha_base << ',' << r.alpha_new << ',' << r.alpha_all << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------

struct GenSynthArgs {
  std::string config;
  std::string out;
  std::string format = "picl";
};

int cmd_gen_synth(const GenSynthArgs& a, SynthConfig synth, bool synth_from_flags) {
  if (!a.config.empty() && !synth_from_flags) synth = RunConfig::load(a.config).synth;
  synth.validate();
  const auto [train, test] = generate_synthetic(synth);
  fs::create_directories(a.out);
  const std::string ext = a.format == "csv" ? ".csv" : ".picl";
  const fs::path train_path = fs::path(a.out) / ("train" + ext);
  const fs::path test_path = fs::path(a.out) / ("test" + ext);
  if (a.format == "csv") {
    save_dataset_csv(train, train_path);
    save_dataset_csv(test, test_path);
  } else {
    save_dataset(train, train_path);
    save_dataset(test, test_path);
  }
  std::printf("wrote %s (%zu rows) and %s (%zu rows)\n", train_path.c_str(), train.size(), test_path.c_str(),
              test.size());
  return 0;
}

struct RunArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string class_order;
  std::string resume;
  std::optional<int> stop_after;
};

RunConfig resolve(const std::string& path, const std::optional<std::uint64_t>& seed, const std::string& order) {
  RunConfig cfg = RunConfig::load(path);
  if (seed) {
    cfg.train.seed = *seed;
    cfg.synth.seed = *seed;
  }
  if (!order.empty()) cfg.stream.class_order = ClassOrder::parse(order);
  return cfg;
}

int cmd_run(const RunArgs& a) {
  RunConfig cfg = resolve(a.config, a.seed, a.class_order);
  const Datasets data = load_data(cfg);
  cfg.validate(data.train.num_classes);
  const TaskStream stream = split_tasks(data.train, cfg.stream.resolved_base(data.train.num_classes),
                                        cfg.stream.classes_per_task, cfg.stream.class_order);

  const fs::path out(a.out);
  fs::create_directories(out / "checkpoints");
  write_file_atomic(out / "config.resolved.toml", cfg.to_text());

  std::string alpha_source = "config";
  double alpha_ideal = 0.0;
  if (cfg.alpha_ideal) {
    alpha_ideal = *cfg.alpha_ideal;
  } else {
    spdlog::info("measuring alpha_ideal with a joint run over {} classes", data.train.num_classes);
    alpha_ideal = train_joint(data.train, data.test, cfg.model, cfg.train).test_accuracy;
    alpha_source = "measured";
    if (alpha_ideal <= 0.0) throw TrainingDiverged("joint run reached zero test accuracy; alpha_ideal undefined");
  }

  StreamOptions opts;
  opts.alpha_ideal = alpha_ideal;
  opts.checkpoint_dir = out / "checkpoints";
  opts.fingerprint = cfg.to_text();
  opts.stop_after_tasks = a.stop_after;
  if (!a.resume.empty()) opts.resume_from = a.resume;
  const RunMetrics metrics = run_stream(data.train, data.test, stream, cfg.model, cfg.train, opts);

  json j;
  j["total_tasks"] = stream.total_tasks();
  j["alpha_ideal"] = metrics.alpha_ideal;
  j["alpha_ideal_source"] = alpha_source;
  j["base_accuracy_after_base"] = metrics.base_accuracy_after_base;
  j["sessions"] = json::array();
  for (const auto& r : metrics.sessions) {
    j["sessions"].push_back({{"session_index", r.session_index},
                             {"alpha_base", r.alpha_base},
                             {"alpha_new", r.alpha_new},
                             {"alpha_all", r.alpha_all}});
  }
  j["psi"] = metrics.psi ? psi_json(*metrics.psi) : json(nullptr);
  write_file_atomic(out / "metrics.csv", metrics_csv(metrics));
  write_file_atomic(out / "metrics.json", j.dump(2) + "\n");

  if (metrics.psi) {
    std::printf("psi_base %.4f  psi_new %.4f  psi_all %.4f  (alpha_ideal %.4f, %s)\n", metrics.psi->psi_base,
                metrics.psi->psi_new, metrics.psi->psi_all, alpha_ideal, alpha_source.c_str());
  } else {
    std::printf("stopped after %zu tasks; checkpoints in %s\n", metrics.sessions.size() + 1,
                (out / "checkpoints").c_str());
  }
  return 0;
}

int cmd_joint(const RunArgs& a) {
  RunConfig cfg = resolve(a.config, a.seed, a.class_order);
  const Datasets data = load_data(cfg);
  cfg.validate(data.train.num_classes);
  const auto result = train_joint(data.train, data.test, cfg.model, cfg.train);
  json j{{"alpha_ideal", result.test_accuracy}, {"classes", data.train.num_classes}};
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_file_atomic(fs::path(a.out) / "joint.json", j.dump(2) + "\n");
  }
  std::printf("alpha_ideal %.6f\n", result.test_accuracy);
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string test;
};

int cmd_eval(const EvalArgs& a) {
  auto ck = load_checkpoint(a.checkpoint);
  const auto test = load_dataset(a.test, Split::Test);
  const std::vector<ClassId> seen = ck.state.prototypes.class_ids();
  const std::vector<ClassId> base = ck.state.base_classes;
  const ContinualLearner learner(std::move(ck.state), TrainConfig{});
  json j{{"tasks_completed", learner.tasks_completed()},
         {"classes", seen.size()},
         {"alpha_all", learner.accuracy_on(test, seen)},
         {"alpha_base", base.empty() ? json(nullptr) : json(learner.accuracy_on(test, base))}};
  std::printf("%s\n", j.dump(2).c_str());
  return 0;
}

struct GradcheckArgs {
  int seeds = 3;
  double tolerance = 1e-4;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  double overall = 0.0;
  const char* names[] = {"mse", "cos", "l1", "center", "si_penalty", "mas_penalty", "base", "add", "inc"};
  std::map<std::string, double> worst;
  for (int s = 1; s <= a.seeds; ++s) {
    const auto seed = static_cast<std::uint64_t>(s);
    auto init = make_rng(seed, RngStream::Init);
    Network net = Network::symmetric(10, {8}, 6);
    net.init_glorot(init);
    std::normal_distribution<double> g(0.0, 1.0);
    for (Eigen::Index i = 0; i < net.param_count(); ++i)
      if (g(init) > 0.0) net.params()[i] += 0.1 * g(init);

    auto data_rng = make_rng(seed, RngStream::Data);
    Matrix x(16, 10);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(data_rng);
    std::vector<ClassId> y(16);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<ClassId>(i % 4);
    auto pair_rng = make_rng(seed, RngStream::Pairs);
    const auto pairs = sample_pairs(y, 16, pair_rng);
    const LossBatch batch{x, y, pairs};
    PrototypeStore means(6);
    for (int c = 0; c < 4; ++c) {
      Vector m(6);
      for (auto& v : m) v = g(data_rng);
      means.add(c, m, 1);
    }
    ParamVector omega(net.param_count()), anchor(net.param_count());
    for (Eigen::Index i = 0; i < omega.size(); ++i) {
      omega[i] = std::abs(g(data_rng));
      anchor[i] = net.params()[i] + 0.1 * g(data_rng);
    }
    SIState si(anchor);
    si.omega = omega;
    MASState mas(anchor);
    mas.omega = omega;

    const std::function<LossResult(const Network&)> fns[] = {
        [&](const Network& n) { return loss_base(n, batch, {1, 0, 0, 0, 0}); },
        [&](const Network& n) { return loss_base(n, batch, {0, 1, 0, 0, 0}); },
        [&](const Network& n) { return loss_base(n, batch, {0, 0, 1, 0, 0}); },
        [&](const Network& n) { return loss_add(n, batch, {0, 0, 0, 0, 1}, means); },
        [&](const Network& n) { return loss_inc(n, batch, {0, 0, 0, 1, 0}, reg_penalty(si, n.params())); },
        [&](const Network& n) { return loss_inc(n, batch, {0, 0, 0, 1, 0}, reg_penalty(mas, n.params())); },
        [&](const Network& n) { return loss_base(n, batch, {}); },
        [&](const Network& n) { return loss_add(n, batch, {}, means); },
        [&](const Network& n) { return loss_inc(n, batch, {}, reg_penalty(si, n.params())); },
    };
    for (std::size_t k = 0; k < std::size(fns); ++k) {
      auto check_rng = make_rng(seed, RngStream::Check);
      GradCheckOptions opts;
      opts.tolerance = a.tolerance;
      const auto report = finite_diff_check(
          net, [&](const Network& n) { return fns[k](n).parts.total; }, fns[k](net).grad, check_rng, opts);
      worst[names[k]] = std::max(worst[names[k]], report.max_relative_error);
      overall = std::max(overall, report.max_relative_error);
    }
  }
  for (const char* n : names) std::printf("%-12s %.3e\n", n, worst[n]);
  const bool ok = overall < a.tolerance;
  std::printf("%s: worst relative error %.3e (tolerance %.1e)\n", ok ? "ok" : "FAILED", overall, a.tolerance);
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prototype-based incremental class learning"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  GenSynthArgs gen;
  SynthConfig synth;
  auto* gen_cmd = app.add_subcommand("gen-synth", "write a synthetic train/test pair");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--config", gen.config, "take [synth] from this config");
  gen_cmd->add_option("--format", gen.format, "picl or csv")->check(CLI::IsMember({"picl", "csv"}));
  auto* o_classes = gen_cmd->add_option("--classes", synth.num_classes);
  auto* o_dim = gen_cmd->add_option("--dim", synth.dim);
  auto* o_train = gen_cmd->add_option("--train-per-class", synth.train_per_class);
  auto* o_test = gen_cmd->add_option("--test-per-class", synth.test_per_class);
  auto* o_std = gen_cmd->add_option("--stddev", synth.stddev);
  auto* o_seed = gen_cmd->add_option("--seed", synth.seed);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "train a full continual stream and write metrics");
  run_cmd->add_option("--config", run.config)->required();
  run_cmd->add_option("--out", run.out, "run directory")->required();
  run_cmd->add_option("--seed", run.seed, "overrides [train] and [synth] seeds");
  run_cmd->add_option("--class-order", run.class_order, "ascending or shuffled:<seed>");
  run_cmd->add_option("--resume", run.resume, "checkpoint to continue from");
  run_cmd->add_option("--stop-after", run.stop_after, "stop once this many tasks are done")
      ->check(CLI::PositiveNumber);

  RunArgs joint;
  auto* joint_cmd = app.add_subcommand("joint", "offline joint training; prints alpha_ideal");
  joint_cmd->add_option("--config", joint.config)->required();
  joint_cmd->add_option("--out", joint.out);
  joint_cmd->add_option("--seed", joint.seed);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a test file");
  eval_cmd->add_option("--checkpoint", eval.checkpoint)->required();
  eval_cmd->add_option("--test", eval.test)->required();

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of every loss term");
  grad_cmd->add_option("--seeds", grad.seeds)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--tolerance", grad.tolerance)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*gen_cmd) {
      const bool from_flags = *o_classes || *o_dim || *o_train || *o_test || *o_std || *o_seed;
      return cmd_gen_synth(gen, synth, from_flags);
    }
    if (*run_cmd) return cmd_run(run);
    if (*joint_cmd) return cmd_joint(joint);
    if (*eval_cmd) return cmd_eval(eval);
    if (*grad_cmd) return cmd_gradcheck(grad);
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
