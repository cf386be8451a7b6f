// Acceptance suite: one line per criterion, nonzero exit if any fails.

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "lof_oracle.hpp"
#include "protoicl/checkpoint.hpp"
#include "protoicl/dataset.hpp"
#include "protoicl/gradcheck.hpp"
#include "protoicl/importance.hpp"
#include "protoicl/losses.hpp"
#include "protoicl/metrics.hpp"
#include "protoicl/outlier.hpp"
#include "protoicl/prototypes.hpp"
#include "protoicl/trainer.hpp"

using namespace protoicl;
using namespace protoicl::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_name;
  int checks = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Network net = random_net(seed, 10, 8, 6);
    const Matrix x = random_batch(seed + 100, 16, 10);
    const auto y = cyclic_labels(16, 4);
    auto pair_rng = make_rng(seed, RngStream::Pairs);
    const auto pairs = sample_pairs(y, 16, pair_rng);
    const LossBatch batch{x, y, pairs};

    PrototypeStore means(6);
    const Matrix m = random_batch(seed + 200, 4, 6);
    for (int c = 0; c < 4; ++c) means.add(c, m.row(c).transpose(), 1);

    const ParamVector omega = random_batch(seed + 300, 1, net.param_count()).transpose().cwiseAbs();
    const ParamVector anchor = net.params() + 0.1 * ParamVector(random_batch(seed + 400, 1, net.param_count()).transpose());
    SIState si(anchor);
    si.omega = omega;
    MASState mas(anchor);
    mas.omega = 2.0 * omega;

    const LossWeights w{};
    std::vector<std::pair<std::string, std::function<LossResult(const Network&)>>> cases{
        {"L_MSE", [&](const Network& n) { return loss_base(n, batch, {1, 0, 0, 0, 0}); }},
        {"L_cos", [&](const Network& n) { return loss_base(n, batch, {0, 1, 0, 0, 0}); }},
        {"L_L1", [&](const Network& n) { return loss_base(n, batch, {0, 0, 1, 0, 0}); }},
        {"L_center", [&](const Network& n) { return loss_add(n, batch, {0, 0, 0, 0, 1}, means); }},
        {"L_SI", [&](const Network& n) { return loss_inc(n, batch, {0, 0, 0, 1, 0}, reg_penalty(si, n.params())); }},
        {"L_MAS", [&](const Network& n) { return loss_inc(n, batch, {0, 0, 0, 1, 0}, reg_penalty(mas, n.params())); }},
        {"L_base", [&](const Network& n) { return loss_base(n, batch, w); }},
        {"L_add", [&](const Network& n) { return loss_add(n, batch, w, means); }},
        {"L_inc", [&](const Network& n) { return loss_inc(n, batch, w, reg_penalty(si, n.params())); }},
    };
    for (const auto& [name, fn] : cases) {
      auto rng = make_rng(seed, RngStream::Check);
      const auto analytic = fn(net).grad;
      GradCheckOptions opts;
      opts.step = 1e-5;
      opts.sample_count = 200;
      const auto report = finite_diff_check(
          net, [&](const Network& n) { return fn(n).parts.total; }, analytic, rng, opts);
      ++checks;
      if (report.max_relative_error > worst) {
        worst = report.max_relative_error;
        worst_name = name;
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst < 1e-4 && secs < 30.0, std::to_string(checks) + " checks, worst relative error " + fmt_double(worst) +
                                           " (" + worst_name + "), " + fmt_double(secs) + " s"};
}

Outcome si_path_integral() {
  ParamVector theta = random_batch(7, 1, 12).transpose();
  SIState s(theta);
  const double l0 = 0.5 * theta.squaredNorm();
  for (int step = 0; step < 10000; ++step) {
    const ParamVector grad = theta;
    const ParamVector delta = -1e-3 * grad;
    theta += delta;
    si_accumulate_step(s, grad, delta);
  }
  const double decrease = l0 - 0.5 * theta.squaredNorm();
  const double rel = std::abs(s.omega_accum.sum() - decrease) / decrease;
  return {rel < 1e-3, "relative error " + fmt_double(rel)};
}

Outcome mas_hand_example() {
  MASState s(ParamVector::Zero(1));
  Matrix grads(3, 1);
  grads << 1.0, -2.0, 3.0;
  mas_accumulate_batch(s, grads);
  mas_consolidate(s, ParamVector::Zero(1));
  return {s.omega[0] == 2.0, "omega = " + fmt_double(s.omega[0])};
}

Outcome lof_oracle() {
  auto rng = make_rng(2024, RngStream::Check);
  const std::size_t ks[] = {2, 5, 20};
  double worst = 0.0;
  for (int set = 0; set < 50; ++set) {
    const std::size_t k = ks[set % 3];
    std::uniform_int_distribution<int> rows(static_cast<int>(k) + 1, 200);
    std::uniform_int_distribution<int> dims(2, 16);
    const Matrix p = random_batch(5000 + static_cast<std::uint64_t>(set), rows(rng), dims(rng));
    const auto got = lof_scores(p, {k, 1.5});
    const auto want = reference_lof(p, k);
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
  }
  return {worst < 1e-9, "50 sets, max |difference| " + fmt_double(worst)};
}

Outcome classifier_invariance() {
  auto rng = make_rng(99, RngStream::Check);
  std::uniform_int_distribution<int> classes(2, 10), dims(2, 8);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int c = classes(rng);
    const int d = dims(rng);
    const Matrix means = random_batch(10000 + static_cast<std::uint64_t>(trial), c, d);
    const RowVector query = random_batch(20000 + static_cast<std::uint64_t>(trial), 1, d);
    PrototypeStore store(d), scaled(d);
    for (int i = 0; i < c; ++i) {
      store.add(i * 2 + 1, means.row(i).transpose(), 1);
      scaled.add(i * 2 + 1, scale(rng) * means.row(i).transpose(), 1);
    }
    // direct argmax oracle
    int best = -1;
    double best_cos = -2.0;
    for (int i = 0; i < c; ++i) {
      const double cs = query.dot(means.row(i)) / (query.norm() * means.row(i).norm());
      if (cs > best_cos) {
        best_cos = cs;
        best = i * 2 + 1;
      }
    }
    const ClassId p = predict(store, query).label;
    if (p != best || predict(store, scale(rng) * query).label != p || predict(scaled, query).label != p) ++mismatches;
  }

  // exact ties resolve to the lowest id whatever the insertion order
  int tie_failures = 0;
  const std::vector<std::vector<ClassId>> orders{{3, 7, 5}, {7, 5, 3}, {5, 3, 7}};
  for (const auto& order : orders) {
    PrototypeStore s(2);
    for (ClassId id : order) s.add(id, id == 7 ? Vector{{2.0, 0.0}} : id == 5 ? Vector{{0.0, 4.0}} : Vector{{1.0, 0.0}}, 1);
    if (predict(s, RowVector{{1.0, 0.0}}).label != 3) ++tie_failures;   // 3 and 7 share a direction
    if (predict(s, RowVector{{1.0, 1.0}}).label != 3) ++tie_failures;   // three-way tie at 45 degrees
    if (predict(s, RowVector{{0.0, 0.0}}).label != 3) ++tie_failures;   // degenerate query
  }
  return {mismatches == 0 && tie_failures == 0,
          "1000 random cases, " + std::to_string(mismatches) + " mismatches, " + std::to_string(tie_failures) +
              " tie failures"};
}

Outcome psi_arithmetic() {
  const std::vector<SessionRecord> r{{2, 0.4, 0.9, 0.45}, {3, 0.3, 0.8, 0.35}};
  const auto psi = psi_metrics(r, {0.5, 3});
  const double err = std::max({std::abs(psi.psi_base - 0.7), std::abs(psi.psi_new - 0.85), std::abs(psi.psi_all - 0.8)});
  const std::vector<SessionRecord> ideal{{2, 0.6, 0.6, 0.6}, {3, 0.6, 0.6, 0.6}};
  const auto fixed = psi_metrics(ideal, {0.6, 3});
  const double err_fixed = std::max(std::abs(fixed.psi_base - 1.0), std::abs(fixed.psi_all - 1.0));

  const int cifar_tasks = static_cast<int>(plan_tasks(100, 50, 1).size());
  std::vector<SessionRecord> cifar;
  for (int i = 2; i <= cifar_tasks; ++i) cifar.push_back({i, 0.5, 0.5, 0.5});
  bool cifar_ok = cifar_tasks == 51;
  try {
    cifar_ok = cifar_ok && std::abs(psi_metrics(cifar, {0.5, cifar_tasks}).psi_base - 1.0) < 1e-12;
  } catch (const std::exception&) {
    cifar_ok = false;
  }
  return {err < 1e-12 && err_fixed < 1e-12 && cifar_ok,
          "max error " + fmt_double(std::max(err, err_fixed)) + ", C=100/base 50 gives T=" + std::to_string(cifar_tasks)};
}

// ---------------------------------------------------------------------------

struct DeskRun {
  double joint = 0.0;
  PsiMetrics none, si, mas;
};

DeskRun desk_ablation(std::uint64_t seed) {
  SynthConfig synth;
  synth.seed = seed;
  const auto [train, test] = generate_synthetic(synth);
  const auto stream = split_tasks(train, 5, 1);
  TrainConfig cfg;
  cfg.seed = seed;
  DeskRun out;
  out.joint = train_joint(train, test, ModelConfig{}, cfg).test_accuracy;
  StreamOptions opts;
  opts.alpha_ideal = out.joint;

  auto fine_tune = cfg;
  fine_tune.weights.reg = 0.0;
  out.none = *run_stream(train, test, stream, ModelConfig{}, fine_tune, opts).psi;
  auto si = cfg;
  si.regularizer = RegularizerKind::SI;
  out.si = *run_stream(train, test, stream, ModelConfig{}, si, opts).psi;
  auto mas = cfg;
  mas.regularizer = RegularizerKind::MAS;
  out.mas = *run_stream(train, test, stream, ModelConfig{}, mas, opts).psi;
  return out;
}

Outcome forgetting_mitigation() {
  const auto start = std::chrono::steady_clock::now();
  DeskRun mean;
  bool joint_ok = true;
  std::string joints;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto r = desk_ablation(seed);
    joint_ok = joint_ok && r.joint > 0.95;
    joints += (seed > 1 ? "/" : "") + fmt_double(r.joint);
    for (auto [acc, val] : {std::pair{&mean.none, r.none}, {&mean.si, r.si}, {&mean.mas, r.mas}}) {
      acc->psi_base += val.psi_base / 3.0;
      acc->psi_new += val.psi_new / 3.0;
      acc->psi_all += val.psi_all / 3.0;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool b = mean.si.psi_base >= mean.none.psi_base + 0.05 && mean.mas.psi_base >= mean.none.psi_base + 0.05;
  const bool c = mean.si.psi_all >= mean.none.psi_all && mean.mas.psi_all >= mean.none.psi_all;
  std::string detail = std::string("(a) joint ") + joints + (joint_ok ? " ok" : " BELOW 0.95") + "; (b) psi_base none " +
                       fmt_double(mean.none.psi_base) + ", SI " + fmt_double(mean.si.psi_base) + ", MAS " +
                       fmt_double(mean.mas.psi_base) + (b ? " ok" : " FAIL") + "; (c) psi_all none " +
                       fmt_double(mean.none.psi_all) + ", SI " + fmt_double(mean.si.psi_all) + ", MAS " +
                       fmt_double(mean.mas.psi_all) + (c ? " ok" : " FAIL") + "; psi_new none/SI/MAS " +
                       fmt_double(mean.none.psi_new) + "/" + fmt_double(mean.si.psi_new) + "/" +
                       fmt_double(mean.mas.psi_new) + "; " + fmt_double(secs) + " s";
  return {joint_ok && b && c && secs < 600.0, detail};
}

// Base-class test accuracy after base training (and refinement) with 5% of
// the base training labels flipped to another base class.
std::pair<double, double> mislabeled_base(double stddev) {
  double with = 0.0, without = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SynthConfig synth;
    synth.seed = seed;
    synth.stddev = stddev;
    const auto [train, test] = generate_synthetic(synth);
    const std::vector<ClassId> base{0, 1, 2, 3, 4};
    auto data = train.subset(train.indices_of(base));
    auto rng = make_rng(seed, RngStream::Check);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<int> shift(1, 4);
    for (std::size_t i = 0; i < data.size() / 20; ++i) data.labels[order[i]] = (data.labels[order[i]] + shift(rng)) % 5;

    for (bool lof : {false, true}) {
      TrainConfig cfg;
      cfg.seed = seed;
      cfg.use_lof = lof;
      ContinualLearner learner(ModelConfig{}, data.dim(), cfg);
      learner.train_base(data);
      (lof ? with : without) += learner.accuracy_on(test, base) / 3.0;
    }
  }
  return {with, without};
}

Outcome lof_pipeline() {
  std::string detail;
  bool pass = true;
  for (double stddev : {0.1, 0.3}) {
    const auto [with, without] = mislabeled_base(stddev);
    pass = pass && with >= without;
    detail += (detail.empty() ? "" : "; ") + std::string("noise ") + fmt_double(stddev) + ": +LOF " + fmt_double(with) +
              ", no LOF " + fmt_double(without);
  }
  return {pass, detail};
}

Outcome determinism_and_resume() {
  SynthConfig synth;
  synth.seed = 2;
  const auto [train, test] = generate_synthetic(synth);
  const auto stream = split_tasks(train, 5, 1);
  bool pass = true;
  std::string detail;
  for (auto kind : {RegularizerKind::SI, RegularizerKind::MAS}) {
    TrainConfig cfg;
    cfg.seed = 2;
    cfg.regularizer = kind;
    cfg.use_lof = true;
    StreamOptions opts;
    opts.alpha_ideal = 0.9;
    opts.fingerprint = to_string(kind);
    const auto a = run_stream(train, test, stream, ModelConfig{}, cfg, opts);
    const auto b = run_stream(train, test, stream, ModelConfig{}, cfg, opts);

    ScratchDir dir("acceptance_resume");
    auto first = opts;
    first.checkpoint_dir = dir.path();
    first.stop_after_tasks = 3;
    (void)run_stream(train, test, stream, ModelConfig{}, cfg, first);
    auto rest = opts;
    rest.resume_from = dir / "task_3.ckpt";
    const auto resumed = run_stream(train, test, stream, ModelConfig{}, cfg, rest);

    const bool same = a.sessions == b.sessions && a.psi->psi_all == b.psi->psi_all;
    const bool resumes = resumed.sessions == a.sessions && resumed.psi->psi_all == a.psi->psi_all;
    pass = pass && same && resumes;
    detail += (detail.empty() ? "" : "; ") + std::string(to_string(kind)) + ": repeat " + (same ? "identical" : "DIFFERS") +
              ", resume after task 3 " + (resumes ? "identical" : "DIFFERS");
  }
  return {pass, detail};
}

Outcome memory_contract() {
  std::vector<std::vector<CheckpointSection>> manifests;
  std::vector<std::uintmax_t> sizes;
  Eigen::Index code_dim = 0;
  std::uint64_t means_count = 0;
  for (int per_class : {50, 200}) {
    SynthConfig synth;
    synth.train_per_class = per_class;
    const auto [train, test] = generate_synthetic(synth);
    const auto stream = split_tasks(train, 5, 1);
    TrainConfig cfg;
    cfg.epochs_base = 2;
    cfg.epochs_add = 1;
    cfg.epochs_inc = 1;
    cfg.regularizer = RegularizerKind::MAS;
    ScratchDir dir("acceptance_memory");
    StreamOptions opts;
    opts.checkpoint_dir = dir.path();
    (void)run_stream(train, test, stream, ModelConfig{}, cfg, opts);
    const auto path = dir / ("task_" + std::to_string(stream.total_tasks()) + ".ckpt");
    manifests.push_back(checkpoint_manifest(path));
    sizes.push_back(std::filesystem::file_size(path));
    const auto loaded = load_checkpoint(path);
    code_dim = loaded.state.net.code_dim();
    for (const auto& s : manifests.back())
      if (s.name == "prototypes.means") means_count = s.count;
  }
  bool same_layout = manifests[0].size() == manifests[1].size();
  for (std::size_t i = 0; same_layout && i < manifests[0].size(); ++i)
    same_layout = manifests[0][i].name == manifests[1][i].name && manifests[0][i].count == manifests[1][i].count;
  const bool means_ok = means_count == static_cast<std::uint64_t>(10 * code_dim);
  return {same_layout && means_ok && sizes[0] == sizes[1],
          "prototypes.means holds " + std::to_string(means_count) + " values (10 classes x " + std::to_string(code_dim) +
              "); checkpoint " + std::to_string(sizes[0]) + " bytes at 50/class, " + std::to_string(sizes[1]) +
              " bytes at 200/class"};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1 gradient correctness", gradients},
      {"AC2 SI path integral", si_path_integral},
      {"AC3 MAS hand example", mas_hand_example},
      {"AC4 LOF oracle equivalence", lof_oracle},
      {"AC5 classifier invariances", classifier_invariance},
      {"AC6 psi arithmetic", psi_arithmetic},
      {"AC7 forgetting mitigation", forgetting_mitigation},
      {"AC8 LOF pipeline effect", lof_pipeline},
      {"AC9 determinism and resume", determinism_and_resume},
      {"AC10 memory contract", memory_contract},
  };
  int failures = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
