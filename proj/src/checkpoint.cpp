#include "protoicl/checkpoint.hpp"

#include <map>
#include <sstream>
#include <variant>

#include "binary_io.hpp"
#include "protoicl/errors.hpp"
#include "protoicl/fileio.hpp"

namespace protoicl {

namespace {

using Kind = CheckpointSection::Kind;

class SectionWriter {
 public:
  void f64(const std::string& name, const double* data, std::size_t n) {
    header(name, Kind::F64, n);
    for (std::size_t i = 0; i < n; ++i) body_.put(data[i]);
  }
  void f64(const std::string& name, const Eigen::VectorXd& v) { f64(name, v.data(), static_cast<std::size_t>(v.size())); }
  void f64(const std::string& name, const std::vector<double>& v) { f64(name, v.data(), v.size()); }
  void i64(const std::string& name, const std::vector<std::int64_t>& v) {
    header(name, Kind::I64, v.size());
    for (const auto x : v) body_.put(x);
  }
  void text(const std::string& name, const std::string& s) {
    header(name, Kind::Text, s.size());
    body_.put_bytes(s);
  }

  [[nodiscard]] std::string finish() const {
    detail::ByteWriter out;
    out.put_bytes(std::string_view(kCheckpointMagic, 4));
    out.put(kCheckpointVersion);
    out.put(sections_);
    out.put_bytes(body_.bytes());
    return out.take();
  }

 private:
  void header(const std::string& name, Kind kind, std::uint64_t count) {
    body_.put_string(name);
    body_.put(static_cast<std::uint8_t>(kind));
    body_.put(count);
    ++sections_;
  }
  detail::ByteWriter body_;
  std::uint32_t sections_ = 0;
};

struct Section {
  Kind kind;
  std::uint64_t count;
  std::string_view payload;
};

std::map<std::string, Section> parse_sections(std::string_view bytes, const std::string& name,
                                              std::vector<CheckpointSection>* manifest) {
  detail::ByteReader r(bytes, name);
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kCheckpointMagic, 4)) {
    throw InputError(name + ": not a checkpoint (bad magic)");
  }
  r.get_bytes(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw InputError(name + ": checkpoint version " + std::to_string(version) + " is not supported (expected " +
                     std::to_string(kCheckpointVersion) + ")");
  }
  const auto count = r.get<std::uint32_t>();
  std::map<std::string, Section> out;
  for (std::uint32_t s = 0; s < count; ++s) {
    std::string key = r.get_string();
    const auto kind_raw = r.get<std::uint8_t>();
    if (kind_raw > 2) {
      throw InputError(name + ": section '" + key + "' has unknown kind");
    }
    const auto kind = static_cast<Kind>(kind_raw);
    const auto n = r.get<std::uint64_t>();
    const std::uint64_t width = kind == Kind::Text ? 1 : 8;
    if (n > r.remaining() / width) {
      throw InputError(name + ": file is truncated");
    }
    const auto payload = r.get_bytes(n * width);
    if (manifest != nullptr) {
      manifest->push_back({key, kind, n});
    }
    out.emplace(std::move(key), Section{kind, n, payload});
  }
  if (r.remaining() != 0) {
    throw InputError(name + ": trailing bytes after the last section");
  }
  return out;
}

class SectionReader {
 public:
  SectionReader(std::map<std::string, Section> sections, std::string name)
      : sections_(std::move(sections)), name_(std::move(name)) {}

  [[nodiscard]] bool has(const std::string& key) const { return sections_.contains(key); }

  std::vector<double> f64(const std::string& key) const {
    const auto& s = get(key, Kind::F64);
    detail::ByteReader r(s.payload, name_);
    std::vector<double> out(s.count);
    for (auto& x : out) x = r.get<double>();
    return out;
  }
  Eigen::VectorXd vec(const std::string& key) const {
    const auto v = f64(key);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  std::vector<std::int64_t> i64(const std::string& key) const {
    const auto& s = get(key, Kind::I64);
    detail::ByteReader r(s.payload, name_);
    std::vector<std::int64_t> out(s.count);
    for (auto& x : out) x = r.get<std::int64_t>();
    return out;
  }
  std::string text(const std::string& key) const { return std::string(get(key, Kind::Text).payload); }

 private:
  const Section& get(const std::string& key, Kind kind) const {
    const auto it = sections_.find(key);
    if (it == sections_.end()) {
      throw InputError(name_ + ": checkpoint has no section '" + key + "'");
    }
    if (it->second.kind != kind) {
      throw InputError(name_ + ": section '" + key + "' has the wrong kind");
    }
    return it->second;
  }
  std::map<std::string, Section> sections_;
  std::string name_;
};

// The engine's stream form is its state words plus the position, all
// unsigned; stored bit-cast to i64 so the section has a fixed size.
std::vector<std::int64_t> rng_words(const std::mt19937_64& rng) {
  std::stringstream io;
  io << rng;
  std::vector<std::int64_t> words;
  std::uint64_t w = 0;
  while (io >> w) words.push_back(static_cast<std::int64_t>(w));
  return words;
}

std::mt19937_64 rng_from(const std::vector<std::int64_t>& words, const std::string& name) {
  std::ostringstream text;
  for (const auto w : words) text << static_cast<std::uint64_t>(w) << ' ';
  std::istringstream in(text.str());
  std::mt19937_64 rng;
  in >> rng;
  if (!in) {
    throw InputError(name + ": corrupt RNG state");
  }
  return rng;
}

void expect_size(const Eigen::VectorXd& v, Eigen::Index n, const std::string& what, const std::string& name) {
  if (v.size() != n) {
    throw InputError(name + ": " + what + " has " + std::to_string(v.size()) + " entries, expected " +
                     std::to_string(n));
  }
}

}  // namespace

void save_checkpoint(const LearnerState& state, const RunMetrics& metrics, const std::string& fingerprint,
                     const std::filesystem::path& path) {
  SectionWriter w;
  w.text("fingerprint", fingerprint);

  const Network& net = state.net;
  std::vector<std::int64_t> shapes{static_cast<std::int64_t>(net.encoder_layer_count())};
  for (const auto& s : net.shapes()) {
    shapes.push_back(s.in);
    shapes.push_back(s.out);
  }
  w.i64("network.shapes", shapes);
  w.f64("network.params", net.params());

  const auto& opt = state.optimizer;
  w.f64("optimizer.config", std::vector<double>{opt.config().lr, opt.config().beta1, opt.config().beta2,
                                                opt.config().eps, opt.config().bias_correction ? 1.0 : 0.0});
  w.i64("optimizer.step", {opt.step_count()});
  w.f64("optimizer.m", opt.first_moment());
  w.f64("optimizer.v", opt.second_moment());
  w.f64("optimizer.v_max", opt.second_moment_max());

  if (const auto* si = std::get_if<SIState>(&state.importance)) {
    w.i64("importance.kind", {1});
    w.f64("si.omega_accum", si->omega_accum);
    w.f64("si.omega", si->omega);
    w.f64("si.theta_ref", si->theta_ref);
    w.f64("si.theta_task_start", si->theta_task_start);
    w.f64("si.xi", std::vector<double>{si->xi});
    w.i64("si.counters", {static_cast<std::int64_t>(si->steps_since_consolidation),
                          static_cast<std::int64_t>(si->consolidations)});
  } else if (const auto* mas = std::get_if<MASState>(&state.importance)) {
    w.i64("importance.kind", {2});
    w.f64("mas.grad_norm_sum", mas->grad_norm_sum);
    w.f64("mas.omega", mas->omega);
    w.f64("mas.theta_ref", mas->theta_ref);
    w.i64("mas.counters",
          {static_cast<std::int64_t>(mas->sample_count), static_cast<std::int64_t>(mas->consolidations)});
  } else {
    w.i64("importance.kind", {0});
  }

  // one mean of code_dim values per class; nothing here grows with samples
  const auto& store = state.prototypes;
  std::vector<std::int64_t> ids;
  std::vector<std::int64_t> counts;
  std::vector<double> means;
  for (const auto& [id, proto] : store.classes()) {
    ids.push_back(id);
    counts.push_back(static_cast<std::int64_t>(proto.count));
    means.insert(means.end(), proto.mean.data(), proto.mean.data() + proto.mean.size());
  }
  w.i64("prototypes.dim", {store.code_dim()});
  w.i64("prototypes.ids", ids);
  w.i64("prototypes.counts", counts);
  w.f64("prototypes.means", means);

  w.i64("rng.shuffle", rng_words(state.shuffle_rng));
  w.i64("rng.pairs", rng_words(state.pair_rng));
  w.i64("progress.tasks_completed", {state.tasks_completed});
  w.i64("progress.base_classes", std::vector<std::int64_t>(state.base_classes.begin(), state.base_classes.end()));

  std::vector<double> sessions;
  for (const auto& r : metrics.sessions) {
    sessions.insert(sessions.end(), {static_cast<double>(r.session_index), r.alpha_base, r.alpha_new, r.alpha_all});
  }
  w.f64("metrics.sessions", sessions);
  w.f64("metrics.scalars", std::vector<double>{metrics.alpha_ideal, metrics.base_accuracy_after_base});

  write_file_atomic(path, w.finish());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const std::string name = path.string();
  const SectionReader r(parse_sections(bytes, name, nullptr), name);

  LoadedCheckpoint out;
  out.fingerprint = r.text("fingerprint");

  const auto shapes = r.i64("network.shapes");
  if (shapes.empty() || shapes.size() % 2 != 1) {
    throw InputError(name + ": malformed network shapes");
  }
  const auto enc_layers = static_cast<std::size_t>(shapes[0]);
  std::vector<LayerShape> encoder;
  std::vector<LayerShape> decoder;
  for (std::size_t i = 1; i < shapes.size(); i += 2) {
    const LayerShape s{shapes[i], shapes[i + 1]};
    ((i - 1) / 2 < enc_layers ? encoder : decoder).push_back(s);
  }
  LearnerState& st = out.state;
  st.net = Network(std::move(encoder), std::move(decoder));
  const auto params = r.vec("network.params");
  expect_size(params, st.net.param_count(), "network.params", name);
  st.net.params() = params;

  const auto oc = r.f64("optimizer.config");
  if (oc.size() != 5) {
    throw InputError(name + ": malformed optimizer config");
  }
  const AMSGradConfig opt_cfg{oc[0], oc[1], oc[2], oc[3], oc[4] != 0.0};
  const auto step = r.i64("optimizer.step");
  st.optimizer = AMSGrad::restore(opt_cfg, r.vec("optimizer.m"), r.vec("optimizer.v"), r.vec("optimizer.v_max"),
                                  step.empty() ? 0 : step[0]);

  const auto kind = r.i64("importance.kind");
  const Eigen::Index p = st.net.param_count();
  if (kind.size() == 1 && kind[0] == 1) {
    SIState si;
    si.omega_accum = r.vec("si.omega_accum");
    si.omega = r.vec("si.omega");
    si.theta_ref = r.vec("si.theta_ref");
    si.theta_task_start = r.vec("si.theta_task_start");
    for (const auto* v : {&si.omega_accum, &si.omega, &si.theta_ref, &si.theta_task_start}) {
      expect_size(*v, p, "SI state", name);
    }
    si.xi = r.f64("si.xi").at(0);
    const auto counters = r.i64("si.counters");
    si.steps_since_consolidation = static_cast<std::size_t>(counters.at(0));
    si.consolidations = static_cast<std::size_t>(counters.at(1));
    st.importance = std::move(si);
  } else if (kind.size() == 1 && kind[0] == 2) {
    MASState mas;
    mas.grad_norm_sum = r.vec("mas.grad_norm_sum");
    mas.omega = r.vec("mas.omega");
    mas.theta_ref = r.vec("mas.theta_ref");
    for (const auto* v : {&mas.grad_norm_sum, &mas.omega, &mas.theta_ref}) {
      expect_size(*v, p, "MAS state", name);
    }
    const auto counters = r.i64("mas.counters");
    mas.sample_count = static_cast<std::size_t>(counters.at(0));
    mas.consolidations = static_cast<std::size_t>(counters.at(1));
    st.importance = std::move(mas);
  } else if (kind.size() == 1 && kind[0] == 0) {
    st.importance = std::monostate{};
  } else {
    throw InputError(name + ": unknown importance kind");
  }

  const auto dim = r.i64("prototypes.dim").at(0);
  const auto ids = r.i64("prototypes.ids");
  const auto counts = r.i64("prototypes.counts");
  const auto means = r.f64("prototypes.means");
  if (counts.size() != ids.size() || means.size() != ids.size() * static_cast<std::size_t>(dim)) {
    throw InputError(name + ": prototype sections are inconsistent");
  }
  st.prototypes = PrototypeStore(dim);
  for (std::size_t c = 0; c < ids.size(); ++c) {
    st.prototypes.add(static_cast<ClassId>(ids[c]),
                      Eigen::Map<const Eigen::VectorXd>(means.data() + c * static_cast<std::size_t>(dim), dim),
                      static_cast<std::size_t>(counts[c]));
  }

  st.shuffle_rng = rng_from(r.i64("rng.shuffle"), name);
  st.pair_rng = rng_from(r.i64("rng.pairs"), name);
  st.tasks_completed = static_cast<int>(r.i64("progress.tasks_completed").at(0));
  for (const auto id : r.i64("progress.base_classes")) {
    st.base_classes.push_back(static_cast<ClassId>(id));
  }

  const auto sessions = r.f64("metrics.sessions");
  if (sessions.size() % 4 != 0) {
    throw InputError(name + ": malformed metric trace");
  }
  for (std::size_t i = 0; i < sessions.size(); i += 4) {
    out.metrics.sessions.push_back(
        {static_cast<int>(sessions[i]), sessions[i + 1], sessions[i + 2], sessions[i + 3]});
  }
  const auto scalars = r.f64("metrics.scalars");
  if (scalars.size() != 2) {
    throw InputError(name + ": malformed metric scalars");
  }
  out.metrics.alpha_ideal = scalars[0];
  out.metrics.base_accuracy_after_base = scalars[1];
  return out;
}

std::vector<CheckpointSection> checkpoint_manifest(const std::filesystem::path& path) {
  std::vector<CheckpointSection> manifest;
  const std::string bytes = read_file(path);
  parse_sections(bytes, path.string(), &manifest);
  return manifest;
}

}  // namespace protoicl
