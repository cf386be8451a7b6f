#include "protoicl/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "protoicl/errors.hpp"
#include "protoicl/fileio.hpp"
#include "protoicl/rng.hpp"

namespace protoicl {

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw InputError("cannot open " + tmp.string() + " for writing");
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      throw InputError("write to " + tmp.string() + " failed");
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void EmbeddingDataset::validate() const {
  if (labels.empty()) {
    throw DataError("dataset is empty");
  }
  if (features.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw DataError("dataset has " + std::to_string(features.rows()) + " feature rows but " +
                    std::to_string(labels.size()) + " labels");
  }
  if (!features.allFinite()) {
    throw DataError("dataset contains non-finite features");
  }
  std::vector<bool> present(static_cast<std::size_t>(std::max(num_classes, 0)), false);
  for (const ClassId y : labels) {
    if (y < 0 || y >= num_classes) {
      throw DataError("label " + std::to_string(y) + " outside 0.." + std::to_string(num_classes - 1));
    }
    present[static_cast<std::size_t>(y)] = true;
  }
  for (std::size_t c = 0; c < present.size(); ++c) {
    if (!present[c]) {
      throw DataError("class " + std::to_string(c) + " has no samples; labels must be contiguous");
    }
  }
}

EmbeddingDataset EmbeddingDataset::subset(std::span<const std::size_t> indices) const {
  EmbeddingDataset out;
  out.num_classes = num_classes;
  out.split = split;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(indices[r]));
    out.labels.push_back(labels.at(indices[r]));
  }
  return out;
}

std::vector<std::size_t> EmbeddingDataset::indices_of(std::span<const ClassId> classes) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (std::find(classes.begin(), classes.end(), labels[i]) != classes.end()) {
      out.push_back(i);
    }
  }
  return out;
}

void save_dataset(const EmbeddingDataset& data, const std::filesystem::path& path) {
  data.validate();
  detail::ByteWriter w;
  w.put_bytes(std::string_view(kDatasetMagic, 4));
  w.put(kDatasetVersion);
  w.put(static_cast<std::uint64_t>(data.size()));
  w.put(static_cast<std::uint32_t>(data.dim()));
  w.put(static_cast<std::uint32_t>(data.num_classes));
  for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.features.cols(); ++j) {
      w.put(static_cast<float>(data.features(i, j)));
    }
  }
  for (const ClassId y : data.labels) {
    w.put(static_cast<std::uint32_t>(y));
  }
  write_file_atomic(path, w.bytes());
}

void save_dataset_csv(const EmbeddingDataset& data, const std::filesystem::path& path) {
  data.validate();
  std::ostringstream out;
  out.precision(9);
  out << "label";
  for (Eigen::Index j = 0; j < data.dim(); ++j) {
    out << ",f" << j;
  }
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.labels[i];
    for (Eigen::Index j = 0; j < data.dim(); ++j) {
      out << ',' << static_cast<float>(data.features(static_cast<Eigen::Index>(i), j));
    }
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

namespace {

EmbeddingDataset parse_binary(std::string_view bytes, const std::string& name) {
  detail::ByteReader r(bytes, name);
  if (bytes.size() < 4 || bytes.substr(0, 4) != std::string_view(kDatasetMagic, 4)) {
    throw InputError(name + ": bad magic, not a PICL dataset");
  }
  r.get_bytes(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetVersion) {
    throw InputError(name + ": unsupported dataset version " + std::to_string(version));
  }
  const auto n = r.get<std::uint64_t>();
  const auto d = r.get<std::uint32_t>();
  const auto c = r.get<std::uint32_t>();
  if (n == 0 || d == 0) {
    throw DataError(name + ": empty dataset");
  }
  const std::uint64_t expected = n * d * 4 + n * 4;
  if (r.remaining() < expected) {
    throw InputError(name + ": file is truncated");
  }
  if (r.remaining() > expected) {
    throw InputError(name + ": trailing bytes after labels");
  }
  EmbeddingDataset out;
  out.num_classes = static_cast<int>(c);
  out.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < out.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.features.cols(); ++j) {
      out.features(i, j) = r.get<float>();
    }
  }
  out.labels.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto y = r.get<std::uint32_t>();
    if (y >= c) {
      throw DataError(name + ": label " + std::to_string(y) + " out of range for " + std::to_string(c) + " classes");
    }
    out.labels.push_back(static_cast<ClassId>(y));
  }
  return out;
}

template <class T>
T parse_number(std::string_view field, const std::string& where) {
  T value{};
  const auto* end = field.data() + field.size();
  const auto res = std::from_chars(field.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    throw InputError(where + ": cannot parse '" + std::string(field) + "'");
  }
  return value;
}

EmbeddingDataset parse_csv(const std::string& text, const std::string& name) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) {
    throw InputError(name + ": empty CSV");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string_view> header;
  {
    std::string_view sv(line);
    std::size_t start = 0;
    while (true) {
      const auto pos = sv.find(',', start);
      header.push_back(sv.substr(start, pos - start));
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
  }
  if (header.size() < 2 || header[0] != "label") {
    throw InputError(name + ": CSV header must be label,f0,...");
  }
  for (std::size_t j = 1; j < header.size(); ++j) {
    if (header[j] != "f" + std::to_string(j - 1)) {
      throw InputError(name + ": unexpected CSV column '" + std::string(header[j]) + "'");
    }
  }
  const std::size_t d = header.size() - 1;

  std::vector<double> values;
  std::vector<ClassId> labels;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(row);
    std::string_view sv(line);
    std::size_t start = 0;
    std::size_t col = 0;
    while (true) {
      const auto pos = sv.find(',', start);
      const auto field = sv.substr(start, pos - start);
      if (col == 0) {
        labels.push_back(parse_number<int>(field, where));
      } else {
        values.push_back(parse_number<double>(field, where));
      }
      ++col;
      if (pos == std::string_view::npos) break;
      start = pos + 1;
    }
    if (col != d + 1) {
      throw InputError(where + ": expected " + std::to_string(d + 1) + " fields, got " + std::to_string(col));
    }
  }
  EmbeddingDataset out;
  out.features = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(d));
  out.labels = std::move(labels);
  int max_label = -1;
  for (const ClassId y : out.labels) {
    if (y < 0) {
      throw DataError(name + ": negative label");
    }
    max_label = std::max(max_label, y);
  }
  out.num_classes = max_label + 1;
  return out;
}

}  // namespace

EmbeddingDataset load_dataset(const std::filesystem::path& path, Split split) {
  const std::string bytes = read_file(path);
  const std::string name = path.string();
  EmbeddingDataset out;
  const bool has_magic = bytes.size() >= 4 && std::string_view(bytes).substr(0, 4) == std::string_view(kDatasetMagic, 4);
  if (!has_magic && path.extension() == ".csv") {
    out = parse_csv(bytes, name);
  } else {
    out = parse_binary(bytes, name);
  }
  out.split = split;
  out.validate();
  return out;
}

void SynthConfig::validate() const {
  if (num_classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (dim < 2) throw ConfigError("synthetic data needs dim >= 2");
  if (train_per_class < 1 || test_per_class < 1) throw ConfigError("samples per class must be positive");
  if (!(stddev > 0.0)) throw ConfigError("synthetic stddev must be positive");
  if (!(scale > 0.0)) throw ConfigError("synthetic scale must be positive");
  if (!(max_direction_cosine > -1.0 && max_direction_cosine <= 1.0)) {
    throw ConfigError("max_direction_cosine must be in (-1, 1]");
  }
}

namespace {

EmbeddingDataset draw_samples(const std::vector<Vector>& directions, int per_class, double scale, double stddev,
                              std::mt19937_64& rng, Split split) {
  const auto c = static_cast<int>(directions.size());
  const Eigen::Index d = directions.front().size();
  std::normal_distribution<double> noise(0.0, stddev);
  EmbeddingDataset out;
  out.num_classes = c;
  out.split = split;
  out.features.resize(static_cast<Eigen::Index>(c) * per_class, d);
  out.labels.reserve(static_cast<std::size_t>(c * per_class));
  Eigen::Index row = 0;
  for (int k = 0; k < c; ++k) {
    for (int s = 0; s < per_class; ++s, ++row) {
      for (Eigen::Index j = 0; j < d; ++j) {
        const double v = scale * directions[static_cast<std::size_t>(k)][j] + noise(rng);
        out.features(row, j) = static_cast<double>(static_cast<float>(v));
      }
      out.labels.push_back(k);
    }
  }
  return out;
}

}  // namespace

std::pair<EmbeddingDataset, EmbeddingDataset> generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  auto rng = make_rng(cfg.seed, RngStream::Data);
  std::normal_distribution<double> gauss(0.0, 1.0);
  constexpr int kMaxTries = 10000;

  std::vector<Vector> directions;
  for (int k = 0; k < cfg.num_classes; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxTries && !placed; ++attempt) {
      Vector v(cfg.dim);
      for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = gauss(rng);
      const double norm = v.norm();
      if (norm == 0.0) continue;
      v /= norm;
      placed = std::all_of(directions.begin(), directions.end(),
                           [&](const Vector& u) { return u.dot(v) < cfg.max_direction_cosine; });
      if (placed) directions.push_back(std::move(v));
    }
    if (!placed) {
      throw ConfigError("could not place " + std::to_string(cfg.num_classes) + " class directions in " +
                        std::to_string(cfg.dim) + " dims with cosine below " +
                        std::to_string(cfg.max_direction_cosine));
    }
  }

  auto train_rng = make_rng(cfg.seed, RngStream::DataTrain);
  auto test_rng = make_rng(cfg.seed, RngStream::DataTest);
  auto train = draw_samples(directions, cfg.train_per_class, cfg.scale, cfg.stddev, train_rng, Split::Train);
  auto test = draw_samples(directions, cfg.test_per_class, cfg.scale, cfg.stddev, test_rng, Split::Test);
  return {std::move(train), std::move(test)};
}

ClassOrder ClassOrder::parse(const std::string& text) {
  if (text.empty() || text == "ascending") {
    return {};
  }
  constexpr std::string_view prefix = "shuffled:";
  if (text.starts_with(prefix)) {
    ClassOrder order;
    order.shuffled = true;
    order.seed = parse_number<std::uint64_t>(std::string_view(text).substr(prefix.size()), "class order");
    return order;
  }
  throw ConfigError("class order must be 'ascending' or 'shuffled:<seed>', got '" + text + "'");
}

std::string ClassOrder::to_string() const {
  return shuffled ? "shuffled:" + std::to_string(seed) : "ascending";
}

std::vector<std::vector<ClassId>> plan_tasks(int num_classes, int base_classes, int per_increment,
                                             const ClassOrder& order) {
  if (base_classes < 1 || per_increment < 1) {
    throw ConfigError("base and per-task class counts must be positive");
  }
  const int rest = num_classes - base_classes;
  if (rest < per_increment || rest % per_increment != 0) {
    throw ConfigError(std::to_string(num_classes) + " classes cannot be split into " + std::to_string(base_classes) +
                      " base classes plus whole tasks of " + std::to_string(per_increment));
  }
  std::vector<ClassId> classes(static_cast<std::size_t>(num_classes));
  std::iota(classes.begin(), classes.end(), 0);
  if (order.shuffled) {
    auto rng = make_rng(order.seed, RngStream::ClassOrder);
    std::shuffle(classes.begin(), classes.end(), rng);
  }
  std::vector<std::vector<ClassId>> plan;
  plan.emplace_back(classes.begin(), classes.begin() + base_classes);
  for (int start = base_classes; start < num_classes; start += per_increment) {
    plan.emplace_back(classes.begin() + start, classes.begin() + start + per_increment);
  }
  return plan;
}

TaskStream split_tasks(const EmbeddingDataset& train, int base_classes, int per_increment, const ClassOrder& order) {
  TaskStream stream;
  stream.base_class_count = base_classes;
  int id = 1;
  for (auto& classes : plan_tasks(train.num_classes, base_classes, per_increment, order)) {
    Task task;
    task.task_id = id++;
    task.sample_indices = train.indices_of(classes);
    if (task.sample_indices.empty()) {
      throw DataError("task " + std::to_string(task.task_id) + " has no training samples");
    }
    task.classes = std::move(classes);
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

}  // namespace protoicl
