#include "protoicl/config.hpp"

#include <array>
#include <charconv>
#include <functional>
#include <sstream>
#include <vector>

#include "protoicl/errors.hpp"
#include "protoicl/fileio.hpp"

namespace protoicl {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

template <class T>
T parse_value(const std::string& text, const std::string& key) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

bool parse_bool(const std::string& text, const std::string& key) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + text + "'");
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(const std::string&, const std::string&)> set;
  std::function<std::string()> get;
};

template <class T>
Field number(std::string section, std::string key, T& target) {
  return {std::move(section), std::move(key),
          [&target](const std::string& v, const std::string& k) { target = parse_value<T>(v, k); },
          [&target] {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(target);
            } else {
              return std::to_string(target);
            }
          }};
}

Field boolean(std::string section, std::string key, bool& target) {
  return {std::move(section), std::move(key),
          [&target](const std::string& v, const std::string& k) { target = parse_bool(v, k); },
          [&target] { return std::string(target ? "true" : "false"); }};
}

Field text(std::string section, std::string key, std::string& target) {
  return {std::move(section), std::move(key), [&target](const std::string& v, const std::string&) { target = v; },
          [&target] { return "\"" + target + "\""; }};
}

void add_schedule(std::vector<Field>& f, const std::string& prefix, LrSchedule& s) {
  f.push_back(number("train", prefix, s.initial));
  f.push_back(number("train", prefix + "_decay_factor", s.decay_factor));
  f.push_back(number("train", prefix + "_decay_period", s.decay_period));
}

std::vector<Field> fields_of(RunConfig& c) {
  std::vector<Field> f;
  f.push_back({"model", "hidden_dims",
               [&c](const std::string& v, const std::string& k) {
                 c.model.hidden_dims.clear();
                 std::string_view rest(v);
                 while (!rest.empty()) {
                   const auto pos = rest.find(',');
                   const std::string item = trim(rest.substr(0, pos));
                   c.model.hidden_dims.push_back(item == "auto" ? 0 : parse_value<Eigen::Index>(item, k));
                   if (pos == std::string_view::npos) break;
                   rest = rest.substr(pos + 1);
                 }
               },
               [&c] {
                 std::string out;
                 for (const auto h : c.model.hidden_dims) {
                   out += (out.empty() ? "" : ",") + (h > 0 ? std::to_string(h) : std::string("auto"));
                 }
                 return "\"" + out + "\"";
               }});
  f.push_back({"model", "code_dim",
               [&c](const std::string& v, const std::string& k) {
                 c.model.code_dim = v == "auto" ? 0 : parse_value<Eigen::Index>(v, k);
               },
               [&c] { return c.model.code_dim > 0 ? std::to_string(c.model.code_dim) : std::string("\"auto\""); }});

  auto& t = c.train;
  f.push_back(number("train", "batch_size", t.batch_size));
  f.push_back(number("train", "epochs_base", t.epochs_base));
  f.push_back(number("train", "epochs_add", t.epochs_add));
  f.push_back(number("train", "epochs_inc", t.epochs_inc));
  add_schedule(f, "lr_base", t.lr_base);
  add_schedule(f, "lr_add", t.lr_add);
  add_schedule(f, "lr_inc", t.lr_inc);
  f.push_back(number("train", "beta1", t.optimizer.beta1));
  f.push_back(number("train", "beta2", t.optimizer.beta2));
  f.push_back(number("train", "eps", t.optimizer.eps));
  f.push_back(boolean("train", "bias_correction", t.optimizer.bias_correction));
  f.push_back({"train", "regularizer",
               [&t](const std::string& v, const std::string&) { t.regularizer = parse_regularizer(v); },
               [&t] { return "\"" + std::string(to_string(t.regularizer)) + "\""; }});
  f.push_back(number("train", "si_damping", t.si_damping));
  f.push_back(boolean("train", "mas_per_batch", t.mas_per_batch));
  f.push_back(boolean("train", "use_lof", t.use_lof));
  f.push_back(number("train", "seed", t.seed));

  f.push_back(number("loss", "mse", t.weights.mse));
  f.push_back(number("loss", "cos", t.weights.cos));
  f.push_back(number("loss", "l1", t.weights.l1));
  f.push_back(number("loss", "reg", t.weights.reg));
  f.push_back(number("loss", "center", t.weights.center));

  f.push_back(number("lof", "k_neighbors", t.lof.k_neighbors));
  f.push_back(number("lof", "threshold", t.lof.threshold));

  f.push_back(number("stream", "base_classes", c.stream.base_classes));
  f.push_back(number("stream", "classes_per_task", c.stream.classes_per_task));
  f.push_back({"stream", "class_order",
               [&c](const std::string& v, const std::string&) { c.stream.class_order = ClassOrder::parse(v); },
               [&c] { return "\"" + c.stream.class_order.to_string() + "\""; }});

  f.push_back({"eval", "alpha_ideal",
               [&c](const std::string& v, const std::string& k) {
                 if (v == "measured") {
                   c.alpha_ideal.reset();
                 } else {
                   c.alpha_ideal = parse_value<double>(v, k);
                 }
               },
               [&c] { return c.alpha_ideal ? format_double(*c.alpha_ideal) : std::string("\"measured\""); }});

  auto& s = c.synth;
  f.push_back(number("synth", "num_classes", s.num_classes));
  f.push_back(number("synth", "dim", s.dim));
  f.push_back(number("synth", "train_per_class", s.train_per_class));
  f.push_back(number("synth", "test_per_class", s.test_per_class));
  f.push_back(number("synth", "stddev", s.stddev));
  f.push_back(number("synth", "scale", s.scale));
  f.push_back(number("synth", "max_direction_cosine", s.max_direction_cosine));
  f.push_back(number("synth", "seed", s.seed));

  f.push_back(text("data", "train", c.train_path));
  f.push_back(text("data", "test", c.test_path));
  return f;
}

}  // namespace

RunConfig RunConfig::parse(std::string_view input) {
  RunConfig cfg;
  auto fields = fields_of(cfg);
  std::istringstream in{std::string(input)};
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no);
    if (body.front() == '[') {
      if (body.back() != ']') {
        throw ConfigError(where + ": malformed section header");
      }
      section = trim(std::string_view(body).substr(1, body.size() - 2));
      const bool known = std::any_of(fields.begin(), fields.end(), [&](const Field& f) { return f.section == section; });
      if (!known) {
        throw ConfigError(where + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = unquote(trim(std::string_view(body).substr(eq + 1)));
    const auto it = std::find_if(fields.begin(), fields.end(),
                                 [&](const Field& f) { return f.section == section && f.key == key; });
    if (it == fields.end()) {
      throw ConfigError(where + ": unknown key '" + key + "' in section [" + section + "]");
    }
    it->set(value, section + "." + key);
  }
  cfg.train.validate();
  cfg.synth.validate();
  if ((cfg.train_path.empty()) != (cfg.test_path.empty())) {
    throw ConfigError("[data] needs both train and test paths, or neither");
  }
  if (cfg.alpha_ideal && !(*cfg.alpha_ideal > 0.0 && *cfg.alpha_ideal <= 1.0)) {
    throw ConfigError("alpha_ideal must be in (0, 1]");
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("config file " + path.string() + " does not exist");
  }
  return parse(read_file(path));
}

std::string RunConfig::to_text() const {
  RunConfig copy = *this;
  const auto fields = fields_of(copy);
  std::string out;
  std::string section;
  for (const auto& f : fields) {
    if (f.section != section) {
      section = f.section;
      out += (out.empty() ? "" : "\n") + std::string("[") + section + "]\n";
    }
    out += f.key + " = " + f.get() + "\n";
  }
  return out;
}

void RunConfig::validate(int num_classes) const {
  const int base = stream.resolved_base(num_classes);
  if (base >= num_classes) {
    throw ConfigError("base class count must be below the number of classes");
  }
  (void)plan_tasks(num_classes, base, stream.classes_per_task, stream.class_order);
}

}  // namespace protoicl
