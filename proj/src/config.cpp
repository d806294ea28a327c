#include "mstr/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "mstr/errors.hpp"

namespace mstr {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + std::string(value) +
                    "' as " + std::string(want));
}

template <typename T>
T parse_number(std::string_view key, std::string_view value, std::string_view want) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (value.empty() || ec != std::errc{} || ptr != end) bad_value(key, value, want);
  return out;
}

std::size_t parse_count(std::string_view key, std::string_view value) {
  return parse_number<std::size_t>(key, value, "a non-negative integer");
}

double parse_real(std::string_view key, std::string_view value) {
  return parse_number<double>(key, value, "a real number");
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "a boolean (true/false)");
}

std::vector<std::size_t> parse_counts(std::string_view key, std::string_view value) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const auto comma = value.find(',', start);
    const auto item = trim(value.substr(start, comma - start));
    out.push_back(parse_number<std::size_t>(key, item, "a comma-separated list of integers"));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string format_real(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_counts(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i != 0) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

struct KeySpec {
  std::string name;
  std::function<void(RunConfig&, std::string_view, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define MSTR_COUNT_KEY(name, field)                                                          \
  KeySpec{name, [](RunConfig& c, std::string_view k, std::string_view v) {                   \
            c.field = parse_count(k, v);                                                     \
          },                                                                                 \
          [](const RunConfig& c) { return std::to_string(c.field); }}
#define MSTR_REAL_KEY(name, field)                                                           \
  KeySpec{name, [](RunConfig& c, std::string_view k, std::string_view v) {                   \
            c.field = parse_real(k, v);                                                      \
          },                                                                                 \
          [](const RunConfig& c) { return format_real(c.field); }}
#define MSTR_BOOL_KEY(name, field)                                                           \
  KeySpec{name, [](RunConfig& c, std::string_view k, std::string_view v) {                   \
            c.field = parse_bool(k, v);                                                      \
          },                                                                                 \
          [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }}
#define MSTR_LIST_KEY(name, field)                                                           \
  KeySpec{name, [](RunConfig& c, std::string_view k, std::string_view v) {                   \
            c.field = parse_counts(k, v);                                                    \
          },                                                                                 \
          [](const RunConfig& c) { return format_counts(c.field); }}
#define MSTR_PATH_KEY(name, field)                                                           \
  KeySpec{name, [](RunConfig& c, std::string_view, std::string_view v) {                     \
            c.field = std::string(v);                                                        \
          },                                                                                 \
          [](const RunConfig& c) { return c.field; }}

const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = {
      MSTR_COUNT_KEY("seed", seed),
      MSTR_COUNT_KEY("num_seeds", num_seeds),
      MSTR_COUNT_KEY("num_classes", data.num_classes),
      MSTR_COUNT_KEY("input_dim", data.input_dim),
      MSTR_COUNT_KEY("min_len", data.min_len),
      MSTR_COUNT_KEY("max_len", data.max_len),
      MSTR_LIST_KEY("pattern_scales", data.pattern_scales),
      MSTR_REAL_KEY("noise_std", data.noise_std),
      MSTR_COUNT_KEY("samples_per_class", data.samples_per_class),
      MSTR_REAL_KEY("signal_energy", data.signal_energy),
      MSTR_BOOL_KEY("orthogonal_templates", data.orthogonal_templates),
      KeySpec{"variant",
              [](RunConfig& c, std::string_view k, std::string_view v) {
                try {
                  c.model.variant = parse_variant(v);
                } catch (const ConfigError&) {
                  bad_value(k, v, "mstr or vanilla");
                }
              },
              [](const RunConfig& c) { return std::string(to_string(c.model.variant)); }},
      MSTR_COUNT_KEY("model_dim", model.model_dim),
      MSTR_COUNT_KEY("p", model.p),
      MSTR_COUNT_KEY("levels", model.levels),
      MSTR_COUNT_KEY("heads", model.heads),
      MSTR_COUNT_KEY("blocks", model.blocks),
      MSTR_COUNT_KEY("d_ff", model.d_ff),
      MSTR_COUNT_KEY("fc1_width", model.fc1_width),
      MSTR_COUNT_KEY("fc2_width", model.fc2_width),
      MSTR_BOOL_KEY("use_positional", model.use_positional),
      MSTR_COUNT_KEY("epochs", train.epochs),
      MSTR_REAL_KEY("learning_rate", train.learning_rate),
      MSTR_COUNT_KEY("batch_size", train.batch_size),
      MSTR_REAL_KEY("adam_beta1", train.adam_beta1),
      MSTR_REAL_KEY("adam_beta2", train.adam_beta2),
      MSTR_REAL_KEY("adam_eps", train.adam_eps),
      MSTR_REAL_KEY("dropout_rate", train.dropout_rate),
      MSTR_PATH_KEY("data_dir", data_dir),
      MSTR_PATH_KEY("checkpoint", checkpoint),
      KeySpec{"split",
              [](RunConfig& c, std::string_view k, std::string_view v) {
                try {
                  c.split = parse_split(v);
                } catch (const ConfigError&) {
                  bad_value(k, v, "train, val or test");
                }
              },
              [](const RunConfig& c) { return std::string(to_string(c.split)); }},
      MSTR_LIST_KEY("flops_lengths", flops_lengths),
      MSTR_LIST_KEY("sweep_p", sweep_p),
      MSTR_LIST_KEY("sweep_levels", sweep_levels),
  };
  return table;
}

#undef MSTR_COUNT_KEY
#undef MSTR_REAL_KEY
#undef MSTR_BOOL_KEY
#undef MSTR_LIST_KEY
#undef MSTR_PATH_KEY

}  // namespace

RunConfig::RunConfig() {
  data.input_dim = 8;
  data.num_classes = 3;
  model.input_dim = data.input_dim;
  model.num_classes = data.num_classes;
  model.model_dim = 16;
  model.heads = 4;
  model.blocks = 1;
  train.epochs = 50;
  train.learning_rate = 3e-3;
}

MstrConfig RunConfig::model_config() const {
  MstrConfig c = model;
  c.input_dim = data.input_dim;
  c.num_classes = data.num_classes;
  c.dropout_rate = train.dropout_rate;
  return c;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = train;
  t.seeds.clear();
  for (std::size_t i = 0; i < num_seeds; ++i) t.seeds.push_back(seed + i);
  return t;
}

SyntheticSpec RunConfig::data_spec() const { return data; }

void RunConfig::set(std::string_view key, std::string_view value) {
  for (const auto& spec : key_table()) {
    if (spec.name == key) {
      spec.set(*this, key, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void RunConfig::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) {
      view = view.substr(0, hash);
    }
    view = trim(view);
    if (view.empty()) continue;
    if (view.find('=') == std::string_view::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value, got '" +
                        std::string(view) + "'");
    }
    apply_override(view);
  }
}

std::string RunConfig::dump() const {
  std::ostringstream out;
  for (const auto& spec : key_table()) out << spec.name << " = " << spec.get(*this) << '\n';
  return out.str();
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& spec : key_table()) out.push_back(spec.name);
    return out;
  }();
  return names;
}

}  // namespace mstr
