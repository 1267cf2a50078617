#include "sfess/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "sfess/error.hpp"
#include "sfess/metrics.hpp"

namespace sfess {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::sfess: return "sfess";
    case Method::sfess_v: return "sfess_v";
    case Method::gs: return "gs";
    case Method::stgs: return "stgs";
  }
  return "unknown";
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for key '" + std::string(key) + "': expected " +
                    std::string(expected));
}

std::uint64_t parse_uint(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc{} || res.ptr != value.data() + value.size()) bad_value(key, value, "a nonnegative integer");
  return out;
}

double parse_real(std::string_view key, std::string_view value) {
  const std::string s(value);
  char* end = nullptr;
  const double out = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) bad_value(key, value, "a real number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value, "true or false");
}

template <class Enum>
Enum parse_enum(std::string_view key, std::string_view value,
                std::initializer_list<std::pair<std::string_view, Enum>> options) {
  std::string expected;
  for (const auto& [name, v] : options) {
    if (name == value) return v;
    expected += expected.empty() ? "" : "|";
    expected += name;
  }
  bad_value(key, value, expected);
}

template <class Enum>
std::string enum_name(Enum v, std::initializer_list<std::pair<std::string_view, Enum>> options) {
  for (const auto& [name, option] : options) {
    if (option == v) return std::string(name);
  }
  return "unknown";
}

const std::initializer_list<std::pair<std::string_view, Task>> kTasks = {
    {"classification", Task::classification}, {"reconstruction", Task::reconstruction}};
const std::initializer_list<std::pair<std::string_view, DatasetKind>> kDatasets = {
    {"synthetic", DatasetKind::synthetic}, {"idx", DatasetKind::idx}};
const std::initializer_list<std::pair<std::string_view, Method>> kMethods = {
    {"sfess", Method::sfess}, {"sfess_v", Method::sfess_v}, {"gs", Method::gs}, {"stgs", Method::stgs}};
const std::initializer_list<std::pair<std::string_view, SelectorObjective>> kObjectives = {
    {"loss", SelectorObjective::loss}, {"zero_one", SelectorObjective::zero_one}};

struct KeyHandler {
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string real_text(double v) { return format_metric(v); }

#define SFESS_SIZE_KEY(field, member)                                                              \
  {                                                                                                \
    field, {                                                                                       \
      [](RunConfig& c, std::string_view k, std::string_view v) { c.member = parse_uint(k, v); },   \
          [](const RunConfig& c) { return std::to_string(c.member); }                              \
    }                                                                                              \
  }
#define SFESS_REAL_KEY(field, member)                                                              \
  {                                                                                                \
    field, {                                                                                       \
      [](RunConfig& c, std::string_view k, std::string_view v) { c.member = parse_real(k, v); },   \
          [](const RunConfig& c) { return real_text(c.member); }                                   \
    }                                                                                              \
  }
#define SFESS_STRING_KEY(field, member)                                                            \
  {                                                                                                \
    field, {                                                                                       \
      [](RunConfig& c, std::string_view, std::string_view v) { c.member = std::string(v); },       \
          [](const RunConfig& c) { return c.member; }                                              \
    }                                                                                              \
  }
#define SFESS_ENUM_KEY(field, member, table)                                                       \
  {                                                                                                \
    field, {                                                                                       \
      [](RunConfig& c, std::string_view k, std::string_view v) { c.member = parse_enum(k, v, table); }, \
          [](const RunConfig& c) { return enum_name(c.member, table); }                            \
    }                                                                                              \
  }

const std::vector<std::pair<std::string, KeyHandler>>& handlers() {
  static const std::vector<std::pair<std::string, KeyHandler>> table = {
      SFESS_ENUM_KEY("task", task, kTasks),
      SFESS_ENUM_KEY("dataset", dataset, kDatasets),
      SFESS_STRING_KEY("train_images", train_images),
      SFESS_STRING_KEY("train_labels", train_labels),
      SFESS_SIZE_KEY("train_size", splits.train),
      SFESS_SIZE_KEY("val_size", splits.validation),
      SFESS_SIZE_KEY("test_size", splits.test),
      SFESS_SIZE_KEY("n", n),
      SFESS_SIZE_KEY("informative", informative),
      SFESS_SIZE_KEY("k", k),
      SFESS_ENUM_KEY("estimator", estimator, kMethods),
      SFESS_SIZE_KEY("samples", samples),
      SFESS_SIZE_KEY("batch_size", batch_size),
      SFESS_SIZE_KEY("epochs", epochs),
      SFESS_REAL_KEY("lr_selector", lr_selector),
      SFESS_REAL_KEY("lr_downstream", lr_downstream),
      SFESS_REAL_KEY("selector_beta1", selector_beta1),
      SFESS_REAL_KEY("selector_beta2", selector_beta2),
      SFESS_REAL_KEY("downstream_beta1", downstream_beta1),
      SFESS_REAL_KEY("downstream_beta2", downstream_beta2),
      SFESS_REAL_KEY("weight_decay", weight_decay),
      SFESS_REAL_KEY("tau_start", tau_start),
      SFESS_REAL_KEY("tau_end", tau_end),
      {"hidden",
       {[](RunConfig& c, std::string_view k, std::string_view v) {
          c.hidden.clear();
          if (v == "default") return;
          std::string token;
          std::istringstream in{std::string(v)};
          while (std::getline(in, token, ',')) {
            const std::string t = trim(token);
            if (t.empty()) bad_value(k, v, "a comma-separated list of layer widths");
            const auto width = parse_uint(k, t);
            if (width == 0) bad_value(k, v, "positive layer widths");
            c.hidden.push_back(width);
          }
        },
        [](const RunConfig& c) {
          if (c.hidden.empty()) return std::string("default");
          std::string out;
          for (std::size_t i = 0; i < c.hidden.size(); ++i) out += (i ? "," : "") + std::to_string(c.hidden[i]);
          return out;
        }}},
      SFESS_REAL_KEY("dropout", dropout),
      SFESS_ENUM_KEY("selector_objective", selector_objective, kObjectives),
      SFESS_SIZE_KEY("seed", seed),
      SFESS_STRING_KEY("out", out),
      {"record_timing",
       {[](RunConfig& c, std::string_view k, std::string_view v) { c.record_timing = parse_bool(k, v); },
        [](const RunConfig& c) { return std::string(c.record_timing ? "true" : "false"); }}},
  };
  return table;
}

#undef SFESS_SIZE_KEY
#undef SFESS_REAL_KEY
#undef SFESS_STRING_KEY
#undef SFESS_ENUM_KEY

const KeyHandler& handler(std::string_view key) {
  for (const auto& [name, h] : handlers()) {
    if (name == key) return h;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [name, h] : handlers()) out.push_back(name);
    return out;
  }();
  return keys;
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  handler(key).set(config, key, trim(value));
}

std::string get_config_value(const RunConfig& config, std::string_view key) { return handler(key).get(config); }

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set_config_value(base, trim(std::string_view(content).substr(0, eq)),
                       std::string_view(content).substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), std::move(base));
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& [name, h] : handlers()) out += name + " = " + h.get(config) + "\n";
  return out;
}

std::vector<std::size_t> hidden_widths(const RunConfig& c) {
  if (!c.hidden.empty()) return c.hidden;
  if (c.task == Task::reconstruction) return {256};
  return {128, 128};
}

void validate_config(const RunConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (c.dataset == DatasetKind::idx) {
    if (c.train_images.empty() || c.train_labels.empty()) fail("idx dataset needs train_images and train_labels");
    if (!std::filesystem::exists(c.train_images)) fail("train_images file does not exist: " + c.train_images);
    if (!std::filesystem::exists(c.train_labels)) fail("train_labels file does not exist: " + c.train_labels);
  } else {
    if (c.k == 0 || c.k >= c.n) fail("k must satisfy 0 < k < n");
    if (c.informative == 0 || c.informative >= c.n) fail("informative must satisfy 0 < informative < n");
  }
  if (c.k == 0) fail("k must be positive");
  if (c.samples == 0) fail("samples must be positive");
  if (c.estimator == Method::sfess_v && c.samples < 2) fail("sfess_v needs samples >= 2");
  if (c.batch_size == 0) fail("batch_size must be positive");
  if (c.epochs == 0) fail("epochs must be positive");
  if (c.splits.train == 0 || c.splits.validation == 0 || c.splits.test == 0) fail("split sizes must be positive");
  if (!(c.tau_start > 0.0) || !(c.tau_end > 0.0)) fail("temperatures must be positive");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (c.selector_objective == SelectorObjective::zero_one) {
    if (c.task != Task::classification) fail("selector_objective = zero_one needs task = classification");
    if (c.estimator == Method::gs || c.estimator == Method::stgs) {
      fail("selector_objective = zero_one is not differentiable; use sfess or sfess_v");
    }
  }
  for (double b : {c.selector_beta1, c.selector_beta2, c.downstream_beta1, c.downstream_beta2}) {
    if (!(b >= 0.0 && b < 1.0)) fail("Adam betas must lie in [0, 1)");
  }
}

}  // namespace sfess
