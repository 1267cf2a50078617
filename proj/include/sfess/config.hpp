#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sfess/data.hpp"

namespace sfess {

enum class Task { classification, reconstruction };
enum class DatasetKind { synthetic, idx };
enum class Method { sfess, sfess_v, gs, stgs };
/// What the selector's estimator sees: the downstream training loss, or a
/// hard 0/1 misclassification indicator.
enum class SelectorObjective { loss, zero_one };

std::string_view to_string(Method m);

/// Full description of a training run. Every field has a flat config key of
/// the same spelling (see config_keys()) and a matching `--key` CLI flag.
struct RunConfig {
  Task task = Task::classification;
  DatasetKind dataset = DatasetKind::synthetic;
  std::string train_images;
  std::string train_labels;
  SplitSizes splits;
  std::size_t n = 20;           // synthetic feature count
  std::size_t informative = 5;  // synthetic informative count
  std::size_t k = 5;
  Method estimator = Method::sfess_v;
  std::size_t samples = 5;
  std::size_t batch_size = 256;
  std::size_t epochs = 50;
  double lr_selector = 1e-2;
  double lr_downstream = 1e-4;
  double selector_beta1 = 0.99;
  double selector_beta2 = 0.999;
  double downstream_beta1 = 0.9;
  double downstream_beta2 = 0.999;
  double weight_decay = 1e-4;
  double tau_start = 1.0;
  double tau_end = 0.01;
  std::vector<std::size_t> hidden;  // empty: 128,128 for classification, 256 for reconstruction
  double dropout = 0.2;
  SelectorObjective selector_objective = SelectorObjective::loss;
  std::uint64_t seed = 0;
  std::string out = "run";
  bool record_timing = false;
};

/// Keys in canonical order.
const std::vector<std::string>& config_keys();

/// Throws ConfigError for an unknown key or an unparsable value.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& config, std::string_view key);

/// Parses `key = value` lines onto `base`. Blank lines and `#` comments are
/// ignored. Throws ConfigError naming the line on failure.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
/// One `key = value` line per key, in canonical order. Round-trips through parse_config.
std::string serialize_config(const RunConfig& config);

/// Semantic checks: referenced files exist, 0 < k < n, M >= 2 for sfess_v, ...
void validate_config(const RunConfig& config);

/// Hidden widths after applying the task default.
std::vector<std::size_t> hidden_widths(const RunConfig& config);

}  // namespace sfess
