#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "sfess/config.hpp"
#include "sfess/data.hpp"
#include "sfess/nn.hpp"

// Joint training of a k-subset feature selector and a downstream network.
//
// Per batch: draw M masks per example, evaluate the downstream loss on the
// masked inputs x * z, update the selector logits through the configured
// estimator, and update the downstream network with its exact gradient
// averaged over all M masks. Every random stream derives from config.seed.

namespace sfess {

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_metric = 0.0;  // accuracy or PSNR on the sampled training masks
  double val_metric_topk = 0.0;
  double val_metric_sampled = 0.0;
  double grad_norm = 0.0;      // mean L2 norm of the per-batch selector gradient
  double grad_variance = 0.0;  // mean squared deviation of batch gradients from their epoch mean
  long informative_hits = -1;  // synthetic tasks only
};

struct RunRecord {
  RunConfig config;
  std::size_t n = 0;
  std::vector<EpochMetrics> epochs;
  double test_metric_topk = 0.0;
  double test_metric_sampled = 0.0;
  std::vector<double> initial_marginals;
  std::vector<double> marginals;
  std::vector<double> logits;
  std::vector<std::size_t> selected;     // top-k of the final marginals
  std::vector<std::size_t> informative;  // synthetic ground truth, else empty
  std::size_t steps = 0;
  std::size_t input_gradient_calls = 0;
  std::vector<double> epoch_seconds;  // wall clock; never part of the metrics CSV
};

struct TrainOutcome {
  RunRecord record;
  nn::Network network;
  nn::AdamState downstream_adam;
};

/// Loads or generates the data named by the config, then trains.
TrainOutcome train(const RunConfig& config);
/// Trains on already prepared splits. `informative` is only used for metrics.
TrainOutcome train(const RunConfig& config, const DataSplits& data,
                   std::span<const std::size_t> informative = {});

/// Prepares the data splits for a config (synthetic or IDX).
struct PreparedData {
  DataSplits splits;
  std::vector<std::size_t> informative;
};
PreparedData prepare_data(const RunConfig& config);

/// Shift c such that sum_i sigmoid(logit_i + c) = k. The conditional
/// distribution is unchanged by a common shift.
double recentring_shift(std::span<const double> logits, std::size_t k);

// Run persistence.
inline constexpr const char* kMetricsSchema = "sfess.metrics/1";
void write_metrics_csv(const RunRecord& record, std::ostream& out);
void write_run_metadata(const RunRecord& record, std::ostream& out);
void write_mask(std::span<const std::size_t> selected, std::ostream& out);

/// Selector file: header, n, k and the logits.
void write_selector(const RunRecord& record, std::ostream& out);
struct Selector {
  std::size_t k = 0;
  std::vector<double> logits;
};
Selector read_selector(std::istream& in);

/// Writes metrics.csv, run_meta.json, mask.txt, selector.txt and
/// checkpoint.txt (plus timing.csv when record_timing is set) into `dir`.
void write_run(const TrainOutcome& outcome, const std::filesystem::path& dir);

}  // namespace sfess
