#include "sfess/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "sfess/baselines.hpp"
#include "sfess/error.hpp"
#include "sfess/estimators.hpp"
#include "sfess/metrics.hpp"
#include "sfess/subset.hpp"

namespace sfess {

namespace {

using nn::Matrix;

// Stream tags so every consumer of randomness has its own seed.
enum class Stream : std::uint64_t { data = 1, informative = 2, init = 3, train = 4, eval = 5 };

std::uint64_t stream_seed(std::uint64_t seed, Stream s, std::uint64_t extra = 0) {
  return Rng::mix(Rng::mix(seed) ^ (static_cast<std::uint64_t>(s) * 0x9e3779b97f4a7c15ULL) ^ Rng::mix(extra));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> probabilities(std::span<const double> logits) {
  std::vector<double> theta(logits.size());
  std::transform(logits.begin(), logits.end(), theta.begin(), sigmoid);
  return theta;
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

nn::Network build_network(const RunConfig& c, std::size_t n, std::size_t classes, Rng& rng) {
  nn::Network net(n);
  for (std::size_t width : hidden_widths(c)) {
    net.linear(width).relu();
    if (c.task == Task::classification && c.dropout > 0.0) net.dropout(c.dropout);
  }
  if (c.task == Task::classification) {
    net.linear(classes).softmax();
  } else {
    net.linear(n).sigmoid();
  }
  net.initialize(rng);
  return net;
}

int argmax(const Matrix& y, Eigen::Index col) {
  Eigen::Index best = 0;
  y.col(col).maxCoeff(&best);
  return static_cast<int>(best);
}

// Gathers masked inputs and targets for `masks.size()` columns. Column c uses
// example c % batch.size().
struct BatchColumns {
  Matrix inputs;
  Matrix targets;           // reconstruction only
  std::vector<int> labels;  // classification only
};

template <class MaskFn>
BatchColumns gather(const RunConfig& c, std::span<const DataExample* const> batch, std::size_t columns,
                    std::size_t n, MaskFn&& mask_weight) {
  BatchColumns out;
  out.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(columns));
  if (c.task == Task::reconstruction) {
    out.targets.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(columns));
  } else {
    out.labels.resize(columns);
  }
  for (std::size_t col = 0; col < columns; ++col) {
    const DataExample& ex = *batch[col % batch.size()];
    for (std::size_t i = 0; i < n; ++i) {
      out.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col)) = ex.features[i] * mask_weight(col, i);
    }
    if (c.task == Task::reconstruction) {
      const auto target = ex.target_or_features();
      for (std::size_t i = 0; i < n; ++i) out.targets(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col)) = target[i];
    } else {
      out.labels[col] = *ex.label;
    }
  }
  return out;
}

nn::LossResult downstream_loss(const RunConfig& c, const Matrix& outputs, const BatchColumns& cols) {
  return c.task == Task::classification ? nn::cross_entropy(outputs, cols.labels) : nn::bce(outputs, cols.targets);
}

// Sum over columns of the task metric (correct count, or per-image PSNR).
double metric_sum(const RunConfig& c, const Matrix& outputs, const BatchColumns& cols) {
  double total = 0.0;
  for (Eigen::Index col = 0; col < outputs.cols(); ++col) {
    if (c.task == Task::classification) {
      total += argmax(outputs, col) == cols.labels[static_cast<std::size_t>(col)] ? 1.0 : 0.0;
    } else {
      const auto pred = outputs.col(col);
      const auto target = cols.targets.col(col);
      total += metric_psnr(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())),
                           std::span<const double>(target.data(), static_cast<std::size_t>(target.size())));
    }
  }
  return total;
}

// Mean task metric over a dataset, with one mask per example from `mask_for`.
template <class MaskFor>
double evaluate(const RunConfig& c, const nn::Network& net, const Dataset& data, std::size_t n, MaskFor&& mask_for) {
  constexpr std::size_t kChunk = 512;
  double total = 0.0;
  for (std::size_t begin = 0; begin < data.size(); begin += kChunk) {
    const std::size_t count = std::min(kChunk, data.size() - begin);
    std::vector<const DataExample*> chunk(count);
    std::vector<SubsetMask> masks(count);
    for (std::size_t i = 0; i < count; ++i) {
      chunk[i] = &data[begin + i];
      masks[i] = mask_for();
    }
    const BatchColumns cols =
        gather(c, chunk, count, n, [&](std::size_t col, std::size_t i) { return masks[col][i] ? 1.0 : 0.0; });
    total += metric_sum(c, net.forward(cols.inputs, nn::Mode::eval), cols);
  }
  return total / static_cast<double>(data.size());
}

std::size_t count_hits(std::span<const std::size_t> selected, std::span<const std::size_t> informative) {
  std::size_t hits = 0;
  for (std::size_t i : selected) hits += std::find(informative.begin(), informative.end(), i) != informative.end();
  return hits;
}

nlohmann::ordered_json json_number(double v) {
  if (std::isfinite(v)) return v;
  return format_metric(v);
}

}  // namespace

double recentring_shift(std::span<const double> logits, std::size_t k) {
  if (k == 0 || k >= logits.size()) throw InvalidArgument("recentring needs 0 < k < n");
  const auto [lo_it, hi_it] = std::minmax_element(logits.begin(), logits.end());
  // sum sigmoid(l + c) is increasing in c; bracket the root and bisect.
  double lo = -*hi_it - 40.0;
  double hi = -*lo_it + 40.0;
  auto excess = [&](double shift) {
    double total = 0.0;
    for (double l : logits) total += sigmoid(l + shift);
    return total - static_cast<double>(k);
  };
  for (int iter = 0; iter < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++iter) {
    const double mid = 0.5 * (lo + hi);
    (excess(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

PreparedData prepare_data(const RunConfig& c) {
  validate_config(c);
  PreparedData out;
  if (c.dataset == DatasetKind::idx) {
    out.splits = load_idx_dataset(c.train_images, c.train_labels, c.splits, stream_seed(c.seed, Stream::data));
    return out;
  }
  std::vector<std::size_t> order(c.n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng pick(stream_seed(c.seed, Stream::informative));
  pick.shuffle(std::span<std::size_t>(order));
  order.resize(c.informative);
  SyntheticTask task = make_synthetic(c.n, order, c.splits.total(), stream_seed(c.seed, Stream::data));
  out.informative = task.informative;
  out.splits = split_dataset(std::move(task.examples), c.splits, stream_seed(c.seed, Stream::data, 1));
  return out;
}

TrainOutcome train(const RunConfig& config) {
  PreparedData data = prepare_data(config);
  return train(config, data.splits, data.informative);
}

TrainOutcome train(const RunConfig& c, const DataSplits& data, std::span<const std::size_t> informative) {
  validate_config(c);
  if (data.train.empty() || data.validation.empty() || data.test.empty()) {
    throw InvalidArgument("training needs nonempty train, validation and test splits");
  }
  const std::size_t n = data.train.front().features.size();
  if (c.k == 0 || c.k >= n) throw ConfigError("k must satisfy 0 < k < n = " + std::to_string(n));
  std::size_t classes = 0;
  if (c.task == Task::classification) {
    for (const DataExample& ex : data.train) {
      if (!ex.label) throw InvalidArgument("classification needs labelled examples");
      classes = std::max(classes, static_cast<std::size_t>(*ex.label) + 1);
    }
    classes = std::max<std::size_t>(classes, 2);
  }

  Rng init_rng(stream_seed(c.seed, Stream::init));
  Rng rng(stream_seed(c.seed, Stream::train));

  TrainOutcome outcome;
  RunRecord& record = outcome.record;
  record.config = c;
  record.n = n;
  record.informative.assign(informative.begin(), informative.end());

  nn::Network& net = outcome.network;
  net = build_network(c, n, classes, init_rng);
  std::vector<Matrix*> net_params = net.parameters();
  outcome.downstream_adam = nn::make_adam(std::span<Matrix* const>(net_params),
                                          {c.lr_downstream, c.downstream_beta1, c.downstream_beta2, 1e-8, c.weight_decay});
  nn::AdamState& net_adam = outcome.downstream_adam;

  const double init_p = static_cast<double>(c.k) / static_cast<double>(n);
  Matrix logits = Matrix::Constant(static_cast<Eigen::Index>(n), 1, std::log(init_p / (1.0 - init_p)));
  std::vector<Matrix*> selector_params = {&logits};
  nn::AdamState selector_adam = nn::make_adam(std::span<Matrix* const>(selector_params),
                                              {c.lr_selector, c.selector_beta1, c.selector_beta2, 1e-8, 0.0});
  auto logit_span = [&] { return std::span<const double>(logits.data(), n); };

  record.initial_marginals = SubsetDistribution(probabilities(logit_span()), c.k).marginals();

  const bool score_based = c.estimator == Method::sfess || c.estimator == Method::sfess_v;
  const ScoreEstimator score_kind = c.estimator == Method::sfess ? ScoreEstimator::vanilla : ScoreEstimator::loo_baseline;
  const std::size_t m = c.samples;
  const std::size_t batches_per_epoch = (data.train.size() + c.batch_size - 1) / c.batch_size;
  const std::size_t total_steps = batches_per_epoch * c.epochs;

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= c.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0, metric_total = 0.0;
    std::size_t column_total = 0;
    std::vector<std::vector<double>> batch_grads;
    batch_grads.reserve(batches_per_epoch);

    for (std::size_t begin = 0; begin < order.size(); begin += c.batch_size, ++step) {
      const std::size_t b = std::min(c.batch_size, order.size() - begin);
      std::vector<const DataExample*> batch(b);
      for (std::size_t i = 0; i < b; ++i) batch[i] = &data.train[order[begin + i]];
      const std::size_t columns = b * m;

      const std::vector<double> theta = probabilities(logit_span());
      std::vector<double> logit_grad(n, 0.0);
      nn::ForwardCache cache;
      Matrix outputs;
      nn::LossResult loss;
      nn::Gradients net_grads;

      // Dropout noise is fixed per example and shared by its M masks.
      nn::DropoutNoise noise;
      if (net.has_dropout()) noise = net.sample_dropout(b, rng).tiled(m);

      if (score_based) {
        const SubsetDistribution dist(theta, c.k);
        std::vector<SubsetMask> masks(columns);
        for (auto& z : masks) z = dist.sample(rng);
        const BatchColumns cols =
            gather(c, batch, columns, n, [&](std::size_t col, std::size_t i) { return masks[col][i] ? 1.0 : 0.0; });
        outputs = net.forward(cols.inputs, nn::Mode::train, &noise, &cache);
        loss = downstream_loss(c, outputs, cols);
        metric_total += metric_sum(c, outputs, cols);

        std::vector<double> objective(loss.per_column.data(), loss.per_column.data() + columns);
        if (c.selector_objective == SelectorObjective::zero_one) {
          for (std::size_t col = 0; col < columns; ++col) {
            objective[col] = argmax(outputs, static_cast<Eigen::Index>(col)) == cols.labels[col] ? 0.0 : 1.0;
          }
        }
        std::vector<double> theta_grad(n, 0.0);
        std::vector<SubsetMask> example_masks(m);
        std::vector<double> example_losses(m);
        for (std::size_t i = 0; i < b; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            example_masks[j] = masks[j * b + i];
            example_losses[j] = objective[j * b + i];
          }
          const GradEstimate est = estimate_from_losses(dist, example_masks, example_losses, score_kind);
          for (std::size_t q = 0; q < n; ++q) theta_grad[q] += est.grad[q];
        }
        for (std::size_t q = 0; q < n; ++q) {
          const double s = sigmoid(logits(static_cast<Eigen::Index>(q)));
          logit_grad[q] = theta_grad[q] / static_cast<double>(b) * s * (1.0 - s);
        }
        net_grads = net.backward(cache, loss.grad / static_cast<double>(columns), false);
      } else {
        const double tau = baselines::temperature_schedule(step, total_steps, c.tau_start, c.tau_end);
        std::vector<baselines::RelaxedSubset> relaxed(columns);
        std::vector<std::vector<double>> weights(columns);
        for (std::size_t col = 0; col < columns; ++col) {
          relaxed[col] = baselines::gumbel_topk_relaxed(logit_span(), c.k, tau, rng);
          if (c.estimator == Method::gs) {
            weights[col] = relaxed[col].weights;
          } else {
            const SubsetMask hard = baselines::straight_through(relaxed[col]);
            weights[col].resize(n);
            for (std::size_t i = 0; i < n; ++i) weights[col][i] = hard[i] ? 1.0 : 0.0;
          }
        }
        const BatchColumns cols =
            gather(c, batch, columns, n, [&](std::size_t col, std::size_t i) { return weights[col][i]; });
        outputs = net.forward(cols.inputs, nn::Mode::train, &noise, &cache);
        loss = downstream_loss(c, outputs, cols);
        metric_total += metric_sum(c, outputs, cols);
        net_grads = net.backward(cache, loss.grad / static_cast<double>(columns), true);
        std::vector<double> grad_weights(n);
        for (std::size_t col = 0; col < columns; ++col) {
          const DataExample& ex = *batch[col % b];
          for (std::size_t i = 0; i < n; ++i) {
            grad_weights[i] = net_grads.input(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(col)) * ex.features[i];
          }
          const std::vector<double> g = baselines::relaxed_backward(relaxed[col], grad_weights);
          for (std::size_t i = 0; i < n; ++i) logit_grad[i] += g[i];
        }
      }

      loss_sum += loss.per_column.sum();
      column_total += columns;
      if (!std::isfinite(loss.per_column.sum())) throw TrainingError("non-finite downstream loss", step);
      if (!all_finite(logit_grad)) throw TrainingError("non-finite selector gradient", step);
      for (const Matrix& g : net_grads.params) {
        if (!g.allFinite()) throw TrainingError("non-finite downstream gradient", step);
      }

      const std::vector<Matrix> selector_grads = {
          Eigen::Map<const Matrix>(logit_grad.data(), static_cast<Eigen::Index>(n), 1)};
      nn::adam_step(selector_adam, std::span<Matrix* const>(selector_params), selector_grads);
      nn::adam_step(net_adam, std::span<Matrix* const>(net_params), net_grads.params);
      logits.array() += recentring_shift(logit_span(), c.k);
      batch_grads.push_back(std::move(logit_grad));
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(column_total);
    em.train_metric = metric_total / static_cast<double>(column_total);
    std::vector<double> mean_grad(n, 0.0);
    for (const auto& g : batch_grads) {
      double sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sq += g[i] * g[i];
        mean_grad[i] += g[i] / static_cast<double>(batch_grads.size());
      }
      em.grad_norm += std::sqrt(sq) / static_cast<double>(batch_grads.size());
    }
    for (const auto& g : batch_grads) {
      for (std::size_t i = 0; i < n; ++i) {
        em.grad_variance += (g[i] - mean_grad[i]) * (g[i] - mean_grad[i]) / static_cast<double>(batch_grads.size());
      }
    }

    const SubsetDistribution dist(probabilities(logit_span()), c.k);
    const SubsetMask best = top_k(dist.marginals(), c.k);
    Rng eval_rng(stream_seed(c.seed, Stream::eval, epoch));
    auto sampled_mask = [&]() {
      if (score_based) return dist.sample(eval_rng);
      return baselines::straight_through(baselines::gumbel_topk_relaxed(logit_span(), c.k, c.tau_end, eval_rng));
    };
    em.val_metric_topk = evaluate(c, net, data.validation, n, [&] { return best; });
    em.val_metric_sampled = evaluate(c, net, data.validation, n, sampled_mask);
    if (!informative.empty()) em.informative_hits = static_cast<long>(count_hits(best.indices(), informative));
    record.epochs.push_back(em);
    record.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
  }

  const SubsetDistribution dist(probabilities(logit_span()), c.k);
  record.marginals = dist.marginals();
  const SubsetMask best = top_k(record.marginals, c.k);
  record.selected = best.indices();
  record.logits.assign(logits.data(), logits.data() + n);
  Rng test_rng(stream_seed(c.seed, Stream::eval, 0));
  record.test_metric_topk = evaluate(c, net, data.test, n, [&] { return best; });
  record.test_metric_sampled = evaluate(c, net, data.test, n, [&]() {
    if (score_based) return dist.sample(test_rng);
    return baselines::straight_through(baselines::gumbel_topk_relaxed(logit_span(), c.k, c.tau_end, test_rng));
  });
  record.steps = step;
  record.input_gradient_calls = net.input_gradient_calls();
  return outcome;
}

void write_metrics_csv(const RunRecord& record, std::ostream& out) {
  out << "# schema=" << kMetricsSchema << '\n';
  out << "epoch,train_loss,train_metric,val_metric_topk,val_metric_sampled,grad_norm,grad_variance,informative_hits\n";
  for (const EpochMetrics& e : record.epochs) {
    out << e.epoch << ',' << format_metric(e.train_loss) << ',' << format_metric(e.train_metric) << ','
        << format_metric(e.val_metric_topk) << ',' << format_metric(e.val_metric_sampled) << ','
        << format_metric(e.grad_norm) << ',' << format_metric(e.grad_variance) << ',' << e.informative_hits << '\n';
  }
}

void write_run_metadata(const RunRecord& record, std::ostream& out) {
  nlohmann::ordered_json meta;
  meta["schema"] = "sfess.run/1";
  nlohmann::ordered_json config;
  for (const std::string& key : config_keys()) config[key] = get_config_value(record.config, key);
  meta["config"] = config;
  meta["n"] = record.n;
  meta["metric"] = record.config.task == Task::classification ? "accuracy" : "psnr_db";
  meta["network_init"] = "weights uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero";
  meta["selector_init"] = "logits = logit(k/n)";
  meta["steps"] = record.steps;
  meta["test_metric_topk"] = json_number(record.test_metric_topk);
  meta["test_metric_sampled"] = json_number(record.test_metric_sampled);
  meta["selected"] = record.selected;
  meta["informative"] = record.informative;
  meta["input_gradient_calls"] = record.input_gradient_calls;
  nlohmann::ordered_json initial = nlohmann::ordered_json::array();
  for (double v : record.initial_marginals) initial.push_back(json_number(v));
  meta["initial_marginals"] = initial;
  nlohmann::ordered_json final_marginals = nlohmann::ordered_json::array();
  for (double v : record.marginals) final_marginals.push_back(json_number(v));
  meta["marginals"] = final_marginals;
  out << meta.dump(2) << '\n';
}

void write_mask(std::span<const std::size_t> selected, std::ostream& out) {
  for (std::size_t i : selected) out << i << '\n';
}

void write_selector(const RunRecord& record, std::ostream& out) {
  out << "sfess-selector 1\n";
  out << "n " << record.logits.size() << '\n';
  out << "k " << record.config.k << '\n';
  out << "logits";
  for (double v : record.logits) out << ' ' << format_metric(v);
  out << '\n';
}

Selector read_selector(std::istream& in) {
  std::string magic, tag;
  int version = 0;
  std::size_t n = 0;
  Selector s;
  if (!(in >> magic >> version) || magic != "sfess-selector" || version != 1) {
    throw ParseError("not a version-1 selector file", 0);
  }
  if (!(in >> tag >> n) || tag != "n") throw ParseError("selector file is missing 'n'", 0);
  if (!(in >> tag >> s.k) || tag != "k") throw ParseError("selector file is missing 'k'", 0);
  if (!(in >> tag) || tag != "logits") throw ParseError("selector file is missing 'logits'", 0);
  s.logits.resize(n);
  for (double& v : s.logits) {
    std::string token;
    if (!(in >> token)) throw ParseError("selector file has too few logits", 0);
    char* end = nullptr;
    v = std::strtod(token.c_str(), &end);
    if (end != token.c_str() + token.size()) throw ParseError("bad logit '" + token + "'", 0);
  }
  if (s.k == 0 || s.k >= n) throw ParseError("selector k must satisfy 0 < k < n", 0);
  return s;
}

void write_run(const TrainOutcome& outcome, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw IoError("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("metrics.csv");
    write_metrics_csv(outcome.record, f);
  }
  {
    auto f = open("run_meta.json");
    write_run_metadata(outcome.record, f);
  }
  {
    auto f = open("mask.txt");
    write_mask(outcome.record.selected, f);
  }
  {
    auto f = open("selector.txt");
    write_selector(outcome.record, f);
  }
  nn::save_checkpoint(dir / "checkpoint.txt", outcome.network, outcome.downstream_adam);
  if (outcome.record.config.record_timing) {
    auto f = open("timing.csv");
    f << "epoch,seconds\n";
    for (std::size_t i = 0; i < outcome.record.epoch_seconds.size(); ++i) {
      f << i + 1 << ',' << format_metric(outcome.record.epoch_seconds[i]) << '\n';
    }
  }
}

}  // namespace sfess
