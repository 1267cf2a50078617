#include "sfess/variance_bench.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>

#include "sfess/baselines.hpp"
#include "sfess/error.hpp"
#include "sfess/estimators.hpp"
#include "sfess/metrics.hpp"
#include "sfess/random.hpp"
#include "sfess/subset.hpp"

namespace sfess {

namespace {

// Welford accumulator over vector-valued trials.
class Moments {
 public:
  explicit Moments(std::size_t n) : mean_(n, 0.0), m2_(n, 0.0) {}

  void add(const std::vector<double>& x) {
    ++count_;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double delta = x[i] - mean_[i];
      mean_[i] += delta / static_cast<double>(count_);
      m2_[i] += delta * (x[i] - mean_[i]);
    }
  }

  EstimatorReport report(std::string name, std::string space, std::vector<double> exact) const {
    EstimatorReport r{std::move(name), std::move(space), std::move(exact), mean_, {}, 0.0};
    r.std_err.resize(mean_.size());
    for (std::size_t i = 0; i < mean_.size(); ++i) {
      const double var = count_ > 1 ? m2_[i] / static_cast<double>(count_ - 1) : 0.0;
      r.variance_trace += var;
      r.std_err[i] = std::sqrt(var / static_cast<double>(count_));
    }
    return r;
  }

 private:
  std::size_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

double linear_objective(const SubsetMask& z, const std::vector<double>& w) {
  double f = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) f += z[i] ? w[i] : 0.0;
  return f;
}

}  // namespace

double EstimatorReport::max_abs_z() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    if (std_err[i] > 0.0) worst = std::max(worst, std::abs(bias(i)) / std_err[i]);
  }
  return worst;
}

const EstimatorReport& VarianceReport::get(const std::string& name) const {
  for (const auto& e : estimators) {
    if (e.name == name) return e;
  }
  throw InvalidArgument("no estimator named '" + name + "' in report");
}

double VarianceReport::variance_ratio() const {
  return get("sfess_v").variance_trace / get("sfess").variance_trace;
}

std::vector<double> exact_linear_gradient(const std::vector<double>& theta, std::size_t k,
                                          const std::vector<double>& weights) {
  const SubsetDistribution dist(theta, k);
  std::vector<double> grad(theta.size(), 0.0);
  for (const auto& [z, p] : enumerate_support(dist)) {
    const double f = linear_objective(z, weights);
    const std::vector<double> s = dist.score(z);
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += p * f * s[i];
  }
  return grad;
}

double gumbel_topk_expectation(const std::vector<double>& logits, std::size_t k,
                               const std::vector<double>& weights) {
  // Gumbel top-k draws an ordered sample without replacement with
  // P(i | remaining) proportional to exp(logit_i).
  const std::size_t n = logits.size();
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> mass(n);
  for (std::size_t i = 0; i < n; ++i) mass[i] = std::exp(logits[i] - top);
  std::vector<bool> used(n, false);
  std::function<double(std::size_t, double)> expand = [&](std::size_t depth, double remaining) -> double {
    if (depth == k) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      const double p = mass[i] / remaining;
      used[i] = true;
      total += p * (weights[i] + expand(depth + 1, remaining - mass[i]));
      used[i] = false;
    }
    return total;
  };
  double all = 0.0;
  for (double m : mass) all += m;
  return expand(0, all);
}

VarianceReport variance_bench(const VarianceBenchConfig& input) {
  VarianceBenchConfig c = input;
  if (c.n < 2 || c.n > 12) throw InvalidArgument("variance bench needs 2 <= n <= 12");
  if (c.k == 0 || c.k >= c.n) throw InvalidArgument("variance bench needs 0 < k < n");
  if (c.samples < 2) throw InvalidArgument("variance bench needs samples >= 2");
  if (c.trials < 2) throw InvalidArgument("variance bench needs trials >= 2");
  if (c.theta.empty()) {
    for (std::size_t i = 0; i < c.n; ++i) c.theta.push_back(0.2 + 0.6 * static_cast<double>(i) / static_cast<double>(c.n - 1));
  }
  if (c.weights.empty()) {
    for (std::size_t i = 0; i < c.n; ++i) c.weights.push_back(1.0 + 0.25 * static_cast<double>(i));
  }
  if (c.theta.size() != c.n || c.weights.size() != c.n) throw InvalidArgument("theta and weights need n entries");

  VarianceReport report;
  report.config = c;
  const SubsetDistribution dist(c.theta, c.k);
  const std::vector<double> exact = exact_linear_gradient(c.theta, c.k, c.weights);

  Rng rng(Rng::mix(c.seed));
  Moments vanilla(c.n), loo(c.n);
  std::vector<SubsetMask> masks(c.samples);
  std::vector<double> losses(c.samples);
  for (std::size_t t = 0; t < c.trials; ++t) {
    for (std::size_t j = 0; j < c.samples; ++j) {
      masks[j] = dist.sample(rng);
      losses[j] = linear_objective(masks[j], c.weights);
    }
    vanilla.add(estimate_from_losses(dist, masks, losses, ScoreEstimator::vanilla).grad);
    loo.add(estimate_from_losses(dist, masks, losses, ScoreEstimator::loo_baseline).grad);
  }
  report.estimators.push_back(vanilla.report("sfess", "theta", exact));
  report.estimators.push_back(loo.report("sfess_v", "theta", exact));

  if (c.include_gs) {
    std::vector<double> logits(c.n);
    for (std::size_t i = 0; i < c.n; ++i) logits[i] = std::log(dist.theta()[i] / (1.0 - dist.theta()[i]));
    std::vector<double> reference(c.n);
    constexpr double h = 1e-5;
    for (std::size_t i = 0; i < c.n; ++i) {
      std::vector<double> up = logits, down = logits;
      up[i] += h;
      down[i] -= h;
      reference[i] = (gumbel_topk_expectation(up, c.k, c.weights) - gumbel_topk_expectation(down, c.k, c.weights)) / (2 * h);
    }
    Rng gs_rng(Rng::mix(c.seed + 1));
    Moments gs(c.n);
    std::vector<double> estimate(c.n);
    for (std::size_t t = 0; t < c.trials; ++t) {
      std::fill(estimate.begin(), estimate.end(), 0.0);
      for (std::size_t j = 0; j < c.samples; ++j) {
        const auto relaxed = baselines::gumbel_topk_relaxed(logits, c.k, c.tau, gs_rng);
        const std::vector<double> g = baselines::relaxed_backward(relaxed, c.weights);
        for (std::size_t i = 0; i < c.n; ++i) estimate[i] += g[i] / static_cast<double>(c.samples);
      }
      gs.add(estimate);
    }
    report.estimators.push_back(gs.report("gs", "logit", reference));
  }
  return report;
}

void write_variance_csv(const VarianceReport& report, std::ostream& out) {
  const VarianceBenchConfig& c = report.config;
  out << "# schema=sfess.variance/1\n";
  out << "# n=" << c.n << " k=" << c.k << " samples=" << c.samples << " trials=" << c.trials << " seed=" << c.seed
      << " tau=" << format_metric(c.tau) << '\n';
  out << "estimator,space,coordinate,exact,mean,bias,std_err\n";
  for (const EstimatorReport& e : report.estimators) {
    for (std::size_t i = 0; i < e.mean.size(); ++i) {
      out << e.name << ',' << e.space << ',' << i << ',' << format_metric(e.exact[i]) << ','
          << format_metric(e.mean[i]) << ',' << format_metric(e.bias(i)) << ',' << format_metric(e.std_err[i])
          << '\n';
    }
  }
  for (const EstimatorReport& e : report.estimators) {
    out << "# variance_trace " << e.name << '=' << format_metric(e.variance_trace) << " max_abs_z=" << format_metric(e.max_abs_z())
        << '\n';
  }
  out << "# variance_ratio sfess_v/sfess=" << format_metric(report.variance_ratio()) << '\n';
}

}  // namespace sfess
