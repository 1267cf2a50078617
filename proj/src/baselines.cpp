#include "sfess/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sfess/error.hpp"

namespace sfess::baselines {

RelaxedSubset relaxed_topk(std::span<const double> perturbed, std::size_t k, double tau) {
  const std::size_t n = perturbed.size();
  if (!(tau > 0.0)) throw InvalidArgument("temperature must be positive");
  if (k == 0 || k >= n) throw InvalidArgument("relaxed top-k needs 0 < k < n");

  RelaxedSubset out;
  out.temperature = tau;
  out.k = k;
  out.perturbed.assign(perturbed.begin(), perturbed.end());
  out.weights.assign(n, 0.0);
  out.rounds.assign(k * n, 0.0);

  std::vector<double> current(perturbed.begin(), perturbed.end());
  for (std::size_t r = 0; r < k; ++r) {
    double* p = &out.rounds[r * n];
    const double peak = *std::max_element(current.begin(), current.end());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = std::exp((current[i] - peak) / tau);
      total += p[i];
    }
    std::size_t best = 0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] /= total;
      out.weights[i] += p[i];
      if (p[i] > p[best]) best = i;
    }
    current[best] += kSuppression;
  }
  return out;
}

RelaxedSubset gumbel_topk_relaxed(std::span<const double> logits, std::size_t k, double tau, Rng& rng) {
  std::vector<double> perturbed(logits.begin(), logits.end());
  for (double& v : perturbed) v += rng.gumbel();
  return relaxed_topk(perturbed, k, tau);
}

std::vector<double> relaxed_backward(const RelaxedSubset& relaxed, std::span<const double> grad_weights) {
  const std::size_t n = relaxed.weights.size();
  if (grad_weights.size() != n) throw InvalidArgument("gradient length does not match relaxed sample");
  std::vector<double> grad(n, 0.0);
  const double inv_tau = 1.0 / relaxed.temperature;
  for (std::size_t r = 0; r < relaxed.k; ++r) {
    const double* p = &relaxed.rounds[r * n];
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += grad_weights[i] * p[i];
    for (std::size_t i = 0; i < n; ++i) grad[i] += inv_tau * p[i] * (grad_weights[i] - dot);
  }
  return grad;
}

SubsetMask straight_through(const RelaxedSubset& relaxed) { return top_k(relaxed.weights, relaxed.k); }

double temperature_schedule(std::size_t step, std::size_t total_steps, double start, double end) {
  if (total_steps == 0) throw InvalidArgument("temperature schedule needs total_steps > 0");
  if (step > total_steps) {
    throw InvalidArgument("step " + std::to_string(step) + " exceeds total_steps " +
                          std::to_string(total_steps));
  }
  if (!(start > 0.0) || !(end > 0.0)) throw InvalidArgument("temperatures must be positive");
  const double fraction = static_cast<double>(step) / static_cast<double>(total_steps);
  return start * std::pow(end / start, fraction);
}

}  // namespace sfess::baselines
