#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sfess/random.hpp"
#include "sfess/subset.hpp"

// Relaxed k-subset sampling (GS) and its straight-through variant (STGS).

namespace sfess::baselines {

/// Added to a logit once it has been the argmax of a round.
inline constexpr double kSuppression = -1e9;

struct RelaxedSubset {
  std::vector<double> weights;  ///< sum of the k soft one-hots; sums to k
  double temperature = 1.0;
  std::size_t k = 0;
  std::vector<double> perturbed;  ///< logits + Gumbel noise
  std::vector<double> rounds;     ///< k x n row-major softmax outputs, kept for backward
};

/// k tempered-softmax rounds over `perturbed`, suppressing each round's
/// argmax before the next. Deterministic.
RelaxedSubset relaxed_topk(std::span<const double> perturbed, std::size_t k, double tau);

/// Perturbs logits with fresh standard Gumbel noise, then relaxed_topk.
RelaxedSubset gumbel_topk_relaxed(std::span<const double> logits, std::size_t k, double tau, Rng& rng);

/// Vector-Jacobian product: maps dL/dweights to dL/dlogits. The suppression
/// offsets are treated as constants.
std::vector<double> relaxed_backward(const RelaxedSubset& relaxed, std::span<const double> grad_weights);

/// Hard top-k of the relaxed weights (lowest index wins ties). Its gradient
/// contract: dL/dmask is passed to relaxed_backward unchanged.
SubsetMask straight_through(const RelaxedSubset& relaxed);

/// Exponential annealing start * (end / start)^(step / total).
double temperature_schedule(std::size_t step, std::size_t total_steps, double start = 1.0,
                            double end = 0.01);

}  // namespace sfess::baselines
