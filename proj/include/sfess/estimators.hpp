#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "sfess/data.hpp"
#include "sfess/random.hpp"
#include "sfess/subset.hpp"

// Score-function gradient estimators for E_{z ~ p_{theta,k}}[f(z, x)].
// The objective is only ever evaluated, never differentiated.

namespace sfess {

/// Scalar loss f(z, x). Must be deterministic for a fixed (z, x).
using Objective = std::function<double(const SubsetMask&, const DataExample&)>;

enum class ScoreEstimator {
  vanilla,       ///< (1/M) sum_j score(z_j) f(z_j)
  loo_baseline,  ///< each f(z_j) centred by the mean of the other M - 1 values
};

std::string_view to_string(ScoreEstimator kind);

struct GradEstimate {
  std::vector<double> grad;  ///< d/d theta, length n
  std::size_t samples_used = 0;
  std::vector<double> per_sample_losses;
};

/// Combines already-evaluated losses into a gradient estimate. The shared
/// building block of every estimator entry point and of the trainer.
GradEstimate estimate_from_losses(const SubsetDistribution& dist, std::span<const SubsetMask> masks,
                                  std::span<const double> losses, ScoreEstimator kind);

/// Draws M masks, evaluates f on each exactly once, combines.
GradEstimate score_function_grad(const SubsetDistribution& dist, const Objective& f,
                                 const DataExample& x, std::size_t samples, Rng& rng,
                                 ScoreEstimator kind);

/// Vanilla estimator; requires M >= 1.
GradEstimate sfess_grad(const SubsetDistribution& dist, const Objective& f, const DataExample& x,
                        std::size_t samples, Rng& rng);

/// Leave-one-out control variate; requires M >= 2.
GradEstimate sfess_v_grad(const SubsetDistribution& dist, const Objective& f, const DataExample& x,
                          std::size_t samples, Rng& rng);

/// Average of per-example estimates over a batch. Every example draws its own
/// M masks; the normalizer of `dist` is shared across the whole batch.
GradEstimate batch_grad(const SubsetDistribution& dist, const Objective& f,
                        std::span<const DataExample> batch, std::size_t samples, Rng& rng,
                        ScoreEstimator kind);

}  // namespace sfess
