#include "sfess/estimators.hpp"

#include <exception>
#include <string>

#include "sfess/error.hpp"

namespace sfess {

std::string_view to_string(ScoreEstimator kind) {
  switch (kind) {
    case ScoreEstimator::vanilla: return "sfess";
    case ScoreEstimator::loo_baseline: return "sfess_v";
  }
  return "unknown";
}

namespace {

std::size_t minimum_samples(ScoreEstimator kind) { return kind == ScoreEstimator::loo_baseline ? 2 : 1; }

void check_sample_count(std::size_t samples, ScoreEstimator kind) {
  if (samples < minimum_samples(kind)) {
    throw InvalidArgument(std::string(to_string(kind)) + " needs at least " +
                          std::to_string(minimum_samples(kind)) + " samples, got " +
                          std::to_string(samples));
  }
}

}  // namespace

GradEstimate estimate_from_losses(const SubsetDistribution& dist, std::span<const SubsetMask> masks,
                                  std::span<const double> losses, ScoreEstimator kind) {
  const std::size_t m = masks.size();
  if (losses.size() != m) throw InvalidArgument("one loss per mask is required");
  check_sample_count(m, kind);

  std::vector<double> weights(losses.begin(), losses.end());
  if (kind == ScoreEstimator::loo_baseline) {
    // f_j - mean_{l != j} f_l, evaluated on losses shifted by f_0. The shift
    // cancels in the difference and makes constant objectives give exact zeros.
    std::vector<double> shifted(m);
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      shifted[j] = losses[j] - losses[0];
      total += shifted[j];
    }
    const double others = static_cast<double>(m - 1);
    for (std::size_t j = 0; j < m; ++j) weights[j] = shifted[j] - (total - shifted[j]) / others;
  }

  GradEstimate out;
  out.grad.assign(dist.n(), 0.0);
  out.samples_used = m;
  out.per_sample_losses.assign(losses.begin(), losses.end());
  std::vector<double> score(dist.n());
  for (std::size_t j = 0; j < m; ++j) {
    dist.score_into(masks[j], score);
    for (std::size_t i = 0; i < score.size(); ++i) out.grad[i] += score[i] * weights[j];
  }
  const double inv = 1.0 / static_cast<double>(m);
  for (double& g : out.grad) g *= inv;
  return out;
}

GradEstimate score_function_grad(const SubsetDistribution& dist, const Objective& f,
                                 const DataExample& x, std::size_t samples, Rng& rng,
                                 ScoreEstimator kind) {
  check_sample_count(samples, kind);
  std::vector<SubsetMask> masks;
  std::vector<double> losses;
  masks.reserve(samples);
  losses.reserve(samples);
  for (std::size_t j = 0; j < samples; ++j) {
    masks.push_back(dist.sample(rng));
    try {
      losses.push_back(f(masks.back(), x));
    } catch (const std::exception& e) {
      throw ObjectiveError(std::string("objective failed: ") + e.what(), masks.back().indices());
    }
  }
  return estimate_from_losses(dist, masks, losses, kind);
}

GradEstimate sfess_grad(const SubsetDistribution& dist, const Objective& f, const DataExample& x,
                        std::size_t samples, Rng& rng) {
  return score_function_grad(dist, f, x, samples, rng, ScoreEstimator::vanilla);
}

GradEstimate sfess_v_grad(const SubsetDistribution& dist, const Objective& f, const DataExample& x,
                          std::size_t samples, Rng& rng) {
  return score_function_grad(dist, f, x, samples, rng, ScoreEstimator::loo_baseline);
}

GradEstimate batch_grad(const SubsetDistribution& dist, const Objective& f,
                        std::span<const DataExample> batch, std::size_t samples, Rng& rng,
                        ScoreEstimator kind) {
  if (batch.empty()) throw InvalidArgument("batch must be nonempty");
  GradEstimate out;
  out.grad.assign(dist.n(), 0.0);
  for (const DataExample& x : batch) {
    GradEstimate one = score_function_grad(dist, f, x, samples, rng, kind);
    for (std::size_t i = 0; i < out.grad.size(); ++i) out.grad[i] += one.grad[i];
    out.samples_used += one.samples_used;
    out.per_sample_losses.insert(out.per_sample_losses.end(), one.per_sample_losses.begin(),
                                 one.per_sample_losses.end());
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& g : out.grad) g *= inv;
  return out;
}

}  // namespace sfess
