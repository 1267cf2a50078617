#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "oracles.hpp"
#include "sfess/error.hpp"
#include "sfess/estimators.hpp"

using namespace sfess;

namespace {

double linear(const SubsetMask& z, const std::vector<double>& w) {
  double f = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) f += z[i] ? w[i] : 0.0;
  return f;
}

std::vector<double> enumerated_gradient(const SubsetDistribution& dist, const std::vector<double>& w) {
  std::vector<double> g(dist.n(), 0.0);
  for (const auto& wt : oracle::brute_force_subsets(std::vector<double>(dist.theta().begin(), dist.theta().end()), dist.k())) {
    const auto s = dist.score(wt.mask);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += wt.prob * linear(wt.mask, w) * s[i];
  }
  return g;
}

}  // namespace

TEST_CASE("sample count requirements") {
  const SubsetDistribution dist(std::vector<double>{0.3, 0.5, 0.7}, 1);
  const Objective f = [](const SubsetMask&, const DataExample&) { return 1.0; };
  Rng rng(1);
  const DataExample x;
  CHECK_THROWS_AS(sfess_grad(dist, f, x, 0, rng), InvalidArgument);
  CHECK_THROWS_AS(sfess_v_grad(dist, f, x, 1, rng), InvalidArgument);
  CHECK_NOTHROW(sfess_grad(dist, f, x, 1, rng));
  CHECK_NOTHROW(sfess_v_grad(dist, f, x, 2, rng));
}

TEST_CASE("constant objective gives an exact zero under the baseline") {
  Rng rng(2);
  const auto theta = oracle::random_theta(rng, 10);
  const SubsetDistribution dist(theta, 4);
  const Objective f = [](const SubsetMask&, const DataExample&) { return 3.7; };
  for (int rep = 0; rep < 20; ++rep) {
    const auto est = sfess_v_grad(dist, f, DataExample{}, 5, rng);
    for (double g : est.grad) CHECK(g == 0.0);
  }
}

TEST_CASE("combination rule on fixed masks") {
  const std::vector<double> theta = {0.2, 0.5, 0.8, 0.4};
  const SubsetDistribution dist(theta, 2);
  const std::vector<SubsetMask> masks = {SubsetMask::from_indices(4, std::vector<std::size_t>{0, 1}),
                                         SubsetMask::from_indices(4, std::vector<std::size_t>{2, 3}),
                                         SubsetMask::from_indices(4, std::vector<std::size_t>{1, 2})};
  const std::vector<double> losses = {1.0, 4.0, -2.0};
  const auto vanilla = estimate_from_losses(dist, masks, losses, ScoreEstimator::vanilla);
  const auto loo = estimate_from_losses(dist, masks, losses, ScoreEstimator::loo_baseline);
  for (std::size_t i = 0; i < 4; ++i) {
    double v = 0.0, b = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double others = (losses[0] + losses[1] + losses[2] - losses[j]) / 2.0;
      v += dist.score(masks[j])[i] * losses[j] / 3.0;
      b += dist.score(masks[j])[i] * (losses[j] - others) / 3.0;
    }
    CHECK(vanilla.grad[i] == doctest::Approx(v).epsilon(1e-13));
    CHECK(loo.grad[i] == doctest::Approx(b).epsilon(1e-13));
  }
  CHECK(loo.samples_used == 3);
  CHECK(loo.per_sample_losses == losses);
  CHECK_THROWS_AS(estimate_from_losses(dist, masks, std::vector<double>{1.0}, ScoreEstimator::vanilla), InvalidArgument);
}

TEST_CASE("objective is evaluated exactly once per sample") {
  const SubsetDistribution dist(std::vector<double>{0.3, 0.5, 0.7, 0.6}, 2);
  int calls = 0;
  const Objective f = [&](const SubsetMask& z, const DataExample&) {
    ++calls;
    return static_cast<double>(z.indices().front());
  };
  Rng rng(3);
  sfess_v_grad(dist, f, DataExample{}, 7, rng);
  CHECK(calls == 7);
  const std::vector<DataExample> batch(4);
  calls = 0;
  const auto est = batch_grad(dist, f, batch, 3, rng, ScoreEstimator::vanilla);
  CHECK(calls == 12);
  CHECK(est.samples_used == 12);
  CHECK_THROWS_AS(batch_grad(dist, f, std::vector<DataExample>{}, 3, rng, ScoreEstimator::vanilla), InvalidArgument);
}

TEST_CASE("batch gradient is the mean of per-example estimates") {
  const SubsetDistribution dist(std::vector<double>{0.3, 0.5, 0.7, 0.6, 0.2}, 2);
  const Objective f = [](const SubsetMask& z, const DataExample& x) { return x.features[0] * static_cast<double>(z.indices().back()); };
  std::vector<DataExample> batch(3);
  for (std::size_t i = 0; i < 3; ++i) batch[i].features = {1.0 + static_cast<double>(i)};
  Rng a(5), b(5);
  const auto combined = batch_grad(dist, f, batch, 4, a, ScoreEstimator::loo_baseline);
  std::vector<double> manual(5, 0.0);
  for (const auto& x : batch) {
    const auto one = sfess_v_grad(dist, f, x, 4, b);
    for (std::size_t i = 0; i < 5; ++i) manual[i] += one.grad[i] / 3.0;
  }
  CHECK(oracle::max_abs_diff(combined.grad, manual) < 1e-14);
}

TEST_CASE("objective failures carry the offending mask") {
  const SubsetDistribution dist(std::vector<double>{0.3, 0.5, 0.7}, 1);
  const Objective f = [](const SubsetMask&, const DataExample&) -> double { throw std::runtime_error("boom"); };
  Rng rng(4);
  try {
    sfess_grad(dist, f, DataExample{}, 2, rng);
    FAIL("expected ObjectiveError");
  } catch (const ObjectiveError& e) {
    CHECK(e.selected().size() == 1);
  }
}

TEST_CASE("both estimators are unbiased on a small problem") {
  const std::vector<double> theta = {0.2, 0.7, 0.4, 0.9, 0.5};
  const std::vector<double> w = {1.0, -2.0, 0.5, 3.0, 1.5};
  const SubsetDistribution dist(theta, 2);
  const auto exact = enumerated_gradient(dist, w);
  const Objective f = [&](const SubsetMask& z, const DataExample&) { return linear(z, w); };
  for (ScoreEstimator kind : {ScoreEstimator::vanilla, ScoreEstimator::loo_baseline}) {
    Rng rng(kind == ScoreEstimator::vanilla ? 6 : 7);
    const std::size_t trials = 40000;
    std::vector<double> sum(5, 0.0), sq(5, 0.0);
    for (std::size_t t = 0; t < trials; ++t) {
      const auto g = score_function_grad(dist, f, DataExample{}, 3, rng, kind).grad;
      for (std::size_t i = 0; i < 5; ++i) {
        sum[i] += g[i];
        sq[i] += g[i] * g[i];
      }
    }
    for (std::size_t i = 0; i < 5; ++i) {
      const double mean = sum[i] / trials;
      const double se = std::sqrt((sq[i] / trials - mean * mean) / trials);
      CHECK_MESSAGE(std::abs(mean - exact[i]) < 4.5 * se, to_string(kind) << " coordinate " << i);
    }
  }
}

TEST_CASE("single sample is score times loss") {
  const SubsetDistribution dist(std::vector<double>{0.3, 0.5, 0.7, 0.6}, 2);
  const Objective f = [](const SubsetMask& z, const DataExample&) { return 1.0 + static_cast<double>(z.indices()[0]); };
  Rng a(8), b(8);
  const auto est = sfess_grad(dist, f, DataExample{}, 1, a);
  const SubsetMask z = dist.sample(b);
  const auto s = dist.score(z);
  for (std::size_t i = 0; i < 4; ++i) CHECK(est.grad[i] == s[i] * f(z, DataExample{}));
}

TEST_CASE("batch of one and cache transparency") {
  Rng rng(9);
  const auto theta = oracle::random_theta(rng, 7);
  const std::vector<double> w = {1, 2, 3, 4, 5, 6, 7};
  const Objective f = [&](const SubsetMask& z, const DataExample&) { return linear(z, w); };
  const SubsetDistribution eager(theta, 3, NormCache::eager);
  const SubsetDistribution lazy(theta, 3, NormCache::none);
  const std::vector<DataExample> one(1);
  Rng a(10), b(10), c(10);
  const auto batched = batch_grad(eager, f, one, 4, a, ScoreEstimator::loo_baseline).grad;
  CHECK(batched == sfess_v_grad(eager, f, one[0], 4, b).grad);
  CHECK(batched == batch_grad(lazy, f, one, 4, c, ScoreEstimator::loo_baseline).grad);
}

TEST_CASE("vanilla estimator of a constant objective has zero mean") {
  const SubsetDistribution dist(std::vector<double>{0.2, 0.7, 0.4, 0.9, 0.5, 0.3}, 2);
  const Objective f = [](const SubsetMask&, const DataExample&) { return 2.0; };
  Rng rng(11);
  const std::size_t trials = 100000;
  std::vector<double> sum(6, 0.0), sq(6, 0.0);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto g = sfess_grad(dist, f, DataExample{}, 1, rng).grad;
    for (std::size_t i = 0; i < 6; ++i) {
      sum[i] += g[i];
      sq[i] += g[i] * g[i];
    }
  }
  for (std::size_t i = 0; i < 6; ++i) {
    const double mean = sum[i] / trials;
    CHECK(std::abs(mean) < 3 * std::sqrt((sq[i] / trials - mean * mean) / trials));
  }
}

TEST_CASE("unbiased on n = 6, k = 2 over 10^6 draws") {
  const std::vector<double> theta = {0.15, 0.35, 0.5, 0.6, 0.75, 0.9};
  const std::vector<double> w = {2.0, -1.0, 0.5, 1.5, -0.5, 1.0};
  const SubsetDistribution dist(theta, 2);
  const auto exact = enumerated_gradient(dist, w);
  std::vector<double> score(6);
  for (ScoreEstimator kind : {ScoreEstimator::vanilla, ScoreEstimator::loo_baseline}) {
    Rng rng(kind == ScoreEstimator::vanilla ? 12 : 13);
    const std::size_t trials = 1000000 / 2;
    std::vector<double> sum(6, 0.0), sq(6, 0.0);
    std::vector<SubsetMask> masks(2);
    std::vector<double> losses(2);
    for (std::size_t t = 0; t < trials; ++t) {
      for (std::size_t j = 0; j < 2; ++j) {
        masks[j] = dist.sample(rng);
        losses[j] = linear(masks[j], w);
      }
      const auto g = estimate_from_losses(dist, masks, losses, kind).grad;
      for (std::size_t i = 0; i < 6; ++i) {
        sum[i] += g[i];
        sq[i] += g[i] * g[i];
      }
    }
    for (std::size_t i = 0; i < 6; ++i) {
      const double mean = sum[i] / trials;
      const double se = std::sqrt((sq[i] / trials - mean * mean) / trials);
      CHECK_MESSAGE(std::abs(mean - exact[i]) < 3 * se, to_string(kind) << " coordinate " << i);
    }
  }
}
