#include "sfess/subset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sfess/error.hpp"
#include "sfess/poibin.hpp"

namespace sfess {

SubsetMask::SubsetMask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] > 1) throw InvalidArgument("mask entry " + std::to_string(i) + " is not 0 or 1");
    count_ += bits_[i];
  }
}

SubsetMask SubsetMask::from_indices(std::size_t n, std::span<const std::size_t> selected) {
  std::vector<std::uint8_t> bits(n, 0);
  for (std::size_t i : selected) {
    if (i >= n) throw InvalidArgument("selected index " + std::to_string(i) + " out of range");
    if (bits[i]) throw InvalidArgument("selected index " + std::to_string(i) + " repeated");
    bits[i] = 1;
  }
  return SubsetMask(std::move(bits));
}

std::vector<std::size_t> SubsetMask::indices() const {
  std::vector<std::size_t> out;
  out.reserve(count_);
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) out.push_back(i);
  }
  return out;
}

SubsetMask top_k(std::span<const double> scores, std::size_t k) {
  if (k > scores.size()) throw InvalidArgument("top-k with k larger than n");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(k);
  return SubsetMask::from_indices(scores.size(), order);
}

SubsetDistribution::SubsetDistribution(std::span<const double> theta, std::size_t k, NormCache cache)
    : theta_(theta.begin(), theta.end()), k_(k) {
  poibin::validate_probabilities(theta);
  if (k == 0 || k >= theta.size()) {
    throw InvalidArgument("subset size k = " + std::to_string(k) + " must satisfy 0 < k < n = " +
                          std::to_string(theta.size()));
  }
  for (double& p : theta_) p = std::clamp(p, kThetaMin, 1.0 - kThetaMin);
  if (cache == NormCache::eager) {
    norm_ = std::make_shared<const Normalizer>(compute_normalizer());
  } else {
    // Surface degenerate parameters at construction in both modes.
    (void)compute_normalizer();
  }
}

SubsetDistribution::Normalizer SubsetDistribution::compute_normalizer() const {
  const std::size_t n = theta_.size();
  Normalizer norm;
  const double dft_mass = poibin::pmf_dft(theta_)[k_];
  if (dft_mass < poibin::kDegenerateFloor) {
    throw DegenerateDistribution("P(S = " + std::to_string(k_) + ") = " + std::to_string(dft_mass) +
                                 " is below the degenerate floor");
  }
  auto terms = poibin::leave_one_out_terms(theta_, k_);
  norm.below = std::move(terms.below);
  norm.at = std::move(terms.at);
  // The DFT value is accurate only in absolute terms. P = theta_0 A_0 +
  // (1 - theta_0) B_0 is a sum of positive terms and keeps relative accuracy.
  norm.mass = theta_[0] * norm.below[0] + (1.0 - theta_[0]) * norm.at[0];
  norm.log_mass = std::log(std::max(norm.mass, poibin::kLogFloor));

  const std::size_t width = k_ + 1;
  norm.suffix.assign((n + 1) * width, 0.0);
  norm.suffix[n * width] = 1.0;
  for (std::size_t i = n; i-- > 0;) {
    const double p = theta_[i];
    const double* prev = &norm.suffix[(i + 1) * width];
    double* row = &norm.suffix[i * width];
    row[0] = (1.0 - p) * prev[0];
    double peak = row[0];
    for (std::size_t m = 1; m < width; ++m) {
      row[m] = p * prev[m - 1] + (1.0 - p) * prev[m];
      peak = std::max(peak, row[m]);
    }
    if (peak > 0.0) {
      for (std::size_t m = 0; m < width; ++m) row[m] /= peak;
    }
  }
  return norm;
}

double SubsetDistribution::log_normalizer() const {
  return with_normalizer([](const Normalizer& norm) { return norm.log_mass; });
}

std::vector<double> SubsetDistribution::log_normalizer_grad() const {
  return with_normalizer([](const Normalizer& norm) {
    std::vector<double> grad(norm.at.size());
    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] = (norm.below[j] - norm.at[j]) / norm.mass;
    return grad;
  });
}

void SubsetDistribution::check_support(const SubsetMask& z) const {
  if (z.size() != theta_.size()) {
    throw InvalidSupport("mask length " + std::to_string(z.size()) + " does not match n = " +
                         std::to_string(theta_.size()));
  }
  if (z.count() != k_) {
    throw InvalidSupport("mask selects " + std::to_string(z.count()) + " entries, expected k = " +
                         std::to_string(k_));
  }
}

double SubsetDistribution::log_prob(const SubsetMask& z) const {
  check_support(z);
  double joint = 0.0;
  for (std::size_t i = 0; i < theta_.size(); ++i) {
    joint += z[i] ? std::log(theta_[i]) : std::log1p(-theta_[i]);
  }
  return joint - log_normalizer();
}

double SubsetDistribution::prob(const SubsetMask& z) const { return std::exp(log_prob(z)); }

std::vector<double> SubsetDistribution::score(const SubsetMask& z) const {
  std::vector<double> out(theta_.size());
  score_into(z, out);
  return out;
}

void SubsetDistribution::score_into(const SubsetMask& z, std::span<double> out) const {
  check_support(z);
  if (out.size() != theta_.size()) throw InvalidArgument("score output has wrong length");
  // z_i / theta_i - (1 - z_i) / (1 - theta_i) - (A_i - B_i) / P, rewritten with
  // P = theta_i A_i + (1 - theta_i) B_i so the sign is exact:
  //   included: B_i / (theta_i P),  excluded: -A_i / ((1 - theta_i) P).
  with_normalizer([&](const Normalizer& norm) {
    for (std::size_t i = 0; i < theta_.size(); ++i) {
      out[i] = z[i] ? norm.at[i] / (theta_[i] * norm.mass)
                    : -norm.below[i] / ((1.0 - theta_[i]) * norm.mass);
    }
    return 0;
  });
}

SubsetMask SubsetDistribution::sample(Rng& rng) const {
  return with_normalizer([&](const Normalizer& norm) {
    const std::size_t n = theta_.size();
    const std::size_t width = k_ + 1;
    std::vector<std::uint8_t> bits(n, 0);
    std::size_t remaining = k_;
    for (std::size_t i = 0; i < n && remaining > 0; ++i) {
      // P(include i | r left) = theta_i T[i+1][r-1] / T[i][r]. Row scales
      // cancel, so the ratio is taken within row i+1.
      const double* next = &norm.suffix[(i + 1) * width];
      const double take = theta_[i] * next[remaining - 1];
      const double skip = (1.0 - theta_[i]) * next[remaining];
      const double denom = take + skip;
      const bool include = denom > 0.0 ? rng.uniform() * denom < take : remaining == n - i;
      if (include) {
        bits[i] = 1;
        --remaining;
      }
    }
    return SubsetMask(std::move(bits));
  });
}

std::vector<double> SubsetDistribution::marginals() const {
  return with_normalizer([&](const Normalizer& norm) {
    std::vector<double> out(theta_.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = theta_[i] * norm.below[i] / norm.mass;
    return out;
  });
}

double binomial_coefficient(std::size_t n, std::size_t k) {
  if (k > n) return 0.0;
  k = std::min(k, n - k);
  double result = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    result = result * static_cast<double>(n - k + i) / static_cast<double>(i);
  }
  return std::round(result);
}

std::vector<std::pair<SubsetMask, double>> enumerate_support(const SubsetDistribution& dist) {
  const std::size_t n = dist.n();
  const std::size_t k = dist.k();
  const double total = binomial_coefficient(n, k);
  if (total > static_cast<double>(kMaxSupport)) {
    throw TooLarge("support of size C(" + std::to_string(n) + ", " + std::to_string(k) +
                   ") exceeds the enumeration limit");
  }
  std::vector<std::pair<SubsetMask, double>> out;
  out.reserve(static_cast<std::size_t>(total));
  std::vector<std::size_t> combo(k);
  std::iota(combo.begin(), combo.end(), std::size_t{0});
  while (true) {
    SubsetMask mask = SubsetMask::from_indices(n, combo);
    const double p = dist.prob(mask);
    out.emplace_back(std::move(mask), p);
    // Advance to the next combination in lexicographic order.
    std::size_t pos = k;
    while (pos > 0 && combo[pos - 1] == n - k + pos - 1) --pos;
    if (pos == 0) break;
    ++combo[pos - 1];
    for (std::size_t j = pos; j < k; ++j) combo[j] = combo[j - 1] + 1;
  }
  return out;
}

}  // namespace sfess
