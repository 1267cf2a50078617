#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "sfess/random.hpp"

namespace sfess {

/// Binary inclusion vector. The count of selected entries is tracked so
/// distributions can check support membership in O(1).
class SubsetMask {
 public:
  SubsetMask() = default;
  /// Throws InvalidArgument if any entry is not 0 or 1.
  explicit SubsetMask(std::vector<std::uint8_t> bits);
  static SubsetMask from_indices(std::size_t n, std::span<const std::size_t> selected);

  std::size_t size() const noexcept { return bits_.size(); }
  std::size_t count() const noexcept { return count_; }
  bool operator[](std::size_t i) const noexcept { return bits_[i] != 0; }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }
  std::vector<std::size_t> indices() const;

  friend bool operator==(const SubsetMask&, const SubsetMask&) = default;

 private:
  std::vector<std::uint8_t> bits_;
  std::size_t count_ = 0;
};

/// Hard top-k of a score vector; ties go to the lowest index.
SubsetMask top_k(std::span<const double> scores, std::size_t k);

enum class NormCache { eager, none };

/// Independent Bernoulli(theta) conditioned on exactly k successes.
///
/// Entries of theta are clamped to [kThetaMin, 1 - kThetaMin] on entry so the
/// score stays finite. With NormCache::eager the normalizer P(S = k), its
/// leave-one-out terms and the sampler tables are computed once at
/// construction; with NormCache::none every call recomputes them. The two
/// modes produce bit-identical results.
class SubsetDistribution {
 public:
  static constexpr double kThetaMin = 1e-6;

  SubsetDistribution(std::span<const double> theta, std::size_t k, NormCache cache = NormCache::eager);

  std::size_t n() const noexcept { return theta_.size(); }
  std::size_t k() const noexcept { return k_; }
  std::span<const double> theta() const noexcept { return theta_; }
  bool cached() const noexcept { return norm_ != nullptr; }

  /// log P(S = k). The DFT screens for degeneracy; the stored value comes
  /// from the leave-one-out terms, which keep relative accuracy.
  double log_normalizer() const;
  /// d log P(S = k) / d theta.
  std::vector<double> log_normalizer_grad() const;

  /// log p(z); throws InvalidSupport when z does not have exactly k ones.
  double log_prob(const SubsetMask& z) const;
  double prob(const SubsetMask& z) const;

  /// d log p(z) / d theta.
  std::vector<double> score(const SubsetMask& z) const;
  void score_into(const SubsetMask& z, std::span<double> out) const;

  /// Exact draw by sequential conditional inclusion.
  SubsetMask sample(Rng& rng) const;

  /// P(b_i = 1 | S = k) for every i.
  std::vector<double> marginals() const;

  struct Normalizer {
    double mass = 0.0;      // P(S = k)
    double log_mass = 0.0;  // log P(S = k)
    std::vector<double> below;  // P(S_{-j} = k - 1)
    std::vector<double> at;     // P(S_{-j} = k)
    // Suffix PMFs for the sampler, row i covers entries i..n-1 and counts
    // 0..k. Each row is divided by its maximum to avoid underflow; the sampler
    // only takes ratios within a row.
    std::vector<double> suffix;
  };

 private:
  Normalizer compute_normalizer() const;
  void check_support(const SubsetMask& z) const;

  template <class Fn>
  decltype(auto) with_normalizer(Fn&& fn) const {
    if (norm_) return fn(*norm_);
    const Normalizer fresh = compute_normalizer();
    return fn(fresh);
  }

  std::vector<double> theta_;
  std::size_t k_;
  std::shared_ptr<const Normalizer> norm_;
};

/// Every mask in the support with its probability. Throws TooLarge when
/// C(n, k) exceeds kMaxSupport.
inline constexpr std::size_t kMaxSupport = 1'000'000;
std::vector<std::pair<SubsetMask, double>> enumerate_support(const SubsetDistribution& dist);

/// C(n, k) in floating point.
double binomial_coefficient(std::size_t n, std::size_t k);

}  // namespace sfess
