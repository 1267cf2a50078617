#pragma once

// Slow reference implementations used only by the tests.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "sfess/subset.hpp"

namespace oracle {

/// PMF of the sum by enumerating all 2^n outcomes.
inline std::vector<double> brute_force_pmf(const std::vector<double>& theta) {
  const std::size_t n = theta.size();
  std::vector<double> pmf(n + 1, 0.0);
  for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << n); ++bits) {
    double p = 1.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool on = (bits >> i) & 1;
      p *= on ? theta[i] : 1.0 - theta[i];
      count += on;
    }
    pmf[count] += p;
  }
  return pmf;
}

inline sfess::SubsetMask mask_from_bits(std::size_t n, std::uint64_t bits) {
  std::vector<std::uint8_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = (bits >> i) & 1;
  return sfess::SubsetMask(v);
}

/// Every size-k mask with its conditional probability by 2^n enumeration.
struct Weighted {
  sfess::SubsetMask mask;
  double prob;
};
inline std::vector<Weighted> brute_force_subsets(const std::vector<double>& theta, std::size_t k) {
  const std::size_t n = theta.size();
  std::vector<Weighted> out;
  double total = 0.0;
  for (std::uint64_t bits = 0; bits < (std::uint64_t{1} << n); ++bits) {
    if (static_cast<std::size_t>(__builtin_popcountll(bits)) != k) continue;
    double p = 1.0;
    for (std::size_t i = 0; i < n; ++i) p *= (bits >> i) & 1 ? theta[i] : 1.0 - theta[i];
    out.push_back({mask_from_bits(n, bits), p});
    total += p;
  }
  for (auto& w : out) w.prob /= total;
  return out;
}

/// Central finite difference of a scalar function of a vector.
inline std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                              const std::vector<double>& x, double h) {
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::vector<double> up = x, down = x;
    up[i] += h;
    down[i] -= h;
    grad[i] = (f(up) - f(down)) / (2 * h);
  }
  return grad;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-300});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

/// Uniform probabilities in [lo, hi).
template <class Rng>
std::vector<double> random_theta(Rng& rng, std::size_t n, double lo = 0.02, double hi = 0.98) {
  std::vector<double> theta(n);
  for (double& t : theta) t = rng.uniform(lo, hi);
  return theta;
}

}  // namespace oracle
