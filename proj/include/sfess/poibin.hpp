#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

// Poisson binomial distribution: the law of S = sum_i b_i with independent
// b_i ~ Bernoulli(theta_i). A PMF is returned as a vector indexed by the
// count m = 0..n.

namespace sfess::poibin {

/// Any PMF value below this is unusable as a denominator.
inline constexpr double kDegenerateFloor = 1e-12;
/// Smallest value stored before taking a log.
inline constexpr double kLogFloor = 1e-300;

enum class DftMethod {
  direct,     ///< O(n^2) reference transform.
  fft,        ///< Radix-2, or Bluestein when n + 1 is not a power of two.
  automatic,  ///< fft for long transforms, direct otherwise.
};

/// Throws InvalidArgument unless theta is nonempty with entries in [0, 1].
void validate_probabilities(std::span<const double> theta);

/// PMF via the discrete Fourier transform of the characteristic function
/// sampled at the n + 1 roots of unity. Entries are clamped to [0, 1].
std::vector<double> pmf_dft(std::span<const double> theta,
                            DftMethod method = DftMethod::automatic);

/// PMF via the O(n^2) convolution recurrence. Independent of pmf_dft.
std::vector<double> pmf_dp(std::span<const double> theta);

/// PMF of the sum with entry j removed (length n, counts 0..n-1).
std::vector<double> pmf_leave_one_out(std::span<const double> theta, std::size_t j);

/// For every j: A_j = P(S_{-j} = k - 1) and B_j = P(S_{-j} = k), where S_{-j}
/// omits entry j. Computed from prefix and suffix PMFs truncated at k, so the
/// cost is O(n k) rather than n separate leave-one-out recurrences.
struct LeaveOneOutTerms {
  std::vector<double> below;  // A_j
  std::vector<double> at;     // B_j
};
LeaveOneOutTerms leave_one_out_terms(std::span<const double> theta, std::size_t k);

/// Gradient of log P(S = k) with respect to theta:
/// (A_j - B_j) / P(S = k). Requires every theta_j strictly inside (0, 1);
/// throws DegenerateDistribution when P(S = k) < kDegenerateFloor.
std::vector<double> log_pmf_grad(std::span<const double> theta, std::size_t k);

namespace detail {
/// In-place forward DFT (sign -1) of arbitrary length.
void fft(std::vector<std::complex<double>>& data);
/// Reference O(N^2) forward DFT.
std::vector<std::complex<double>> dft_direct(std::span<const std::complex<double>> data);
}  // namespace detail

}  // namespace sfess::poibin
