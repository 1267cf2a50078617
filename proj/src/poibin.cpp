#include "sfess/poibin.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "sfess/error.hpp"

namespace sfess::poibin {

namespace {

using Complex = std::complex<double>;

// exp(sign * 2 pi i * t / period), with t reduced first so large products of
// indices do not lose phase accuracy.
Complex root_of_unity(std::size_t t, std::size_t period, double sign) {
  const auto reduced = static_cast<double>(t % period);
  return std::polar(1.0, sign * 2.0 * std::numbers::pi * reduced / static_cast<double>(period));
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft_radix2(std::vector<Complex>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  std::vector<Complex> twiddle(n / 2);
  for (std::size_t j = 0; j < n / 2; ++j) twiddle[j] = root_of_unity(j, n, -1.0);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n / len;
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t j = 0; j < half; ++j) {
        const Complex u = a[start + j];
        const Complex v = a[start + j + half] * twiddle[j * stride];
        a[start + j] = u + v;
        a[start + j + half] = u - v;
      }
    }
  }
}

void fft_bluestein(std::vector<Complex>& x) {
  const std::size_t n = x.size();
  std::size_t len = 1;
  while (len < 2 * n - 1) len <<= 1;

  // chirp_j = exp(-pi i j^2 / n); j^2 is reduced mod 2n.
  std::vector<Complex> chirp(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t sq = (j * j) % (2 * n);
    chirp[j] = std::polar(1.0, -std::numbers::pi * static_cast<double>(sq) / static_cast<double>(n));
  }
  std::vector<Complex> a(len), b(len);
  for (std::size_t j = 0; j < n; ++j) a[j] = x[j] * chirp[j];
  b[0] = std::conj(chirp[0]);
  for (std::size_t j = 1; j < n; ++j) b[j] = b[len - j] = std::conj(chirp[j]);

  fft_radix2(a);
  fft_radix2(b);
  for (std::size_t j = 0; j < len; ++j) a[j] = std::conj(a[j] * b[j]);
  fft_radix2(a);  // inverse via conjugation
  const double scale = 1.0 / static_cast<double>(len);
  for (std::size_t m = 0; m < n; ++m) x[m] = chirp[m] * std::conj(a[m]) * scale;
}

}  // namespace

namespace detail {

void fft(std::vector<Complex>& data) {
  if (data.size() <= 1) return;
  if (is_power_of_two(data.size())) {
    fft_radix2(data);
  } else {
    fft_bluestein(data);
  }
}

std::vector<Complex> dft_direct(std::span<const Complex> data) {
  const std::size_t n = data.size();
  std::vector<Complex> table(n);
  for (std::size_t t = 0; t < n; ++t) table[t] = root_of_unity(t, n, -1.0);
  std::vector<Complex> out(n);
  for (std::size_t m = 0; m < n; ++m) {
    Complex acc{0.0, 0.0};
    for (std::size_t l = 0; l < n; ++l) acc += data[l] * table[(l * m) % n];
    out[m] = acc;
  }
  return out;
}

}  // namespace detail

void validate_probabilities(std::span<const double> theta) {
  if (theta.empty()) throw InvalidArgument("probability vector must be nonempty");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (!(theta[i] >= 0.0 && theta[i] <= 1.0)) {
      throw InvalidArgument("probability " + std::to_string(i) + " = " + std::to_string(theta[i]) +
                            " is outside [0, 1]");
    }
  }
}

std::vector<double> pmf_dft(std::span<const double> theta, DftMethod method) {
  validate_probabilities(theta);
  const std::size_t n = theta.size();
  const std::size_t len = n + 1;

  // Characteristic function at each root of unity: prod_i (theta_i w^l + 1 - theta_i).
  std::vector<Complex> roots(len);
  for (std::size_t l = 0; l < len; ++l) roots[l] = root_of_unity(l, len, +1.0);
  std::vector<Complex> spectrum(len);
  for (std::size_t l = 0; l < len; ++l) {
    Complex prod{1.0, 0.0};
    for (double p : theta) prod *= p * roots[l] + (1.0 - p);
    spectrum[l] = prod;
  }

  if (method == DftMethod::automatic) method = len >= 64 ? DftMethod::fft : DftMethod::direct;
  if (method == DftMethod::fft) {
    detail::fft(spectrum);
  } else {
    spectrum = detail::dft_direct(spectrum);
  }

  std::vector<double> masses(len);
  const double scale = 1.0 / static_cast<double>(len);
  for (std::size_t m = 0; m < len; ++m) {
    masses[m] = std::clamp(spectrum[m].real() * scale, 0.0, 1.0);
  }
  return masses;
}

std::vector<double> pmf_dp(std::span<const double> theta) {
  validate_probabilities(theta);
  std::vector<double> table(theta.size() + 1, 0.0);
  table[0] = 1.0;
  std::size_t filled = 0;
  for (double p : theta) {
    ++filled;
    for (std::size_t m = filled; m > 0; --m) table[m] = p * table[m - 1] + (1.0 - p) * table[m];
    table[0] *= 1.0 - p;
  }
  return table;
}

std::vector<double> pmf_leave_one_out(std::span<const double> theta, std::size_t j) {
  if (j >= theta.size()) {
    throw InvalidArgument("leave-one-out index " + std::to_string(j) + " out of range for n = " +
                          std::to_string(theta.size()));
  }
  std::vector<double> reduced;
  reduced.reserve(theta.size() - 1);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (i != j) reduced.push_back(theta[i]);
  }
  if (reduced.empty()) return {1.0};
  return pmf_dp(reduced);
}

LeaveOneOutTerms leave_one_out_terms(std::span<const double> theta, std::size_t k) {
  validate_probabilities(theta);
  const std::size_t n = theta.size();
  if (k > n) throw InvalidArgument("count k exceeds n");
  const std::size_t width = k + 1;

  // prefix[i] = PMF of the first i entries; suffix[i] = PMF of entries i..n-1.
  // Both truncated to counts 0..k.
  std::vector<double> prefix((n + 1) * width, 0.0);
  std::vector<double> suffix((n + 1) * width, 0.0);
  prefix[0] = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = theta[i];
    const double* prev = &prefix[i * width];
    double* next = &prefix[(i + 1) * width];
    next[0] = (1.0 - p) * prev[0];
    for (std::size_t m = 1; m < width; ++m) next[m] = p * prev[m - 1] + (1.0 - p) * prev[m];
  }
  suffix[n * width] = 1.0;
  for (std::size_t i = n; i-- > 0;) {
    const double p = theta[i];
    const double* prev = &suffix[(i + 1) * width];
    double* next = &suffix[i * width];
    next[0] = (1.0 - p) * prev[0];
    for (std::size_t m = 1; m < width; ++m) next[m] = p * prev[m - 1] + (1.0 - p) * prev[m];
  }

  auto convolve_at = [&](std::size_t j, std::size_t count) {
    const double* left = &prefix[j * width];
    const double* right = &suffix[(j + 1) * width];
    double acc = 0.0;
    for (std::size_t a = 0; a <= count; ++a) acc += left[a] * right[count - a];
    return acc;
  };

  LeaveOneOutTerms terms{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (std::size_t j = 0; j < n; ++j) {
    terms.below[j] = k == 0 ? 0.0 : convolve_at(j, k - 1);
    terms.at[j] = convolve_at(j, k);
  }
  return terms;
}

std::vector<double> log_pmf_grad(std::span<const double> theta, std::size_t k) {
  validate_probabilities(theta);
  if (k > theta.size()) throw InvalidArgument("count k exceeds n");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (theta[i] <= 0.0 || theta[i] >= 1.0) {
      throw InvalidArgument("gradient requires probability " + std::to_string(i) +
                            " strictly inside (0, 1)");
    }
  }
  const double mass = pmf_dft(theta)[k];
  if (mass < kDegenerateFloor) {
    throw DegenerateDistribution("P(S = " + std::to_string(k) + ") = " + std::to_string(mass) +
                                 " is below the degenerate floor");
  }
  const LeaveOneOutTerms terms = leave_one_out_terms(theta, k);
  std::vector<double> grad(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) grad[j] = (terms.below[j] - terms.at[j]) / mass;
  return grad;
}

}  // namespace sfess::poibin
