#pragma once

#include <limits>
#include <span>
#include <string>

namespace sfess {

/// 10 log10(1 / MSE) for images in [0, 1]. Returns +infinity when the MSE is
/// zero; format_metric writes that as "inf".
double metric_psnr(std::span<const double> prediction, std::span<const double> target);

/// Fraction of positions where prediction equals label.
double metric_accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Shortest round-trip decimal, with "inf", "-inf" and "nan" for non-finite values.
std::string format_metric(double value);

}  // namespace sfess
