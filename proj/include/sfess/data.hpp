#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sfess {

/// One input x. Features are intensities in [0, 1].
struct DataExample {
  std::vector<double> features;
  std::optional<int> label;
  /// Reconstruction target; when absent the features are the target.
  std::optional<std::vector<double>> target;

  std::span<const double> target_or_features() const {
    return target ? std::span<const double>(*target) : std::span<const double>(features);
  }
};

using Dataset = std::vector<DataExample>;

struct DataSplits {
  Dataset train;
  Dataset validation;
  Dataset test;
};

struct SplitSizes {
  std::size_t train = 4000;
  std::size_t validation = 1000;
  std::size_t test = 1000;
  std::size_t total() const { return train + validation + test; }
};

// IDX containers: big-endian magic 0x00000803 for u8 images (count, rows,
// cols) and 0x00000801 for u8 labels (count).
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxImages {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::vector<std::uint8_t>> images;
};

/// Parsers throw ParseError carrying the byte offset of the first problem.
IdxImages parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_idx_images(const IdxImages& images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Loads an image/label pair, scales pixels by 1/255, shuffles with `seed` and
/// cuts the requested splits in train, validation, test order.
DataSplits load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                            const SplitSizes& sizes, std::uint64_t seed);

/// Ground-truth feature-selection task. Every feature is an independent fair
/// coin in {0, 1}; the label is 1 exactly when a strict majority of the
/// informative features are on. An odd informative count keeps the rule
/// unambiguous.
struct SyntheticTask {
  std::vector<std::size_t> informative;  // sorted
  Dataset examples;
};
SyntheticTask make_synthetic(std::size_t n, std::span<const std::size_t> informative,
                             std::size_t samples, std::uint64_t seed);
/// Labels a feature vector with the synthetic rule.
int synthetic_label(std::span<const double> features, std::span<const std::size_t> informative);

/// Shuffles and cuts an in-memory dataset into splits.
DataSplits split_dataset(Dataset data, const SplitSizes& sizes, std::uint64_t seed);

}  // namespace sfess
