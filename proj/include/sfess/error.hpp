#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sfess {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  /// Short machine-readable category, e.g. "invalid_argument".
  virtual const char* kind() const noexcept { return "error"; }
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "invalid_argument"; }
};

/// A mask whose number of selected entries does not match the distribution's k.
class InvalidSupport : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
  const char* kind() const noexcept override { return "invalid_support"; }
};

/// P(sum = k) fell below the usable floor, so logs and ratios are meaningless.
class DegenerateDistribution : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "degenerate_distribution"; }
};

/// Unknown key or malformed value in a run configuration.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
  const char* kind() const noexcept override { return "config_error"; }
};

class TooLarge : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "too_large"; }
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  const char* kind() const noexcept override { return "parse_error"; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// An objective threw while being evaluated on a sampled mask.
class ObjectiveError : public Error {
 public:
  ObjectiveError(const std::string& what, std::vector<std::size_t> selected)
      : Error(what), selected_(std::move(selected)) {}
  const char* kind() const noexcept override { return "objective_error"; }
  const std::vector<std::size_t>& selected() const noexcept { return selected_; }

 private:
  std::vector<std::size_t> selected_;
};

/// Training hit a non-finite loss or gradient.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t step)
      : Error(what + " (at step " + std::to_string(step) + ")"), step_(step) {}
  const char* kind() const noexcept override { return "training_error"; }
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io_error"; }
};

}  // namespace sfess
