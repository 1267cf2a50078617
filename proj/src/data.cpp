#include "sfess/data.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>

#include "sfess/error.hpp"
#include "sfess/random.hpp"

namespace sfess {

namespace {

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t read_u32_be(const char* what) {
    require(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_++];
    return v;
  }

  std::span<const std::uint8_t> read_block(std::size_t count, const char* what) {
    require(count, what);
    auto block = bytes_.subspan(pos_, count);
    pos_ += count;
    return block;
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void require(std::size_t count, const char* what) {
    if (remaining() < count) {
      throw ParseError(std::string("truncated IDX file while reading ") + what, pos_);
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

}  // namespace

IdxImages parse_idx_images(std::span<const std::uint8_t> bytes) {
  ByteReader reader(bytes);
  const std::uint32_t magic = reader.read_u32_be("magic number");
  if (magic != kIdxImageMagic) throw ParseError("bad IDX image magic number", 0);
  const std::size_t count = reader.read_u32_be("image count");
  IdxImages out;
  out.rows = reader.read_u32_be("row count");
  out.cols = reader.read_u32_be("column count");
  const std::size_t pixels = out.rows * out.cols;
  if (pixels == 0) throw ParseError("IDX images have zero size", 8);
  out.images.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto block = reader.read_block(pixels, "pixel data");
    out.images.emplace_back(block.begin(), block.end());
  }
  if (reader.remaining() != 0) throw ParseError("trailing bytes after IDX image data", reader.offset());
  return out;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
  ByteReader reader(bytes);
  const std::uint32_t magic = reader.read_u32_be("magic number");
  if (magic != kIdxLabelMagic) throw ParseError("bad IDX label magic number", 0);
  const std::size_t count = reader.read_u32_be("label count");
  auto block = reader.read_block(count, "label data");
  if (reader.remaining() != 0) throw ParseError("trailing bytes after IDX label data", reader.offset());
  return {block.begin(), block.end()};
}

std::vector<std::uint8_t> encode_idx_images(const IdxImages& images) {
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.images.size() * images.rows * images.cols);
  put_u32_be(out, kIdxImageMagic);
  put_u32_be(out, static_cast<std::uint32_t>(images.images.size()));
  put_u32_be(out, static_cast<std::uint32_t>(images.rows));
  put_u32_be(out, static_cast<std::uint32_t>(images.cols));
  for (const auto& img : images.images) {
    if (img.size() != images.rows * images.cols) throw InvalidArgument("image has wrong pixel count");
    out.insert(out.end(), img.begin(), img.end());
  }
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  put_u32_be(out, kIdxLabelMagic);
  put_u32_be(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

DataSplits split_dataset(Dataset data, const SplitSizes& sizes, std::uint64_t seed) {
  if (sizes.total() > data.size()) {
    throw InvalidArgument("requested " + std::to_string(sizes.total()) + " examples but only " +
                          std::to_string(data.size()) + " are available");
  }
  Rng rng(Rng::mix(seed));
  rng.shuffle(std::span<DataExample>(data));
  DataSplits out;
  auto take = [&](std::size_t begin, std::size_t count) {
    return Dataset(std::make_move_iterator(data.begin() + static_cast<std::ptrdiff_t>(begin)),
                   std::make_move_iterator(data.begin() + static_cast<std::ptrdiff_t>(begin + count)));
  };
  out.train = take(0, sizes.train);
  out.validation = take(sizes.train, sizes.validation);
  out.test = take(sizes.train + sizes.validation, sizes.test);
  return out;
}

DataSplits load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                            const SplitSizes& sizes, std::uint64_t seed) {
  const IdxImages imgs = parse_idx_images(read_file_bytes(images));
  const std::vector<std::uint8_t> labs = parse_idx_labels(read_file_bytes(labels));
  if (imgs.images.size() != labs.size()) {
    throw ParseError("image count " + std::to_string(imgs.images.size()) +
                         " does not match label count " + std::to_string(labs.size()),
                     4);
  }
  Dataset data;
  data.reserve(labs.size());
  for (std::size_t i = 0; i < labs.size(); ++i) {
    DataExample ex;
    ex.features.resize(imgs.images[i].size());
    std::transform(imgs.images[i].begin(), imgs.images[i].end(), ex.features.begin(),
                   [](std::uint8_t px) { return static_cast<double>(px) / 255.0; });
    ex.label = labs[i];
    data.push_back(std::move(ex));
  }
  return split_dataset(std::move(data), sizes, seed);
}

int synthetic_label(std::span<const double> features, std::span<const std::size_t> informative) {
  std::size_t on = 0;
  for (std::size_t i : informative) on += features[i] > 0.5 ? 1 : 0;
  return 2 * on > informative.size() ? 1 : 0;
}

SyntheticTask make_synthetic(std::size_t n, std::span<const std::size_t> informative,
                             std::size_t samples, std::uint64_t seed) {
  if (informative.empty() || informative.size() >= n) {
    throw InvalidArgument("need 0 < informative count < n");
  }
  SyntheticTask task;
  task.informative.assign(informative.begin(), informative.end());
  std::sort(task.informative.begin(), task.informative.end());
  if (std::adjacent_find(task.informative.begin(), task.informative.end()) != task.informative.end() ||
      task.informative.back() >= n) {
    throw InvalidArgument("informative indices must be distinct and below n");
  }
  Rng rng(Rng::mix(seed ^ 0x5f3759dfULL));
  task.examples.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    DataExample ex;
    ex.features.resize(n);
    for (double& v : ex.features) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    ex.label = synthetic_label(ex.features, task.informative);
    task.examples.push_back(std::move(ex));
  }
  return task;
}

}  // namespace sfess
