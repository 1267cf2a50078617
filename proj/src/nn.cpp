#include "sfess/nn.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "sfess/error.hpp"

namespace sfess::nn {

DropoutNoise DropoutNoise::tiled(std::size_t times) const {
  DropoutNoise out;
  for (const Matrix& m : masks) out.masks.push_back(m.replicate(1, static_cast<Eigen::Index>(times)));
  return out;
}

Network& Network::linear(std::size_t out) {
  Layer layer;
  layer.kind = LayerKind::linear;
  layer.in = output_dim();
  layer.out = out;
  layer.weights = Matrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(layer.in));
  layer.bias = Matrix::Zero(static_cast<Eigen::Index>(out), 1);
  layers_.push_back(std::move(layer));
  return *this;
}

namespace {
Layer elementwise(LayerKind kind, std::size_t dim) {
  Layer layer;
  layer.kind = kind;
  layer.in = layer.out = dim;
  return layer;
}
}  // namespace

Network& Network::relu() {
  layers_.push_back(elementwise(LayerKind::relu, output_dim()));
  return *this;
}

Network& Network::sigmoid() {
  layers_.push_back(elementwise(LayerKind::sigmoid, output_dim()));
  return *this;
}

Network& Network::softmax() {
  layers_.push_back(elementwise(LayerKind::softmax, output_dim()));
  return *this;
}

Network& Network::dropout(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw InvalidArgument("dropout rate must lie in [0, 1)");
  Layer layer = elementwise(LayerKind::dropout, output_dim());
  layer.rate = rate;
  layers_.push_back(std::move(layer));
  return *this;
}

std::size_t Network::output_dim() const noexcept { return layers_.empty() ? input_dim_ : layers_.back().out; }

bool Network::has_dropout() const noexcept {
  for (const Layer& l : layers_) {
    if (l.kind == LayerKind::dropout) return true;
  }
  return false;
}

void Network::initialize(Rng& rng) {
  for (Layer& layer : layers_) {
    if (layer.kind != LayerKind::linear) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
    for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) layer.weights(r, c) = rng.uniform(-bound, bound);
    }
    layer.bias.setZero();
  }
}

DropoutNoise Network::sample_dropout(std::size_t columns, Rng& rng) const {
  DropoutNoise noise;
  for (const Layer& layer : layers_) {
    if (layer.kind != LayerKind::dropout) continue;
    Matrix mask(static_cast<Eigen::Index>(layer.out), static_cast<Eigen::Index>(columns));
    const double keep_scale = 1.0 / (1.0 - layer.rate);
    for (Eigen::Index c = 0; c < mask.cols(); ++c) {
      for (Eigen::Index r = 0; r < mask.rows(); ++r) {
        mask(r, c) = rng.uniform() < layer.rate ? 0.0 : keep_scale;
      }
    }
    noise.masks.push_back(std::move(mask));
  }
  return noise;
}

Matrix Network::forward(const Matrix& input, Mode mode, const DropoutNoise* noise, ForwardCache* cache,
                        Rng* rng) const {
  if (static_cast<std::size_t>(input.rows()) != input_dim_) {
    throw InvalidArgument("input has " + std::to_string(input.rows()) + " rows, network expects " +
                          std::to_string(input_dim_));
  }
  DropoutNoise drawn;
  if (mode == Mode::train && has_dropout() && noise == nullptr) {
    if (rng == nullptr) throw InvalidArgument("train-mode dropout needs fixed noise or a random source");
    drawn = sample_dropout(static_cast<std::size_t>(input.cols()), *rng);
    noise = &drawn;
  }
  if (cache) {
    cache->activations.clear();
    cache->dropout_masks.clear();
    cache->activations.push_back(input);
  }

  Matrix x = input;
  std::size_t dropout_index = 0;
  for (const Layer& layer : layers_) {
    switch (layer.kind) {
      case LayerKind::linear:
        x = (layer.weights * x).colwise() + layer.bias.col(0);
        break;
      case LayerKind::relu:
        x = x.cwiseMax(0.0);
        break;
      case LayerKind::sigmoid:
        x = x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
        break;
      case LayerKind::softmax:
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
          const double peak = x.col(c).maxCoeff();
          x.col(c) = (x.col(c).array() - peak).exp().matrix();
          x.col(c) /= x.col(c).sum();
        }
        break;
      case LayerKind::dropout:
        if (mode == Mode::train) {
          const Matrix& mask = noise->masks.at(dropout_index);
          if (mask.rows() != x.rows() || mask.cols() != x.cols()) {
            throw InvalidArgument("dropout noise shape does not match the batch");
          }
          x = x.cwiseProduct(mask);
          if (cache) cache->dropout_masks.push_back(mask);
        }
        ++dropout_index;
        break;
    }
    if (cache) cache->activations.push_back(x);
  }
  if (cache && mode != Mode::train) {
    // Backward needs a train-mode cache.
    cache->activations.clear();
  }
  return x;
}

Gradients Network::backward(const ForwardCache& cache, const Matrix& grad_output, bool want_input_grad) const {
  if (!cache.valid() || cache.activations.size() != layers_.size() + 1) {
    throw InvalidArgument("backward requires a train-mode forward cache");
  }
  const Matrix& output = cache.activations.back();
  if (grad_output.rows() != output.rows() || grad_output.cols() != output.cols()) {
    throw InvalidArgument("output gradient shape does not match the forward output");
  }

  // Index of the first linear layer: below it no gradient is needed unless
  // the input gradient was requested.
  std::size_t first_param_layer = layers_.size();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].kind == LayerKind::linear) {
      first_param_layer = l;
      break;
    }
  }

  Gradients grads;
  std::vector<Matrix> reversed;
  Matrix delta = grad_output;
  std::size_t dropout_index = cache.dropout_masks.size();
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const Layer& layer = layers_[l];
    const Matrix& in = cache.activations[l];
    const Matrix& out = cache.activations[l + 1];
    const bool propagate = want_input_grad || l > first_param_layer;
    switch (layer.kind) {
      case LayerKind::linear:
        reversed.push_back(delta.rowwise().sum());  // bias
        reversed.push_back(delta * in.transpose());  // weights
        if (propagate) delta = layer.weights.transpose() * delta;
        break;
      case LayerKind::relu:
        delta = delta.cwiseProduct((in.array() > 0.0).cast<double>().matrix());
        break;
      case LayerKind::sigmoid:
        delta = delta.cwiseProduct(out.cwiseProduct((1.0 - out.array()).matrix()));
        break;
      case LayerKind::softmax:
        for (Eigen::Index c = 0; c < delta.cols(); ++c) {
          const double dot = delta.col(c).dot(out.col(c));
          delta.col(c) = out.col(c).cwiseProduct((delta.col(c).array() - dot).matrix());
        }
        break;
      case LayerKind::dropout:
        delta = delta.cwiseProduct(cache.dropout_masks.at(--dropout_index));
        break;
    }
    if (!propagate) break;
  }
  grads.params.assign(std::make_move_iterator(reversed.rbegin()), std::make_move_iterator(reversed.rend()));
  if (want_input_grad) {
    ++input_gradient_calls_;
    grads.input = std::move(delta);
  }
  return grads;
}

std::vector<Matrix*> Network::parameters() {
  std::vector<Matrix*> out;
  for (Layer& layer : layers_) {
    if (layer.kind != LayerKind::linear) continue;
    out.push_back(&layer.weights);
    out.push_back(&layer.bias);
  }
  return out;
}

std::vector<const Matrix*> Network::parameters() const {
  std::vector<const Matrix*> out;
  for (const Layer& layer : layers_) {
    if (layer.kind != LayerKind::linear) continue;
    out.push_back(&layer.weights);
    out.push_back(&layer.bias);
  }
  return out;
}

AdamState make_adam(std::span<const Matrix* const> params, const AdamConfig& config) {
  AdamState state;
  state.config = config;
  for (const Matrix* p : params) {
    state.first.push_back(Matrix::Zero(p->rows(), p->cols()));
    state.second.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
  return state;
}

AdamState make_adam(std::span<Matrix* const> params, const AdamConfig& config) {
  std::vector<const Matrix*> view(params.begin(), params.end());
  return make_adam(std::span<const Matrix* const>(view), config);
}

void adam_step(AdamState& state, std::span<Matrix* const> params, std::span<const Matrix> grads) {
  if (params.size() != grads.size() || params.size() != state.first.size()) {
    throw InvalidArgument("Adam parameter, gradient and state counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols() ||
        params[i]->rows() != state.first[i].rows() || params[i]->cols() != state.first[i].cols()) {
      throw InvalidArgument("Adam shape mismatch for parameter " + std::to_string(i));
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix g = grads[i];
    if (c.weight_decay != 0.0) g += c.weight_decay * *params[i];
    state.first[i] = c.beta1 * state.first[i] + (1.0 - c.beta1) * g;
    state.second[i] = c.beta2 * state.second[i] + (1.0 - c.beta2) * g.cwiseAbs2();
    const auto m_hat = (state.first[i] / correction1).array();
    const auto v_hat = (state.second[i] / correction2).array();
    params[i]->array() -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
  }
}

LossResult bce(const Matrix& output, const Matrix& target) {
  if (output.rows() != target.rows() || output.cols() != target.cols()) {
    throw InvalidArgument("bce output and target shapes differ");
  }
  LossResult r;
  r.per_column = Vector::Zero(output.cols());
  r.grad.resize(output.rows(), output.cols());
  const double rows = static_cast<double>(output.rows());
  for (Eigen::Index c = 0; c < output.cols(); ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < output.rows(); ++i) {
      double y = output(i, c);
      if (y < kLossClamp) {
        y = kLossClamp;
        ++r.clamped;
      } else if (y > 1.0 - kLossClamp) {
        y = 1.0 - kLossClamp;
        ++r.clamped;
      }
      const double t = target(i, c);
      total -= t * std::log(y) + (1.0 - t) * std::log1p(-y);
      r.grad(i, c) = ((1.0 - t) / (1.0 - y) - t / y) / rows;
    }
    r.per_column(c) = total / rows;
  }
  return r;
}

LossResult cross_entropy(const Matrix& probabilities, std::span<const int> labels) {
  if (static_cast<std::size_t>(probabilities.cols()) != labels.size()) {
    throw InvalidArgument("one label per column is required");
  }
  LossResult r;
  r.per_column = Vector::Zero(probabilities.cols());
  r.grad = Matrix::Zero(probabilities.rows(), probabilities.cols());
  for (Eigen::Index c = 0; c < probabilities.cols(); ++c) {
    const int label = labels[static_cast<std::size_t>(c)];
    if (label < 0 || label >= probabilities.rows()) throw InvalidArgument("label out of range");
    double y = probabilities(label, c);
    if (y < kLossClamp) {
      y = kLossClamp;
      ++r.clamped;
    }
    r.per_column(c) = -std::log(y);
    r.grad(label, c) = -1.0 / y;
  }
  return r;
}

namespace {

constexpr const char* kCheckpointMagic = "sfess-checkpoint";
constexpr int kCheckpointVersion = 1;

void write_matrix(std::ostream& out, const char* tag, const Matrix& m) {
  out << tag << ' ' << m.rows() << ' ' << m.cols();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << ' ' << m(r, c);
  }
  out << '\n';
}

class TokenReader {
 public:
  explicit TokenReader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) throw ParseError("unexpected end of checkpoint", offset());
    return w;
  }
  void expect(const std::string& w) {
    const std::size_t at = offset();
    if (word() != w) throw ParseError("expected '" + w + "' in checkpoint", at);
  }
  double real() {
    const std::size_t at = offset();
    const std::string w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end != w.c_str() + w.size()) throw ParseError("bad number '" + w + "' in checkpoint", at);
    return v;
  }
  std::size_t count() {
    const double v = real();
    if (v < 0 || v != std::floor(v)) throw ParseError("bad count in checkpoint", offset());
    return static_cast<std::size_t>(v);
  }
  Matrix matrix(const std::string& tag) {
    expect(tag);
    const auto rows = static_cast<Eigen::Index>(count());
    const auto cols = static_cast<Eigen::Index>(count());
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = real();
    }
    return m;
  }

 private:
  std::size_t offset() {
    const auto pos = in_.tellg();
    return pos < 0 ? 0 : static_cast<std::size_t>(pos);
  }
  std::istream& in_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Network& net, const AdamState& adam) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << std::setprecision(17);
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "input " << net.input_dim() << '\n';
  out << "layers " << net.layers().size() << '\n';
  for (const Layer& layer : net.layers()) {
    switch (layer.kind) {
      case LayerKind::linear:
        out << "linear " << layer.out << '\n';
        write_matrix(out, "W", layer.weights);
        write_matrix(out, "b", layer.bias);
        break;
      case LayerKind::relu: out << "relu\n"; break;
      case LayerKind::sigmoid: out << "sigmoid\n"; break;
      case LayerKind::softmax: out << "softmax\n"; break;
      case LayerKind::dropout: out << "dropout " << layer.rate << '\n'; break;
    }
  }
  const AdamConfig& c = adam.config;
  out << "adam " << adam.step << ' ' << c.learning_rate << ' ' << c.beta1 << ' ' << c.beta2 << ' '
      << c.epsilon << ' ' << c.weight_decay << ' ' << adam.first.size() << '\n';
  for (std::size_t i = 0; i < adam.first.size(); ++i) {
    write_matrix(out, "m", adam.first[i]);
    write_matrix(out, "v", adam.second[i]);
  }
  out << "end\n";
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  TokenReader reader(in);
  reader.expect(kCheckpointMagic);
  if (reader.count() != kCheckpointVersion) throw ParseError("unsupported checkpoint version", 0);
  reader.expect("input");
  Checkpoint cp{Network(reader.count()), {}};
  reader.expect("layers");
  const std::size_t layer_count = reader.count();
  for (std::size_t l = 0; l < layer_count; ++l) {
    const std::string kind = reader.word();
    if (kind == "linear") {
      const std::size_t out = reader.count();
      cp.net.linear(out);
      Layer& layer = cp.net.layers().back();
      Matrix w = reader.matrix("W");
      Matrix b = reader.matrix("b");
      if (w.rows() != layer.weights.rows() || w.cols() != layer.weights.cols() || b.rows() != layer.bias.rows()) {
        throw ParseError("linear layer shape mismatch in checkpoint", 0);
      }
      layer.weights = std::move(w);
      layer.bias = std::move(b);
    } else if (kind == "relu") {
      cp.net.relu();
    } else if (kind == "sigmoid") {
      cp.net.sigmoid();
    } else if (kind == "softmax") {
      cp.net.softmax();
    } else if (kind == "dropout") {
      cp.net.dropout(reader.real());
    } else {
      throw ParseError("unknown layer kind '" + kind + "' in checkpoint", 0);
    }
  }
  reader.expect("adam");
  cp.adam.step = reader.count();
  cp.adam.config.learning_rate = reader.real();
  cp.adam.config.beta1 = reader.real();
  cp.adam.config.beta2 = reader.real();
  cp.adam.config.epsilon = reader.real();
  cp.adam.config.weight_decay = reader.real();
  const std::size_t moments = reader.count();
  for (std::size_t i = 0; i < moments; ++i) {
    cp.adam.first.push_back(reader.matrix("m"));
    cp.adam.second.push_back(reader.matrix("v"));
  }
  reader.expect("end");
  return cp;
}

}  // namespace sfess::nn
