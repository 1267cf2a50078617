#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "sfess/error.hpp"
#include "sfess/nn.hpp"

using namespace sfess;
using namespace sfess::nn;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo = -1, double hi = 1) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// Checks every parameter and input gradient of net against central differences.
template <class LossFn>
void check_gradients(Network& net, const Matrix& x, const DropoutNoise* noise, LossFn&& loss_fn) {
  ForwardCache cache;
  const Matrix y = net.forward(x, Mode::train, noise, &cache);
  const LossResult loss = loss_fn(y);
  const Gradients g = net.backward(cache, loss.grad, true);
  auto total = [&] { return loss_fn(net.forward(x, Mode::train, noise)).per_column.sum(); };
  constexpr double h = 1e-6;
  auto params = net.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (Eigen::Index i = 0; i < params[p]->size(); ++i) {
      double& v = params[p]->data()[i];
      const double saved = v;
      v = saved + h;
      const double up = total();
      v = saved - h;
      const double down = total();
      v = saved;
      CHECK(g.params[p].data()[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5).scale(1.0));
    }
  }
  Matrix xm = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = xm.data()[i];
    xm.data()[i] = saved + h;
    const double up = loss_fn(net.forward(xm, Mode::train, noise)).per_column.sum();
    xm.data()[i] = saved - h;
    const double down = loss_fn(net.forward(xm, Mode::train, noise)).per_column.sum();
    xm.data()[i] = saved;
    CHECK(g.input.data()[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5).scale(1.0));
  }
}

}  // namespace

TEST_CASE("classifier gradients with fixed dropout noise") {
  Rng rng(1);
  Network net(4);
  net.linear(6).relu().dropout(0.3).linear(3).softmax();
  net.initialize(rng);
  const Matrix x = random_matrix(4, 5, rng);
  const std::vector<int> labels = {0, 2, 1, 1, 0};
  const DropoutNoise noise = net.sample_dropout(5, rng);
  check_gradients(net, x, &noise, [&](const Matrix& y) { return cross_entropy(y, labels); });
}

TEST_CASE("autoencoder gradients") {
  Rng rng(2);
  Network net(5);
  net.linear(4).relu().linear(5).sigmoid();
  net.initialize(rng);
  const Matrix x = random_matrix(5, 3, rng, 0, 1);
  check_gradients(net, x, nullptr, [&](const Matrix& y) { return bce(y, x); });
}

TEST_CASE("input gradient is counted only when requested") {
  Rng rng(3);
  Network net(3);
  net.linear(2).sigmoid();
  net.initialize(rng);
  const Matrix x = random_matrix(3, 2, rng);
  ForwardCache cache;
  const Matrix y = net.forward(x, Mode::train, nullptr, &cache);
  const Gradients without = net.backward(cache, Matrix::Ones(2, 2), false);
  CHECK(without.input.size() == 0);
  CHECK(net.input_gradient_calls() == 0);
  const Gradients with = net.backward(cache, Matrix::Ones(2, 2), true);
  CHECK(with.input.rows() == 3);
  CHECK(net.input_gradient_calls() == 1);
  CHECK(without.params[0] == with.params[0]);
}

TEST_CASE("initialization and eval mode") {
  Rng rng(4);
  Network net(16);
  net.linear(8).relu().dropout(0.5).linear(2).softmax();
  net.initialize(rng);
  const auto params = std::as_const(net).parameters();
  REQUIRE(params.size() == 4);
  CHECK(params[0]->cwiseAbs().maxCoeff() <= 0.25);
  CHECK(params[1]->isZero());
  CHECK(params[2]->cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(8.0));
  const Matrix x = random_matrix(16, 4, rng);
  CHECK(net.forward(x, Mode::eval) == net.forward(x, Mode::eval));
  const Matrix probs = net.forward(x, Mode::eval);
  for (Eigen::Index c = 0; c < 4; ++c) CHECK(probs.col(c).sum() == doctest::Approx(1.0));
  CHECK_THROWS_AS(net.forward(x, Mode::train), InvalidArgument);
  CHECK_THROWS_AS(net.forward(random_matrix(3, 1, rng), Mode::eval), InvalidArgument);
  CHECK_THROWS_AS(Network(2).dropout(1.0), InvalidArgument);
}

TEST_CASE("tiled dropout noise repeats column blocks") {
  Rng rng(5);
  Network net(2);
  net.linear(3).relu().dropout(0.5).linear(1).sigmoid();
  net.initialize(rng);
  const DropoutNoise noise = net.sample_dropout(2, rng);
  const DropoutNoise tiled = noise.tiled(3);
  REQUIRE(tiled.masks[0].cols() == 6);
  for (Eigen::Index c = 0; c < 6; ++c) CHECK(tiled.masks[0].col(c) == noise.masks[0].col(c % 2));
  for (Eigen::Index i = 0; i < noise.masks[0].size(); ++i) {
    const double v = noise.masks[0].data()[i];
    CHECK((v == 0.0 || v == 2.0));
  }
}

TEST_CASE("losses") {
  const Matrix out = Matrix::Constant(4, 1, 0.5);
  Matrix target(4, 1);
  target << 0, 1, 0, 1;
  CHECK(bce(out, target).per_column(0) == doctest::Approx(std::log(2.0)));
  Matrix probs(3, 2);
  probs << 0.2, 0.0, 0.5, 0.0, 0.3, 1.0;
  const LossResult ce = cross_entropy(probs, std::vector<int>{1, 0});
  CHECK(ce.per_column(0) == doctest::Approx(-std::log(0.5)));
  CHECK(ce.per_column(1) == doctest::Approx(-std::log(kLossClamp)));
  CHECK(ce.clamped >= 1);
  CHECK_THROWS_AS(cross_entropy(probs, std::vector<int>{3, 0}), InvalidArgument);
  CHECK_THROWS_AS(bce(out, Matrix::Zero(3, 1)), InvalidArgument);
}

TEST_CASE("adam step") {
  Matrix p(2, 1);
  p << 1.0, -1.0;
  std::vector<Matrix*> params = {&p};
  AdamState state = make_adam(std::span<Matrix* const>(params), {0.1, 0.9, 0.999, 1e-8, 0.0});
  Matrix g(2, 1);
  g << 4.0, -0.5;
  adam_step(state, std::span<Matrix* const>(params), std::vector<Matrix>{g});
  CHECK(p(0) == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(p(1) == doctest::Approx(-0.9).epsilon(1e-7));
  CHECK(state.step == 1);

  Matrix q = Matrix::Constant(1, 1, 2.0);
  std::vector<Matrix*> qs = {&q};
  AdamState decay = make_adam(std::span<Matrix* const>(qs), {0.1, 0.9, 0.999, 1e-8, 0.5});
  adam_step(decay, std::span<Matrix* const>(qs), std::vector<Matrix>{Matrix::Zero(1, 1)});
  CHECK(q(0) == doctest::Approx(1.9).epsilon(1e-7));
  CHECK_THROWS_AS(adam_step(decay, std::span<Matrix* const>(qs), std::vector<Matrix>{Matrix::Zero(2, 1)}), InvalidArgument);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(6);
  Network net(7);
  net.linear(5).relu().dropout(0.25).linear(3).softmax();
  net.initialize(rng);
  auto params = net.parameters();
  AdamState adam = make_adam(std::span<Matrix* const>(params), {1e-3, 0.9, 0.999, 1e-8, 1e-4});
  std::vector<Matrix> grads;
  for (Matrix* p : params) grads.push_back(random_matrix(p->rows(), p->cols(), rng));
  adam_step(adam, std::span<Matrix* const>(params), grads);

  const auto path = std::filesystem::temp_directory_path() / "sfess_nn_checkpoint.txt";
  save_checkpoint(path, net, adam);
  const Checkpoint back = load_checkpoint(path);
  const auto restored = back.net.parameters();
  REQUIRE(restored.size() == params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(*restored[i] == *params[i]);
    CHECK(back.adam.first[i] == adam.first[i]);
    CHECK(back.adam.second[i] == adam.second[i]);
  }
  CHECK(back.adam.step == 1);
  CHECK(back.net.layers()[2].rate == 0.25);
  const Matrix x = random_matrix(7, 3, rng);
  CHECK(back.net.forward(x, Mode::eval) == net.forward(x, Mode::eval));

  std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}

TEST_CASE("identity linear layer and zero upstream gradient") {
  Network net(3);
  net.linear(3);
  net.layers()[0].weights = Matrix::Identity(3, 3);
  net.layers()[0].bias = Matrix::Zero(3, 1);
  Rng rng(7);
  const Matrix x = random_matrix(3, 4, rng);
  CHECK(net.forward(x, Mode::eval) == x);
  ForwardCache cache;
  net.forward(x, Mode::train, nullptr, &cache);
  const Gradients g = net.backward(cache, Matrix::Zero(3, 4), true);
  for (const Matrix& p : g.params) CHECK(p.isZero());
  CHECK(g.input.isZero());
}

TEST_CASE("linear least squares gradient matches the closed form") {
  Rng rng(8);
  Network net(4);
  net.linear(2);
  net.initialize(rng);
  const Matrix x = random_matrix(4, 6, rng);
  const Matrix y = random_matrix(2, 6, rng);
  ForwardCache cache;
  const Matrix out = net.forward(x, Mode::train, nullptr, &cache);
  const Matrix residual = out - y;  // d/d out of 0.5 * ||out - y||^2
  const Gradients g = net.backward(cache, residual, false);
  CHECK((g.params[0] - residual * x.transpose()).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((g.params[1] - residual.rowwise().sum()).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("adam leaves parameters alone without gradient and minimizes a quadratic") {
  Matrix p = Matrix::Constant(1, 1, 0.7);
  std::vector<Matrix*> ps = {&p};
  AdamState still = make_adam(std::span<Matrix* const>(ps), {0.1, 0.9, 0.999, 1e-8, 0.0});
  adam_step(still, std::span<Matrix* const>(ps), std::vector<Matrix>{Matrix::Zero(1, 1)});
  CHECK(p(0) == 0.7);

  Matrix x = Matrix::Constant(1, 1, 0.0);
  std::vector<Matrix*> xs = {&x};
  AdamState adam = make_adam(std::span<Matrix* const>(xs), {0.1, 0.9, 0.999, 1e-8, 0.0});
  for (int step = 0; step < 100; ++step) {
    const Matrix grad = Matrix::Constant(1, 1, 2.0 * (x(0) - 0.1));
    adam_step(adam, std::span<Matrix* const>(xs), std::vector<Matrix>{grad});
  }
  CHECK(std::abs(x(0) - 0.1) < 1e-3);
}

TEST_CASE("loss reference values") {
  Matrix target(4, 1);
  target << 0, 1, 1, 0;
  const LossResult exact = bce(target, target);
  CHECK(exact.per_column(0) < 1e-11);
  CHECK(exact.clamped == 4);
  const LossResult uniform = cross_entropy(Matrix::Constant(10, 1, 0.1), std::vector<int>{3});
  CHECK(uniform.per_column(0) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("memorization loss decreases steadily") {
  Rng rng(9);
  Network net(8);
  net.linear(16).relu().linear(2).softmax();
  net.initialize(rng);
  const Matrix x = random_matrix(8, 200, rng);
  std::vector<int> labels(200);
  for (auto& l : labels) l = static_cast<int>(rng.below(2));
  auto params = net.parameters();
  AdamState adam = make_adam(std::span<Matrix* const>(params), {1e-3, 0.9, 0.999, 1e-8, 0.0});
  double previous = INFINITY;
  for (int step = 0; step < 50; ++step) {
    ForwardCache cache;
    const LossResult loss = cross_entropy(net.forward(x, Mode::train, nullptr, &cache), labels);
    CHECK(loss.mean() < previous);
    previous = loss.mean();
    const Gradients g = net.backward(cache, loss.grad / 200.0, false);
    adam_step(adam, std::span<Matrix* const>(params), g.params);
  }
}
