#include <doctest.h>

#include <cmath>

#include "pic/nn.hpp"
#include "pic/oracles.hpp"

using namespace pic;
using namespace pic::nn;

namespace {

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 2.0 * uniform01(rng) - 1.0;
  return m;
}

}  // namespace

TEST_CASE("forward closed forms") {
  Rng rng(1);
  auto zero = DenseNet::mlp(3, {4, 4}, 2, Activation::relu, rng);
  for (auto& layer : zero.layers()) {
    layer.w.setZero();
    layer.b.setZero();
  }
  CHECK(zero.forward(random_matrix(3, 5, rng)).isZero(0.0));

  DenseNet identity({3, 3}, {Activation::none}, rng);
  identity.layers()[0].w.setIdentity();
  identity.layers()[0].b.setZero();
  const Matrix x = random_matrix(3, 2, rng);
  CHECK(identity.forward(x) == x);

  DenseNet soft({2, 2}, {Activation::softmax}, rng);
  soft.layers()[0].w.setZero();
  soft.layers()[0].b.setZero();
  const Matrix p = soft.forward(Matrix::Ones(2, 1));
  CHECK(p(0, 0) == 0.5);
  CHECK(p(1, 0) == 0.5);

  CHECK_THROWS_AS(identity.forward(Matrix::Ones(2, 1)), Error);
  CHECK_THROWS_AS(DenseNet({2, 3, 2}, {Activation::softmax, Activation::none}, rng), Error);
}

TEST_CASE("softmax columns are normalized and shift invariant") {
  Rng rng(2);
  const Matrix logits = 10.0 * random_matrix(6, 20, rng);
  const Matrix p = softmax_columns(logits);
  const Matrix shifted = softmax_columns((logits.array() + 123.0).matrix());
  for (Eigen::Index j = 0; j < p.cols(); ++j) CHECK(std::abs(p.col(j).sum() - 1.0) < 1e-12);
  CHECK((p - shifted).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("backward closed forms") {
  Rng rng(3);
  auto net = DenseNet::mlp(4, {8, 8}, 3, Activation::tanh, rng);
  const Matrix x = random_matrix(4, 5, rng);
  Cache cache;
  const Matrix y = net.forward(x, &cache);
  Grads grads;
  net.backward(cache, Matrix::Zero(y.rows(), y.cols()), grads);
  CHECK(grads.max_abs() == 0.0);

  DenseNet linear({3, 2}, {Activation::none}, rng);
  const Matrix xi = random_matrix(3, 1, rng);
  const Matrix c = random_matrix(2, 1, rng);
  Cache lc;
  linear.forward(xi, &lc);
  Grads lg;
  const Matrix dx = linear.backward(lc, c, lg);
  CHECK((lg.w[0] - c * xi.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((lg.b[0] - c).cwiseAbs().maxCoeff() == 0.0);
  CHECK((dx - linear.layers()[0].w.transpose() * c).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("backward matches central differences") {
  for (const Activation head : {Activation::none, Activation::tanh, Activation::softmax}) {
    Rng rng(4);
    auto net = DenseNet::mlp(4, {8, 8}, 3, head, rng);
    const Matrix x = random_matrix(4, 6, rng);
    const Matrix c = random_matrix(3, 6, rng);
    // loss = sum(c .* y) + 0.5 sum(y^2)
    const auto loss = [&] {
      const Matrix y = net.forward(x);
      return (c.array() * y.array()).sum() + 0.5 * y.squaredNorm();
    };
    Cache cache;
    const Matrix y = net.forward(x, &cache);
    Grads grads;
    const Matrix dx = net.backward(cache, c + y, grads);
    std::vector<double> flat = net.flat_parameters();
    const auto numeric = oracles::central_difference(
        [&] {
          net.set_flat_parameters(flat);
          return loss();
        },
        flat, 1e-5);
    net.set_flat_parameters(flat);
    const auto analytic = grads.flatten();
    CHECK(oracles::max_relative_error(analytic, numeric) < 1e-4);

    Matrix xv = x;
    std::span<double> xs(xv.data(), static_cast<std::size_t>(xv.size()));
    const auto numeric_x = oracles::central_difference(
        [&] {
          const Matrix yy = net.forward(xv);
          return (c.array() * yy.array()).sum() + 0.5 * yy.squaredNorm();
        },
        xs, 1e-5);
    CHECK(oracles::max_relative_error(std::span<const double>(dx.data(), static_cast<std::size_t>(dx.size())),
                                      numeric_x) < 1e-4);
  }
}

TEST_CASE("adam_step") {
  Rng rng(5);
  DenseNet scalar({1, 1}, {Activation::none}, rng);
  scalar.layers()[0].w(0, 0) = 0.0;
  scalar.layers()[0].b(0) = 0.0;
  AdamState state;
  Grads g = scalar.zero_grads();
  adam_step(scalar, g, 0.001, state);
  CHECK(state.step == 1);
  CHECK(scalar.layers()[0].w(0, 0) == 0.0);

  AdamState fresh;
  g.w[0](0, 0) = 1.0;
  adam_step(scalar, g, 0.001, fresh);
  CHECK(scalar.layers()[0].w(0, 0) == doctest::Approx(-0.000999999990000001).epsilon(1e-12));

  for (int i = 0; i < 50; ++i) adam_step(scalar, g, 0.001, fresh);
  CHECK(scalar.layers()[0].w(0, 0) < -0.04);

  g.b[0](0) = std::nan("");
  const double before = scalar.layers()[0].w(0, 0);
  CHECK_THROWS_WITH_AS(adam_step(scalar, g, 0.001, fresh), doctest::Contains("layer 0 bias"), Error);
  CHECK(scalar.layers()[0].w(0, 0) == before);
}

TEST_CASE("soft and hard updates") {
  Rng rng(6);
  auto online = DenseNet::mlp(3, {4}, 2, Activation::none, rng);
  auto target = DenseNet::mlp(3, {4}, 2, Activation::none, rng);
  const auto original = target.flat_parameters();
  soft_update(target, online, 0.0);
  CHECK(target.flat_parameters() == original);
  soft_update(target, online, 1.0);
  CHECK(target.flat_parameters() == online.flat_parameters());

  target.set_flat_parameters(std::vector<double>(target.parameter_count(), 0.0));
  online.set_flat_parameters(std::vector<double>(online.parameter_count(), 1.0));
  soft_update(target, online, 0.005);
  for (double p : target.flat_parameters()) CHECK(p == 0.005);

  // Geometric convergence toward a frozen online net.
  double gap = 1.0;
  for (int i = 0; i < 100; ++i) {
    soft_update(target, online, 0.1);
    double g = 0.0;
    for (double p : target.flat_parameters()) g = std::max(g, std::abs(p - 1.0));
    CHECK(g <= 0.9 * gap + 1e-15);
    gap = g;
  }

  auto other = DenseNet::mlp(3, {5}, 2, Activation::none, rng);
  CHECK_THROWS_AS(soft_update(other, online, 0.5), Error);
  CHECK_THROWS_AS(hard_update(other, online), Error);

  hard_update(target, online);
  const Matrix x = random_matrix(3, 4, rng);
  CHECK(target.forward(x) == online.forward(x));

  const HardUpdateSchedule every{10000};
  CHECK_FALSE(every.due(0));
  CHECK_FALSE(every.due(9999));
  CHECK(every.due(10000));
  CHECK(every.due(20000));
  const HardUpdateSchedule always{1};
  for (std::size_t u = 1; u < 10; ++u) CHECK(always.due(u));
}

TEST_CASE("identical seeds give identical initializations") {
  Rng a(11), b(11);
  CHECK(DenseNet::mlp(4, {64, 64}, 5, Activation::softmax, a).flat_parameters() ==
        DenseNet::mlp(4, {64, 64}, 5, Activation::softmax, b).flat_parameters());
  Rng c(12);
  const auto net = DenseNet::mlp(10, {64}, 5, Activation::none, c);
  for (double w : net.flat_parameters()) CHECK(std::abs(w) <= 1.0 / std::sqrt(10.0) + 1e-15);
}

TEST_CASE("checkpoint round trip is lossless") {
  Rng rng(7);
  auto net = DenseNet::mlp(4, {8, 8}, 3, Activation::softmax, rng);
  AdamState state;
  Grads g = net.zero_grads();
  g.w[0].setConstant(0.3);
  adam_step(net, g, 1e-3, state);
  const auto net_text = net.to_json().dump();
  const auto state_text = state.to_json().dump();
  const auto back = DenseNet::from_json(nlohmann::json::parse(net_text));
  const auto state_back = AdamState::from_json(nlohmann::json::parse(state_text));
  CHECK(back.flat_parameters() == net.flat_parameters());
  CHECK(back.same_architecture(net));
  CHECK(state_back.step == state.step);
  CHECK(state_back.v_w[0] == state.v_w[0]);
}
