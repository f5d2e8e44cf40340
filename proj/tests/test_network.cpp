#include "doctest.h"

#include <cstdio>
#include <filesystem>

#include "sensched/errors.hpp"
#include "sensched/gradcheck.hpp"
#include "sensched/network.hpp"

using namespace sensched;

namespace {

// Independent forward oracle: plain nested loops, no Eigen products.
std::vector<double> loop_forward(const Network& net, const std::vector<double>& input) {
  std::vector<double> a = input;
  for (int l = 0; l < net.layer_count(); ++l) {
    const Matrix& w = net.weights[static_cast<std::size_t>(l)];
    std::vector<double> z(static_cast<std::size_t>(w.rows()));
    for (long r = 0; r < w.rows(); ++r) {
      double acc = net.biases[static_cast<std::size_t>(l)](r);
      for (long c = 0; c < w.cols(); ++c) acc += w(r, c) * a[static_cast<std::size_t>(c)];
      z[static_cast<std::size_t>(r)] = acc;
    }
    if (l + 1 < net.layer_count()) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    } else if (net.output_activation == OutputActivation::tanh_squash) {
      for (double& v : z) v = std::tanh(v);
    }
    a = std::move(z);
  }
  return a;
}

}  // namespace

TEST_CASE("forward: zero parameters give zero output") {
  Rng rng(1);
  Network net = make_network({3, 4, 2}, OutputActivation::identity, rng);
  for (auto& w : net.weights) w.setZero();
  Vector ones = Vector::Ones(3);
  Vector out = forward(net, ones);
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward: identity single layer passes the input through") {
  Rng rng(1);
  Network net = make_network({3, 3}, OutputActivation::identity, rng);
  net.weights[0] = Matrix::Identity(3, 3);
  net.biases[0].setZero();
  Vector x(3);
  x << -1.5, 0.25, 3.0;
  CHECK((forward(net, x) - x).cwiseAbs().maxCoeff() == 0.0);
  Vector long4 = Vector::Ones(4);
  CHECK_THROWS_AS(forward(net, long4), ShapeError);
}

TEST_CASE("forward matches the loop oracle on a random 3-layer net") {
  Rng rng(2);
  for (auto act : {OutputActivation::identity, OutputActivation::tanh_squash}) {
    Network net = make_network({5, 7, 6, 3}, act, rng);
    std::vector<double> x(5);
    for (double& v : x) v = uniform_range(rng, -2.0, 2.0);
    Vector xin = Eigen::Map<const Vector>(x.data(), 5);
    Vector got = forward(net, xin);
    std::vector<double> expect = loop_forward(net, x);
    for (int i = 0; i < 3; ++i) {
      CHECK(std::abs(got(i) - expect[static_cast<std::size_t>(i)]) <= 1e-12);
    }
  }
}

TEST_CASE("backward: single linear layer gradients") {
  Rng rng(3);
  Network net = make_network({4, 3}, OutputActivation::identity, rng);
  Vector x(4);
  x << 1.0, -2.0, 0.5, 4.0;
  Matrix upstream = Matrix::Zero(3, 1);
  upstream(1, 0) = 1.0;  // e_1
  BackwardResult bw = backward(net, Matrix(x), upstream);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      CHECK(bw.grads.weights[0](r, c) == (r == 1 ? x(c) : 0.0));
    }
    CHECK(bw.grads.biases[0](r) == (r == 1 ? 1.0 : 0.0));
  }
  // input gradient is the selected weight row
  CHECK((bw.input_grad.col(0).transpose() - net.weights[0].row(1)).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("backward: zero upstream zeroes every gradient") {
  Rng rng(4);
  Network net = make_network({4, 8, 2}, OutputActivation::identity, rng);
  BackwardResult bw = backward(net, Matrix(Vector::Ones(4)), Matrix::Zero(2, 1));
  for (const auto& g : bw.grads.weights) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
  for (const auto& g : bw.grads.biases) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward gradients agree with central differences") {
  Rng rng(5);
  for (auto act : {OutputActivation::identity, OutputActivation::tanh_squash}) {
    Network net = make_network({5, 16, 16, 3}, act, rng);
    Matrix x(5, 4);
    for (long i = 0; i < x.size(); ++i) x(i / 4, i % 4) = uniform_range(rng, -1.0, 1.0);
    Matrix u(3, 4);
    for (long i = 0; i < u.size(); ++i) u(i / 4, i % 4) = uniform_range(rng, -1.0, 1.0);

    BackwardResult bw = backward(net, x, u);
    auto scalar_loss = [&](const Vector& p) {
      Network probe = net;
      set_parameters(probe, p);
      return (forward(probe, x).cwiseProduct(u)).sum();
    };
    double err = directional_gradient_error(scalar_loss, flatten_parameters(net),
                                            flatten(bw.grads, net), 100, 1e-5, rng);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Rng rng(6);
  Network net = make_network({2, 3, 1}, OutputActivation::identity, rng);
  Network before = net;
  AdamState adam = make_adam(net, 0.1, 0.0);
  adam_step(adam, net, zero_gradients(net));
  CHECK(net == before);
  CHECK(adam.step == 1);
}

TEST_CASE("adam: bias-corrected first step magnitude equals the learning rate") {
  Rng rng(7);
  Network net = make_network({1, 1}, OutputActivation::identity, rng);
  net.weights[0](0, 0) = 2.0;
  net.biases[0](0) = 0.0;
  AdamState adam = make_adam(net, 0.1, 0.0);
  Gradients g = zero_gradients(net);
  g.weights[0](0, 0) = 1.0;
  adam_step(adam, net, g);
  CHECK(net.weights[0](0, 0) == doctest::Approx(2.0 - 0.1).epsilon(1e-7));
}

TEST_CASE("adam: 10-step quadratic trajectory matches the scalar recurrence oracle") {
  Rng rng(8);
  Network net = make_network({1, 1}, OutputActivation::identity, rng);
  net.weights[0](0, 0) = 1.7;
  net.biases[0](0) = 0.0;
  AdamState adam = make_adam(net, 0.05, 0.0);

  // Independent plain-double Adam recurrence on L(p) = p^2 / 2, g = p.
  double p = 1.7, m = 0.0, v = 0.0;
  for (int t = 1; t <= 10; ++t) {
    double g_val = net.weights[0](0, 0);
    Gradients g = zero_gradients(net);
    g.weights[0](0, 0) = g_val;
    adam_step(adam, net, g);

    double go = p;
    m = 0.9 * m + 0.1 * go;
    v = 0.999 * v + 0.001 * go * go;
    double mhat = m / (1.0 - std::pow(0.9, t));
    double vhat = v / (1.0 - std::pow(0.999, t));
    p -= 0.05 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(std::abs(net.weights[0](0, 0) - p) <= 1e-10);
  }
}

TEST_CASE("adam: per-episode learning-rate decay and non-finite rejection") {
  Rng rng(9);
  Network net = make_network({1, 1}, OutputActivation::identity, rng);
  net.weights[0](0, 0) = 1.0;
  AdamState adam = make_adam(net, 0.1, 0.5);
  adam.episode = 2;  // lr = 0.1 / (1 + 0.5*2) = 0.05
  Gradients g = zero_gradients(net);
  g.weights[0](0, 0) = 1.0;
  adam_step(adam, net, g);
  CHECK(net.weights[0](0, 0) == doctest::Approx(1.0 - 0.05).epsilon(1e-6));

  g.weights[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(adam, net, g), NonFiniteGradient);
}

TEST_CASE("sync_target blends parameters") {
  Rng rng(10);
  Network online = make_network({3, 5, 2}, OutputActivation::identity, rng);
  Network target = make_network({3, 5, 2}, OutputActivation::identity, rng);
  Network target0 = target;

  Network hard = target;
  sync_target(hard, online, 1.0);
  CHECK(hard == online);

  Network frozen = target;
  sync_target(frozen, online, 0.0);
  CHECK(frozen == target0);

  Network soft = target;
  sync_target(soft, online, 0.005);
  for (std::size_t l = 0; l < soft.weights.size(); ++l) {
    Matrix expect = 0.005 * online.weights[l] + 0.995 * target0.weights[l];
    CHECK((soft.weights[l] - expect).cwiseAbs().maxCoeff() <= 1e-12);
  }

  Network mismatched = make_network({3, 4, 2}, OutputActivation::identity, rng);
  CHECK_THROWS_AS(sync_target(mismatched, online, 0.5), ShapeError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(11);
  Network net = make_network({4, 9, 3}, OutputActivation::tanh_squash, rng, true);
  AdamState adam = make_adam(net, 1e-4, 1e-3);
  Gradients g = zero_gradients(net);
  g.weights[0](0, 0) = 0.123456789123456789;
  adam_step(adam, net, g);

  auto path = std::filesystem::temp_directory_path() / "sensched_ckpt_test.json";
  save_checkpoint(path.string(), net, &adam, "actor");
  Checkpoint loaded = load_checkpoint(path.string());
  CHECK(loaded.net == net);
  CHECK(loaded.role == "actor");
  REQUIRE(loaded.optimizer.has_value());
  CHECK(*loaded.optimizer == adam);
  std::filesystem::remove(path);
}

TEST_CASE("seeded initialization is reproducible") {
  Rng a(12), b(12);
  Network n1 = make_network({6, 32, 4}, OutputActivation::identity, a);
  Network n2 = make_network({6, 32, 4}, OutputActivation::identity, b);
  CHECK(n1 == n2);
}
