#include <doctest.h>

#include <cmath>

#include "opal/mlp.hpp"

using namespace opal;

namespace {

// Plain-loop forward pass over the documented parameter layout.
double naive_forward(const Mlp& net, const std::vector<double>& input, const DropoutMask* mask) {
  const auto& sizes = net.layer_sizes();
  const auto& p = net.params();
  std::vector<double> a(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) {
    a[i] = (input[i] - net.input_shift()[i]) * net.input_scale()[i];
  }
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t in = sizes[l], out = sizes[l + 1];
    std::vector<double> z(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      for (std::size_t i = 0; i < in; ++i) z[o] += p[off + i * out + o] * a[i];
      z[o] += p[off + in * out + o];
    }
    off += in * out + out;
    const bool last = l + 2 == sizes.size();
    if (!last) {
      for (auto& v : z) v = std::max(v, 0.0);
      if (mask != nullptr && l + 3 == sizes.size()) {
        for (std::size_t o = 0; o < out; ++o) z[o] *= (*mask)(static_cast<Eigen::Index>(o));
      }
    }
    a = std::move(z);
  }
  return a[0];
}

Mlp random_net(std::uint64_t seed, double dropout = 0.0) {
  Mlp net({3, 5, 4, 1}, dropout);
  Rng rng = make_rng(seed, 0);
  net.init(rng);
  for (auto& v : net.params()) v += 0.05 * uniform_real(rng, -1, 1);
  net.set_input_normalization({0.1, -0.2, 0.3}, {1.5, 0.5, 2.0});
  return net;
}

}  // namespace

TEST_CASE("forward pass matches a plain-loop oracle") {
  const Mlp net = random_net(1);
  Rng rng = make_rng(2, 0);
  Eigen::MatrixXd x(3, 6);
  for (Eigen::Index j = 0; j < 6; ++j) {
    for (Eigen::Index i = 0; i < 3; ++i) x(i, j) = uniform_real(rng, -2, 2);
  }
  const Eigen::MatrixXd y = net.forward(x);
  for (Eigen::Index j = 0; j < 6; ++j) {
    const std::vector<double> in{x(0, j), x(1, j), x(2, j)};
    CHECK(y(0, j) == doctest::Approx(naive_forward(net, in, nullptr)).epsilon(1e-12));
  }
}

TEST_CASE("dropout mask scales kept units and zeroes the rest") {
  const Mlp net = random_net(3, 0.5);
  Rng rng = make_rng(4, 0);
  const DropoutMask m = net.sample_mask(rng);
  CHECK(m.size() == 4);
  for (Eigen::Index i = 0; i < m.size(); ++i) CHECK((m(i) == 0.0 || m(i) == 2.0));
  const std::vector<double> in{0.3, 0.1, -0.4};
  Eigen::MatrixXd x(3, 1);
  x << 0.3, 0.1, -0.4;
  CHECK(net.forward(x, &m)(0, 0) == doctest::Approx(naive_forward(net, in, &m)).epsilon(1e-12));
}

TEST_CASE("backward matches central finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Mlp net = random_net(seed, 0.3);
    Rng rng = make_rng(seed, 1);
    const DropoutMask m = net.sample_mask(rng);
    Eigen::MatrixXd x(3, 4);
    for (Eigen::Index j = 0; j < 4; ++j) {
      for (Eigen::Index i = 0; i < 3; ++i) x(i, j) = uniform_real(rng, -2, 2);
    }
    // loss = sum_j c_j * y_j
    Eigen::MatrixXd c(1, 4);
    c << 0.7, -1.3, 0.4, 2.0;
    auto loss = [&](const Mlp& n) { return (n.forward(x, &m).array() * c.array()).sum(); };
    Mlp::Cache cache;
    net.forward(x, &m, cache);
    std::vector<double> grad(net.param_count(), 0.0);
    net.backward(cache, c, &m, grad);
    for (std::size_t k = 0; k < net.param_count(); ++k) {
      const double h = 1e-6;
      Mlp plus = net, minus = net;
      plus.params()[k] += h;
      minus.params()[k] -= h;
      const double fd = (loss(plus) - loss(minus)) / (2 * h);
      CHECK(grad[k] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    }
  }
}

TEST_CASE("zero output layer gives exactly zero output") {
  Mlp net({4, 8, 3});
  Rng rng = make_rng(0, 0);
  net.init(rng, true);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 5);
  CHECK(net.forward(x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("network JSON round trip") {
  const Mlp net = random_net(7, 0.25);
  const Mlp back = mlp_from_json(to_json(net));
  CHECK(back == net);
}

TEST_CASE("input normalization fit") {
  Mlp net({2, 3, 1});
  const std::vector<std::vector<double>> states{{1.0, 5.0}, {3.0, 5.0}};
  fit_input_normalization(net, states);
  CHECK(net.input_shift()[0] == doctest::Approx(2.0));
  CHECK(net.input_scale()[0] == doctest::Approx(1.0));
  CHECK(net.input_shift()[1] == doctest::Approx(5.0));
  CHECK(net.input_scale()[1] == doctest::Approx(1e6));
}

TEST_CASE("optimizers decrease a quadratic") {
  for (auto kind : {OptimizerConfig::Kind::MOMENTUM, OptimizerConfig::Kind::ADAM}) {
    OptimizerConfig cfg;
    cfg.kind = kind;
    cfg.lr = 0.05;
    Optimizer opt(cfg, 2);
    std::vector<double> p{3.0, -2.0};
    for (int i = 0; i < 500; ++i) {
      const std::vector<double> g{2 * p[0], 2 * p[1]};
      opt.step(p, g);
    }
    CHECK(std::abs(p[0]) < 0.05);
    CHECK(std::abs(p[1]) < 0.05);
  }
}
