// Copyright 2026 The DDT-HEMS Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hems/diffmath.h"

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "hems/error.h"
#include "oracles.h"

namespace hems {
namespace {

using testing::central_difference;
using testing::naive_forward;
using testing::relative_error;

std::vector<double> random_vector(std::mt19937_64& rng, int n, double lo = -1,
                                  double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

TEST_CASE("dense parameter count") {
  const std::vector<int> sizes = {5, 64, 64, 5};
  CHECK(dense_parameter_count(sizes) == 4869);
  CHECK(DenseNet(sizes).parameter_count() == 4869);
  CHECK_THROWS_AS(DenseNet({5}), ConfigError);
}

TEST_CASE("zero network outputs zeros") {
  const DenseNet net({3, 4, 2});
  const auto y = dense_forward(net, std::vector<double>{0.3, -7.0, 2.0});
  CHECK(y == std::vector<double>{0.0, 0.0});
}

TEST_CASE("identity layers and the rectifier") {
  DenseNet linear({2, 2});
  linear.weight(0) = Eigen::Matrix2d::Identity();
  CHECK(dense_forward(linear, std::vector<double>{1.0, -2.0}) ==
        std::vector<double>{1.0, -2.0});

  DenseNet hidden({2, 2, 2});
  hidden.weight(0) = Eigen::Matrix2d::Identity();
  hidden.weight(1) = Eigen::Matrix2d::Identity();
  CHECK(dense_forward(hidden, std::vector<double>{1.0, -2.0}) ==
        std::vector<double>{1.0, 0.0});
}

TEST_CASE("forward pass matches naive matmul") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const DenseNet net = DenseNet::random({5, 64, 64, 5}, rng);
    const auto x = random_vector(rng, 5, 0.0, 1.0);
    const auto y = dense_forward(net, x);
    const auto ref = naive_forward(net, x);
    REQUIRE(y.size() == ref.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
      CHECK(std::abs(y[i] - ref[i]) <= 1e-10);
    }
  }
}

TEST_CASE("batched forward equals per-column forward") {
  std::mt19937_64 rng(12);
  const DenseNet net = DenseNet::random({5, 16, 5}, rng);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 7);
  const Eigen::MatrixXd y = dense_forward_batch(net, x);
  for (int c = 0; c < 7; ++c) {
    const std::vector<double> col(x.col(c).data(), x.col(c).data() + 5);
    const auto ref = naive_forward(net, col);
    for (int r = 0; r < 5; ++r) CHECK(std::abs(y(r, c) - ref[r]) <= 1e-12);
  }
}

TEST_CASE("random initialisation bounds") {
  std::mt19937_64 rng(13);
  const DenseNet net = DenseNet::random({4, 9, 3}, rng);
  for (int l = 0; l < net.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(net.layer_sizes()[l]);
    CHECK(net.weight(l).cwiseAbs().maxCoeff() <= bound);
    CHECK(net.bias(l).cwiseAbs().maxCoeff() <= bound);
  }
}

TEST_CASE("backward pass trivial cases") {
  std::mt19937_64 rng(14);
  const DenseNet net = DenseNet::random({5, 8, 5}, rng);
  const auto zero = dense_backward(net, random_vector(rng, 5),
                                   std::vector<double>(5, 0.0));
  CHECK(std::all_of(zero.values.begin(), zero.values.end(),
                    [](double g) { return g == 0.0; }));

  // y = w * x with x = 2: dy/dw = 2, dy/db = 1.
  DenseNet scalar({1, 1});
  scalar.parameters()[0] = 0.7;
  const auto g = dense_backward(scalar, std::vector<double>{2.0},
                                std::vector<double>{1.0});
  CHECK(g.values[0] == doctest::Approx(2.0));
  CHECK(g.values[1] == doctest::Approx(1.0));
}

TEST_CASE("backward pass matches central differences") {
  std::mt19937_64 rng(15);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    DenseNet net = DenseNet::random({5, 12, 10, 5}, rng);
    const auto x = random_vector(rng, 5, 0.0, 1.0);
    const auto g = random_vector(rng, 5);
    const auto grads = dense_backward(net, x, g);
    auto objective = [&](const DenseNet& n) {
      const auto y = naive_forward(n, x);
      double s = 0.0;
      for (int i = 0; i < 5; ++i) s += g[i] * y[i];
      return s;
    };
    for (std::size_t k = 0; k < net.parameter_count(); ++k) {
      const double original = net.parameters()[k];
      const double numeric = central_difference(
          [&](double v) {
            net.parameters()[k] = v;
            return objective(net);
          },
          original);
      net.parameters()[k] = original;
      worst = std::max(worst, relative_error(grads.values[k], numeric));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("batched backward sums per-sample gradients") {
  std::mt19937_64 rng(16);
  const DenseNet net = DenseNet::random({5, 8, 5}, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 4);
  const Eigen::MatrixXd g = Eigen::MatrixXd::Random(5, 4);
  const auto batch = dense_backward_batch(net, x, g);
  std::vector<double> total(net.parameter_count(), 0.0);
  for (int c = 0; c < 4; ++c) {
    const auto one = dense_backward(
        net, std::vector<double>(x.col(c).data(), x.col(c).data() + 5),
        std::vector<double>(g.col(c).data(), g.col(c).data() + 5));
    for (std::size_t k = 0; k < total.size(); ++k) total[k] += one.values[k];
  }
  for (std::size_t k = 0; k < total.size(); ++k) {
    CHECK(batch.values[k] == doctest::Approx(total[k]).epsilon(1e-12));
  }
}

TEST_CASE("softmax over negated weights") {
  const auto uniform = softmax_neg(std::vector<double>(5, 0.0));
  for (double p : uniform) CHECK(p == doctest::Approx(0.2));

  const auto two = softmax_neg(std::vector<double>{1.0, 2.0});
  const double a = std::exp(-1.0);
  const double b = std::exp(-2.0);
  CHECK(two[0] == doctest::Approx(a / (a + b)).epsilon(1e-12));
  CHECK(two[1] == doctest::Approx(b / (a + b)).epsilon(1e-12));
  CHECK(two[0] == doctest::Approx(0.7311).epsilon(1e-4));

  double previous = 0.0;
  for (double k : {1.0, 10.0, 100.0, 1000.0}) {
    const double p = softmax_neg(std::vector<double>{3.0, 3.0 + k})[0];
    CHECK(p >= previous);
    CHECK(std::isfinite(p));
    previous = p;
  }
  CHECK(previous == 1.0);
}

TEST_CASE("softmax sums to one") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = softmax_neg(random_vector(rng, 5, -50.0, 50.0));
    CHECK(std::abs(testing::sum(p) - 1.0) <= 1e-9);
  }
}

TEST_CASE("sigmoid") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(1.0) == doctest::Approx(0.7310586).epsilon(1e-7));
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(sigmoid(inf) == 1.0);
  CHECK(sigmoid(-inf) == 0.0);
  CHECK(sigmoid(-1000.0) == 0.0);
  CHECK(sigmoid(1000.0) == 1.0);
  CHECK(sigmoid(-3.0) == doctest::Approx(1.0 - sigmoid(3.0)).epsilon(1e-15));
}

TEST_CASE("tempered KL values") {
  const std::vector<double> q = {0.4, 1.3, -0.2, 2.0, 0.9};
  CHECK(kl_tempered(q, q, 0.03) == doctest::Approx(0.0));

  // A sharp teacher against a uniform student approaches ln 5.
  const std::vector<double> sharp = {0.0, 1.0, 1.0, 1.0, 1.0};
  const std::vector<double> flat(5, 0.5);
  CHECK(kl_tempered(sharp, flat, 0.01) ==
        doctest::Approx(std::log(5.0)).epsilon(1e-9));

  // Two actions, tau = 1: P_t = [a, b], P_s = [b, a].
  const double a = std::exp(-1.0) / (std::exp(-1.0) + std::exp(-2.0));
  const double b = 1.0 - a;
  const double expected = a * std::log(a / b) + b * std::log(b / a);
  CHECK(std::abs(kl_tempered(std::vector<double>{1.0, 2.0},
                             std::vector<double>{2.0, 1.0}, 1.0) -
                 expected) <= 1e-10);
  CHECK(kl_divergence(std::vector<double>{a, b}, std::vector<double>{b, a}) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("tempered KL gradient matches central differences") {
  std::mt19937_64 rng(18);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto t = random_vector(rng, 5);
    auto s = random_vector(rng, 5);
    const double tau = std::uniform_real_distribution<double>(0.2, 2.0)(rng);
    const auto grad = kl_tempered_gradient(t, s, tau);
    for (int k = 0; k < 5; ++k) {
      const double original = s[k];
      const double numeric = central_difference(
          [&](double v) {
            s[k] = v;
            return kl_tempered(t, s, tau);
          },
          original);
      s[k] = original;
      worst = std::max(worst, relative_error(grad[k], numeric));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("adam step") {
  SUBCASE("zero gradient leaves parameters and decays moments") {
    std::vector<double> w = {1.0, -2.0};
    AdamState state(2);
    state.first_moment = {0.5, -0.5};
    state.second_moment = {0.25, 0.25};
    state.step_count = 3;
    const std::vector<double> before = w;
    adam_step(w, std::vector<double>{0.0, 0.0}, state);
    CHECK(state.first_moment[0] == doctest::Approx(0.45));
    CHECK(state.second_moment[1] == doctest::Approx(0.24975));
    CHECK(std::abs(state.first_moment[1]) < 0.5);
    // The decayed first moment still moves the parameters; a fresh state
    // does not.
    std::vector<double> fresh = before;
    AdamState zero(2);
    adam_step(fresh, std::vector<double>{0.0, 0.0}, zero);
    CHECK(fresh == before);
  }
  SUBCASE("first step moves by about the learning rate") {
    std::vector<double> w = {0.0, 0.0, 0.0};
    AdamState state(3, 1e-3);
    adam_step(w, std::vector<double>{5.0, -0.01, 1e3}, state);
    CHECK(w[0] == doctest::Approx(-1e-3).epsilon(1e-4));
    CHECK(w[1] == doctest::Approx(1e-3).epsilon(1e-4));
    CHECK(w[2] == doctest::Approx(-1e-3).epsilon(1e-4));
  }
  SUBCASE("minimises a quadratic") {
    // 1000 steps at lr 1e-3 move at most ~1, so use a larger rate.
    std::vector<double> w = {0.0};
    AdamState state(1, 0.1);
    for (int i = 0; i < 1000; ++i) {
      adam_step(w, std::vector<double>{2.0 * (w[0] - 3.0)}, state);
    }
    CHECK(std::abs(w[0] - 3.0) <= 1e-2);
  }
  SUBCASE("rejects bad gradients") {
    std::vector<double> w = {0.0, 0.0};
    AdamState state(2);
    CHECK_THROWS_AS(
        adam_step(w, std::vector<double>{std::nan(""), 0.0}, state),
        TrainingError);
    CHECK_THROWS_AS(adam_step(w, std::vector<double>{0.0}, state),
                    ConfigError);
  }
}

}  // namespace
}  // namespace hems
