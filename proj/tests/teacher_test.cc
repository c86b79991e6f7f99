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

#include "hems/teacher.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "hems/error.h"
#include "hems/evalkit.h"

namespace hems {
namespace {

Features feat(double a, double b = 0, double c = 0, double d = 0,
              double e = 0) {
  return {a, b, c, d, e};
}

TeacherAgent linear_agent(double gamma) {
  TeacherAgent agent{DenseNet({5, 5}), DenseNet({5, 5}), AdamState(60), gamma,
                     0.1};
  return agent;
}

TEST_CASE("replay buffer") {
  ReplayBuffer buffer(3);
  for (int i = 0; i < 5; ++i) {
    Transition t;
    t.cost = i;
    buffer.push(t);
  }
  CHECK(buffer.size() == 3);
  const auto order = buffer.chronological();
  CHECK(order[0].cost == 2);
  CHECK(order[1].cost == 3);
  CHECK(order[2].cost == 4);

  std::mt19937_64 rng(41);
  const auto idx = buffer.sample_indices(3, rng);
  CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 3);
  CHECK_THROWS(buffer.sample_indices(4, rng));
}

TEST_CASE("action selection") {
  DenseNet net({5, 5});
  const std::vector<double> bias = {3, 1, 2, 5, 4};
  std::copy(bias.begin(), bias.end(), net.bias(0).data());
  TeacherAgent agent{net, net, AdamState(net.parameter_count()), 0.99, 0.1};
  std::mt19937_64 rng(42);

  CHECK(select_action(agent, feat(0.3, 0.2), 0.0, rng) == 1);
  CHECK(greedy_action(net, feat(0.9)) == 1);
  CHECK(argmin_action(std::vector<double>{1.0, 0.5, 0.5, 2.0}) == 1);
  CHECK(argmin_action(std::vector<double>{0.0, 0.0}) == 0);

  // Pure exploration: each action within 3 sigma of 10000 / 5.
  std::array<int, 5> counts{};
  for (int i = 0; i < 10000; ++i) ++counts[select_action(agent, feat(0), 1.0, rng)];
  const double sigma = std::sqrt(10000 * 0.2 * 0.8);
  for (int c : counts) CHECK(std::abs(c - 2000.0) <= 3 * sigma);
}

TEST_CASE("epsilon schedule") {
  const TeacherConfig config;
  CHECK(epsilon_at(config, 0, 1000) == 1.0);
  CHECK(epsilon_at(config, 400, 1000) == doctest::Approx(0.525));
  CHECK(epsilon_at(config, 800, 1000) == doctest::Approx(0.05));
  CHECK(epsilon_at(config, 999, 1000) == doctest::Approx(0.05));
}

TEST_CASE("TD targets") {
  SUBCASE("terminal transitions do not bootstrap") {
    TeacherAgent agent = linear_agent(0.99);
    std::fill(agent.target.bias(0).data(), agent.target.bias(0).data() + 5,
              -7.0);
    const std::vector<Transition> batch = {{feat(0), 0, 0.4, feat(1), true}};
    CHECK(td_targets(batch, agent)[0] == doctest::Approx(0.4));
  }
  SUBCASE("myopic agent") {
    std::mt19937_64 rng(43);
    TeacherConfig config;
    config.gamma = 0.0;
    TeacherAgent agent = make_teacher(config, 5, rng);
    agent.gamma = 0.0;
    const std::vector<Transition> batch = {{feat(0), 0, 0.3, feat(1), false},
                                           {feat(1), 2, -0.2, feat(0), false}};
    const auto y = td_targets(batch, agent);
    CHECK(y[0] == 0.3);
    CHECK(y[1] == -0.2);
  }
  SUBCASE("two-state chain") {
    // s1 -> s2 -> end. The target network holds the exact terminal values
    // at s2 (costs c2) and anything at s1.
    const std::vector<double> c2 = {0.7, 0.2, 0.9, 0.4, 0.5};
    TeacherAgent agent = linear_agent(0.9);
    std::copy(c2.begin(), c2.end(), agent.target.bias(0).data());
    const Features s1 = feat(0.0);
    const Features s2 = feat(1.0);
    agent.target.weight(0).col(0).setConstant(5.0);  // only moves Q at s2
    for (int a = 0; a < 5; ++a) agent.target.bias(0)[a] -= 5.0;
    const std::vector<Transition> batch = {{s1, 3, 0.25, s2, false},
                                           {s2, 1, 0.2, s2, true}};
    const auto y = td_targets(batch, agent);
    CHECK(y[0] == doctest::Approx(0.25 + 0.9 * 0.2));
    CHECK(y[1] == doctest::Approx(0.2));
  }
}

TEST_CASE("training step") {
  std::mt19937_64 rng(44);
  TeacherConfig config;
  config.hidden_layers = {8};
  SUBCASE("targets equal to predictions leave the network unchanged") {
    // An all-zero network predicts exactly 0, so zero-cost transitions give
    // exactly zero error (any round-off would be amplified by Adam).
    TeacherAgent agent{DenseNet({5, 8, 5}), DenseNet({5, 8, 5}),
                       AdamState(DenseNet({5, 8, 5}).parameter_count()), 0.9,
                       0.1};
    ReplayBuffer buffer(10);
    for (int i = 0; i < 10; ++i) {
      const Features s = feat(0.1 * i, 0.5, 0.2);
      buffer.push({s, i % 5, 0.0, s, false});
    }
    const DenseNet before = agent.online;
    const auto loss = train_step(agent, buffer, 10, rng);
    REQUIRE(loss.has_value());
    CHECK(*loss == 0.0);
    CHECK(agent.online == before);
    CHECK(agent.target == before);
  }
  SUBCASE("loss is a mean square") {
    TeacherAgent agent = make_teacher(config, 5, rng);
    ReplayBuffer buffer(50);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int i = 0; i < 50; ++i) {
      buffer.push({feat(u(rng), u(rng)), i % 5, u(rng), feat(u(rng)), i % 3 == 0});
    }
    for (int step = 0; step < 20; ++step) {
      const auto loss = train_step(agent, buffer, 16, rng);
      REQUIRE(loss.has_value());
      CHECK(*loss >= 0.0);
    }
    CHECK_FALSE(train_step(agent, buffer, 51, rng).has_value());
  }
}

TEST_CASE("learns a toy MDP") {
  // Three states in a line; actions 0-2 advance one state, 3-4 jump to the
  // last state; the last state is terminal.
  const std::array<Features, 3> states = {feat(0, 0), feat(1, 0), feat(0, 1)};
  const double cost[3][5] = {{0.5, 0.2, 0.8, 1.0, 0.9},
                             {0.3, 0.6, 0.1, 0.4, 0.7},
                             {0.2, 0.5, 0.9, 0.3, 0.6}};
  auto next = [](int s, int a) { return a < 3 ? std::min(s + 1, 2) : 2; };
  const double gamma = 0.9;

  // Value iteration oracle.
  double q_star[3][5] = {};
  for (int sweep = 0; sweep < 100; ++sweep) {
    for (int s = 0; s < 3; ++s) {
      for (int a = 0; a < 5; ++a) {
        double v = cost[s][a];
        if (s != 2) {
          const int n = next(s, a);
          v += gamma * *std::min_element(q_star[n], q_star[n] + 5);
        }
        q_star[s][a] = v;
      }
    }
  }

  ReplayBuffer buffer(15);
  for (int s = 0; s < 3; ++s) {
    for (int a = 0; a < 5; ++a) {
      buffer.push({states[s], a, cost[s][a], states[next(s, a)], s == 2});
    }
  }
  std::mt19937_64 rng(45);
  TeacherConfig config;
  config.gamma = gamma;
  TeacherAgent agent = make_teacher(config, 5, rng);
  for (int step = 0; step < 2000; ++step) train_step(agent, buffer, 15, rng);

  double worst = 0.0;
  for (int s = 0; s < 3; ++s) {
    const auto q = dense_forward(agent.online, states[s]);
    for (int a = 0; a < 5; ++a) worst = std::max(worst, std::abs(q[a] - q_star[s][a]));
  }
  CHECK(worst < 0.05);
}

struct SmallRun {
  std::vector<DayProfile> train;
  std::vector<DayProfile> eval;
  EnvParams env;
};

SmallRun small_fixture() {
  const auto prices = square_wave_prices(0.05, 0.25, 8, 20);
  SmallRun r{synthetic_days(6, 3, prices), synthetic_days(4, 4, prices), {}};
  r.env = {BatteryParams{}, TariffParams{},
           NormalizationStats::from_profiles(r.train)};
  return r;
}

TEST_CASE("teacher training is deterministic") {
  const SmallRun f = small_fixture();
  TeacherConfig config;
  config.episodes = 6;
  config.batch_size = 32;
  config.buffer_size = 100;
  const TeacherRun a = train_teacher(config, f.train, f.env, 7);
  const TeacherRun b = train_teacher(config, f.train, f.env, 7);
  CHECK(a.agent == b.agent);
  CHECK(a.buffer == b.buffer);
  CHECK(a.loss_curve == b.loss_curve);
  const TeacherRun c = train_teacher(config, f.train, f.env, 8);
  CHECK_FALSE(a.agent.online == c.agent.online);
  for (const auto& t : a.buffer.chronological()) {
    CHECK(t.action_index >= 0);
    CHECK(t.action_index < 5);
    CHECK(t.terminal == (t.state[kHour] == 23.0 / 24.0 * 24.0 / 23.0));
  }
}

TEST_CASE("a briefly trained teacher beats the rule-based controller") {
  const SmallRun f = small_fixture();
  TeacherConfig config;
  config.episodes = 150;
  const TeacherRun run = train_teacher(config, f.train, f.env, 1);
  const Policy teacher = make_q_policy("teacher", run.agent.online);
  const Policy rbc = make_rbc_policy(f.env.battery);
  double teacher_cost = 0.0;
  double rbc_cost = 0.0;
  for (const auto& day : f.eval) {
    const double t = run_episode(teacher, day, f.env).total_cost_eur;
    teacher_cost += t;
    rbc_cost += run_episode(rbc, day, f.env).total_cost_eur;
    CHECK(t >= dp_optimal_cost(day, f.env) - 1e-6);
  }
  CHECK(teacher_cost < rbc_cost);
}

TEST_CASE("checkpoint format") {
  std::mt19937_64 rng(46);
  const DenseNet net = DenseNet::random({5, 64, 64, 5}, rng);
  const NormalizationStats stats{{0.05, 0.25}, {0.1, 4.0}, {0.0, 3.0}};
  const std::string bytes = serialize_checkpoint(net, stats);
  CHECK(bytes.rfind("HEMSQNET", 0) == 0);
  CHECK(bytes.size() > 4869 * 4);

  const TeacherCheckpoint back = deserialize_checkpoint(bytes);
  CHECK(back.stats == stats);
  REQUIRE(back.net.layer_sizes() == net.layer_sizes());
  for (std::size_t i = 0; i < net.parameter_count(); ++i) {
    CHECK(back.net.parameters()[i] ==
          static_cast<double>(static_cast<float>(net.parameters()[i])));
  }
  // Loading is idempotent: a reloaded network serializes identically.
  CHECK(serialize_checkpoint(back.net, back.stats) == bytes);

  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad), LoadError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)),
                  LoadError);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), LoadError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/teacher.qnet"), LoadError);
}

TEST_CASE("buffer dump round trip") {
  ReplayBuffer buffer(4);
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 6; ++i) {
    buffer.push({feat(u(rng), u(rng), u(rng), u(rng), u(rng)), i % 5,
                 u(rng) - 0.5, feat(u(rng), u(rng)), i == 5});
  }
  const ReplayBuffer back = parse_buffer(format_buffer(buffer), 4);
  CHECK(back.chronological() == buffer.chronological());
  CHECK_THROWS_AS(parse_buffer("s0,s1\n", 4), LoadError);
  CHECK_THROWS_AS(
      parse_buffer("s0,s1,s2,s3,s4,action,cost,n0,n1,n2,n3,n4,terminal\n"
                   "0,0,0,0,0,-1,0,0,0,0,0,0,0\n",
                   4),
      LoadError);
}

}  // namespace
}  // namespace hems
