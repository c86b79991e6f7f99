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

#include "hems/envsim.h"

#include <cmath>
#include <random>

#include "doctest.h"
#include "hems/error.h"

namespace hems {
namespace {

DayProfile flat_day(double price, double demand, double pv, int horizon = 24) {
  return {std::vector<double>(horizon, price),
          std::vector<double>(horizon, demand),
          std::vector<double>(horizon, pv), "flat"};
}

EnvParams params_for(const std::vector<DayProfile>& days) {
  return {BatteryParams{}, TariffParams{},
          NormalizationStats::from_profiles(days)};
}

TEST_CASE("battery update") {
  const BatteryParams battery;
  SUBCASE("idle") {
    const auto u = battery_update(5.0, 0.0, battery, 1.0);
    CHECK(u.energy_kwh == 5.0);
    CHECK(u.power_kw == 0.0);
    CHECK_FALSE(u.clipped);
  }
  SUBCASE("full charge") {
    const auto u = battery_update(5.0, 1.0, battery, 1.0);
    CHECK(u.energy_kwh == doctest::Approx(8.6));
    CHECK(u.power_kw == doctest::Approx(4.0));
    CHECK_FALSE(u.clipped);
  }
  SUBCASE("discharge divides by efficiency") {
    const auto u = battery_update(5.0, -0.5, battery, 1.0);
    CHECK(u.energy_kwh == doctest::Approx(5.0 - 2.0 / 0.9));
    CHECK(u.power_kw == doctest::Approx(-2.0));
  }
  SUBCASE("charge clipped at capacity") {
    const auto u = battery_update(9.5, 1.0, battery, 1.0);
    CHECK(u.energy_kwh == doctest::Approx(10.0));
    CHECK(u.power_kw == doctest::Approx(0.5 / 0.9).epsilon(1e-12));
    CHECK(u.power_kw == doctest::Approx(0.5556).epsilon(1e-4));
    CHECK(u.clipped);
  }
  SUBCASE("discharge clipped at empty") {
    const auto u = battery_update(1.0, -1.0, battery, 1.0);
    CHECK(u.energy_kwh == doctest::Approx(0.0));
    CHECK(u.power_kw == doctest::Approx(-0.9));
    CHECK(u.clipped);
  }
  SUBCASE("signal outside [-1, 1]") {
    CHECK_THROWS_AS(battery_update(5.0, 1.5, battery, 1.0), ContractError);
  }
}

TEST_CASE("aggregate power") {
  CHECK(aggregate_power(2.0, 0.0, 0.0) == 2.0);
  CHECK(aggregate_power(1.0, 3.0, 0.0) == -2.0);
  CHECK(aggregate_power(2.0, 1.0, 4.0) == 5.0);
}

TEST_CASE("energy and capacity cost") {
  const TariffParams tariff;
  CHECK(energy_cost(0.0, 0.1, tariff) == 0.0);
  CHECK(energy_cost(2.0, 0.1, tariff) == doctest::Approx(0.2));
  CHECK(energy_cost(-2.0, 0.1, tariff) == doctest::Approx(-0.05));
  CHECK(capacity_cost(2.0, tariff) == doctest::Approx(0.2));
  CHECK(capacity_cost(6.0, tariff) == doctest::Approx(0.3));
  TariffParams free = tariff;
  free.capacity_rate_eur_per_kw = 0.0;
  for (double p : {-5.0, 0.0, 3.0, 12.0}) CHECK(capacity_cost(p, free) == 0.0);
}

TEST_CASE("tariff and battery validation") {
  BatteryParams battery;
  battery.action_levels = {-1.0, 0.5, 1.0};
  CHECK_THROWS_AS(battery.validate(), ConfigError);
  battery.action_levels = {-1.0, -0.5, 0.5, 1.0};
  CHECK_THROWS_AS(battery.validate(), ConfigError);
  battery = BatteryParams{};
  battery.efficiency = 1.2;
  CHECK_THROWS_AS(battery.validate(), ConfigError);
  CHECK(BatteryParams{}.idle_action() == 2);

  TariffParams tariff;
  tariff.capacity_rate_eur_per_kw = -0.1;
  CHECK_THROWS_AS(tariff.validate(), ConfigError);
}

TEST_CASE("environment step") {
  SUBCASE("null dynamics") {
    const std::vector<DayProfile> days = {flat_day(0.2, 0.0, 0.0)};
    EnvParams env = params_for(days);
    env.tariff.capacity_rate_eur_per_kw = 0.0;
    const EnvState s = initial_state(days[0], env, 0.3);
    const StepOutcome out = env_step(s, env.battery.idle_action(), days[0], env);
    CHECK(out.cost_eur == 0.0);
    CHECK(out.next_state.hour == 1);
    CHECK(out.next_state.energy_kwh == s.energy_kwh);
    CHECK(out.next_state.normalized[kSoc] == s.normalized[kSoc]);
  }
  SUBCASE("energy plus capacity") {
    const std::vector<DayProfile> days = {flat_day(0.1, 2.0, 0.0)};
    const EnvParams env = params_for(days);
    const StepOutcome out =
        env_step(initial_state(days[0], env), 2, days[0], env);
    CHECK(out.energy_cost_eur == doctest::Approx(0.2));
    CHECK(out.capacity_cost_eur == doctest::Approx(0.2));
    CHECK(out.cost_eur == doctest::Approx(0.4));
  }
  SUBCASE("contract violations") {
    const std::vector<DayProfile> days = {flat_day(0.1, 2.0, 0.0)};
    const EnvParams env = params_for(days);
    EnvState s = initial_state(days[0], env);
    CHECK_THROWS_AS(env_step(s, 5, days[0], env), ContractError);
    CHECK_THROWS_AS(env_step(s, -1, days[0], env), ContractError);
    s.hour = 24;
    CHECK_THROWS_AS(env_step(s, 2, days[0], env), ContractError);
  }
}

TEST_CASE("idle episode equals a spreadsheet sum") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> price(0.02, 0.4);
  std::uniform_real_distribution<double> load(0.0, 6.0);
  DayProfile day;
  for (int t = 0; t < 24; ++t) {
    day.prices_eur_per_kwh.push_back(price(rng));
    day.demand_kw.push_back(load(rng));
    day.pv_kw.push_back(load(rng));
  }
  const std::vector<DayProfile> days = {day};
  const EnvParams env = params_for(days);

  double expected = 0.0;
  for (int t = 0; t < 24; ++t) {
    const double p = day.demand_kw[t] - day.pv_kw[t];
    const double rate = p >= 0 ? day.prices_eur_per_kwh[t]
                               : 0.25 * day.prices_eur_per_kwh[t];
    expected += rate * p + 0.05 * std::max(p, 4.0);
  }

  EnvState s = initial_state(day, env);
  double total = 0.0;
  for (int t = 0; t < 24; ++t) {
    const StepOutcome out = env_step(s, env.battery.idle_action(), day, env);
    total += out.cost_eur;
    s = out.next_state;
  }
  CHECK(std::abs(total - expected) <= 1e-9);
}

TEST_CASE("rule-based controller") {
  const BatteryParams battery;
  CHECK(rbc_action(2.0, 0.0, battery) == doctest::Approx(0.5));
  CHECK(rbc_action(0.0, 5.0, battery) == -1.0);
  CHECK(rbc_action(3.0, 3.0, battery) == 0.0);
  CHECK(rbc_action(9.0, 1.0, battery) == 1.0);
  CHECK(rbc_action(0.0, 4.0, battery) == -1.0);
}

TEST_CASE("observations stay in the unit box") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  std::vector<DayProfile> days(3);
  for (auto& d : days) {
    for (int t = 0; t < 24; ++t) {
      d.prices_eur_per_kwh.push_back(u(rng) / 10);
      d.demand_kw.push_back(u(rng));
      d.pv_kw.push_back(u(rng));
    }
  }
  const EnvParams env = params_for(days);
  for (const auto& d : days) {
    EnvState s = initial_state(d, env, 0.0);
    for (int t = 0; t < 24; ++t) {
      for (double x : s.normalized) {
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
      }
      s = env_step(s, static_cast<int>(rng() % 5), d, env).next_state;
      CHECK(s.energy_kwh >= 0.0);
      CHECK(s.energy_kwh <= env.battery.capacity_kwh + 1e-12);
    }
  }
}

}  // namespace
}  // namespace hems
