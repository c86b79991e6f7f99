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

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "hems/error.h"

namespace hems {

void BatteryParams::validate() const {
  if (!(capacity_kwh > 0.0)) throw ConfigError("battery capacity must be > 0");
  if (!(max_power_kw > 0.0)) throw ConfigError("battery max power must be > 0");
  if (!(efficiency > 0.0 && efficiency <= 1.0)) {
    throw ConfigError(
        fmt::format("battery efficiency {} outside (0, 1]", efficiency));
  }
  if (action_levels.empty()) throw ConfigError("action levels are empty");
  const std::size_t n = action_levels.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double level = action_levels[i];
    if (!(level >= -1.0 && level <= 1.0)) {
      throw ConfigError(fmt::format("action level {} outside [-1, 1]", level));
    }
    if (i > 0 && !(action_levels[i - 1] < level)) {
      throw ConfigError("action levels must be strictly increasing");
    }
    if (std::abs(level + action_levels[n - 1 - i]) > 1e-12) {
      throw ConfigError("action levels must be symmetric around 0");
    }
  }
  idle_action();
}

int BatteryParams::idle_action() const {
  for (int i = 0; i < num_actions(); ++i) {
    if (action_levels[i] == 0.0) return i;
  }
  throw ConfigError("action levels must contain 0");
}

void TariffParams::validate() const {
  if (!(timestep_hours > 0.0)) throw ConfigError("timestep must be > 0");
  if (horizon_steps < 1) throw ConfigError("horizon must be >= 1 step");
  if (!(capacity_rate_eur_per_kw >= 0.0)) {
    throw ConfigError("capacity rate must be >= 0");
  }
  if (!std::isfinite(injection_fraction) || !std::isfinite(contracted_min_kw)) {
    throw ConfigError("tariff parameters must be finite");
  }
}

EnvState make_state(int hour, double energy_kwh, const DayProfile& day,
                    const EnvParams& params) {
  const int horizon = params.tariff.horizon_steps;
  if (day.horizon() != horizon) {
    throw ContractError(fmt::format("{} has {} steps, environment expects {}",
                                    day.label, day.horizon(), horizon));
  }
  const int idx = std::clamp(hour, 0, horizon - 1);
  EnvState s;
  s.hour = hour;
  s.energy_kwh = energy_kwh;
  s.price_eur_per_kwh = day.prices_eur_per_kwh[idx];
  s.demand_kw = day.demand_kw[idx];
  s.pv_kw = day.pv_kw[idx];
  s.normalized = normalize(hour, energy_kwh, s.price_eur_per_kwh, s.demand_kw,
                           s.pv_kw, params.stats, horizon,
                           params.battery.capacity_kwh);
  return s;
}

EnvState initial_state(const DayProfile& day, const EnvParams& params,
                       double initial_soc) {
  if (!(initial_soc >= 0.0 && initial_soc <= 1.0)) {
    throw ConfigError(
        fmt::format("initial state of charge {} outside [0, 1]", initial_soc));
  }
  return make_state(0, initial_soc * params.battery.capacity_kwh, day, params);
}

BatteryUpdate battery_update(double energy_kwh, double signal,
                             const BatteryParams& params, double dt_hours) {
  if (!(signal >= -1.0 && signal <= 1.0)) {
    throw ContractError(fmt::format("battery signal {} outside [-1, 1]", signal));
  }
  const double eta = params.efficiency;
  const double power = signal * params.max_power_kw;
  double next = power >= 0.0 ? energy_kwh + eta * power * dt_hours
                             : energy_kwh + power * dt_hours / eta;
  if (next > params.capacity_kwh) {
    next = params.capacity_kwh;
  } else if (next < 0.0) {
    next = 0.0;
  } else {
    return {next, power, false};
  }
  const double delta = next - energy_kwh;
  const double realized =
      delta >= 0.0 ? delta / (eta * dt_hours) : delta * eta / dt_hours;
  return {next, realized, true};
}

double aggregate_power(double demand_kw, double pv_kw,
                       double battery_power_kw) {
  return demand_kw - pv_kw + battery_power_kw;
}

double energy_cost(double aggregate_kw, double price_eur_per_kwh,
                   const TariffParams& tariff) {
  const double price = aggregate_kw >= 0.0
                           ? price_eur_per_kwh
                           : tariff.injection_price(price_eur_per_kwh);
  return price * aggregate_kw * tariff.timestep_hours;
}

double capacity_cost(double aggregate_kw, const TariffParams& tariff) {
  return tariff.capacity_rate_eur_per_kw *
         std::max(aggregate_kw, tariff.contracted_min_kw);
}

StepOutcome env_step_signal(const EnvState& state, double signal,
                            const DayProfile& day, const EnvParams& params) {
  const int horizon = params.tariff.horizon_steps;
  if (state.hour < 0 || state.hour >= horizon) {
    throw ContractError(fmt::format("step requested at hour {} outside [0, {})",
                                    state.hour, horizon));
  }
  const BatteryUpdate battery = battery_update(
      state.energy_kwh, signal, params.battery, params.tariff.timestep_hours);
  StepOutcome out;
  out.battery_power_kw = battery.power_kw;
  out.clipped = battery.clipped;
  out.realized_power_kw =
      aggregate_power(state.demand_kw, state.pv_kw, battery.power_kw);
  out.energy_cost_eur =
      energy_cost(out.realized_power_kw, state.price_eur_per_kwh, params.tariff);
  out.capacity_cost_eur = capacity_cost(out.realized_power_kw, params.tariff);
  out.cost_eur = out.energy_cost_eur + out.capacity_cost_eur;
  out.next_state = make_state(state.hour + 1, battery.energy_kwh, day, params);
  return out;
}

StepOutcome env_step(const EnvState& state, int action_index,
                     const DayProfile& day, const EnvParams& params) {
  if (action_index < 0 || action_index >= params.battery.num_actions()) {
    throw ContractError(fmt::format("action index {} outside [0, {})",
                                    action_index,
                                    params.battery.num_actions()));
  }
  return env_step_signal(state, params.battery.action_levels[action_index], day,
                         params);
}

double rbc_action(double demand_kw, double pv_kw, const BatteryParams& params) {
  const double net = demand_kw - pv_kw;
  if (net <= -params.max_power_kw) return -1.0;
  if (net >= params.max_power_kw) return 1.0;
  return net / params.max_power_kw;
}

}  // namespace hems
