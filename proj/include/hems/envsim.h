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

// Battery home-energy environment: linear battery with asymmetric
// efficiency, energy cost with a discounted injection price, a per-step
// capacity charge, and the self-consumption rule-based controller.

#ifndef HEMS_ENVSIM_H_
#define HEMS_ENVSIM_H_

#include <vector>

#include "hems/profiles.h"

namespace hems {

struct BatteryParams {
  double capacity_kwh = 10.0;
  double max_power_kw = 4.0;
  // Applied as in the battery equation: x eta when charging, / eta when
  // discharging.
  double efficiency = 0.9;
  std::vector<double> action_levels = {-1.0, -0.5, 0.0, 0.5, 1.0};

  // Throws ConfigError unless capacity/power are positive, 0 < eta <= 1 and
  // the levels are strictly increasing, symmetric, contain 0 and lie in
  // [-1, 1].
  void validate() const;
  int num_actions() const { return static_cast<int>(action_levels.size()); }
  // Index of the 0 level.
  int idle_action() const;
  bool operator==(const BatteryParams& other) const = default;
};

struct TariffParams {
  double injection_fraction = 0.25;
  double capacity_rate_eur_per_kw = 0.05;
  double contracted_min_kw = 4.0;
  double timestep_hours = 1.0;
  int horizon_steps = 24;

  void validate() const;
  double injection_price(double consumption_price) const {
    return injection_fraction * consumption_price;
  }
  bool operator==(const TariffParams& other) const = default;
};

struct EnvParams {
  BatteryParams battery;
  TariffParams tariff;
  NormalizationStats stats;

  void validate() const {
    battery.validate();
    tariff.validate();
  }
};

struct EnvState {
  int hour = 0;
  double energy_kwh = 0.0;
  double price_eur_per_kwh = 0.0;
  double demand_kw = 0.0;
  double pv_kw = 0.0;
  Features normalized{};

  bool operator==(const EnvState& other) const = default;
};

// State at `hour` with stored energy `energy_kwh`; exogenous values come
// from the day (the last hour's values are reused at hour == horizon).
EnvState make_state(int hour, double energy_kwh, const DayProfile& day,
                    const EnvParams& params);

// Hour 0 with energy = initial_soc * capacity.
EnvState initial_state(const DayProfile& day, const EnvParams& params,
                       double initial_soc = 0.5);

struct BatteryUpdate {
  double energy_kwh = 0.0;
  // Battery power after clipping; positive means charging.
  double power_kw = 0.0;
  bool clipped = false;
};

BatteryUpdate battery_update(double energy_kwh, double signal,
                             const BatteryParams& params, double dt_hours);

// demand - pv + battery power (pv is a non-negative generation magnitude).
double aggregate_power(double demand_kw, double pv_kw, double battery_power_kw);

double energy_cost(double aggregate_kw, double price_eur_per_kwh,
                   const TariffParams& tariff);

double capacity_cost(double aggregate_kw, const TariffParams& tariff);

struct StepOutcome {
  EnvState next_state;
  double cost_eur = 0.0;
  double energy_cost_eur = 0.0;
  double capacity_cost_eur = 0.0;
  double realized_power_kw = 0.0;
  double battery_power_kw = 0.0;
  bool clipped = false;

  bool operator==(const StepOutcome& other) const = default;
};

// Discrete step. Throws ContractError for an out-of-range action index or
// an hour outside [0, horizon).
StepOutcome env_step(const EnvState& state, int action_index,
                     const DayProfile& day, const EnvParams& params);

// Continuous-signal step (signal in [-1, 1]), used by the rule-based
// controller.
StepOutcome env_step_signal(const EnvState& state, double signal,
                            const DayProfile& day, const EnvParams& params);

// Rule-based baseline: with net = demand - pv, -1 below -P_max, +1 above
// P_max, net / P_max in between.
double rbc_action(double demand_kw, double pv_kw, const BatteryParams& params);

}  // namespace hems

#endif  // HEMS_ENVSIM_H_
