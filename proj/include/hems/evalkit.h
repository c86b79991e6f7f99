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

// Policy evaluation: episode rollouts, a backward-induction optimal-cost
// oracle, multi-seed comparison tables and policy heatmaps.

#ifndef HEMS_EVALKIT_H_
#define HEMS_EVALKIT_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hems/ddt.h"
#include "hems/diffmath.h"
#include "hems/envsim.h"

namespace hems {

struct DiscreteAction {
  int index = 0;
};
struct ContinuousAction {
  double signal = 0.0;
};
using ActionChoice = std::variant<DiscreteAction, ContinuousAction>;

// Deterministic state -> action map.
struct Policy {
  std::string id;
  std::function<ActionChoice(const EnvState&)> decide;
};

Policy make_rbc_policy(const BatteryParams& battery);
Policy make_q_policy(std::string id, DenseNet net);
Policy make_tree_policy(std::string id, CrispTree tree);
Policy make_constant_policy(std::string id, int action_index);

struct TraceStep {
  EnvState state;
  // -1 for continuous actions.
  int action_index = -1;
  double signal = 0.0;
  double aggregate_kw = 0.0;
  double cost_eur = 0.0;
  double energy_cost_eur = 0.0;
  double capacity_cost_eur = 0.0;

  bool operator==(const TraceStep& other) const = default;
};

struct EpisodeReport {
  std::string day_label;
  std::string policy_id;
  std::uint64_t seed = 0;
  double total_cost_eur = 0.0;
  double energy_cost_eur = 0.0;
  double capacity_cost_eur = 0.0;
  std::vector<TraceStep> trace;

  bool operator==(const EpisodeReport& other) const = default;
};

// Throws ContractError if the policy returns an invalid index or signal.
EpisodeReport run_episode(const Policy& policy, const DayProfile& day,
                          const EnvParams& env, double initial_soc = 0.5,
                          std::uint64_t seed = 0);

// Minimal cost over the discrete action set by backward induction on a
// state-of-charge grid with linear interpolation of the value function.
double dp_optimal_cost(const DayProfile& day, const EnvParams& env,
                       double initial_soc = 0.5, int soc_grid_size = 201);

struct SeededPolicy {
  std::uint64_t seed = 0;
  Policy policy;
};

// One named controller family, e.g. five student seeds.
struct PolicyGroup {
  std::string name;
  std::vector<SeededPolicy> members;
};

struct GroupSummary {
  std::string name;
  std::vector<std::uint64_t> seeds;
  // Mean daily cost per seed, aligned with `seeds`.
  std::vector<double> seed_means;
  double mean = 0.0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  // 100 * (baseline mean - mean) / baseline mean.
  double improvement_pct = 0.0;
};

struct ComparisonTable {
  std::string baseline;
  std::vector<GroupSummary> groups;
  std::vector<EpisodeReport> episodes;

  const GroupSummary& group(std::string_view name) const;
};

// Baseline is the group named "rbc" if present, otherwise the first group.
ComparisonTable compare_policies(std::span<const PolicyGroup> groups,
                                 std::span<const DayProfile> days,
                                 const EnvParams& env, double initial_soc = 0.5);

// Linear-interpolation quantile of unsorted values, q in [0, 1].
double quantile(std::vector<double> values, double q);

std::string comparison_csv(const ComparisonTable& table);
std::string episodes_csv(std::span<const EpisodeReport> episodes);
std::string trace_csv(const EpisodeReport& report);

struct HeatmapSpec {
  // Normalized coordinates in [0, 1].
  std::vector<double> soc_grid;
  std::vector<double> price_grid;
  std::vector<double> demand_levels;
  int fixed_hour = 12;
  double fixed_pv = 0.0;
};

// n evenly spaced points on [0, 1].
std::vector<double> unit_grid(int n);

struct HeatmapGrid {
  double demand_level = 0.0;
  std::vector<double> soc_axis;
  std::vector<double> price_axis;
  // Row-major: actions[price_index * soc_axis.size() + soc_index].
  std::vector<int> actions;

  int at(std::size_t soc_index, std::size_t price_index) const {
    return actions[price_index * soc_axis.size() + soc_index];
  }
};

// Continuous policies are mapped to the nearest action level.
std::vector<HeatmapGrid> policy_heatmap(const Policy& policy,
                                        const HeatmapSpec& spec,
                                        const EnvParams& env);

// 4-connected regions of equal action.
int count_regions(const HeatmapGrid& grid);
int count_distinct_actions(const HeatmapGrid& grid);

std::string heatmap_csv(std::span<const HeatmapGrid> grids);
std::string heatmap_svg(std::span<const HeatmapGrid> grids,
                        std::span<const std::string> action_names,
                        const std::string& title);

// Names for the default five levels ("discharge_full" ... "charge_full");
// other level sets get "u=<level>".
std::vector<std::string> action_names(const BatteryParams& battery);

}  // namespace hems

#endif  // HEMS_EVALKIT_H_
