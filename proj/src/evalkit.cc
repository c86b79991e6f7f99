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

#include "hems/evalkit.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/core.h>

#include "hems/error.h"
#include "hems/teacher.h"

namespace hems {

Policy make_rbc_policy(const BatteryParams& battery) {
  return {"rbc", [battery](const EnvState& s) -> ActionChoice {
            return ContinuousAction{rbc_action(s.demand_kw, s.pv_kw, battery)};
          }};
}

Policy make_q_policy(std::string id, DenseNet net) {
  return {std::move(id), [net = std::move(net)](const EnvState& s) -> ActionChoice {
            return DiscreteAction{greedy_action(net, s.normalized)};
          }};
}

Policy make_tree_policy(std::string id, CrispTree tree) {
  return {std::move(id),
          [tree = std::move(tree)](const EnvState& s) -> ActionChoice {
            return DiscreteAction{crisp_predict(tree, s.normalized)};
          }};
}

Policy make_constant_policy(std::string id, int action_index) {
  return {std::move(id), [action_index](const EnvState&) -> ActionChoice {
            return DiscreteAction{action_index};
          }};
}

EpisodeReport run_episode(const Policy& policy, const DayProfile& day,
                          const EnvParams& env, double initial_soc,
                          std::uint64_t seed) {
  env.validate();
  validate_day(day, env.tariff.horizon_steps);
  EpisodeReport report;
  report.day_label = day.label;
  report.policy_id = policy.id;
  report.seed = seed;
  EnvState state = initial_state(day, env, initial_soc);
  for (int t = 0; t < env.tariff.horizon_steps; ++t) {
    const ActionChoice choice = policy.decide(state);
    TraceStep step;
    step.state = state;
    StepOutcome out;
    if (const auto* d = std::get_if<DiscreteAction>(&choice)) {
      if (d->index < 0 || d->index >= env.battery.num_actions()) {
        throw ContractError(fmt::format(
            "policy '{}' returned action {} at hour {} (valid: 0..{})",
            policy.id, d->index, t, env.battery.num_actions() - 1));
      }
      step.action_index = d->index;
      step.signal = env.battery.action_levels[d->index];
      out = env_step(state, d->index, day, env);
    } else {
      const double u = std::get<ContinuousAction>(choice).signal;
      if (!(u >= -1.0 && u <= 1.0)) {
        throw ContractError(fmt::format(
            "policy '{}' returned signal {} at hour {}", policy.id, u, t));
      }
      step.signal = u;
      out = env_step_signal(state, u, day, env);
    }
    step.aggregate_kw = out.realized_power_kw;
    step.cost_eur = out.cost_eur;
    step.energy_cost_eur = out.energy_cost_eur;
    step.capacity_cost_eur = out.capacity_cost_eur;
    report.energy_cost_eur += out.energy_cost_eur;
    report.capacity_cost_eur += out.capacity_cost_eur;
    report.trace.push_back(step);
    state = out.next_state;
  }
  report.total_cost_eur = report.energy_cost_eur + report.capacity_cost_eur;
  return report;
}

double dp_optimal_cost(const DayProfile& day, const EnvParams& env,
                       double initial_soc, int soc_grid_size) {
  env.validate();
  validate_day(day, env.tariff.horizon_steps);
  if (soc_grid_size < 2) throw ConfigError("DP grid needs at least 2 levels");
  const double capacity = env.battery.capacity_kwh;
  const double dt = env.tariff.timestep_hours;
  const int n = soc_grid_size;
  const auto interpolate = [&](const std::vector<double>& v, double energy) {
    const double pos = std::clamp(energy / capacity, 0.0, 1.0) * (n - 1);
    const int i = std::min(static_cast<int>(pos), n - 2);
    const double frac = pos - i;
    return v[i] + frac * (v[i + 1] - v[i]);
  };
  std::vector<double> value(n, 0.0);
  std::vector<double> next(n, 0.0);
  for (int t = env.tariff.horizon_steps - 1; t >= 0; --t) {
    const double price = day.prices_eur_per_kwh[t];
    for (int i = 0; i < n; ++i) {
      const double energy = capacity * i / (n - 1);
      double best = std::numeric_limits<double>::infinity();
      for (double level : env.battery.action_levels) {
        const BatteryUpdate b = battery_update(energy, level, env.battery, dt);
        const double agg = aggregate_power(day.demand_kw[t], day.pv_kw[t], b.power_kw);
        const double cost = energy_cost(agg, price, env.tariff) +
                            capacity_cost(agg, env.tariff);
        best = std::min(best, cost + interpolate(value, b.energy_kwh));
      }
      next[i] = best;
    }
    std::swap(value, next);
  }
  return interpolate(value, initial_soc * capacity);
}

const GroupSummary& ComparisonTable::group(std::string_view name) const {
  for (const auto& g : groups) {
    if (g.name == name) return g;
  }
  throw ContractError(fmt::format("no policy group named '{}'", name));
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ContractError("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * (values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - lo) * (values[hi] - values[lo]);
}

ComparisonTable compare_policies(std::span<const PolicyGroup> groups,
                                 std::span<const DayProfile> days,
                                 const EnvParams& env, double initial_soc) {
  if (groups.empty()) throw ContractError("compare_policies needs a policy");
  if (days.empty()) throw ContractError("compare_policies needs a day");
  ComparisonTable table;
  for (const PolicyGroup& group : groups) {
    if (group.members.empty()) {
      throw ContractError(fmt::format("policy group '{}' is empty", group.name));
    }
    GroupSummary summary;
    summary.name = group.name;
    for (const SeededPolicy& member : group.members) {
      double sum = 0.0;
      for (const DayProfile& day : days) {
        EpisodeReport r =
            run_episode(member.policy, day, env, initial_soc, member.seed);
        sum += r.total_cost_eur;
        table.episodes.push_back(std::move(r));
      }
      summary.seeds.push_back(member.seed);
      summary.seed_means.push_back(sum / static_cast<double>(days.size()));
    }
    const auto& m = summary.seed_means;
    summary.mean = std::accumulate(m.begin(), m.end(), 0.0) / m.size();
    summary.min = *std::min_element(m.begin(), m.end());
    summary.max = *std::max_element(m.begin(), m.end());
    summary.q1 = quantile(m, 0.25);
    summary.median = quantile(m, 0.5);
    summary.q3 = quantile(m, 0.75);
    table.groups.push_back(std::move(summary));
  }
  table.baseline = table.groups.front().name;
  for (const auto& g : table.groups) {
    if (g.name == "rbc") table.baseline = "rbc";
  }
  const double base = table.group(table.baseline).mean;
  for (auto& g : table.groups) {
    g.improvement_pct = base != 0.0 ? 100.0 * (base - g.mean) / base : 0.0;
  }
  return table;
}

std::string comparison_csv(const ComparisonTable& table) {
  std::string out =
      "policy,seeds,mean,min,q1,median,q3,max,improvement_pct,seed_means\n";
  for (const auto& g : table.groups) {
    std::string seeds, means;
    for (std::size_t i = 0; i < g.seeds.size(); ++i) {
      seeds += fmt::format("{}{}", i ? ";" : "", g.seeds[i]);
      means += fmt::format("{}{}", i ? ";" : "", g.seed_means[i]);
    }
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", g.name, seeds, g.mean,
                       g.min, g.q1, g.median, g.q3, g.max, g.improvement_pct,
                       means);
  }
  return out;
}

std::string episodes_csv(std::span<const EpisodeReport> episodes) {
  std::string out = "policy,seed,day,total_cost,energy_cost,capacity_cost\n";
  for (const auto& e : episodes) {
    out += fmt::format("{},{},{},{},{},{}\n", e.policy_id, e.seed, e.day_label,
                       e.total_cost_eur, e.energy_cost_eur,
                       e.capacity_cost_eur);
  }
  return out;
}

std::string trace_csv(const EpisodeReport& report) {
  std::string out =
      "hour,energy_kwh,price,demand,pv,action,signal,aggregate_kw,cost,"
      "energy_cost,capacity_cost\n";
  for (const auto& s : report.trace) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", s.state.hour,
                       s.state.energy_kwh, s.state.price_eur_per_kwh,
                       s.state.demand_kw, s.state.pv_kw, s.action_index,
                       s.signal, s.aggregate_kw, s.cost_eur, s.energy_cost_eur,
                       s.capacity_cost_eur);
  }
  return out;
}

std::vector<double> unit_grid(int n) {
  if (n < 1) throw ConfigError("grid needs at least one point");
  if (n == 1) return {0.5};
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = static_cast<double>(i) / (n - 1);
  return g;
}

namespace {

int nearest_level(const BatteryParams& battery, double signal) {
  int best = 0;
  for (int i = 1; i < battery.num_actions(); ++i) {
    if (std::abs(battery.action_levels[i] - signal) <
        std::abs(battery.action_levels[best] - signal)) {
      best = i;
    }
  }
  return best;
}

}  // namespace

std::vector<HeatmapGrid> policy_heatmap(const Policy& policy,
                                        const HeatmapSpec& spec,
                                        const EnvParams& env) {
  if (spec.soc_grid.empty() || spec.price_grid.empty() ||
      spec.demand_levels.empty()) {
    throw ConfigError("heatmap grids must be non-empty");
  }
  const int horizon = env.tariff.horizon_steps;
  std::vector<HeatmapGrid> grids;
  for (double demand_level : spec.demand_levels) {
    HeatmapGrid grid;
    grid.demand_level = demand_level;
    grid.soc_axis = spec.soc_grid;
    grid.price_axis = spec.price_grid;
    for (double price_level : spec.price_grid) {
      for (double soc : spec.soc_grid) {
        EnvState s;
        s.hour = spec.fixed_hour;
        s.energy_kwh = soc * env.battery.capacity_kwh;
        s.price_eur_per_kwh = env.stats.price.unscale(price_level);
        s.demand_kw = env.stats.demand.unscale(demand_level);
        s.pv_kw = env.stats.pv.unscale(spec.fixed_pv);
        s.normalized = normalize(s.hour, s.energy_kwh, s.price_eur_per_kwh,
                                 s.demand_kw, s.pv_kw, env.stats, horizon,
                                 env.battery.capacity_kwh);
        // Degenerate ranges unscale to a constant; keep the requested
        // coordinates so the grid axes stay meaningful.
        s.normalized[kSoc] = soc;
        s.normalized[kPrice] = price_level;
        s.normalized[kDemand] = demand_level;
        s.normalized[kPv] = spec.fixed_pv;
        const ActionChoice choice = policy.decide(s);
        int action = 0;
        if (const auto* d = std::get_if<DiscreteAction>(&choice)) {
          action = d->index;
        } else {
          action = nearest_level(env.battery,
                                 std::get<ContinuousAction>(choice).signal);
        }
        grid.actions.push_back(action);
      }
    }
    grids.push_back(std::move(grid));
  }
  return grids;
}

int count_regions(const HeatmapGrid& grid) {
  const std::size_t w = grid.soc_axis.size();
  const std::size_t h = grid.price_axis.size();
  std::vector<char> seen(w * h, 0);
  int regions = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < w * h; ++start) {
    if (seen[start]) continue;
    ++regions;
    const int action = grid.actions[start];
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t c = stack.back();
      stack.pop_back();
      const std::size_t x = c % w;
      const std::size_t y = c / w;
      const auto visit = [&](std::size_t n) {
        if (!seen[n] && grid.actions[n] == action) {
          seen[n] = 1;
          stack.push_back(n);
        }
      };
      if (x > 0) visit(c - 1);
      if (x + 1 < w) visit(c + 1);
      if (y > 0) visit(c - w);
      if (y + 1 < h) visit(c + w);
    }
  }
  return regions;
}

int count_distinct_actions(const HeatmapGrid& grid) {
  std::vector<int> a = grid.actions;
  std::sort(a.begin(), a.end());
  return static_cast<int>(std::unique(a.begin(), a.end()) - a.begin());
}

std::string heatmap_csv(std::span<const HeatmapGrid> grids) {
  std::string out = "demand,price,soc,action\n";
  for (const auto& g : grids) {
    for (std::size_t p = 0; p < g.price_axis.size(); ++p) {
      for (std::size_t s = 0; s < g.soc_axis.size(); ++s) {
        out += fmt::format("{},{},{},{}\n", g.demand_level, g.price_axis[p],
                           g.soc_axis[s], g.at(s, p));
      }
    }
  }
  return out;
}

std::string heatmap_svg(std::span<const HeatmapGrid> grids,
                        std::span<const std::string> action_names,
                        const std::string& title) {
  // Diverging palette: discharge red ... idle grey ... charge blue.
  static const char* kPalette[] = {"#b2182b", "#ef8a62", "#e0e0e0", "#67a9cf",
                                   "#2166ac", "#1b7837", "#762a83", "#e08214"};
  constexpr int kPanel = 240;
  constexpr int kMargin = 50;
  constexpr int kGap = 30;
  constexpr int kLegend = 30;
  const int panels = static_cast<int>(grids.size());
  const int width = kMargin + panels * (kPanel + kGap);
  const int height = kMargin + kPanel + 40 + kLegend;
  std::string out = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
      "font-family=\"Helvetica\" font-size=\"11\">\n",
      width, height);
  out += fmt::format("<text x=\"{}\" y=\"18\" font-size=\"14\">{}</text>\n",
                     kMargin, title);
  for (int p = 0; p < panels; ++p) {
    const HeatmapGrid& g = grids[p];
    const int x0 = kMargin + p * (kPanel + kGap);
    const int y0 = kMargin - 10;
    const double cw = static_cast<double>(kPanel) / g.soc_axis.size();
    const double ch = static_cast<double>(kPanel) / g.price_axis.size();
    out += fmt::format(
        "<text x=\"{}\" y=\"{}\">demand = {:.2f}</text>\n", x0, y0 - 6,
        g.demand_level);
    for (std::size_t pi = 0; pi < g.price_axis.size(); ++pi) {
      for (std::size_t si = 0; si < g.soc_axis.size(); ++si) {
        const int a = g.at(si, pi);
        // Price increases upwards.
        const double y = y0 + kPanel - (pi + 1) * ch;
        out += fmt::format(
            "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" "
            "fill=\"{}\"/>\n",
            x0 + si * cw, y, cw + 0.05, ch + 0.05, kPalette[a % 8]);
      }
    }
    out += fmt::format(
        "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" "
        "stroke=\"black\"/>\n",
        x0, y0, kPanel, kPanel);
    out += fmt::format("<text x=\"{}\" y=\"{}\">state of charge</text>\n",
                       x0 + kPanel / 2 - 40, y0 + kPanel + 15);
    if (p == 0) {
      out += fmt::format(
          "<text x=\"{}\" y=\"{}\" transform=\"rotate(-90 {} {})\">price</text>\n",
          x0 - 10, y0 + kPanel / 2, x0 - 10, y0 + kPanel / 2);
    }
  }
  const int ly = kMargin + kPanel + 30;
  for (std::size_t a = 0; a < action_names.size(); ++a) {
    const int lx = kMargin + static_cast<int>(a) * 110;
    out += fmt::format(
        "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n", lx,
        ly, kPalette[a % 8]);
    out += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", lx + 16, ly + 10,
                       action_names[a]);
  }
  out += "</svg>\n";
  return out;
}

std::vector<std::string> action_names(const BatteryParams& battery) {
  std::vector<std::string> names;
  for (double level : battery.action_levels) {
    if (level == -1.0) {
      names.push_back("discharge_full");
    } else if (level == -0.5) {
      names.push_back("discharge_half");
    } else if (level == 0.0) {
      names.push_back("idle");
    } else if (level == 0.5) {
      names.push_back("charge_half");
    } else if (level == 1.0) {
      names.push_back("charge_full");
    } else {
      names.push_back(fmt::format("u={}", level));
    }
  }
  return names;
}

}  // namespace hems
