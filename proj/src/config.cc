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

#include "hems/config.h"

#include <functional>
#include <map>

#include <fmt/core.h>

#include "hems/error.h"
#include "io_util.h"

namespace hems {

void RunConfig::validate() const {
  battery.validate();
  tariff.validate();
  teacher.validate();
  student.validate();
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (!(eval.initial_soc >= 0.0 && eval.initial_soc <= 1.0)) {
    throw ConfigError("eval.initial_soc outside [0, 1]");
  }
  if (eval.dp_grid_size < 2) throw ConfigError("eval.dp_grid_size must be >= 2");
  if (data.synthetic_train_days < 1 || data.synthetic_eval_days < 1) {
    throw ConfigError("synthetic day counts must be >= 1");
  }
  if (heatmap.grid_size < 2) throw ConfigError("heatmap.grid_size must be >= 2");
  if (heatmap.demand_levels.empty()) {
    throw ConfigError("heatmap.demand_levels is empty");
  }
}

namespace {

std::string join(const auto& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out += fmt::format("{}{}", i ? "," : "", values[i]);
  }
  return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value,
                            std::string_view expected) {
  throw UsageError(fmt::format("config key '{}': cannot parse '{}' as {}", key,
                               value, expected));
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  if (!io::parse_double(v, out)) bad_value(key, v, "a number");
  return out;
}

int to_int(std::string_view key, std::string_view v) {
  int out = 0;
  if (!io::parse_int(v, out)) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  unsigned long long out = 0;
  if (!io::parse_u64(v, out)) bad_value(key, v, "a non-negative integer");
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  v = io::trim(v);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true/false");
}

template <typename T, typename F>
std::vector<T> to_list(std::string_view key, std::string_view v, F parse_one) {
  std::vector<T> out;
  if (io::trim(v).empty()) return out;
  for (auto item : io::split(v, ',')) out.push_back(parse_one(key, item));
  return out;
}

struct Field {
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define HEMS_NUMBER(key, member, parse)                                   \
  {key,                                                                   \
   {[](RunConfig& c, std::string_view v) { c.member = parse(key, v); },   \
    [](const RunConfig& c) { return fmt::format("{}", c.member); }}}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      HEMS_NUMBER("battery.capacity_kwh", battery.capacity_kwh, to_double),
      HEMS_NUMBER("battery.max_power_kw", battery.max_power_kw, to_double),
      HEMS_NUMBER("battery.efficiency", battery.efficiency, to_double),
      {"battery.action_levels",
       {[](RunConfig& c, std::string_view v) {
          c.battery.action_levels =
              to_list<double>("battery.action_levels", v, to_double);
        },
        [](const RunConfig& c) { return join(c.battery.action_levels); }}},
      HEMS_NUMBER("tariff.injection_fraction", tariff.injection_fraction,
                  to_double),
      HEMS_NUMBER("tariff.capacity_rate", tariff.capacity_rate_eur_per_kw,
                  to_double),
      HEMS_NUMBER("tariff.contracted_min_kw", tariff.contracted_min_kw,
                  to_double),
      HEMS_NUMBER("tariff.timestep_hours", tariff.timestep_hours, to_double),
      HEMS_NUMBER("tariff.horizon_steps", tariff.horizon_steps, to_int),
      {"teacher.hidden_layers",
       {[](RunConfig& c, std::string_view v) {
          c.teacher.hidden_layers =
              to_list<int>("teacher.hidden_layers", v, to_int);
        },
        [](const RunConfig& c) { return join(c.teacher.hidden_layers); }}},
      HEMS_NUMBER("teacher.learning_rate", teacher.learning_rate, to_double),
      HEMS_NUMBER("teacher.gamma", teacher.gamma, to_double),
      HEMS_NUMBER("teacher.target_blend", teacher.target_blend, to_double),
      HEMS_NUMBER("teacher.batch_size", teacher.batch_size, to_u64),
      HEMS_NUMBER("teacher.buffer_size", teacher.buffer_size, to_u64),
      HEMS_NUMBER("teacher.episodes", teacher.episodes, to_int),
      HEMS_NUMBER("teacher.epsilon_start", teacher.epsilon_start, to_double),
      HEMS_NUMBER("teacher.epsilon_end", teacher.epsilon_end, to_double),
      HEMS_NUMBER("teacher.epsilon_decay_fraction",
                  teacher.epsilon_decay_fraction, to_double),
      HEMS_NUMBER("teacher.seed", teacher_seed, to_u64),
      HEMS_NUMBER("student.depth", student.depth, to_int),
      HEMS_NUMBER("student.temperature", student.temperature, to_double),
      HEMS_NUMBER("student.epochs", student.epochs, to_int),
      HEMS_NUMBER("student.batch_size", student.batch_size, to_u64),
      HEMS_NUMBER("student.learning_rate", student.learning_rate, to_double),
      {"seeds",
       {[](RunConfig& c, std::string_view v) {
          c.seeds = to_list<std::uint64_t>("seeds", v, to_u64);
        },
        [](const RunConfig& c) { return join(c.seeds); }}},
      {"data.price_mode",
       {[](RunConfig& c, std::string_view v) {
          v = io::trim(v);
          if (v == "square") {
            c.data.price_mode = PriceMode::kSquare;
          } else if (v == "file") {
            c.data.price_mode = PriceMode::kFile;
          } else {
            bad_value("data.price_mode", v, "square or file");
          }
        },
        [](const RunConfig& c) {
          return std::string(c.data.price_mode == PriceMode::kSquare ? "square"
                                                                     : "file");
        }}},
      HEMS_NUMBER("data.square_low", data.square_low, to_double),
      HEMS_NUMBER("data.square_high", data.square_high, to_double),
      HEMS_NUMBER("data.square_start_hour", data.square_start_hour, to_int),
      HEMS_NUMBER("data.square_end_hour", data.square_end_hour, to_int),
      {"data.train_profiles",
       {[](RunConfig& c, std::string_view v) {
          c.data.train_profiles = std::string(io::trim(v));
        },
        [](const RunConfig& c) { return c.data.train_profiles; }}},
      {"data.eval_profiles",
       {[](RunConfig& c, std::string_view v) {
          c.data.eval_profiles = std::string(io::trim(v));
        },
        [](const RunConfig& c) { return c.data.eval_profiles; }}},
      HEMS_NUMBER("data.synthetic_train_days", data.synthetic_train_days,
                  to_int),
      HEMS_NUMBER("data.synthetic_eval_days", data.synthetic_eval_days, to_int),
      HEMS_NUMBER("data.synthetic_seed", data.synthetic_seed, to_u64),
      {"data.no_pv",
       {[](RunConfig& c, std::string_view v) {
          c.data.no_pv = to_bool("data.no_pv", v);
        },
        [](const RunConfig& c) {
          return std::string(c.data.no_pv ? "true" : "false");
        }}},
      HEMS_NUMBER("eval.initial_soc", eval.initial_soc, to_double),
      HEMS_NUMBER("eval.dp_grid_size", eval.dp_grid_size, to_int),
      HEMS_NUMBER("heatmap.grid_size", heatmap.grid_size, to_int),
      HEMS_NUMBER("heatmap.hour", heatmap.hour, to_int),
      HEMS_NUMBER("heatmap.pv", heatmap.pv, to_double),
      {"heatmap.demand_levels",
       {[](RunConfig& c, std::string_view v) {
          c.heatmap.demand_levels =
              to_list<double>("heatmap.demand_levels", v, to_double);
        },
        [](const RunConfig& c) { return join(c.heatmap.demand_levels); }}},
  };
  return table;
}

#undef HEMS_NUMBER

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, field] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& config, std::string_view key,
                      std::string_view value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(config, value);
      return;
    }
  }
  std::string valid;
  for (const auto& k : config_keys()) valid += "\n  " + k;
  throw UsageError(
      fmt::format("unknown config key '{}'; valid keys:{}", key, valid));
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  for (const auto& [line_no, line] : io::lines(text)) {
    if (line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError(fmt::format(
          "config line {}: expected 'key = value', got '{}'", line_no, line));
    }
    set_config_value(config, io::trim(line.substr(0, eq)),
                     io::trim(line.substr(eq + 1)));
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(io::read_file(path));
}

std::string format_config(const RunConfig& config) {
  std::string out;
  for (const auto& [name, field] : fields()) {
    out += fmt::format("{} = {}\n", name, field.get(config));
  }
  return out;
}

}  // namespace hems
