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

// Run configuration: a flat `key = value` file where every key has a default,
// so an empty file is a valid configuration.

#ifndef HEMS_CONFIG_H_
#define HEMS_CONFIG_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hems/distill.h"
#include "hems/envsim.h"
#include "hems/teacher.h"

namespace hems {

enum class PriceMode { kSquare, kFile };

struct DataConfig {
  PriceMode price_mode = PriceMode::kSquare;
  double square_low = 0.05;
  double square_high = 0.25;
  int square_start_hour = 8;
  int square_end_hour = 20;
  // Empty means <out>/data/{train,eval}.csv written by gen-data.
  std::string train_profiles;
  std::string eval_profiles;
  int synthetic_train_days = 30;
  int synthetic_eval_days = 10;
  std::uint64_t synthetic_seed = 2024;
  // Zeroes PV in every loaded profile (the reduced, no-PV scenario).
  bool no_pv = false;

  bool operator==(const DataConfig& other) const = default;
};

struct EvalConfig {
  double initial_soc = 0.5;
  int dp_grid_size = 201;

  bool operator==(const EvalConfig& other) const = default;
};

struct HeatmapConfig {
  int grid_size = 41;
  int hour = 12;
  double pv = 0.0;
  std::vector<double> demand_levels = {0.2, 0.5, 0.8};

  bool operator==(const HeatmapConfig& other) const = default;
};

struct RunConfig {
  BatteryParams battery;
  TariffParams tariff;
  TeacherConfig teacher;
  std::uint64_t teacher_seed = 1;
  StudentConfig student;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  DataConfig data;
  EvalConfig eval;
  HeatmapConfig heatmap;

  void validate() const;
  bool operator==(const RunConfig& other) const = default;
};

// All recognised keys, in snapshot order.
const std::vector<std::string>& config_keys();

// Throws UsageError for unknown keys (listing the valid ones) and for values
// that do not parse.
void set_config_value(RunConfig& config, std::string_view key,
                      std::string_view value);

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

// Every key with its current value; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& config);

}  // namespace hems

#endif  // HEMS_CONFIG_H_
