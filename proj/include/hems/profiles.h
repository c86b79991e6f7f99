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

// Exogenous day profiles (price, demand, PV), the CSV profile format, the
// synthetic fixture generator and feature normalization.

#ifndef HEMS_PROFILES_H_
#define HEMS_PROFILES_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hems {

inline constexpr int kNumFeatures = 5;
using Features = std::array<double, kNumFeatures>;

// Slot order of the normalized observation.
enum FeatureIndex : int { kHour = 0, kSoc = 1, kPrice = 2, kDemand = 3, kPv = 4 };

const std::array<std::string, kNumFeatures>& feature_names();

struct DayProfile {
  std::vector<double> prices_eur_per_kwh;
  std::vector<double> demand_kw;
  std::vector<double> pv_kw;
  std::string label;

  int horizon() const { return static_cast<int>(prices_eur_per_kwh.size()); }
  bool operator==(const DayProfile& other) const = default;
};

// Throws ConfigError if vector lengths differ from `horizon` or demand/pv are
// negative or anything is non-finite.
void validate_day(const DayProfile& day, int horizon);

struct FeatureRange {
  double min = 0.0;
  double max = 0.0;

  // (v - min) / (max - min) clipped to [0, 1]; 0 for a degenerate range.
  double scale(double v) const;
  double unscale(double u) const { return min + u * (max - min); }
  bool operator==(const FeatureRange& other) const = default;
};

struct NormalizationStats {
  FeatureRange price;
  FeatureRange demand;
  FeatureRange pv;

  static NormalizationStats from_profiles(std::span<const DayProfile> days);
  bool operator==(const NormalizationStats& other) const = default;
};

// (hour/(T-1), E/capacity, scaled price, scaled demand, scaled pv), every
// entry clipped to [0, 1].
Features normalize(int hour, double energy_kwh, double price, double demand,
                   double pv, const NormalizationStats& stats, int horizon,
                   double capacity_kwh);

// CSV with header `hour,price,demand,pv`; one row per hour, days
// concatenated, hour cycling 0..horizon-1. Days are labelled "day-<n>".
std::vector<DayProfile> parse_profiles(std::string_view text, int horizon = 24);
std::vector<DayProfile> load_profiles(const std::filesystem::path& path,
                                      int horizon = 24);
std::string format_profiles(std::span<const DayProfile> days);
void save_profiles(const std::filesystem::path& path,
                   std::span<const DayProfile> days);

// `high` on [high_start_hour, high_end_hour), `low` elsewhere.
std::vector<double> square_wave_prices(double low, double high,
                                       int high_start_hour, int high_end_hour,
                                       int horizon = 24);

struct SyntheticOptions {
  // Demand: base load plus morning and evening bumps, scaled per day.
  double base_demand_kw = 0.3;
  double morning_peak_kw = 0.8;
  double evening_peak_kw = 1.6;
  double day_scale_min = 0.7;
  double day_scale_max = 1.3;
  double demand_noise_kw = 0.2;
  // PV: bell curve around solar noon with a per-day clearness factor.
  double pv_peak_kw = 3.0;
  double clearness_min = 0.3;
  double clearness_max = 1.0;
  bool include_pv = true;
};

// Synthetic household days sharing one price vector. Deterministic in seed.
std::vector<DayProfile> synthetic_days(int count, std::uint64_t seed,
                                       std::span<const double> prices,
                                       const SyntheticOptions& options = {});

}  // namespace hems

#endif  // HEMS_PROFILES_H_
