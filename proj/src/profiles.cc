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

#include "hems/profiles.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <fmt/core.h>

#include "hems/error.h"
#include "io_util.h"

namespace hems {

const std::array<std::string, kNumFeatures>& feature_names() {
  static const std::array<std::string, kNumFeatures> names = {
      "hour", "soc", "price", "demand", "pv"};
  return names;
}

void validate_day(const DayProfile& day, int horizon) {
  const auto check = [&](const std::vector<double>& v, const char* name,
                         bool non_negative) {
    if (static_cast<int>(v.size()) != horizon) {
      throw ConfigError(fmt::format("{}: {} has {} entries, expected {}",
                                    day.label, name, v.size(), horizon));
    }
    for (double x : v) {
      if (!std::isfinite(x) || (non_negative && x < 0.0)) {
        throw ConfigError(
            fmt::format("{}: invalid {} value {}", day.label, name, x));
      }
    }
  };
  check(day.prices_eur_per_kwh, "price", false);
  check(day.demand_kw, "demand", true);
  check(day.pv_kw, "pv", true);
}

double FeatureRange::scale(double v) const {
  if (!(max > min)) return 0.0;
  return std::clamp((v - min) / (max - min), 0.0, 1.0);
}

NormalizationStats NormalizationStats::from_profiles(
    std::span<const DayProfile> days) {
  const auto range = [&](auto member) {
    FeatureRange r{std::numeric_limits<double>::infinity(),
                   -std::numeric_limits<double>::infinity()};
    for (const auto& day : days) {
      for (double v : day.*member) {
        r.min = std::min(r.min, v);
        r.max = std::max(r.max, v);
      }
    }
    if (r.min > r.max) r = FeatureRange{};
    return r;
  };
  return {range(&DayProfile::prices_eur_per_kwh), range(&DayProfile::demand_kw),
          range(&DayProfile::pv_kw)};
}

Features normalize(int hour, double energy_kwh, double price, double demand,
                   double pv, const NormalizationStats& stats, int horizon,
                   double capacity_kwh) {
  const double hour_scale = horizon > 1 ? horizon - 1 : 1;
  return {std::clamp(hour / hour_scale, 0.0, 1.0),
          std::clamp(energy_kwh / capacity_kwh, 0.0, 1.0),
          stats.price.scale(price), stats.demand.scale(demand),
          stats.pv.scale(pv)};
}

namespace {

std::string day_label(std::size_t index) {
  return fmt::format("day-{}", index);
}

}  // namespace

std::vector<DayProfile> parse_profiles(std::string_view text, int horizon) {
  if (horizon <= 0) throw ConfigError("horizon must be positive");
  std::vector<DayProfile> days;
  bool seen_header = false;
  int line_no = 0;
  int hour = 0;
  for (const auto& [number, line] : io::lines(text)) {
    line_no = number;
    if (!seen_header) {
      if (line != "hour,price,demand,pv") {
        throw LoadError(fmt::format("line {}: expected header "
                                    "'hour,price,demand,pv'",
                                    line_no),
                        line_no);
      }
      seen_header = true;
      continue;
    }
    const auto fields = io::split(line, ',');
    if (fields.size() != 4) {
      throw LoadError(fmt::format("line {}: expected 4 columns, found {}",
                                  line_no, fields.size()),
                      line_no);
    }
    int row_hour = 0;
    double price = 0.0, demand = 0.0, pv = 0.0;
    if (!io::parse_int(fields[0], row_hour) ||
        !io::parse_double(fields[1], price) ||
        !io::parse_double(fields[2], demand) ||
        !io::parse_double(fields[3], pv)) {
      throw LoadError(fmt::format("line {}: malformed row", line_no), line_no);
    }
    if (row_hour != hour) {
      const std::string detail =
          hour == 0 ? std::string()
                    : fmt::format(" ({} has only {} rows)",
                                  day_label(days.size() - 1), hour);
      throw LoadError(fmt::format("line {}: expected hour {}, got {}{}",
                                  line_no, hour, row_hour, detail),
                      line_no);
    }
    if (demand < 0.0 || pv < 0.0) {
      throw LoadError(
          fmt::format("line {}: demand and pv must be non-negative", line_no),
          line_no);
    }
    if (hour == 0) {
      DayProfile day;
      day.label = day_label(days.size());
      days.push_back(std::move(day));
    }
    DayProfile& day = days.back();
    day.prices_eur_per_kwh.push_back(price);
    day.demand_kw.push_back(demand);
    day.pv_kw.push_back(pv);
    hour = (hour + 1) % horizon;
  }
  if (!seen_header) throw LoadError("profile file is empty");
  if (hour != 0) {
    throw LoadError(fmt::format("{} is short: {} of {} rows",
                                day_label(days.size() - 1), hour, horizon),
                    line_no);
  }
  if (days.empty()) throw LoadError("profile file contains no days");
  return days;
}

std::vector<DayProfile> load_profiles(const std::filesystem::path& path,
                                      int horizon) {
  const std::string text = io::read_file(path);
  try {
    return parse_profiles(text, horizon);
  } catch (const LoadError& e) {
    throw LoadError(fmt::format("{}: {}", path.string(), e.what()), e.line());
  }
}

std::string format_profiles(std::span<const DayProfile> days) {
  std::string out = "hour,price,demand,pv\n";
  for (const auto& day : days) {
    validate_day(day, day.horizon());
    for (int h = 0; h < day.horizon(); ++h) {
      out += fmt::format("{},{},{},{}\n", h, day.prices_eur_per_kwh[h],
                         day.demand_kw[h], day.pv_kw[h]);
    }
  }
  return out;
}

void save_profiles(const std::filesystem::path& path,
                   std::span<const DayProfile> days) {
  io::write_file(path, format_profiles(days));
}

std::vector<double> square_wave_prices(double low, double high,
                                       int high_start_hour, int high_end_hour,
                                       int horizon) {
  if (!(0 <= high_start_hour && high_start_hour < high_end_hour &&
        high_end_hour <= horizon)) {
    throw ConfigError(fmt::format(
        "square-wave window [{}, {}) must satisfy 0 <= start < end <= {}",
        high_start_hour, high_end_hour, horizon));
  }
  if (!(low < high)) {
    throw ConfigError(fmt::format(
        "square-wave low price {} must be below high price {}", low, high));
  }
  std::vector<double> prices(horizon, low);
  for (int h = high_start_hour; h < high_end_hour; ++h) prices[h] = high;
  return prices;
}

std::vector<DayProfile> synthetic_days(int count, std::uint64_t seed,
                                       std::span<const double> prices,
                                       const SyntheticOptions& options) {
  const int horizon = static_cast<int>(prices.size());
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto bump = [](double h, double center, double width) {
    const double z = (h - center) / width;
    return std::exp(-0.5 * z * z);
  };
  // Hours are mapped onto a 24-hour clock so other horizons keep the shape.
  const double hours_per_step = 24.0 / horizon;
  std::vector<DayProfile> days;
  days.reserve(count);
  for (int d = 0; d < count; ++d) {
    DayProfile day;
    day.label = fmt::format("day-{}", d);
    day.prices_eur_per_kwh.assign(prices.begin(), prices.end());
    const double scale =
        options.day_scale_min +
        (options.day_scale_max - options.day_scale_min) * unit(rng);
    const double clearness =
        options.clearness_min +
        (options.clearness_max - options.clearness_min) * unit(rng);
    for (int t = 0; t < horizon; ++t) {
      const double h = t * hours_per_step;
      double demand = options.base_demand_kw +
                      options.morning_peak_kw * bump(h, 7.5, 1.2) +
                      options.evening_peak_kw * bump(h, 19.0, 1.8);
      demand = demand * scale + options.demand_noise_kw * unit(rng);
      double pv = 0.0;
      if (options.include_pv) {
        pv = options.pv_peak_kw * clearness * bump(h, 13.0, 2.5);
        if (pv < 0.02) pv = 0.0;
      }
      day.demand_kw.push_back(demand);
      day.pv_kw.push_back(pv);
    }
    days.push_back(std::move(day));
  }
  return days;
}

}  // namespace hems
