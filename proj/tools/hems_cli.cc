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

// hems: command-line front end of the distillation pipeline.
//
// Exit codes: 0 success, 1 unexpected failure, 2 usage or configuration
// error, 3 missing or unreadable input, 4 training failure.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "CLI11.hpp"
#include "hems/config.h"
#include "hems/ddt.h"
#include "hems/error.h"
#include "hems/pipeline.h"

namespace {

struct Flags {
  std::string config_path;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> student_seed;
  std::vector<std::uint64_t> seeds;
  std::vector<int> depths;
  std::string price_mode;
  std::optional<int> days;
  std::optional<double> capacity_rate;
  std::vector<std::string> sets;
  std::vector<std::string> policies;
  std::string format = "text";
  std::string manifest;
};

hems::RunConfig build_config(const Flags& f) {
  hems::RunConfig c;
  if (!f.config_path.empty()) c = hems::load_config(f.config_path);
  if (f.seed) c.teacher_seed = *f.seed;
  if (!f.seeds.empty()) c.seeds = f.seeds;
  if (!f.price_mode.empty()) {
    hems::set_config_value(c, "data.price_mode", f.price_mode);
  }
  if (f.days) c.data.synthetic_train_days = *f.days;
  if (f.capacity_rate) c.tariff.capacity_rate_eur_per_kw = *f.capacity_rate;
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw hems::UsageError(
          fmt::format("--set expects key=value, got '{}'", kv));
    }
    hems::set_config_value(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (int d : f.depths) hems::check_student_depth(d);
  return c;
}

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config_path, "key = value config file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", f.seed, "teacher seed");
  cmd->add_option("--seeds", f.seeds, "student seeds")->delimiter(',');
  cmd->add_option("--price-mode", f.price_mode, "square or file")
      ->check(CLI::IsMember({"square", "file"}));
  cmd->add_option("--days", f.days, "synthetic training days");
  cmd->add_option("--capacity-rate", f.capacity_rate,
                  "capacity tariff in EUR per kW per step");
  cmd->add_option("--set", f.sets, "override any config key (key=value)");
}

void add_depth(CLI::App* cmd, Flags& f) {
  cmd->add_option("--depth", f.depths, "student depth (2 or 3), repeatable")
      ->delimiter(',');
}

int run(int argc, char** argv) {
  CLI::App app{"Distil a DQN battery controller into a small decision tree"};
  app.require_subcommand(1, 1);
  Flags f;

  std::vector<std::pair<std::string, CLI::App*>> stages;
  auto stage = [&](const std::string& name, const std::string& help) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd, f);
    stages.emplace_back(name, cmd);
    return cmd;
  };
  stage("gen-data", "write synthetic (or copy file) training/eval profiles");
  stage("train-teacher", "train the DQN teacher");
  add_depth(stage("distill", "distil the teacher into decision trees"), f);
  CLI::App* evaluate = stage("evaluate", "compare policies against the RBC");
  add_depth(evaluate, f);
  evaluate
      ->add_option("--policies", f.policies,
                   "policy groups: rbc, idle, teacher, ddt")
      ->delimiter(',');
  add_depth(stage("heatmap", "policy heatmaps over SoC and price"), f);
  CLI::App* export_tree = stage("export-tree", "render a student as rules");
  add_depth(export_tree, f);
  export_tree->add_option("--student-seed", f.student_seed,
                          "student seed (default: best distilled seed)");
  export_tree->add_option("--format", f.format, "printed format")
      ->check(CLI::IsMember({"text", "dot", "json"}));
  stage("reproduce", "run both scenarios end to end and check thresholds");

  CLI::App* rerun = app.add_subcommand("rerun", "run a stage from a manifest");
  rerun->add_option("--manifest", f.manifest, "manifest file")->required();

  CLI::App* show = app.add_subcommand("show-config", "print the config");
  add_common(show, f);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? hems::kExitOk : hems::kExitUsage;
  }

  try {
    if (rerun->parsed()) {
      hems::rerun_manifest(f.manifest, std::cout);
      return hems::kExitOk;
    }
    if (show->parsed()) {
      std::cout << hems::format_config(build_config(f));
      return hems::kExitOk;
    }
    for (const auto& [name, cmd] : stages) {
      if (!cmd->parsed()) continue;
      const hems::RunConfig config = build_config(f);
      hems::StageOptions options;
      options.depths = f.depths;
      options.policies = f.policies;
      options.seed = f.student_seed;
      if (name == "reproduce") {
        const auto summary = hems::run_reproduce(config, f.out, std::cout);
        return summary.all_passed() ? hems::kExitOk : hems::kExitFailure;
      }
      const auto manifest =
          hems::run_stage({name, config, options}, f.out, std::cout);
      if (name == "export-tree" && f.format != "text") {
        for (const auto& [path, hash] : manifest.outputs) {
          if (path.ends_with("." + f.format)) {
            std::ifstream in(std::filesystem::path(f.out) / path);
            std::cout << in.rdbuf();
          }
        }
      }
    }
    return hems::kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "hems: " << e.what() << "\n";
    return hems::exit_code_for(std::current_exception());
  }
}

}  // namespace

int main(int argc, char** argv) {
  hems::tune_allocator();
  return run(argc, argv);
}
