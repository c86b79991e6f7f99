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

// Pipeline stages behind the command-line tool. Each stage reads its inputs
// from, and writes its outputs under, one output directory:
//
//   data/         train.csv, eval.csv
//   checkpoints/  teacher.qnet, buffer.csv, teacher_loss.csv, dataset.csv
//   students/     depth-<d>/seed-<s>/{params.json,tree.json,tree.txt,
//                 tree.dot,loss.csv}, depth-<d>/summary.json
//   reports/      comparison.csv, episodes.csv, dp_oracle.csv, summary.json,
//                 traces/
//   heatmaps/     <policy>.csv, <policy>.svg, regions.csv
//   exports/      ddt-d<d>-seed-<s>.{txt,dot,json}
//   manifests/    <command>.json
//
// A manifest records everything needed to run its stage again: the full
// config, the stage options and the SHA-256 of every input and output.

#ifndef HEMS_PIPELINE_H_
#define HEMS_PIPELINE_H_

#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "hems/config.h"

namespace hems {

inline constexpr std::string_view kToolVersion = "1.0.0";

// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitUsage = 2,
  kExitLoad = 3,
  kExitTraining = 4,
};

int exit_code_for(std::exception_ptr error);

std::string sha256_hex(std::string_view bytes);

// Keeps large training temporaries on the heap instead of fresh mmap pages.
// A no-op outside glibc. Call once at program start.
void tune_allocator();

// Rejects student depths other than 2 and 3 with a UsageError.
void check_student_depth(int depth);

struct StageOptions {
  // Student depths for distill, evaluate, heatmap and export-tree. Empty
  // means the configured student.depth.
  std::vector<int> depths;
  // Policy groups for evaluate, any of rbc, idle, teacher, ddt. Empty means
  // all of them.
  std::vector<std::string> policies;
  // Student seed for export-tree. Unset means the best seed of distill.
  std::optional<std::uint64_t> seed;

  bool operator==(const StageOptions& other) const = default;
};

struct Stage {
  // gen-data, train-teacher, distill, evaluate, heatmap, export-tree,
  // reproduce.
  std::string command;
  RunConfig config;
  StageOptions options;
};

struct Manifest {
  std::string command;
  RunConfig config;
  StageOptions options;
  // Paths relative to the output directory.
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
};

std::string format_manifest(const Manifest& manifest);
Manifest parse_manifest(std::string_view text);
std::filesystem::path manifest_path(const std::filesystem::path& out,
                                    std::string_view command);

const std::vector<std::string>& stage_commands();

// Runs one stage and writes its manifest. Progress goes to `log`.
Manifest run_stage(const Stage& stage, const std::filesystem::path& out,
                   std::ostream& log);

// Runs the stage recorded in a manifest again, in the output directory the
// manifest belongs to.
Manifest rerun_manifest(const std::filesystem::path& manifest_file,
                        std::ostream& log);

struct CriterionCheck {
  std::string name;
  bool passed = false;
  // Ungated checks are informational and never fail a run.
  bool gated = true;
  std::string detail;
};

struct ReproduceSummary {
  std::vector<CriterionCheck> checks;
  bool all_passed() const;
};

// Both scenarios end to end: `<out>/square` (square-wave prices with PV) and
// `<out>/no_pv` (PV forced to zero, depths 2 and 3).
ReproduceSummary run_reproduce(const RunConfig& config,
                               const std::filesystem::path& out,
                               std::ostream& log);

// Checks of one scenario's reports against the acceptance thresholds.
ReproduceSummary check_scenario(const std::filesystem::path& scenario_out,
                                std::string_view scenario, bool gate_costs);

}  // namespace hems

#endif  // HEMS_PIPELINE_H_
