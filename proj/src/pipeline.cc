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

#include "hems/pipeline.h"

#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/core.h>
#include <openssl/evp.h>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "hems/ddt.h"
#include "hems/distill.h"
#include "hems/error.h"
#include "hems/evalkit.h"
#include "hems/profiles.h"
#include "hems/teacher.h"
#include "io_util.h"
#include "json.hpp"

namespace hems {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

int exit_code_for(std::exception_ptr error) {
  try {
    std::rethrow_exception(error);
  } catch (const UsageError&) {
    return kExitUsage;
  } catch (const ConfigError&) {
    return kExitUsage;
  } catch (const LoadError&) {
    return kExitLoad;
  } catch (const TrainingError&) {
    return kExitTraining;
  } catch (const DegenerateNodeError&) {
    return kExitTraining;
  } catch (...) {
    return kExitFailure;
  }
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length,
                 EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < length; ++i) {
    hex += fmt::format("{:02x}", static_cast<unsigned>(digest[i]));
  }
  return hex;
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

void check_student_depth(int depth) {
  if (depth != 2 && depth != 3) {
    throw UsageError(fmt::format(
        "student depth {} is out of scope; only depths 2 and 3 are supported",
        depth));
  }
}

const std::vector<std::string>& stage_commands() {
  static const std::vector<std::string> commands = {
      "gen-data", "train-teacher", "distill",   "evaluate",
      "heatmap",  "export-tree",   "reproduce"};
  return commands;
}

fs::path manifest_path(const fs::path& out, std::string_view command) {
  return out / "manifests" / fmt::format("{}.json", command);
}

// ---------------------------------------------------------------------------
// Manifests

std::string format_manifest(const Manifest& m) {
  Json config = Json::object();
  for (const auto& key : config_keys()) config[key] = "";
  const std::string config_text = format_config(m.config);
  for (const auto& [line_no, line] : io::lines(config_text)) {
    const auto eq = line.find('=');
    config[std::string(io::trim(line.substr(0, eq)))] =
        std::string(io::trim(line.substr(eq + 1)));
  }
  Json options = Json::object();
  options["depths"] = m.options.depths;
  options["policies"] = m.options.policies;
  options["seed"] = m.options.seed ? Json(*m.options.seed) : Json(nullptr);

  Json j;
  j["tool"] = "hems";
  j["version"] = std::string(kToolVersion);
  j["command"] = m.command;
  j["seeds"] = {{"teacher", m.config.teacher_seed},
                {"students", m.config.seeds},
                {"synthetic_data", m.config.data.synthetic_seed}};
  j["options"] = options;
  j["config"] = config;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  return j.dump(2) + "\n";
}

Manifest parse_manifest(std::string_view text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw LoadError(fmt::format("manifest is not valid JSON: {}", e.what()));
  }
  try {
    if (j.at("tool") != "hems") throw LoadError("not a hems manifest");
    Manifest m;
    m.command = j.at("command").get<std::string>();
    if (std::find(stage_commands().begin(), stage_commands().end(),
                  m.command) == stage_commands().end()) {
      throw LoadError(fmt::format("manifest names unknown command '{}'",
                                  m.command));
    }
    for (const auto& [key, value] : j.at("config").items()) {
      set_config_value(m.config, key, value.get<std::string>());
    }
    const Json& options = j.at("options");
    m.options.depths = options.at("depths").get<std::vector<int>>();
    m.options.policies =
        options.at("policies").get<std::vector<std::string>>();
    if (!options.at("seed").is_null()) {
      m.options.seed = options.at("seed").get<std::uint64_t>();
    }
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    return m;
  } catch (const Json::exception& e) {
    throw LoadError(fmt::format("malformed manifest: {}", e.what()));
  } catch (const UsageError& e) {
    throw LoadError(fmt::format("malformed manifest: {}", e.what()));
  }
}

namespace {

// ---------------------------------------------------------------------------
// Artifact bookkeeping

class Workspace {
 public:
  explicit Workspace(fs::path out) : out_(std::move(out)) {}

  const fs::path& out() const { return out_; }

  bool exists(const std::string& rel) const {
    return fs::exists(out_ / rel);
  }

  // Reads an artifact of an earlier stage and records its hash.
  std::string read(const std::string& rel, const std::string& producer) {
    const fs::path path = out_ / rel;
    if (!fs::exists(path)) {
      throw MissingArtifactError(path.string(), producer);
    }
    std::string bytes = io::read_file(path);
    inputs_[rel] = sha256_hex(bytes);
    return bytes;
  }

  // Reads a file supplied by the user (not produced by any stage).
  std::string read_external(const std::string& path, const std::string& key) {
    if (!fs::exists(path)) {
      throw LoadError(fmt::format(
          "profile file '{}' does not exist (check config key {})", path, key));
    }
    std::string bytes = io::read_file(path);
    inputs_[path] = sha256_hex(bytes);
    return bytes;
  }

  const std::string& input_hash(const std::string& rel) const {
    return inputs_.at(rel);
  }

  void write(const std::string& rel, std::string_view content) {
    io::write_file(out_ / rel, content);
    outputs_[rel] = sha256_hex(content);
  }

  Manifest finish(const Stage& stage) const {
    Manifest m{stage.command, stage.config, stage.options, inputs_, outputs_};
    io::write_file(manifest_path(out_, stage.command), format_manifest(m));
    return m;
  }

 private:
  fs::path out_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
};

constexpr const char* kTrainData = "data/train.csv";
constexpr const char* kEvalData = "data/eval.csv";
constexpr const char* kCheckpoint = "checkpoints/teacher.qnet";
constexpr const char* kBuffer = "checkpoints/buffer.csv";

std::string student_dir(int depth, std::uint64_t seed) {
  return fmt::format("students/depth-{}/seed-{}", depth, seed);
}

std::string student_summary(int depth) {
  return fmt::format("students/depth-{}/summary.json", depth);
}

std::string tree_policy_id(int depth, std::uint64_t seed) {
  return fmt::format("ddt-d{}-seed-{}", depth, seed);
}

std::vector<int> resolve_depths(const Stage& stage) {
  std::vector<int> depths = stage.options.depths;
  if (depths.empty()) depths.push_back(stage.config.student.depth);
  for (int d : depths) check_student_depth(d);
  std::sort(depths.begin(), depths.end());
  depths.erase(std::unique(depths.begin(), depths.end()), depths.end());
  return depths;
}

std::vector<DayProfile> read_days(Workspace& ws, const char* rel,
                                  const RunConfig& config) {
  return parse_profiles(ws.read(rel, "gen-data"), config.tariff.horizon_steps);
}

EnvParams env_from_training_data(Workspace& ws, const RunConfig& config) {
  const auto train = read_days(ws, kTrainData, config);
  EnvParams env{config.battery, config.tariff,
                NormalizationStats::from_profiles(train)};
  env.validate();
  return env;
}

DenseNet read_teacher(Workspace& ws, const EnvParams& env) {
  TeacherCheckpoint ckpt =
      deserialize_checkpoint(ws.read(kCheckpoint, "train-teacher"));
  if (!(ckpt.stats == env.stats)) {
    throw LoadError(fmt::format(
        "{} was trained on different data than {}; re-run `hems "
        "train-teacher`",
        (ws.out() / kCheckpoint).string(), (ws.out() / kTrainData).string()));
  }
  if (ckpt.net.input_size() != kNumFeatures ||
      ckpt.net.output_size() != env.battery.num_actions()) {
    throw LoadError(fmt::format(
        "{} has {} inputs and {} outputs; the configuration needs {} and {}",
        (ws.out() / kCheckpoint).string(), ckpt.net.input_size(),
        ckpt.net.output_size(), kNumFeatures, env.battery.num_actions()));
  }
  return std::move(ckpt.net);
}

CrispTree read_tree(Workspace& ws, int depth, std::uint64_t seed) {
  const std::string rel = student_dir(depth, seed) + "/tree.json";
  CrispTree tree = parse_crisp_tree_json(
      ws.read(rel, fmt::format("distill --depth {}", depth)));
  if (tree.depth != depth) {
    throw LoadError(fmt::format("{} holds a depth-{} tree, expected {}", rel,
                                tree.depth, depth));
  }
  return tree;
}

std::vector<std::string> feature_name_list() {
  const auto& names = feature_names();
  return {names.begin(), names.end()};
}

std::string render(const CrispTree& tree, const BatteryParams& battery,
                   RuleFormat format) {
  const auto features = feature_name_list();
  const auto actions = action_names(battery);
  return export_rules(tree, features, actions, format);
}

// ---------------------------------------------------------------------------
// Stages

void stage_gen_data(const Stage& stage, Workspace& ws, std::ostream& log) {
  const RunConfig& c = stage.config;
  const int horizon = c.tariff.horizon_steps;
  std::vector<DayProfile> train;
  std::vector<DayProfile> eval;
  if (c.data.price_mode == PriceMode::kSquare) {
    const auto prices =
        square_wave_prices(c.data.square_low, c.data.square_high,
                           c.data.square_start_hour, c.data.square_end_hour,
                           horizon);
    SyntheticOptions options;
    options.include_pv = !c.data.no_pv;
    train = synthetic_days(c.data.synthetic_train_days, c.data.synthetic_seed,
                           prices, options);
    eval = synthetic_days(c.data.synthetic_eval_days,
                          c.data.synthetic_seed + 1, prices, options);
  } else {
    if (c.data.train_profiles.empty() || c.data.eval_profiles.empty()) {
      throw UsageError(
          "price mode 'file' needs data.train_profiles and "
          "data.eval_profiles");
    }
    train = parse_profiles(
        ws.read_external(c.data.train_profiles, "data.train_profiles"),
        horizon);
    eval = parse_profiles(
        ws.read_external(c.data.eval_profiles, "data.eval_profiles"), horizon);
    if (c.data.no_pv) {
      for (auto* days : {&train, &eval}) {
        for (auto& day : *days) {
          std::fill(day.pv_kw.begin(), day.pv_kw.end(), 0.0);
        }
      }
    }
  }
  ws.write(kTrainData, format_profiles(train));
  ws.write(kEvalData, format_profiles(eval));
  log << fmt::format("gen-data: {} training and {} evaluation days\n",
                     train.size(), eval.size());
}

void stage_train_teacher(const Stage& stage, Workspace& ws,
                         std::ostream& log) {
  const RunConfig& c = stage.config;
  const auto train = read_days(ws, kTrainData, c);
  const EnvParams env{c.battery, c.tariff,
                      NormalizationStats::from_profiles(train)};
  env.validate();
  log << fmt::format("train-teacher: {} episodes, seed {}\n",
                     c.teacher.episodes, c.teacher_seed);
  const TeacherRun run = train_teacher(c.teacher, train, env, c.teacher_seed);

  ws.write(kCheckpoint, serialize_checkpoint(run.agent.online, env.stats));
  ws.write(kBuffer, format_buffer(run.buffer));
  std::string losses = "episode,loss\n";
  const std::size_t offset = run.episode_costs.size() - run.loss_curve.size();
  for (std::size_t i = 0; i < run.loss_curve.size(); ++i) {
    losses += fmt::format("{},{}\n", offset + i, run.loss_curve[i]);
  }
  ws.write("checkpoints/teacher_loss.csv", losses);
  std::string costs = "episode,cost_eur\n";
  for (std::size_t i = 0; i < run.episode_costs.size(); ++i) {
    costs += fmt::format("{},{}\n", i, run.episode_costs[i]);
  }
  ws.write("checkpoints/teacher_episodes.csv", costs);
  log << fmt::format("train-teacher: {} parameters, final loss {:.5f}\n",
                     run.agent.online.parameter_count(),
                     run.loss_curve.empty() ? 0.0 : run.loss_curve.back());
}

void stage_distill(const Stage& stage, Workspace& ws, std::ostream& log) {
  const RunConfig& c = stage.config;
  const auto depths = resolve_depths(stage);
  const EnvParams env = env_from_training_data(ws, c);
  const DenseNet teacher = read_teacher(ws, env);
  const ReplayBuffer buffer = parse_buffer(ws.read(kBuffer, "train-teacher"),
                                           c.teacher.buffer_size);
  const std::string teacher_id = ws.input_hash(kCheckpoint).substr(0, 16);
  const DistillationDataset dataset =
      build_dataset(teacher, buffer, teacher_id);
  ws.write("checkpoints/dataset.csv", format_dataset(dataset));

  for (int depth : depths) {
    StudentConfig sc = c.student;
    sc.depth = depth;
    Json seeds = Json::array();
    std::uint64_t best_seed = c.seeds.front();
    double best_agreement = -1.0;
    for (std::uint64_t seed : c.seeds) {
      const StudentRun run = train_student(dataset, sc, seed);
      const std::string dir = student_dir(depth, seed);
      const std::string tree_json =
          render(run.tree, c.battery, RuleFormat::kJson);
      ws.write(dir + "/params.json", format_tree_params(run.params));
      ws.write(dir + "/tree.json", tree_json);
      ws.write(dir + "/tree.txt",
               render(run.tree, c.battery, RuleFormat::kText));
      ws.write(dir + "/tree.dot", render(run.tree, c.battery, RuleFormat::kDot));
      std::string losses = "epoch,loss\n";
      for (std::size_t i = 0; i < run.loss_curve.size(); ++i) {
        losses += fmt::format("{},{}\n", i, run.loss_curve[i]);
      }
      ws.write(dir + "/loss.csv", losses);

      const double agreement = agreement_rate(run.tree, dataset);
      if (agreement > best_agreement) {
        best_agreement = agreement;
        best_seed = seed;
      }
      seeds.push_back(
          {{"seed", seed},
           {"final_loss", run.loss_curve.empty() ? 0.0 : run.loss_curve.back()},
           {"agreement", agreement},
           {"training_parameters", run.params.parameter_count()},
           {"inference_parameters", run.tree.inference_parameter_count()},
           {"tree_bytes", tree_json.size()}});
      log << fmt::format(
          "distill: depth {} seed {}: agreement {:.3f}, final loss {:.5f}\n",
          depth, seed, agreement,
          run.loss_curve.empty() ? 0.0 : run.loss_curve.back());
    }
    Json summary;
    summary["depth"] = depth;
    summary["temperature"] = sc.temperature;
    summary["teacher"] = teacher_id;
    summary["dataset_size"] = dataset.size();
    summary["best_seed"] = best_seed;
    summary["seeds"] = seeds;
    ws.write(student_summary(depth), summary.dump(2) + "\n");
  }
}

bool wants(const Stage& stage, std::string_view group) {
  const auto& p = stage.options.policies;
  return p.empty() || std::find(p.begin(), p.end(), group) != p.end();
}

void stage_evaluate(const Stage& stage, Workspace& ws, std::ostream& log) {
  const RunConfig& c = stage.config;
  for (const auto& p : stage.options.policies) {
    if (p != "rbc" && p != "idle" && p != "teacher" && p != "ddt") {
      throw UsageError(fmt::format(
          "unknown policy group '{}'; valid: rbc, idle, teacher, ddt", p));
    }
  }
  const EnvParams env = env_from_training_data(ws, c);
  const auto days = read_days(ws, kEvalData, c);

  std::vector<PolicyGroup> groups;
  if (wants(stage, "rbc")) {
    groups.push_back({"rbc", {{0, make_rbc_policy(c.battery)}}});
  }
  if (wants(stage, "idle")) {
    groups.push_back(
        {"idle", {{0, make_constant_policy("idle", c.battery.idle_action())}}});
  }
  if (wants(stage, "teacher")) {
    groups.push_back({"teacher",
                      {{c.teacher_seed,
                        make_q_policy("teacher", read_teacher(ws, env))}}});
  }
  if (wants(stage, "ddt")) {
    for (int depth : resolve_depths(stage)) {
      PolicyGroup group{fmt::format("ddt-d{}", depth), {}};
      for (std::uint64_t seed : c.seeds) {
        group.members.push_back(
            {seed, make_tree_policy(tree_policy_id(depth, seed),
                                    read_tree(ws, depth, seed))});
      }
      groups.push_back(std::move(group));
    }
  }
  if (groups.empty()) throw UsageError("evaluate: no policy groups selected");

  const ComparisonTable table =
      compare_policies(groups, days, env, c.eval.initial_soc);
  ws.write("reports/comparison.csv", comparison_csv(table));
  ws.write("reports/episodes.csv", episodes_csv(table.episodes));
  for (const auto& report : table.episodes) {
    if (report.day_label != days.front().label) continue;
    ws.write(fmt::format("reports/traces/{}-seed-{}-{}.csv", report.policy_id,
                         report.seed, report.day_label),
             trace_csv(report));
  }

  // Oracle bound per day, and how close the best evaluated policy came.
  std::string dp_csv = "day,dp_cost_eur,best_policy,best_policy_seed,"
                       "best_cost_eur,margin_eur\n";
  double dp_total = 0.0;
  int checked = 0;
  int violations = 0;
  double worst_margin = INFINITY;
  for (const auto& day : days) {
    const double dp =
        dp_optimal_cost(day, env, c.eval.initial_soc, c.eval.dp_grid_size);
    dp_total += dp;
    const EpisodeReport* best = nullptr;
    for (const auto& report : table.episodes) {
      if (report.day_label != day.label) continue;
      ++checked;
      const double margin = report.total_cost_eur - dp;
      worst_margin = std::min(worst_margin, margin);
      if (margin < -1e-6) ++violations;
      if (best == nullptr || report.total_cost_eur < best->total_cost_eur) {
        best = &report;
      }
    }
    dp_csv += fmt::format("{},{},{},{},{},{}\n", day.label, dp,
                          best->policy_id, best->seed, best->total_cost_eur,
                          best->total_cost_eur - dp);
  }
  ws.write("reports/dp_oracle.csv", dp_csv);

  const GroupSummary* teacher = nullptr;
  for (const auto& g : table.groups) {
    if (g.name == "teacher") teacher = &g;
  }
  const double baseline_mean = table.group(table.baseline).mean;
  Json groups_json = Json::array();
  for (const auto& g : table.groups) {
    Json entry;
    entry["name"] = g.name;
    entry["seeds"] = g.seeds;
    entry["seed_means"] = g.seed_means;
    entry["mean"] = g.mean;
    entry["min"] = g.min;
    entry["q1"] = g.q1;
    entry["median"] = g.median;
    entry["q3"] = g.q3;
    entry["max"] = g.max;
    entry["improvement_pct"] = g.improvement_pct;
    entry["seeds_beating_baseline"] = std::count_if(
        g.seed_means.begin(), g.seed_means.end(),
        [&](double m) { return m < baseline_mean; });
    if (teacher != nullptr && g.name.starts_with("ddt")) {
      entry["gap_to_teacher_pct"] =
          100.0 * (g.mean - teacher->mean) / teacher->mean;
    }
    groups_json.push_back(entry);
    log << fmt::format("evaluate: {:<8} mean {:.4f} EUR/day ({:+.1f}% vs {})\n",
                       g.name, g.mean, g.improvement_pct, table.baseline);
  }
  Json summary;
  summary["baseline"] = table.baseline;
  summary["days"] = days.size();
  summary["initial_soc"] = c.eval.initial_soc;
  summary["groups"] = groups_json;
  summary["dp_oracle"] = {{"mean", dp_total / static_cast<double>(days.size())},
                          {"soc_grid", c.eval.dp_grid_size}};
  summary["sandwich"] = {{"checked", checked},
                         {"violations", violations},
                         {"worst_margin", worst_margin}};
  ws.write("reports/summary.json", summary.dump(2) + "\n");
  log << fmt::format("evaluate: DP oracle mean {:.4f} EUR/day, {} of {} "
                     "episodes below it\n",
                     dp_total / static_cast<double>(days.size()), violations,
                     checked);
}

void stage_heatmap(const Stage& stage, Workspace& ws, std::ostream& log) {
  const RunConfig& c = stage.config;
  const EnvParams env = env_from_training_data(ws, c);
  const HeatmapSpec spec{unit_grid(c.heatmap.grid_size),
                         unit_grid(c.heatmap.grid_size),
                         c.heatmap.demand_levels, c.heatmap.hour,
                         c.heatmap.pv};
  const auto names = action_names(c.battery);

  struct Entry {
    Policy policy;
    int depth;  // 0 for the teacher
  };
  std::vector<Entry> entries;
  entries.push_back({make_q_policy("teacher", read_teacher(ws, env)), 0});
  for (int depth : resolve_depths(stage)) {
    for (std::uint64_t seed : c.seeds) {
      entries.push_back({make_tree_policy(tree_policy_id(depth, seed),
                                          read_tree(ws, depth, seed)),
                         depth});
    }
  }

  std::string regions = "policy,depth,demand_level,distinct_actions,regions,"
                        "limit\n";
  Json panels = Json::array();
  for (const auto& entry : entries) {
    const auto grids = policy_heatmap(entry.policy, spec, env);
    ws.write(fmt::format("heatmaps/{}.csv", entry.policy.id),
             heatmap_csv(grids));
    ws.write(fmt::format("heatmaps/{}.svg", entry.policy.id),
             heatmap_svg(grids, names, entry.policy.id));
    for (const auto& grid : grids) {
      const int distinct = count_distinct_actions(grid);
      const int count = count_regions(grid);
      const std::string limit =
          entry.depth > 0 ? fmt::format("{}", 1 << entry.depth) : "";
      regions += fmt::format("{},{},{},{},{},{}\n", entry.policy.id,
                             entry.depth, grid.demand_level, distinct, count,
                             limit);
      panels.push_back({{"policy", entry.policy.id},
                        {"depth", entry.depth},
                        {"demand_level", grid.demand_level},
                        {"distinct_actions", distinct},
                        {"regions", count}});
    }
  }
  ws.write("heatmaps/regions.csv", regions);
  Json summary;
  summary["grid_size"] = c.heatmap.grid_size;
  summary["hour"] = c.heatmap.hour;
  summary["pv"] = c.heatmap.pv;
  summary["panels"] = panels;
  ws.write("heatmaps/summary.json", summary.dump(2) + "\n");
  log << fmt::format("heatmap: {} policies x {} panels\n", entries.size(),
                     spec.demand_levels.size());
}

void stage_export_tree(const Stage& stage, Workspace& ws, std::ostream& log) {
  const RunConfig& c = stage.config;
  for (int depth : resolve_depths(stage)) {
    std::uint64_t seed = 0;
    if (stage.options.seed) {
      seed = *stage.options.seed;
    } else {
      const std::string rel = student_summary(depth);
      try {
        seed = Json::parse(ws.read(rel, fmt::format("distill --depth {}",
                                                    depth)))
                   .at("best_seed")
                   .get<std::uint64_t>();
      } catch (const Json::exception& e) {
        throw LoadError(fmt::format("{}: {}", rel, e.what()));
      }
    }
    const CrispTree tree = read_tree(ws, depth, seed);
    const std::string json = render(tree, c.battery, RuleFormat::kJson);
    if (!(parse_crisp_tree_json(json) == tree)) {
      throw LoadError(fmt::format(
          "{}: tree does not survive an export round trip",
          student_dir(depth, seed)));
    }
    const std::string stem =
        fmt::format("exports/{}", tree_policy_id(depth, seed));
    const std::string text = render(tree, c.battery, RuleFormat::kText);
    ws.write(stem + ".txt", text);
    ws.write(stem + ".dot", render(tree, c.battery, RuleFormat::kDot));
    ws.write(stem + ".json", json);
    log << fmt::format("export-tree: depth {} seed {} ({} bytes as JSON)\n",
                       depth, seed, json.size())
        << text;
  }
}

}  // namespace

Manifest run_stage(const Stage& stage, const fs::path& out,
                   std::ostream& log) {
  stage.config.validate();
  if (stage.command == "reproduce") {
    run_reproduce(stage.config, out, log);
    return parse_manifest(io::read_file(manifest_path(out, "reproduce")));
  }
  Workspace ws(out);
  if (stage.command == "gen-data") {
    stage_gen_data(stage, ws, log);
  } else if (stage.command == "train-teacher") {
    stage_train_teacher(stage, ws, log);
  } else if (stage.command == "distill") {
    stage_distill(stage, ws, log);
  } else if (stage.command == "evaluate") {
    stage_evaluate(stage, ws, log);
  } else if (stage.command == "heatmap") {
    stage_heatmap(stage, ws, log);
  } else if (stage.command == "export-tree") {
    stage_export_tree(stage, ws, log);
  } else {
    throw UsageError(fmt::format("unknown command '{}'", stage.command));
  }
  return ws.finish(stage);
}

Manifest rerun_manifest(const fs::path& manifest_file, std::ostream& log) {
  if (!fs::exists(manifest_file)) {
    throw LoadError(
        fmt::format("manifest '{}' does not exist", manifest_file.string()));
  }
  const Manifest m = parse_manifest(io::read_file(manifest_file));
  const fs::path out = manifest_file.parent_path().parent_path();
  return run_stage({m.command, m.config, m.options}, out, log);
}

// ---------------------------------------------------------------------------
// Reproduction

bool ReproduceSummary::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CriterionCheck& c) {
    return c.passed || !c.gated;
  });
}

namespace {

Json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw LoadError(fmt::format("missing '{}'", path.string()));
  try {
    return Json::parse(io::read_file(path));
  } catch (const Json::exception& e) {
    throw LoadError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

const Json* find_group(const Json& summary, std::string_view name) {
  for (const auto& g : summary.at("groups")) {
    if (g.at("name") == name) return &g;
  }
  return nullptr;
}

}  // namespace

ReproduceSummary check_scenario(const fs::path& dir, std::string_view scenario,
                                bool gate_costs) {
  ReproduceSummary s;
  const Json report = read_json(dir / "reports/summary.json");
  const Json* rbc = find_group(report, "rbc");
  const Json* teacher = find_group(report, "teacher");
  auto tag = [&](std::string_view what) {
    return fmt::format("[{}] {}", scenario, what);
  };

  if (rbc != nullptr && teacher != nullptr) {
    const double t = teacher->at("improvement_pct").get<double>();
    s.checks.push_back({tag("teacher beats RBC by >= 15%"), t >= 15.0,
                        gate_costs, fmt::format("{:.1f}%", t)});
  }
  for (int depth : {2, 3}) {
    const Json* ddt = find_group(report, fmt::format("ddt-d{}", depth));
    if (ddt == nullptr || rbc == nullptr) continue;
    const double imp = ddt->at("improvement_pct").get<double>();
    const bool gate = gate_costs && depth == 2;
    s.checks.push_back(
        {tag(fmt::format("ddt-d{} beats RBC by >= 15%", depth)), imp >= 15.0,
         gate, fmt::format("{:.1f}% (mean of {} seeds)", imp,
                           ddt->at("seeds").size())});
    if (ddt->contains("gap_to_teacher_pct")) {
      const double gap = ddt->at("gap_to_teacher_pct").get<double>();
      s.checks.push_back(
          {tag(fmt::format("ddt-d{} within 15 points of teacher", depth)),
           gap <= 15.0, gate, fmt::format("gap {:.1f}%", gap)});
    }
    const auto n = ddt->at("seeds").size();
    const int beating = ddt->at("seeds_beating_baseline").get<int>();
    const auto needed = static_cast<int>(std::ceil(0.6 * static_cast<double>(n)));
    std::string spread;
    for (const auto& m : ddt->at("seed_means")) {
      spread += fmt::format("{}{:.3f}", spread.empty() ? "" : " ",
                            m.get<double>());
    }
    s.checks.push_back(
        {tag(fmt::format("ddt-d{} seeds beating RBC", depth)),
         beating >= needed, gate,
         fmt::format("{} of {} (need {}); seed means {}", beating, n, needed,
                     spread)});
  }

  const Json& sandwich = report.at("sandwich");
  s.checks.push_back(
      {tag("DP oracle below every evaluated episode"),
       sandwich.at("violations").get<int>() == 0, true,
       fmt::format("{} episodes, worst margin {:.4f} EUR",
                   sandwich.at("checked").get<int>(),
                   sandwich.at("worst_margin").get<double>())});

  const Json heat = read_json(dir / "heatmaps/summary.json");
  int worst_excess = 0;
  int students = 0;
  int teacher_regions = 0;
  for (const auto& p : heat.at("panels")) {
    const int depth = p.at("depth").get<int>();
    if (depth == 0) {
      teacher_regions = std::max(teacher_regions, p.at("regions").get<int>());
      continue;
    }
    ++students;
    const int limit = 1 << depth;
    worst_excess = std::max({worst_excess,
                             p.at("distinct_actions").get<int>() - limit,
                             p.at("regions").get<int>() - limit});
  }
  s.checks.push_back({tag("student heatmaps within 2^d actions and regions"),
                      worst_excess <= 0 && students > 0, true,
                      fmt::format("{} panels checked", students)});
  s.checks.push_back({tag("teacher heatmap regions (reported)"), true, false,
                      fmt::format("up to {} regions per panel",
                                  teacher_regions)});

  const auto qnet = fs::file_size(dir / kCheckpoint);
  std::uintmax_t largest_tree = 0;
  std::uintmax_t depth2_tree = 0;
  for (int depth : {2, 3}) {
    const fs::path root = dir / fmt::format("students/depth-{}", depth);
    if (!fs::exists(root)) continue;
    for (const auto& e : fs::directory_iterator(root)) {
      if (!fs::exists(e.path() / "tree.json")) continue;
      const auto size = fs::file_size(e.path() / "tree.json");
      largest_tree = std::max(largest_tree, size);
      if (depth == 2) depth2_tree = std::max(depth2_tree, size);
    }
  }
  s.checks.push_back({tag("crisp trees <= 8 KB"),
                      largest_tree > 0 && largest_tree <= 8192, true,
                      fmt::format("largest {} bytes", largest_tree)});
  if (depth2_tree > 0) {
    const double ratio =
        static_cast<double>(qnet) / static_cast<double>(depth2_tree);
    s.checks.push_back({tag("teacher checkpoint >= 20x depth-2 tree"),
                        ratio >= 20.0, true,
                        fmt::format("{} / {} bytes = {:.1f}x", qnet,
                                    depth2_tree, ratio)});
  }
  return s;
}

ReproduceSummary run_reproduce(const RunConfig& config, const fs::path& out,
                               std::ostream& log) {
  config.validate();
  struct Scenario {
    std::string name;
    bool no_pv;
    std::vector<int> depths;
    bool gate_costs;
  };
  const std::vector<Scenario> scenarios = {{"square", false, {2}, true},
                                           {"no_pv", true, {2, 3}, false}};
  ReproduceSummary summary;

  {
    std::vector<int> sizes = {kNumFeatures};
    for (int h : config.teacher.hidden_layers) sizes.push_back(h);
    sizes.push_back(config.battery.num_actions());
    const std::size_t dqn = dense_parameter_count(sizes);
    const int a = config.battery.num_actions();
    const bool ok = dqn == 4869 &&
                    ddt_training_parameter_count(2, kNumFeatures, a) == 38 &&
                    ddt_inference_parameter_count(2) == 10 &&
                    ddt_training_parameter_count(3, kNumFeatures, a) == 82 &&
                    ddt_inference_parameter_count(3) == 22;
    summary.checks.push_back(
        {"parameter accounting", ok, true,
         fmt::format("DQN {}, DDT d2 {}/{}, d3 {}/{}", dqn,
                     ddt_training_parameter_count(2, kNumFeatures, a),
                     ddt_inference_parameter_count(2),
                     ddt_training_parameter_count(3, kNumFeatures, a),
                     ddt_inference_parameter_count(3))});
  }

  Manifest manifest{"reproduce", config, {}, {}, {}};
  for (const auto& sc : scenarios) {
    RunConfig c = config;
    c.data.no_pv = sc.no_pv;
    const fs::path dir = out / sc.name;
    log << fmt::format("== scenario {} ==\n", sc.name);
    for (const std::string command :
         {"gen-data", "train-teacher", "distill", "evaluate", "heatmap",
          "export-tree"}) {
      StageOptions options;
      if (command != "gen-data" && command != "train-teacher") {
        options.depths = sc.depths;
      }
      run_stage({command, c, options}, dir, log);
      const fs::path m = manifest_path(dir, command);
      manifest.outputs[fs::relative(m, out).generic_string()] =
          sha256_hex(io::read_file(m));
    }
    const ReproduceSummary s = check_scenario(dir, sc.name, sc.gate_costs);
    summary.checks.insert(summary.checks.end(), s.checks.begin(),
                          s.checks.end());
  }

  std::string text;
  for (const auto& check : summary.checks) {
    text += fmt::format("{} {}: {}\n",
                        !check.gated ? "INFO" : (check.passed ? "PASS" : "FAIL"),
                        check.name, check.detail);
  }
  text += fmt::format("overall: {}\n", summary.all_passed() ? "PASS" : "FAIL");
  io::write_file(out / "reproduce.txt", text);
  manifest.outputs["reproduce.txt"] = sha256_hex(text);
  io::write_file(manifest_path(out, "reproduce"), format_manifest(manifest));
  log << text;
  return summary;
}

}  // namespace hems
