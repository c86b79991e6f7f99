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

// End-to-end runs of the stage pipeline and the command-line tool on a tiny
// configuration.

#include "hems/pipeline.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "hems/error.h"
#include "json.hpp"

namespace hems {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = fs::temp_directory_path() /
            ("hems-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

RunConfig tiny_config() {
  RunConfig c;
  c.teacher.hidden_layers = {16, 16};
  c.teacher.episodes = 20;
  c.teacher.batch_size = 64;
  c.teacher.buffer_size = 300;
  c.student.epochs = 3;
  c.seeds = {1, 2};
  c.data.synthetic_train_days = 3;
  c.data.synthetic_eval_days = 2;
  c.eval.dp_grid_size = 21;
  c.heatmap.grid_size = 5;
  return c;
}

Manifest run(const std::string& command, const fs::path& out,
             const RunConfig& config = tiny_config(), StageOptions options = {}) {
  std::ostringstream log;
  return run_stage({command, config, std::move(options)}, out, log);
}

void run_all(const fs::path& out, const RunConfig& config = tiny_config()) {
  for (const auto& command : stage_commands()) {
    if (command == "reproduce") continue;
    run(command, out, config);
  }
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int shell(const std::string& command) {
  const int status = std::system((command + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST_CASE("pipeline stages, manifests and reruns") {
  TempDir dir("pipe");
  const fs::path out = dir.path() / "a";
  run_all(out);

  for (const auto& command : stage_commands()) {
    if (command == "reproduce") continue;
    CHECK(fs::exists(manifest_path(out, command)));
  }
  CHECK(fs::exists(out / "checkpoints/teacher.qnet"));
  CHECK(fs::exists(out / "reports/comparison.csv"));
  CHECK(fs::exists(out / "heatmaps/teacher.svg"));

  SUBCASE("manifests record outputs that rerun identically") {
    for (const auto& command : stage_commands()) {
      if (command == "reproduce") continue;
      const fs::path file = manifest_path(out, command);
      const Manifest before = parse_manifest(slurp(file));
      CHECK(before.command == command);
      CHECK(before.config == tiny_config());
      CHECK_FALSE(before.outputs.empty());
      const std::string text_before = slurp(file);
      std::ostringstream log;
      const Manifest after = rerun_manifest(file, log);
      CHECK(after.outputs == before.outputs);
      CHECK(after.inputs == before.inputs);
      CHECK(slurp(file) == text_before);
    }
  }

  SUBCASE("same seed gives the same artifacts in a fresh directory") {
    const fs::path other = dir.path() / "b";
    run("gen-data", other);
    run("train-teacher", other);
    run("distill", other);
    const Manifest m1 = parse_manifest(slurp(manifest_path(out, "distill")));
    const Manifest m2 = parse_manifest(slurp(manifest_path(other, "distill")));
    CHECK(m1.outputs == m2.outputs);
    CHECK(sha256_hex(slurp(out / "checkpoints/teacher.qnet")) ==
          sha256_hex(slurp(other / "checkpoints/teacher.qnet")));
  }

  SUBCASE("students are depth-2 trees") {
    for (std::uint64_t seed : {1, 2}) {
      const fs::path d =
          out / ("students/depth-2/seed-" + std::to_string(seed));
      const CrispTree tree = parse_crisp_tree_json(slurp(d / "tree.json"));
      CHECK(tree.nodes.size() == 3);
      CHECK(tree.leaf_actions.size() == 4);
      CHECK(fs::exists(d / "params.json"));
      CHECK(fs::exists(d / "tree.dot"));
      const std::string loss = slurp(d / "loss.csv");
      CHECK(std::count(loss.begin(), loss.end(), '\n') == 1 + 3);
    }
    const auto summary =
        nlohmann::json::parse(slurp(out / "students/depth-2/summary.json"));
    CHECK(summary.at("seeds").size() == 2);
  }

  SUBCASE("exported rules name the features") {
    const auto summary =
        nlohmann::json::parse(slurp(out / "students/depth-2/summary.json"));
    const auto best = summary.at("best_seed").get<std::uint64_t>();
    const fs::path base =
        out / ("exports/ddt-d2-seed-" + std::to_string(best));
    const std::string text = slurp(base.string() + ".txt");
    CHECK(text.find("if ") != std::string::npos);
    const bool named = text.find("price") != std::string::npos ||
                       text.find("soc") != std::string::npos ||
                       text.find("demand") != std::string::npos ||
                       text.find("pv") != std::string::npos ||
                       text.find("hour") != std::string::npos;
    CHECK(named);
    const CrispTree exported = parse_crisp_tree_json(slurp(base.string() + ".json"));
    CHECK(exported == parse_crisp_tree_json(slurp(
                          out / ("students/depth-2/seed-" + std::to_string(best)) /
                          "tree.json")));
  }

  SUBCASE("evaluating the baseline alone") {
    StageOptions opts;
    opts.policies = {"rbc"};
    run("evaluate", out, tiny_config(), opts);
    const std::string csv = slurp(out / "reports/comparison.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
    CHECK(csv.find("\nrbc,") != std::string::npos);
    const auto summary = nlohmann::json::parse(slurp(out / "reports/summary.json"));
    CHECK(summary.at("groups").size() == 1);
    CHECK(summary.at("groups")[0].at("improvement_pct").get<double>() == 0.0);
  }
}

TEST_CASE("missing inputs name the producing command") {
  TempDir dir("missing");
  try {
    run("distill", dir.path());
    FAIL("expected MissingArtifactError");
  } catch (const MissingArtifactError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(e.path()) != std::string::npos);
    CHECK(msg.find("hems " + e.producer()) != std::string::npos);
    CHECK((e.producer() == "gen-data" || e.producer() == "train-teacher"));
  }
  run("gen-data", dir.path());
  try {
    run("distill", dir.path());
    FAIL("expected MissingArtifactError");
  } catch (const MissingArtifactError& e) {
    CHECK(e.producer() == "train-teacher");
    CHECK(std::string(e.what()).find("teacher.qnet") != std::string::npos);
  }
  CHECK(exit_code_for(std::make_exception_ptr(
            MissingArtifactError("x", "gen-data"))) == kExitLoad);
}

TEST_CASE("unsupported student depth") {
  CHECK_THROWS_AS(check_student_depth(4), UsageError);
  CHECK_THROWS_AS(check_student_depth(1), UsageError);
  check_student_depth(2);
  check_student_depth(3);
  TempDir dir("depth");
  StageOptions opts;
  opts.depths = {4};
  CHECK_THROWS_AS(run("distill", dir.path(), tiny_config(), opts), UsageError);
}

TEST_CASE("exit code mapping") {
  CHECK(exit_code_for(std::make_exception_ptr(UsageError("u"))) == kExitUsage);
  CHECK(exit_code_for(std::make_exception_ptr(ConfigError("c"))) == kExitUsage);
  CHECK(exit_code_for(std::make_exception_ptr(LoadError("l"))) == kExitLoad);
  CHECK(exit_code_for(std::make_exception_ptr(TrainingError("t"))) ==
        kExitTraining);
  CHECK(exit_code_for(std::make_exception_ptr(std::runtime_error("r"))) ==
        kExitFailure);
}

TEST_CASE("sha256") {
  CHECK(sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("command-line exit codes") {
  TempDir dir("cli");
  const std::string cli = HEMS_CLI_PATH;
  const std::string out = " --out " + dir.path().string();
  const std::string cfg_path = (dir.path() / "tiny.cfg").string();
  {
    std::ofstream f(cfg_path);
    f << format_config(tiny_config());
  }
  const std::string cfg = " --config " + cfg_path;

  CHECK(shell(cli + " show-config") == kExitOk);
  CHECK(shell(cli + " no-such-command") == kExitUsage);
  CHECK(shell(cli + " show-config --set bogus=1") == kExitUsage);
  CHECK(shell(cli + " show-config --set teacher.episodes=lots") == kExitUsage);
  CHECK(shell(cli + " distill --depth 4" + cfg + out) == kExitUsage);
  CHECK(shell(cli + " distill" + cfg + out) == kExitLoad);
  CHECK(shell(cli + " show-config --config " + dir.path().string() +
              "/absent.cfg") == kExitUsage);
  CHECK(shell(cli + " gen-data" + cfg + out) == kExitOk);
  CHECK(shell(cli + " train-teacher" + cfg + out) == kExitOk);
  CHECK(shell(cli + " distill" + cfg + out) == kExitOk);
  CHECK(shell(cli + " evaluate --policies rbc,idle" + cfg + out) == kExitOk);
  CHECK(shell(cli + " export-tree --format dot" + cfg + out) == kExitOk);
  CHECK(shell(cli + " export-tree --student-seed 99" + cfg + out) == kExitLoad);
  CHECK(shell(cli + " rerun --manifest " + dir.path().string() +
              "/manifests/distill.json") == kExitOk);

  // Flags override the file and --set overrides both.
  const std::string shown = dir.path().string() + "/shown.cfg";
  CHECK(std::system((cli + " show-config" + cfg + " --days 7 --set "
                     "data.synthetic_train_days=9 > " + shown).c_str()) == 0);
  const RunConfig parsed = load_config(shown);
  CHECK(parsed.data.synthetic_train_days == 9);
  CHECK(shell(cli + " show-config" + cfg + " --days 7 --set data.synthetic_train_days=9") ==
        kExitOk);
  CHECK(parsed.teacher.episodes == 20);
}

}  // namespace
}  // namespace hems
