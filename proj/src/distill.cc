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

#include "hems/distill.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/core.h>

#include "hems/error.h"
#include "io_util.h"
#include "json.hpp"

namespace hems {

DistillationDataset build_dataset(const DenseNet& teacher,
                                  const ReplayBuffer& buffer,
                                  std::string teacher_id) {
  if (buffer.empty()) {
    throw UsageError("cannot build a distillation dataset from an empty buffer");
  }
  DistillationDataset ds;
  ds.teacher_id = std::move(teacher_id);
  ds.buffer_size = buffer.size();
  ds.states.reserve(buffer.size());
  ds.teacher_q.reserve(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    ds.states.push_back(buffer[i].state);
    ds.teacher_q.push_back(dense_forward(teacher, buffer[i].state));
  }
  return ds;
}

std::vector<double> teacher_target(std::span<const double> teacher_q,
                                   double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  std::vector<double> scaled(teacher_q.begin(), teacher_q.end());
  for (double& v : scaled) v /= temperature;
  return softmax_neg(scaled);
}

LossAndGrad distill_loss(const TreeParams& student,
                         std::span<const double> state,
                         std::span<const double> teacher_q,
                         double temperature) {
  const std::vector<double> target = teacher_target(teacher_q, temperature);
  const SoftOutput out = ddt_forward(student, state);
  if (target.size() != out.action_distribution.size()) {
    throw ConfigError("teacher and student disagree on the action count");
  }
  // d KL / d o_m = -P_m / o_m.
  std::vector<double> output_grad(target.size(), 0.0);
  for (std::size_t m = 0; m < target.size(); ++m) {
    if (target[m] > 0.0) output_grad[m] = -target[m] / out.action_distribution[m];
  }
  return {kl_divergence(target, out.action_distribution),
          ddt_gradients(student, state, output_grad)};
}

void StudentConfig::validate() const {
  if (depth < 1) throw ConfigError("student depth must be >= 1");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (epochs < 1) throw ConfigError("student needs at least one epoch");
  if (batch_size == 0) throw ConfigError("student batch size must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
}

StudentRun train_student(const DistillationDataset& dataset,
                         const StudentConfig& config, std::uint64_t seed) {
  config.validate();
  if (dataset.size() == 0) throw UsageError("distillation dataset is empty");
  const int num_actions = static_cast<int>(dataset.teacher_q.front().size());
  std::mt19937_64 rng(seed);
  StudentRun run;
  run.params = TreeParams::random(config.depth, rng, kNumFeatures, num_actions);
  AdamState adam(run.params.parameter_count(), config.learning_rate);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> batch_grad(run.params.parameter_count());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const LossAndGrad lg = distill_loss(run.params, dataset.states[i],
                                            dataset.teacher_q[i],
                                            config.temperature);
        epoch_loss += lg.loss;
        for (std::size_t p = 0; p < batch_grad.size(); ++p) {
          batch_grad[p] += lg.grad[p];
        }
      }
      const double n = static_cast<double>(end - start);
      for (double& g : batch_grad) g /= n;
      try {
        adam_step(run.params.values(), batch_grad, adam);
      } catch (const TrainingError& e) {
        throw TrainingError(fmt::format(
            "student training diverged (seed {}, epoch {}): {}", seed, epoch,
            e.what()));
      }
    }
    epoch_loss /= static_cast<double>(dataset.size());
    if (!std::isfinite(epoch_loss)) {
      throw TrainingError(fmt::format(
          "student training diverged (seed {}, epoch {}): non-finite loss",
          seed, epoch));
    }
    run.loss_curve.push_back(epoch_loss);
  }
  run.tree = crispify(run.params);
  return run;
}

double agreement_rate(const CrispTree& tree,
                      const DistillationDataset& dataset) {
  if (dataset.size() == 0) return 0.0;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (crisp_predict(tree, dataset.states[i]) ==
        argmin_action(dataset.teacher_q[i])) {
      ++agree;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(dataset.size());
}

std::string format_dataset(const DistillationDataset& dataset) {
  const std::size_t actions =
      dataset.teacher_q.empty() ? 0 : dataset.teacher_q.front().size();
  std::string out = fmt::format("# teacher={} buffer={}\n",
                                dataset.teacher_id, dataset.buffer_size);
  out += "s0,s1,s2,s3,s4";
  for (std::size_t a = 0; a < actions; ++a) out += fmt::format(",q{}", a);
  out += '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Features& s = dataset.states[i];
    out += fmt::format("{},{},{},{},{}", s[0], s[1], s[2], s[3], s[4]);
    for (double q : dataset.teacher_q[i]) out += fmt::format(",{}", q);
    out += '\n';
  }
  return out;
}

DistillationDataset parse_dataset(std::string_view text) {
  const auto rows = io::lines(text);
  if (rows.size() < 2) throw LoadError("dataset dump is missing its header");
  DistillationDataset ds;
  {
    const auto [line_no, line] = rows[0];
    const auto fields = io::split(line, ' ');
    unsigned long long buffer = 0;
    if (fields.size() != 3 || fields[0] != "#" ||
        !fields[1].starts_with("teacher=") || !fields[2].starts_with("buffer=") ||
        !io::parse_u64(fields[2].substr(7), buffer)) {
      throw LoadError(fmt::format("line {}: bad dataset provenance line", line_no),
                      line_no);
    }
    ds.teacher_id = std::string(fields[1].substr(8));
    ds.buffer_size = buffer;
  }
  const auto header = io::split(rows[1].second, ',');
  if (header.size() < kNumFeatures + 1) {
    throw LoadError("dataset header has no q columns", rows[1].first);
  }
  const std::size_t actions = header.size() - kNumFeatures;
  for (std::size_t r = 2; r < rows.size(); ++r) {
    const auto [line_no, line] = rows[r];
    const auto f = io::split(line, ',');
    if (f.size() != header.size()) {
      throw LoadError(fmt::format("line {}: expected {} columns", line_no,
                                  header.size()),
                      line_no);
    }
    Features s{};
    std::vector<double> q(actions);
    bool ok = true;
    for (int j = 0; j < kNumFeatures; ++j) ok = ok && io::parse_double(f[j], s[j]);
    for (std::size_t a = 0; a < actions; ++a) {
      ok = ok && io::parse_double(f[kNumFeatures + a], q[a]);
    }
    if (!ok) {
      throw LoadError(fmt::format("line {}: malformed record", line_no), line_no);
    }
    ds.states.push_back(s);
    ds.teacher_q.push_back(std::move(q));
  }
  return ds;
}

void save_dataset(const std::filesystem::path& path,
                  const DistillationDataset& dataset) {
  io::write_file(path, format_dataset(dataset));
}

DistillationDataset load_dataset(const std::filesystem::path& path) {
  try {
    return parse_dataset(io::read_file(path));
  } catch (const LoadError& e) {
    throw LoadError(fmt::format("{}: {}", path.string(), e.what()), e.line());
  }
}

std::string format_tree_params(const TreeParams& params) {
  nlohmann::ordered_json j;
  j["format"] = "hems-soft-tree";
  j["version"] = 1;
  j["depth"] = params.depth();
  j["num_features"] = params.num_features();
  j["num_actions"] = params.num_actions();
  auto nodes = nlohmann::ordered_json::array();
  for (int i = 0; i < params.num_nodes(); ++i) {
    const auto b = params.beta(i);
    nodes.push_back({{"beta", std::vector<double>(b.begin(), b.end())},
                     {"phi", params.phi(i)}});
  }
  j["nodes"] = std::move(nodes);
  auto leaves = nlohmann::ordered_json::array();
  for (int k = 0; k < params.num_leaves(); ++k) {
    const auto w = params.leaf(k);
    leaves.push_back(std::vector<double>(w.begin(), w.end()));
  }
  j["leaves"] = std::move(leaves);
  return j.dump(1) + "\n";
}

TreeParams parse_tree_params(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != "hems-soft-tree" ||
        j.at("version").get<int>() != 1) {
      throw LoadError("not a version-1 soft-tree dump");
    }
    TreeParams p(j.at("depth").get<int>(), j.at("num_features").get<int>(),
                 j.at("num_actions").get<int>());
    const auto& nodes = j.at("nodes");
    const auto& leaves = j.at("leaves");
    if (static_cast<int>(nodes.size()) != p.num_nodes() ||
        static_cast<int>(leaves.size()) != p.num_leaves()) {
      throw LoadError("soft-tree dump has the wrong node or leaf count");
    }
    for (int i = 0; i < p.num_nodes(); ++i) {
      const auto beta = nodes[i].at("beta").get<std::vector<double>>();
      if (static_cast<int>(beta.size()) != p.num_features()) {
        throw LoadError("soft-tree beta has the wrong length");
      }
      std::copy(beta.begin(), beta.end(), p.beta(i).begin());
      p.phi(i) = nodes[i].at("phi").get<double>();
    }
    for (int k = 0; k < p.num_leaves(); ++k) {
      const auto w = leaves[k].get<std::vector<double>>();
      if (static_cast<int>(w.size()) != p.num_actions()) {
        throw LoadError("soft-tree leaf has the wrong length");
      }
      std::copy(w.begin(), w.end(), p.leaf(k).begin());
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(fmt::format("malformed soft-tree dump: {}", e.what()));
  } catch (const ConfigError& e) {
    throw LoadError(fmt::format("malformed soft-tree dump: {}", e.what()));
  }
}

}  // namespace hems
