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

// DQN teacher: replay buffer, epsilon-greedy exploration, TD targets against
// a softly updated target network, and the episodic training loop. Q-values
// are expected costs, so greedy means argmin.

#ifndef HEMS_TEACHER_H_
#define HEMS_TEACHER_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hems/diffmath.h"
#include "hems/envsim.h"
#include "hems/profiles.h"

namespace hems {

struct Transition {
  Features state{};
  int action_index = 0;
  double cost = 0.0;
  Features next_state{};
  bool terminal = false;

  bool operator==(const Transition& other) const = default;
};

// Fixed-capacity ring buffer; once full the oldest transition is overwritten.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 5000);

  void push(const Transition& t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return data_.empty(); }
  const Transition& operator[](std::size_t i) const { return data_[i]; }

  // Oldest first.
  std::vector<Transition> chronological() const;

  // `count` distinct storage indices drawn uniformly. count <= size().
  std::vector<std::size_t> sample_indices(std::size_t count,
                                          std::mt19937_64& rng) const;

  bool operator==(const ReplayBuffer& other) const = default;

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> data_;
};

struct TeacherConfig {
  std::vector<int> hidden_layers = {64, 64};
  double learning_rate = 1e-3;
  double gamma = 0.99;
  double target_blend = 0.1;
  std::size_t batch_size = 1000;
  std::size_t buffer_size = 5000;
  int episodes = 2000;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  // Fraction of all environment steps over which epsilon decays linearly.
  double epsilon_decay_fraction = 0.8;

  void validate() const;
  bool operator==(const TeacherConfig& other) const = default;
};

struct TeacherAgent {
  DenseNet online;
  DenseNet target;
  AdamState adam;
  double gamma = 0.99;
  double target_blend = 0.1;

  bool operator==(const TeacherAgent& other) const = default;
};

TeacherAgent make_teacher(const TeacherConfig& config, int num_actions,
                          std::mt19937_64& rng);

// Lowest index among the minimal entries.
int argmin_action(std::span<const double> q);

int greedy_action(const DenseNet& net, const Features& state);

int select_action(const TeacherAgent& agent, const Features& state,
                  double epsilon, std::mt19937_64& rng);

// c + gamma * min_u Q_target(x', u), without the bootstrap on terminal steps.
std::vector<double> td_targets(std::span<const Transition> batch,
                               const TeacherAgent& agent);

// theta_target <- blend * theta_online + (1 - blend) * theta_target.
void soft_update(DenseNet& target, const DenseNet& online, double blend);

// One Adam step on the mean squared TD error of `batch`, followed by the
// soft target update. Returns the loss before the step.
double train_on_batch(TeacherAgent& agent, std::span<const Transition> batch);

// Samples `batch_size` transitions without replacement and trains on them.
// Returns nullopt (and does nothing) while the buffer is too small.
std::optional<double> train_step(TeacherAgent& agent,
                                 const ReplayBuffer& buffer,
                                 std::size_t batch_size, std::mt19937_64& rng);

// Linear decay from start to end over the decay window, then constant.
double epsilon_at(const TeacherConfig& config, long step, long total_steps);

struct TeacherRun {
  TeacherAgent agent;
  ReplayBuffer buffer;
  // Mean training loss per episode (NaN-free; episodes before training
  // starts are omitted).
  std::vector<double> loss_curve;
  // Mean daily cost of the exploration episodes, one entry per episode.
  std::vector<double> episode_costs;
};

// Episodes sample training days with replacement and start from a random
// state of charge. Throws TrainingError on a non-finite loss.
TeacherRun train_teacher(const TeacherConfig& config,
                         std::span<const DayProfile> days,
                         const EnvParams& env, std::uint64_t seed);

// Binary checkpoint: magic, version, layer sizes, normalization stats
// (binary64) and parameters (binary32), little-endian.
struct TeacherCheckpoint {
  DenseNet net;
  NormalizationStats stats;
};

std::string serialize_checkpoint(const DenseNet& net,
                                 const NormalizationStats& stats);
TeacherCheckpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const DenseNet& net,
                     const NormalizationStats& stats);
TeacherCheckpoint load_checkpoint(const std::filesystem::path& path);

// CSV: s0..s4,action,cost,n0..n4,terminal, oldest transition first.
std::string format_buffer(const ReplayBuffer& buffer);
ReplayBuffer parse_buffer(std::string_view text, std::size_t capacity);
void save_buffer(const std::filesystem::path& path, const ReplayBuffer& buffer);
ReplayBuffer load_buffer(const std::filesystem::path& path,
                         std::size_t capacity);

}  // namespace hems

#endif  // HEMS_TEACHER_H_
