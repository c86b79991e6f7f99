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

#include "hems/teacher.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include <fmt/core.h>

#include "hems/error.h"
#include "io_util.h"

namespace hems {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be > 0");
  data_.reserve(capacity);
}

void ReplayBuffer::push(const Transition& t) {
  if (data_.size() < capacity_) {
    data_.push_back(t);
  } else {
    data_[cursor_] = t;
  }
  cursor_ = (cursor_ + 1) % capacity_;
}

std::vector<Transition> ReplayBuffer::chronological() const {
  if (data_.size() < capacity_) return data_;
  std::vector<Transition> out;
  out.reserve(data_.size());
  for (std::size_t i = 0; i < data_.size(); ++i) {
    out.push_back(data_[(cursor_ + i) % capacity_]);
  }
  return out;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(
    std::size_t count, std::mt19937_64& rng) const {
  if (count > data_.size()) {
    throw ContractError(fmt::format("cannot sample {} of {} transitions",
                                    count, data_.size()));
  }
  // Partial Fisher-Yates over the index range.
  std::vector<std::size_t> idx(data_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  return idx;
}

void TeacherConfig::validate() const {
  if (hidden_layers.empty()) throw ConfigError("teacher needs hidden layers");
  for (int n : hidden_layers) {
    if (n <= 0) throw ConfigError("hidden layer sizes must be positive");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma outside [0, 1]");
  if (!(target_blend > 0.0 && target_blend <= 1.0)) {
    throw ConfigError("target blend outside (0, 1]");
  }
  if (batch_size == 0) throw ConfigError("batch size must be > 0");
  if (buffer_size < batch_size) {
    throw ConfigError("buffer size must be at least the batch size");
  }
  if (episodes < 1) throw ConfigError("teacher needs at least one episode");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 &&
        epsilon_end <= 1.0)) {
    throw ConfigError("epsilon bounds outside [0, 1]");
  }
  if (!(epsilon_decay_fraction > 0.0 && epsilon_decay_fraction <= 1.0)) {
    throw ConfigError("epsilon decay fraction outside (0, 1]");
  }
}

TeacherAgent make_teacher(const TeacherConfig& config, int num_actions,
                          std::mt19937_64& rng) {
  config.validate();
  std::vector<int> sizes = {kNumFeatures};
  sizes.insert(sizes.end(), config.hidden_layers.begin(),
               config.hidden_layers.end());
  sizes.push_back(num_actions);
  TeacherAgent agent;
  agent.online = DenseNet::random(sizes, rng);
  agent.target = agent.online;
  agent.adam = AdamState(agent.online.parameter_count(), config.learning_rate);
  agent.gamma = config.gamma;
  agent.target_blend = config.target_blend;
  return agent;
}

int argmin_action(std::span<const double> q) {
  return static_cast<int>(std::min_element(q.begin(), q.end()) - q.begin());
}

int greedy_action(const DenseNet& net, const Features& state) {
  return argmin_action(dense_forward(net, state));
}

int select_action(const TeacherAgent& agent, const Features& state,
                  double epsilon, std::mt19937_64& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw ConfigError(fmt::format("epsilon {} outside [0, 1]", epsilon));
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (epsilon > 0.0 && unit(rng) < epsilon) {
    std::uniform_int_distribution<int> pick(0, agent.online.output_size() - 1);
    return pick(rng);
  }
  return greedy_action(agent.online, state);
}

namespace {

Eigen::MatrixXd stack_states(std::span<const Transition> batch, bool next) {
  Eigen::MatrixXd x(kNumFeatures, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Features& f = next ? batch[i].next_state : batch[i].state;
    for (int j = 0; j < kNumFeatures; ++j) x(j, i) = f[j];
  }
  return x;
}

}  // namespace

std::vector<double> td_targets(std::span<const Transition> batch,
                               const TeacherAgent& agent) {
  if (batch.empty()) throw ContractError("TD targets of an empty batch");
  const Eigen::MatrixXd q_next =
      dense_forward_batch(agent.target, stack_states(batch, true));
  std::vector<double> targets(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    targets[i] = batch[i].cost;
    if (!batch[i].terminal) {
      targets[i] += agent.gamma * q_next.col(static_cast<Eigen::Index>(i)).minCoeff();
    }
  }
  return targets;
}

void soft_update(DenseNet& target, const DenseNet& online, double blend) {
  if (target.layer_sizes() != online.layer_sizes()) {
    throw ConfigError("soft update between networks of different shapes");
  }
  auto t = target.parameters();
  const auto o = online.parameters();
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = blend * o[i] + (1.0 - blend) * t[i];
  }
}

double train_on_batch(TeacherAgent& agent, std::span<const Transition> batch) {
  const std::vector<double> targets = td_targets(batch, agent);
  const Eigen::MatrixXd x = stack_states(batch, false);
  const DenseTape tape = dense_record(agent.online, x);
  const Eigen::MatrixXd& q = tape.output();
  const double n = static_cast<double>(batch.size());
  Eigen::MatrixXd output_grad = Eigen::MatrixXd::Zero(q.rows(), q.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int a = batch[i].action_index;
    if (a < 0 || a >= q.rows()) {
      throw ContractError(fmt::format("transition action {} out of range", a));
    }
    const auto col = static_cast<Eigen::Index>(i);
    const double err = q(a, col) - targets[i];
    loss += err * err;
    output_grad(a, col) = 2.0 * err / n;
  }
  loss /= n;
  if (!std::isfinite(loss)) throw TrainingError("non-finite TD loss");
  const GradBundle grads = dense_backward_tape(agent.online, tape, output_grad);
  adam_step(agent.online.parameters(), grads.values, agent.adam);
  soft_update(agent.target, agent.online, agent.target_blend);
  return loss;
}

std::optional<double> train_step(TeacherAgent& agent,
                                 const ReplayBuffer& buffer,
                                 std::size_t batch_size,
                                 std::mt19937_64& rng) {
  if (batch_size == 0 || buffer.size() < batch_size) return std::nullopt;
  const auto idx = buffer.sample_indices(batch_size, rng);
  std::vector<Transition> batch;
  batch.reserve(batch_size);
  for (std::size_t i : idx) batch.push_back(buffer[i]);
  return train_on_batch(agent, batch);
}

double epsilon_at(const TeacherConfig& config, long step, long total_steps) {
  const double window =
      std::max(1.0, config.epsilon_decay_fraction * static_cast<double>(total_steps));
  const double frac = std::min(1.0, static_cast<double>(step) / window);
  return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start);
}

TeacherRun train_teacher(const TeacherConfig& config,
                         std::span<const DayProfile> days, const EnvParams& env,
                         std::uint64_t seed) {
  config.validate();
  env.validate();
  if (days.empty()) throw ConfigError("teacher training needs at least one day");
  const int horizon = env.tariff.horizon_steps;
  for (const auto& day : days) validate_day(day, horizon);

  std::mt19937_64 rng(seed);
  TeacherRun run{make_teacher(config, env.battery.num_actions(), rng),
                 ReplayBuffer(config.buffer_size), {}, {}};
  std::uniform_int_distribution<std::size_t> pick_day(0, days.size() - 1);
  std::uniform_real_distribution<double> pick_soc(0.0, 1.0);

  const long total_steps = static_cast<long>(config.episodes) * horizon;
  long step = 0;
  for (int episode = 0; episode < config.episodes; ++episode) {
    const DayProfile& day = days[pick_day(rng)];
    EnvState state = initial_state(day, env, pick_soc(rng));
    double loss_sum = 0.0;
    int loss_count = 0;
    double cost = 0.0;
    for (int t = 0; t < horizon; ++t, ++step) {
      const double eps = epsilon_at(config, step, total_steps);
      const int action = select_action(run.agent, state.normalized, eps, rng);
      const StepOutcome out = env_step(state, action, day, env);
      run.buffer.push({state.normalized, action, out.cost_eur,
                       out.next_state.normalized, t == horizon - 1});
      cost += out.cost_eur;
      std::optional<double> loss;
      try {
        loss = train_step(run.agent, run.buffer, config.batch_size, rng);
      } catch (const TrainingError& e) {
        throw TrainingError(fmt::format(
            "teacher training diverged (seed {}, episode {}, step {}): {}",
            seed, episode, t, e.what()));
      }
      if (loss) {
        loss_sum += *loss;
        ++loss_count;
      }
      state = out.next_state;
    }
    if (loss_count > 0) run.loss_curve.push_back(loss_sum / loss_count);
    run.episode_costs.push_back(cost);
  }
  return run;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kCheckpointMagic[8] = {'H', 'E', 'M', 'S', 'Q', 'N', 'E', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) {
      throw LoadError("checkpoint is truncated");
    }
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const DenseNet& net,
                                 const NormalizationStats& stats) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layer_sizes().size()));
  for (int n : net.layer_sizes()) put<std::uint32_t>(out, static_cast<std::uint32_t>(n));
  for (const FeatureRange* r : {&stats.price, &stats.demand, &stats.pv}) {
    put<double>(out, r->min);
    put<double>(out, r->max);
  }
  put<std::uint64_t>(out, net.parameter_count());
  for (double v : net.parameters()) put<float>(out, static_cast<float>(v));
  return out;
}

TeacherCheckpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw LoadError("not a teacher checkpoint (bad magic)");
  }
  Reader in(bytes.substr(sizeof(kCheckpointMagic)));
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw LoadError(fmt::format("unsupported checkpoint version {}", version));
  }
  const auto layers = in.get<std::uint32_t>();
  if (layers < 2 || layers > 64) throw LoadError("implausible layer count");
  std::vector<int> sizes;
  for (std::uint32_t i = 0; i < layers; ++i) {
    const auto n = in.get<std::uint32_t>();
    if (n == 0 || n > 1u << 16) throw LoadError("implausible layer size");
    sizes.push_back(static_cast<int>(n));
  }
  TeacherCheckpoint ckpt;
  for (FeatureRange* r : {&ckpt.stats.price, &ckpt.stats.demand, &ckpt.stats.pv}) {
    r->min = in.get<double>();
    r->max = in.get<double>();
  }
  ckpt.net = DenseNet(sizes);
  const auto count = in.get<std::uint64_t>();
  if (count != ckpt.net.parameter_count()) {
    throw LoadError(fmt::format("checkpoint holds {} parameters, layout needs {}",
                                count, ckpt.net.parameter_count()));
  }
  for (double& v : ckpt.net.parameters()) v = in.get<float>();
  if (!in.done()) throw LoadError("trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const DenseNet& net,
                     const NormalizationStats& stats) {
  io::write_file(path, serialize_checkpoint(net, stats));
}

TeacherCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  try {
    return deserialize_checkpoint(bytes);
  } catch (const LoadError& e) {
    throw LoadError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

namespace {
constexpr std::string_view kBufferHeader =
    "s0,s1,s2,s3,s4,action,cost,n0,n1,n2,n3,n4,terminal";
}

std::string format_buffer(const ReplayBuffer& buffer) {
  std::string out(kBufferHeader);
  out += '\n';
  for (const Transition& t : buffer.chronological()) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{}\n", t.state[0],
                       t.state[1], t.state[2], t.state[3], t.state[4],
                       t.action_index, t.cost, t.next_state[0],
                       t.next_state[1], t.next_state[2], t.next_state[3],
                       t.next_state[4], t.terminal ? 1 : 0);
  }
  return out;
}

ReplayBuffer parse_buffer(std::string_view text, std::size_t capacity) {
  ReplayBuffer buffer(capacity);
  bool header = false;
  for (const auto& [line_no, line] : io::lines(text)) {
    if (!header) {
      if (line != kBufferHeader) {
        throw LoadError(fmt::format("line {}: bad buffer header", line_no), line_no);
      }
      header = true;
      continue;
    }
    const auto f = io::split(line, ',');
    if (f.size() != 13) {
      throw LoadError(fmt::format("line {}: expected 13 columns", line_no), line_no);
    }
    Transition t;
    int terminal = 0;
    bool ok = io::parse_int(f[5], t.action_index) &&
              io::parse_double(f[6], t.cost) && io::parse_int(f[12], terminal);
    for (int j = 0; j < kNumFeatures; ++j) {
      ok = ok && io::parse_double(f[j], t.state[j]) &&
           io::parse_double(f[7 + j], t.next_state[j]);
    }
    if (!ok || t.action_index < 0 || (terminal != 0 && terminal != 1)) {
      throw LoadError(fmt::format("line {}: malformed transition", line_no), line_no);
    }
    t.terminal = terminal == 1;
    buffer.push(t);
  }
  if (!header) throw LoadError("buffer dump is empty");
  return buffer;
}

void save_buffer(const std::filesystem::path& path, const ReplayBuffer& buffer) {
  io::write_file(path, format_buffer(buffer));
}

ReplayBuffer load_buffer(const std::filesystem::path& path,
                         std::size_t capacity) {
  try {
    return parse_buffer(io::read_file(path), capacity);
  } catch (const LoadError& e) {
    throw LoadError(fmt::format("{}: {}", path.string(), e.what()), e.line());
  }
}

}  // namespace hems
