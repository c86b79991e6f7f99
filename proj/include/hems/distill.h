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

// Policy distillation: teacher Q-vectors for every buffered state, and
// minibatch Adam training of a soft tree against the tempered teacher
// distribution.

#ifndef HEMS_DISTILL_H_
#define HEMS_DISTILL_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hems/ddt.h"
#include "hems/diffmath.h"
#include "hems/teacher.h"

namespace hems {

struct DistillationDataset {
  std::vector<Features> states;
  std::vector<std::vector<double>> teacher_q;
  std::string teacher_id;
  std::size_t buffer_size = 0;

  std::size_t size() const { return states.size(); }
  bool operator==(const DistillationDataset& other) const = default;
};

// One record per buffered transition (its pre-action state), in storage
// order. The teacher is only read.
DistillationDataset build_dataset(const DenseNet& teacher,
                                  const ReplayBuffer& buffer,
                                  std::string teacher_id);

// softmax_neg(q / temperature).
std::vector<double> teacher_target(std::span<const double> teacher_q,
                                   double temperature);

struct LossAndGrad {
  double loss = 0.0;
  // Laid out like TreeParams::values().
  std::vector<double> grad;
};

// KL(teacher_target || student distribution). The student's tree output is
// used directly as the tempered student distribution.
LossAndGrad distill_loss(const TreeParams& student,
                         std::span<const double> state,
                         std::span<const double> teacher_q, double temperature);

struct StudentConfig {
  int depth = 2;
  double temperature = 0.03;
  int epochs = 200;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;

  void validate() const;
  bool operator==(const StudentConfig& other) const = default;
};

struct StudentRun {
  TreeParams params;
  CrispTree tree;
  // Mean loss per epoch.
  std::vector<double> loss_curve;
};

// Random init, per-epoch shuffle, Adam on minibatch-mean gradients.
// Throws TrainingError on a non-finite loss and propagates
// DegenerateNodeError from crispification.
StudentRun train_student(const DistillationDataset& dataset,
                         const StudentConfig& config, std::uint64_t seed);

// Fraction of dataset states where the crisp tree picks the teacher's
// greedy (argmin-Q) action.
double agreement_rate(const CrispTree& tree, const DistillationDataset& dataset);

// CSV: header `# teacher=<id> buffer=<n>` then s0..s4,q0..q{A-1}.
std::string format_dataset(const DistillationDataset& dataset);
DistillationDataset parse_dataset(std::string_view text);
void save_dataset(const std::filesystem::path& path,
                  const DistillationDataset& dataset);
DistillationDataset load_dataset(const std::filesystem::path& path);

// JSON dump of soft tree parameters (exact doubles).
std::string format_tree_params(const TreeParams& params);
TreeParams parse_tree_params(std::string_view text);

}  // namespace hems

#endif  // HEMS_DISTILL_H_
