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

// Minimal differentiable building blocks: a dense ReLU network stored in a
// single flat parameter vector, the negative-exponent softmax, tempered KL,
// and Adam.

#ifndef HEMS_DIFFMATH_H_
#define HEMS_DIFFMATH_H_

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace hems {

// Gradient values laid out exactly like the owning model's flat parameters.
struct GradBundle {
  std::vector<double> values;

  bool all_finite() const;
};

// Fully connected network: ReLU on hidden layers, identity on the output.
// Layer l has a weight matrix (n_{l+1} x n_l, column-major) followed by a
// bias vector of length n_{l+1}; all layers are packed back to back.
class DenseNet {
 public:
  DenseNet() = default;
  // All parameters zero.
  explicit DenseNet(std::vector<int> layer_sizes);

  // Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  static DenseNet random(std::vector<int> layer_sizes, std::mt19937_64& rng);

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

  // Offsets of layer `layer`'s weight block and bias block in the flat vector.
  std::size_t weight_offset(int layer) const { return offsets_[layer]; }
  std::size_t bias_offset(int layer) const;

  bool operator==(const DenseNet& other) const = default;

 private:
  std::vector<int> sizes_;
  std::vector<std::size_t> offsets_;
  // Over-aligned so every copy of a network runs the same vectorized
  // kernels, making results independent of where the copy lives.
  std::vector<double, Eigen::aligned_allocator<double>> params_;
};

// Sum over l of n_l * n_{l+1} + n_{l+1}.
std::size_t dense_parameter_count(std::span<const int> layer_sizes);

std::vector<double> dense_forward(const DenseNet& net,
                                  std::span<const double> input);

// Column-batched forward: `inputs` is input_size x batch.
Eigen::MatrixXd dense_forward_batch(const DenseNet& net,
                                    const Eigen::MatrixXd& inputs);

GradBundle dense_backward(const DenseNet& net, std::span<const double> input,
                          std::span<const double> output_grad);

// Activations of a batched forward pass, kept for the backward pass.
struct DenseTape {
  // activations[0] is the input; activations[l] the (post-ReLU) input of
  // layer l; the last entry is the network output.
  std::vector<Eigen::MatrixXd> activations;

  const Eigen::MatrixXd& output() const { return activations.back(); }
};

DenseTape dense_record(const DenseNet& net, const Eigen::MatrixXd& inputs);

// Gradients summed over the batch columns of a recorded forward pass.
GradBundle dense_backward_tape(const DenseNet& net, const DenseTape& tape,
                               const Eigen::MatrixXd& output_grads);

// Gradients summed over the batch columns.
GradBundle dense_backward_batch(const DenseNet& net,
                                const Eigen::MatrixXd& inputs,
                                const Eigen::MatrixXd& output_grads);

// p_m = exp(-w_m) / sum_k exp(-w_k); the smallest entry gets the largest
// probability.
std::vector<double> softmax_neg(std::span<const double> w);

double sigmoid(double z);

// KL(p || q) for two probability vectors; terms with p_m = 0 contribute 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// KL(softmax_neg(teacher_q / t) || softmax_neg(student_q / t)).
double kl_tempered(std::span<const double> teacher_q,
                   std::span<const double> student_q, double temperature);

// d kl_tempered / d student_q = (P_teacher - P_student) / t.
std::vector<double> kl_tempered_gradient(std::span<const double> teacher_q,
                                         std::span<const double> student_q,
                                         double temperature);

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  long step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t parameter_count, double lr = 1e-3)
      : first_moment(parameter_count, 0.0),
        second_moment(parameter_count, 0.0),
        learning_rate(lr) {}

  bool operator==(const AdamState& other) const = default;
};

// One bias-corrected Adam update in place. Throws TrainingError on a
// non-finite gradient and ConfigError on shape mismatch.
void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state);

}  // namespace hems

#endif  // HEMS_DIFFMATH_H_
