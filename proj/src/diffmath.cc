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

#include "hems/diffmath.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "hems/error.h"

namespace hems {

bool GradBundle::all_finite() const {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

std::size_t dense_parameter_count(std::span<const int> layer_sizes) {
  std::size_t count = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    count += static_cast<std::size_t>(layer_sizes[l]) * layer_sizes[l + 1] +
             layer_sizes[l + 1];
  }
  return count;
}

DenseNet::DenseNet(std::vector<int> layer_sizes)
    : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) {
    throw ConfigError("DenseNet needs at least an input and an output layer");
  }
  for (int n : sizes_) {
    if (n <= 0) throw ConfigError("DenseNet layer sizes must be positive");
  }
  std::size_t offset = 0;
  for (int l = 0; l < num_layers(); ++l) {
    offsets_.push_back(offset);
    offset += static_cast<std::size_t>(sizes_[l]) * sizes_[l + 1] +
              sizes_[l + 1];
  }
  params_.assign(offset, 0.0);
}

DenseNet DenseNet::random(std::vector<int> layer_sizes, std::mt19937_64& rng) {
  DenseNet net(std::move(layer_sizes));
  for (int l = 0; l < net.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(net.sizes_[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const std::size_t begin = net.offsets_[l];
    const std::size_t end =
        begin + static_cast<std::size_t>(net.sizes_[l]) * net.sizes_[l + 1] +
        net.sizes_[l + 1];
    for (std::size_t i = begin; i < end; ++i) net.params_[i] = dist(rng);
  }
  return net;
}

std::size_t DenseNet::bias_offset(int layer) const {
  return offsets_[layer] +
         static_cast<std::size_t>(sizes_[layer]) * sizes_[layer + 1];
}

Eigen::Map<Eigen::MatrixXd> DenseNet::weight(int layer) {
  return {params_.data() + offsets_[layer], sizes_[layer + 1], sizes_[layer]};
}

Eigen::Map<const Eigen::MatrixXd> DenseNet::weight(int layer) const {
  return {params_.data() + offsets_[layer], sizes_[layer + 1], sizes_[layer]};
}

Eigen::Map<Eigen::VectorXd> DenseNet::bias(int layer) {
  return {params_.data() + bias_offset(layer), sizes_[layer + 1]};
}

Eigen::Map<const Eigen::VectorXd> DenseNet::bias(int layer) const {
  return {params_.data() + bias_offset(layer), sizes_[layer + 1]};
}

namespace {

void check_input_rows(const DenseNet& net, Eigen::Index rows) {
  if (net.num_layers() < 1) throw ConfigError("DenseNet is empty");
  if (rows != net.input_size()) {
    throw ConfigError(fmt::format("input has {} entries, network expects {}",
                                  rows, net.input_size()));
  }
}

}  // namespace

DenseTape dense_record(const DenseNet& net, const Eigen::MatrixXd& inputs) {
  check_input_rows(net, inputs.rows());
  DenseTape tape;
  tape.activations.reserve(net.num_layers() + 1);
  tape.activations.push_back(inputs);
  for (int l = 0; l < net.num_layers(); ++l) {
    Eigen::MatrixXd z = net.weight(l) * tape.activations.back();
    z.colwise() += net.bias(l);
    if (l + 1 < net.num_layers()) z = z.cwiseMax(0.0);
    tape.activations.push_back(std::move(z));
  }
  return tape;
}

Eigen::MatrixXd dense_forward_batch(const DenseNet& net,
                                    const Eigen::MatrixXd& inputs) {
  check_input_rows(net, inputs.rows());
  Eigen::MatrixXd a = inputs;
  for (int l = 0; l < net.num_layers(); ++l) {
    Eigen::MatrixXd z = net.weight(l) * a;
    z.colwise() += net.bias(l);
    if (l + 1 < net.num_layers()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

std::vector<double> dense_forward(const DenseNet& net,
                                  std::span<const double> input) {
  check_input_rows(net, static_cast<Eigen::Index>(input.size()));
  Eigen::MatrixXd x =
      Eigen::Map<const Eigen::VectorXd>(input.data(), input.size());
  Eigen::MatrixXd y = dense_forward_batch(net, x);
  return {y.data(), y.data() + y.size()};
}

GradBundle dense_backward_tape(const DenseNet& net, const DenseTape& tape,
                               const Eigen::MatrixXd& output_grads) {
  const auto& activations = tape.activations;
  if (static_cast<int>(activations.size()) != net.num_layers() + 1) {
    throw ConfigError("tape does not match the network");
  }
  if (output_grads.rows() != net.output_size() ||
      output_grads.cols() != activations.front().cols()) {
    throw ConfigError(fmt::format(
        "output gradient is {}x{}, expected {}x{}", output_grads.rows(),
        output_grads.cols(), net.output_size(), activations.front().cols()));
  }
  GradBundle grads{std::vector<double>(net.parameter_count(), 0.0)};

  Eigen::MatrixXd delta = output_grads;
  for (int l = net.num_layers() - 1; l >= 0; --l) {
    const int rows = net.layer_sizes()[l + 1];
    const int cols = net.layer_sizes()[l];
    Eigen::Map<Eigen::MatrixXd> dw(grads.values.data() + net.weight_offset(l),
                                   rows, cols);
    Eigen::Map<Eigen::VectorXd> db(grads.values.data() + net.bias_offset(l),
                                   rows);
    // Evaluated into Eigen-owned (aligned) storage first: the vectorized
    // kernels' summation order depends on the destination's alignment.
    const Eigen::MatrixXd w_grad = delta * activations[l].transpose();
    const Eigen::VectorXd b_grad = delta.rowwise().sum();
    dw = w_grad;
    db = b_grad;
    if (l > 0) {
      Eigen::MatrixXd upstream = net.weight(l).transpose() * delta;
      // ReLU derivative: activations[l] holds post-ReLU values.
      delta = upstream.cwiseProduct(
          (activations[l].array() > 0.0).cast<double>().matrix());
    }
  }
  return grads;
}

GradBundle dense_backward_batch(const DenseNet& net,
                                const Eigen::MatrixXd& inputs,
                                const Eigen::MatrixXd& output_grads) {
  return dense_backward_tape(net, dense_record(net, inputs), output_grads);
}

GradBundle dense_backward(const DenseNet& net, std::span<const double> input,
                          std::span<const double> output_grad) {
  check_input_rows(net, static_cast<Eigen::Index>(input.size()));
  if (static_cast<int>(output_grad.size()) != net.output_size()) {
    throw ConfigError(fmt::format("output gradient has {} entries, expected {}",
                                  output_grad.size(), net.output_size()));
  }
  Eigen::MatrixXd x =
      Eigen::Map<const Eigen::VectorXd>(input.data(), input.size());
  Eigen::MatrixXd g =
      Eigen::Map<const Eigen::VectorXd>(output_grad.data(), output_grad.size());
  return dense_backward_batch(net, x, g);
}

std::vector<double> softmax_neg(std::span<const double> w) {
  std::vector<double> p(w.size());
  if (w.empty()) return p;
  const double shift = *std::min_element(w.begin(), w.end());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    p[i] = std::exp(-(w[i] - shift));
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw ConfigError("KL divergence of vectors with different lengths");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return std::max(kl, 0.0);
}

namespace {

std::vector<double> scaled(std::span<const double> q, double temperature) {
  std::vector<double> out(q.begin(), q.end());
  for (double& v : out) v /= temperature;
  return out;
}

void check_tempered_args(std::span<const double> a, std::span<const double> b,
                         double temperature) {
  if (!(temperature > 0.0)) {
    throw ConfigError(fmt::format("temperature must be positive, got {}",
                                  temperature));
  }
  if (a.size() != b.size()) {
    throw ConfigError("teacher and student vectors differ in length");
  }
}

}  // namespace

double kl_tempered(std::span<const double> teacher_q,
                   std::span<const double> student_q, double temperature) {
  check_tempered_args(teacher_q, student_q, temperature);
  const auto p = softmax_neg(scaled(teacher_q, temperature));
  // log q computed as a log-sum-exp so tiny probabilities stay finite.
  const auto s = scaled(student_q, temperature);
  const double shift = *std::min_element(s.begin(), s.end());
  double total = 0.0;
  for (double v : s) total += std::exp(-(v - shift));
  const double log_norm = std::log(total);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      const double log_q = -(s[i] - shift) - log_norm;
      kl += p[i] * (std::log(p[i]) - log_q);
    }
  }
  return std::max(kl, 0.0);
}

std::vector<double> kl_tempered_gradient(std::span<const double> teacher_q,
                                         std::span<const double> student_q,
                                         double temperature) {
  check_tempered_args(teacher_q, student_q, temperature);
  const auto p = softmax_neg(scaled(teacher_q, temperature));
  const auto q = softmax_neg(scaled(student_q, temperature));
  std::vector<double> grad(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    grad[i] = (p[i] - q[i]) / temperature;
  }
  return grad;
}

void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state) {
  if (grads.size() != params.size() ||
      state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ConfigError(fmt::format(
        "Adam shape mismatch: {} parameters, {} gradients, {} moments",
        params.size(), grads.size(), state.first_moment.size()));
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw TrainingError(fmt::format(
          "non-finite gradient at parameter {} (Adam step {})", i,
          state.step_count + 1));
    }
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[i] * grads[i];
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

}  // namespace hems
