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

// Differentiable decision tree.
//
// Nodes are numbered in heap order: node 0 is the root and node i has
// children 2i+1 (left, "condition true") and 2i+2 (right). Leaves are
// numbered left to right. A decision node computes
//
//   p_i = sigmoid(beta_i . x - phi_i)
//
// and a leaf's path probability is the product of p_i (left turns) and
// 1 - p_i (right turns) along its path. Each leaf holds weights w_k whose
// negative-exponent softmax is the leaf's action distribution; the tree
// output is the path-weighted mixture of the leaf distributions.
//
// Crispification keeps, per node, the feature with the largest |beta| entry
// and rescales the threshold onto that feature's axis so the hard rule
// "x_j > phi / beta_j" (reversed when beta_j < 0) matches the soft node's
// decision boundary along that feature.

#ifndef HEMS_DDT_H_
#define HEMS_DDT_H_

#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hems/profiles.h"

namespace hems {

// Trainable soft-tree parameters packed as
// [betas (nodes x features) | phis (nodes) | leaf weights (leaves x actions)].
class TreeParams {
 public:
  TreeParams() = default;
  // All parameters zero.
  TreeParams(int depth, int num_features = kNumFeatures, int num_actions = 5);

  // beta ~ U(-1, 1), phi ~ U(0, 1), w ~ U(-1, 1).
  static TreeParams random(int depth, std::mt19937_64& rng,
                           int num_features = kNumFeatures,
                           int num_actions = 5);

  int depth() const { return depth_; }
  int num_features() const { return num_features_; }
  int num_actions() const { return num_actions_; }
  int num_nodes() const { return (1 << depth_) - 1; }
  int num_leaves() const { return 1 << depth_; }

  std::span<double> beta(int node);
  std::span<const double> beta(int node) const;
  double& phi(int node);
  double phi(int node) const;
  std::span<double> leaf(int index);
  std::span<const double> leaf(int index) const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t parameter_count() const { return values_.size(); }

  bool operator==(const TreeParams& other) const = default;

 private:
  std::size_t phi_offset() const;
  std::size_t leaf_offset() const;

  int depth_ = 0;
  int num_features_ = 0;
  int num_actions_ = 0;
  std::vector<double> values_;
};

// (2^d - 1)(features + 1) + 2^d * actions.
std::size_t ddt_training_parameter_count(int depth,
                                         int num_features = kNumFeatures,
                                         int num_actions = 5);
// (2^d - 1) * 2 + 2^d: a feature index and threshold per node, an action per
// leaf.
std::size_t ddt_inference_parameter_count(int depth);

struct SoftOutput {
  std::vector<double> action_distribution;
  std::vector<double> leaf_path_probs;
  // Per-node sigmoid outputs (probability of going left).
  std::vector<double> node_probs;
};

SoftOutput ddt_forward(const TreeParams& params, std::span<const double> state);

// Gradient of (output_grad . o) with respect to every parameter, laid out like
// TreeParams::values().
std::vector<double> ddt_gradients(const TreeParams& params,
                                  std::span<const double> state,
                                  std::span<const double> output_grad);

struct CrispNode {
  int feature = 0;
  double threshold = 0.0;
  // Left branch taken on x < threshold instead of x > threshold.
  bool flipped = false;

  bool operator==(const CrispNode& other) const = default;
};

struct CrispTree {
  int depth = 0;
  std::vector<CrispNode> nodes;
  std::vector<int> leaf_actions;

  std::size_t inference_parameter_count() const {
    return nodes.size() * 2 + leaf_actions.size();
  }
  bool operator==(const CrispTree& other) const = default;
};

// Thrown when a node's winning beta is (numerically) zero.
class DegenerateNodeError : public std::runtime_error {
 public:
  DegenerateNodeError(int node, const std::string& what)
      : std::runtime_error(what), node_(node) {}
  int node() const { return node_; }

 private:
  int node_;
};

CrispTree crispify(const TreeParams& params);

// Index of the leaf reached by `state`. Ties on a threshold go right.
int crisp_leaf(const CrispTree& tree, std::span<const double> state);
int crisp_predict(const CrispTree& tree, std::span<const double> state);

enum class RuleFormat { kText, kDot, kJson };

// "text", "dot" or "json"; throws UsageError otherwise.
RuleFormat parse_rule_format(std::string_view tag);

// feature_names has one entry per feature, action_names one per action.
std::string export_rules(const CrispTree& tree,
                         std::span<const std::string> feature_names,
                         std::span<const std::string> action_names,
                         RuleFormat format);

// Inverse of the JSON export. Throws LoadError on schema violations.
CrispTree parse_crisp_tree_json(std::string_view text);

}  // namespace hems

#endif  // HEMS_DDT_H_
