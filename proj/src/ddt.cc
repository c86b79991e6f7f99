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

#include "hems/ddt.h"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>
#include "json.hpp"

#include "hems/diffmath.h"
#include "hems/error.h"

namespace hems {

namespace {

constexpr double kDegenerateBeta = 1e-8;

void check_shape(int depth, int num_features, int num_actions) {
  if (depth < 1 || depth > 16) {
    throw ConfigError(fmt::format("tree depth {} outside [1, 16]", depth));
  }
  if (num_features < 1 || num_actions < 1) {
    throw ConfigError("tree needs at least one feature and one action");
  }
}

}  // namespace

TreeParams::TreeParams(int depth, int num_features, int num_actions)
    : depth_(depth), num_features_(num_features), num_actions_(num_actions) {
  check_shape(depth, num_features, num_actions);
  values_.assign(
      ddt_training_parameter_count(depth, num_features, num_actions), 0.0);
}

TreeParams TreeParams::random(int depth, std::mt19937_64& rng,
                              int num_features, int num_actions) {
  TreeParams p(depth, num_features, num_actions);
  std::uniform_real_distribution<double> symmetric(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < p.num_nodes(); ++i) {
    for (double& b : p.beta(i)) b = symmetric(rng);
  }
  for (int i = 0; i < p.num_nodes(); ++i) p.phi(i) = unit(rng);
  for (int k = 0; k < p.num_leaves(); ++k) {
    for (double& w : p.leaf(k)) w = symmetric(rng);
  }
  return p;
}

std::size_t TreeParams::phi_offset() const {
  return static_cast<std::size_t>(num_nodes()) * num_features_;
}

std::size_t TreeParams::leaf_offset() const {
  return phi_offset() + num_nodes();
}

std::span<double> TreeParams::beta(int node) {
  return std::span<double>(values_).subspan(
      static_cast<std::size_t>(node) * num_features_, num_features_);
}

std::span<const double> TreeParams::beta(int node) const {
  return std::span<const double>(values_).subspan(
      static_cast<std::size_t>(node) * num_features_, num_features_);
}

double& TreeParams::phi(int node) { return values_[phi_offset() + node]; }
double TreeParams::phi(int node) const { return values_[phi_offset() + node]; }

std::span<double> TreeParams::leaf(int index) {
  return std::span<double>(values_).subspan(
      leaf_offset() + static_cast<std::size_t>(index) * num_actions_,
      num_actions_);
}

std::span<const double> TreeParams::leaf(int index) const {
  return std::span<const double>(values_).subspan(
      leaf_offset() + static_cast<std::size_t>(index) * num_actions_,
      num_actions_);
}

std::size_t ddt_training_parameter_count(int depth, int num_features,
                                         int num_actions) {
  const std::size_t nodes = (std::size_t{1} << depth) - 1;
  const std::size_t leaves = std::size_t{1} << depth;
  return nodes * (num_features + 1) + leaves * num_actions;
}

std::size_t ddt_inference_parameter_count(int depth) {
  const std::size_t nodes = (std::size_t{1} << depth) - 1;
  return nodes * 2 + (std::size_t{1} << depth);
}

namespace {

void check_state(const TreeParams& params, std::span<const double> state) {
  if (static_cast<int>(state.size()) != params.num_features()) {
    throw ConfigError(fmt::format("state has {} features, tree expects {}",
                                  state.size(), params.num_features()));
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

SoftOutput ddt_forward(const TreeParams& params,
                       std::span<const double> state) {
  check_state(params, state);
  const int nodes = params.num_nodes();
  const int leaves = params.num_leaves();
  SoftOutput out;
  out.node_probs.resize(nodes);
  for (int i = 0; i < nodes; ++i) {
    out.node_probs[i] = sigmoid(dot(params.beta(i), state) - params.phi(i));
  }
  // Reach probability of every heap position; leaves occupy the last level.
  std::vector<double> reach(nodes + leaves, 0.0);
  reach[0] = 1.0;
  for (int i = 0; i < nodes; ++i) {
    reach[2 * i + 1] = reach[i] * out.node_probs[i];
    reach[2 * i + 2] = reach[i] * (1.0 - out.node_probs[i]);
  }
  out.leaf_path_probs.assign(reach.begin() + nodes, reach.end());
  out.action_distribution.assign(params.num_actions(), 0.0);
  for (int k = 0; k < leaves; ++k) {
    const auto dist = softmax_neg(params.leaf(k));
    for (int m = 0; m < params.num_actions(); ++m) {
      out.action_distribution[m] += out.leaf_path_probs[k] * dist[m];
    }
  }
  return out;
}

std::vector<double> ddt_gradients(const TreeParams& params,
                                  std::span<const double> state,
                                  std::span<const double> output_grad) {
  check_state(params, state);
  if (static_cast<int>(output_grad.size()) != params.num_actions()) {
    throw ConfigError(fmt::format("output gradient has {} entries, expected {}",
                                  output_grad.size(), params.num_actions()));
  }
  const int nodes = params.num_nodes();
  const int leaves = params.num_leaves();
  const int actions = params.num_actions();
  const SoftOutput fwd = ddt_forward(params, state);

  TreeParams grad(params.depth(), params.num_features(), actions);

  // value[n] = sum over leaves below heap position n of
  // (path probability from n to the leaf) * (output_grad . leaf dist).
  std::vector<double> value(nodes + leaves, 0.0);
  for (int k = 0; k < leaves; ++k) {
    const auto dist = softmax_neg(params.leaf(k));
    const double g_dot_p = dot(output_grad, dist);
    value[nodes + k] = g_dot_p;
    // d(g . softmax_neg(w))/dw_j = -p_j (g_j - g . p), scaled by the path.
    auto gw = grad.leaf(k);
    for (int j = 0; j < actions; ++j) {
      gw[j] = -fwd.leaf_path_probs[k] * dist[j] * (output_grad[j] - g_dot_p);
    }
  }
  for (int i = nodes - 1; i >= 0; --i) {
    const double p = fwd.node_probs[i];
    value[i] = p * value[2 * i + 1] + (1.0 - p) * value[2 * i + 2];
  }
  std::vector<double> reach(nodes, 0.0);
  reach[0] = 1.0;
  for (int i = 1; i < nodes; ++i) {
    const int parent = (i - 1) / 2;
    const double p = fwd.node_probs[parent];
    reach[i] = reach[parent] * (i % 2 == 1 ? p : 1.0 - p);
  }
  for (int i = 0; i < nodes; ++i) {
    const double p = fwd.node_probs[i];
    const double d_p = reach[i] * (value[2 * i + 1] - value[2 * i + 2]);
    const double d_z = d_p * p * (1.0 - p);
    auto gb = grad.beta(i);
    for (int j = 0; j < params.num_features(); ++j) gb[j] = d_z * state[j];
    grad.phi(i) = -d_z;
  }
  return {grad.values().begin(), grad.values().end()};
}

CrispTree crispify(const TreeParams& params) {
  CrispTree tree;
  tree.depth = params.depth();
  for (int i = 0; i < params.num_nodes(); ++i) {
    const auto b = params.beta(i);
    // Largest magnitude: a strongly negative weight is as selective as a
    // positive one and is kept through the flipped comparison.
    const auto best = std::max_element(
        b.begin(), b.end(),
        [](double x, double y) { return std::abs(x) < std::abs(y); });
    const int feature = static_cast<int>(best - b.begin());
    const double weight = *best;
    if (!(std::abs(weight) >= kDegenerateBeta)) {
      throw DegenerateNodeError(
          i, fmt::format("decision node {} has no selective feature weight "
                         "(largest |beta| = {})",
                         i, weight));
    }
    tree.nodes.push_back({feature, params.phi(i) / weight, weight < 0.0});
  }
  for (int k = 0; k < params.num_leaves(); ++k) {
    const auto w = params.leaf(k);
    tree.leaf_actions.push_back(
        static_cast<int>(std::min_element(w.begin(), w.end()) - w.begin()));
  }
  return tree;
}

int crisp_leaf(const CrispTree& tree, std::span<const double> state) {
  const int nodes = static_cast<int>(tree.nodes.size());
  int i = 0;
  while (i < nodes) {
    const CrispNode& node = tree.nodes[i];
    if (node.feature < 0 || node.feature >= static_cast<int>(state.size())) {
      throw ConfigError(fmt::format("node {} references feature {}", i,
                                    node.feature));
    }
    const double x = state[node.feature];
    const bool left = node.flipped ? x < node.threshold : x > node.threshold;
    i = left ? 2 * i + 1 : 2 * i + 2;
  }
  return i - nodes;
}

int crisp_predict(const CrispTree& tree, std::span<const double> state) {
  return tree.leaf_actions.at(crisp_leaf(tree, state));
}

RuleFormat parse_rule_format(std::string_view tag) {
  if (tag == "text") return RuleFormat::kText;
  if (tag == "dot") return RuleFormat::kDot;
  if (tag == "json") return RuleFormat::kJson;
  throw UsageError(fmt::format(
      "unknown rule format '{}' (expected text, dot or json)", tag));
}

namespace {

constexpr const char* kTreeFormatTag = "hems-crisp-tree";
constexpr int kTreeFormatVersion = 1;

void check_tree(const CrispTree& tree) {
  if (tree.depth < 1 ||
      tree.nodes.size() != (std::size_t{1} << tree.depth) - 1 ||
      tree.leaf_actions.size() != (std::size_t{1} << tree.depth)) {
    throw ConfigError("crisp tree node/leaf counts do not match its depth");
  }
}

std::string condition(const CrispNode& node,
                      std::span<const std::string> features) {
  return fmt::format("{} {} {:.4f}", features[node.feature],
                     node.flipped ? "<" : ">", node.threshold);
}

void render_text(const CrispTree& tree, std::span<const std::string> features,
                 std::span<const std::string> actions, int node, int indent,
                 std::string& out) {
  const int nodes = static_cast<int>(tree.nodes.size());
  const std::string pad(indent, ' ');
  const int left = 2 * node + 1;
  const int right = 2 * node + 2;
  const std::string cond = condition(tree.nodes[node], features);
  if (left >= nodes) {
    out += fmt::format("{}if {} then {}\n", pad, cond,
                       actions[tree.leaf_actions[left - nodes]]);
    out += fmt::format("{}else {}\n", pad,
                       actions[tree.leaf_actions[right - nodes]]);
    return;
  }
  out += fmt::format("{}if {}:\n", pad, cond);
  render_text(tree, features, actions, left, indent + 2, out);
  out += fmt::format("{}else:\n", pad);
  render_text(tree, features, actions, right, indent + 2, out);
}

std::string render_dot(const CrispTree& tree,
                       std::span<const std::string> features,
                       std::span<const std::string> actions) {
  const int nodes = static_cast<int>(tree.nodes.size());
  std::string out = "digraph ddt {\n  node [fontname=\"Helvetica\"];\n";
  for (int i = 0; i < nodes; ++i) {
    out += fmt::format("  n{} [shape=box, style=rounded, label=\"{}\"];\n", i,
                       condition(tree.nodes[i], features));
  }
  for (int k = 0; k < static_cast<int>(tree.leaf_actions.size()); ++k) {
    out += fmt::format(
        "  n{} [shape=box, style=filled, fillcolor=lightgrey, label=\"{}\"];\n",
        nodes + k, actions[tree.leaf_actions[k]]);
  }
  for (int i = 0; i < nodes; ++i) {
    out += fmt::format("  n{} -> n{} [label=\"true\"];\n", i, 2 * i + 1);
    out += fmt::format("  n{} -> n{} [label=\"false\"];\n", i, 2 * i + 2);
  }
  out += "}\n";
  return out;
}

std::string render_json(const CrispTree& tree,
                        std::span<const std::string> features,
                        std::span<const std::string> actions) {
  nlohmann::ordered_json j;
  j["format"] = kTreeFormatTag;
  j["version"] = kTreeFormatVersion;
  j["depth"] = tree.depth;
  j["features"] = std::vector<std::string>(features.begin(), features.end());
  j["actions"] = std::vector<std::string>(actions.begin(), actions.end());
  j["nodes"] = nlohmann::ordered_json::array();
  for (const auto& node : tree.nodes) {
    j["nodes"].push_back({{"feature", node.feature},
                          {"threshold", node.threshold},
                          {"flipped", node.flipped}});
  }
  j["leaves"] = tree.leaf_actions;
  return j.dump(1) + "\n";
}

}  // namespace

std::string export_rules(const CrispTree& tree,
                         std::span<const std::string> feature_names,
                         std::span<const std::string> action_names,
                         RuleFormat format) {
  check_tree(tree);
  for (const auto& node : tree.nodes) {
    if (node.feature < 0 ||
        node.feature >= static_cast<int>(feature_names.size())) {
      throw ConfigError(fmt::format("no name for feature {}", node.feature));
    }
  }
  for (int a : tree.leaf_actions) {
    if (a < 0 || a >= static_cast<int>(action_names.size())) {
      throw ConfigError(fmt::format("no name for action {}", a));
    }
  }
  switch (format) {
    case RuleFormat::kText: {
      std::string out;
      render_text(tree, feature_names, action_names, 0, 0, out);
      return out;
    }
    case RuleFormat::kDot:
      return render_dot(tree, feature_names, action_names);
    case RuleFormat::kJson:
      return render_json(tree, feature_names, action_names);
  }
  throw UsageError("unknown rule format");
}

CrispTree parse_crisp_tree_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != kTreeFormatTag) {
      throw LoadError("not a crisp-tree dump");
    }
    const int version = j.at("version").get<int>();
    if (version != kTreeFormatVersion) {
      throw LoadError(fmt::format("unsupported crisp-tree version {}", version));
    }
    CrispTree tree;
    tree.depth = j.at("depth").get<int>();
    if (tree.depth < 1 || tree.depth > 16) {
      throw LoadError(fmt::format("invalid depth {}", tree.depth));
    }
    const auto num_features = j.at("features").size();
    const auto num_actions = j.at("actions").size();
    for (const auto& n : j.at("nodes")) {
      CrispNode node{n.at("feature").get<int>(),
                     n.at("threshold").get<double>(),
                     n.at("flipped").get<bool>()};
      if (node.feature < 0 || node.feature >= static_cast<int>(num_features)) {
        throw LoadError(fmt::format("feature index {} out of range",
                                    node.feature));
      }
      tree.nodes.push_back(node);
    }
    for (const auto& a : j.at("leaves")) {
      const int action = a.get<int>();
      if (action < 0 || action >= static_cast<int>(num_actions)) {
        throw LoadError(fmt::format("action index {} out of range", action));
      }
      tree.leaf_actions.push_back(action);
    }
    try {
      check_tree(tree);
    } catch (const ConfigError& e) {
      throw LoadError(e.what());
    }
    return tree;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(fmt::format("malformed crisp-tree dump: {}", e.what()));
  }
}

}  // namespace hems
