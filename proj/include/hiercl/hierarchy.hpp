/*
 * Copyright 2026 The HierCL Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hiercl/errors.hpp"

namespace hiercl {

/// One category node. Ids are dense: 0 is the root, 1..C the category nodes.
struct NodeRecord {
  int id = -1;
  std::string name;
  std::optional<int> parent;  // empty only for the root
  int level = 0;              // root = 0
  bool is_other = false;      // "Other <parent>" style catch-all category
};

/// Ancestor chain of an annotated instance, from level 1 down to the
/// terminal node. Never contains the root; may be shorter than the tree
/// depth (instances reassigned to intermediate nodes), and may even be
/// empty when an Other* node hangs directly off the root.
struct HierLabel {
  std::vector<int> path;

  int depth() const { return static_cast<int>(path.size()); }
  /// Node id at level l (1-based). Caller guarantees 1 <= l <= depth().
  int at_level(int l) const { return path[static_cast<std::size_t>(l) - 1]; }
  int terminal() const { return path.back(); }
  bool empty() const { return path.empty(); }

  friend bool operator==(const HierLabel& a, const HierLabel& b) {
    return a.path == b.path;
  }
};

/// Input description of one node, as read from a hierarchy file.
struct NodeSpec {
  std::string name;
  std::optional<std::string> parent;  // empty for the root
  bool is_other = false;
};

/// Immutable category hierarchy. Construction assigns ids breadth-first
/// with lexicographic tie-break among siblings, so identical node sets
/// always produce identical ids regardless of input order (serialized
/// prototype banks depend on this).
class LabelTree {
 public:
  static LabelTree build(std::vector<NodeSpec> specs) {
    if (specs.empty()) throw Error("hierarchy: empty node list");

    std::map<std::string, std::size_t> by_name;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (!by_name.emplace(specs[i].name, i).second)
        throw Error("hierarchy: duplicate node name '" + specs[i].name + "'");
    }

    std::optional<std::size_t> root;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (!specs[i].parent) {
        if (root) throw MultipleRoots("hierarchy: more than one root node");
        root = i;
      } else if (!by_name.count(*specs[i].parent)) {
        throw UnknownParent("hierarchy: unknown parent '" + *specs[i].parent +
                            "' of '" + specs[i].name + "'");
      }
    }
    // Every node has a known parent but none is a root: the parent links
    // must close a cycle somewhere.
    if (!root) throw CycleDetected("hierarchy: no root node");
    if (specs[*root].is_other)
      throw Error("hierarchy: root cannot be an Other* category");

    // Children sorted by name, then BFS from the root.
    std::vector<std::vector<std::size_t>> kids(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i)
      if (specs[i].parent) kids[by_name.at(*specs[i].parent)].push_back(i);
    for (auto& k : kids)
      std::sort(k.begin(), k.end(), [&](std::size_t a, std::size_t b) {
        return specs[a].name < specs[b].name;
      });

    LabelTree tree;
    std::vector<int> id_of_spec(specs.size(), -1);
    std::vector<std::size_t> frontier{*root};
    while (!frontier.empty()) {
      std::vector<std::size_t> next;
      for (std::size_t s : frontier) {
        NodeRecord rec;
        rec.id = static_cast<int>(tree.nodes_.size());
        rec.name = specs[s].name;
        rec.is_other = specs[s].is_other;
        if (specs[s].parent) {
          rec.parent = id_of_spec[by_name.at(*specs[s].parent)];
          rec.level = tree.nodes_[static_cast<std::size_t>(*rec.parent)].level + 1;
        }
        id_of_spec[s] = rec.id;
        tree.nodes_.push_back(std::move(rec));
        for (std::size_t c : kids[s]) next.push_back(c);
      }
      frontier = std::move(next);
    }
    // Nodes unreachable from the root sit on a parent cycle.
    if (tree.nodes_.size() != specs.size())
      throw CycleDetected("hierarchy: nodes unreachable from the root");

    tree.finish();
    return tree;
  }

  /// Build from (child name, parent name) pairs. The one name that never
  /// appears as a child is the root.
  static LabelTree build_edges(
      const std::vector<std::pair<std::string, std::string>>& edges) {
    std::map<std::string, std::string> parent_of;  // child -> parent
    std::map<std::string, bool> seen;              // any mention
    for (const auto& [child, parent] : edges) {
      if (!parent_of.emplace(child, parent).second)
        throw Error("hierarchy: node '" + child + "' listed twice as a child");
      seen[child] = true;
      seen.try_emplace(parent, true);
    }
    std::vector<NodeSpec> specs;
    for (const auto& [name, _] : seen) {
      auto it = parent_of.find(name);
      specs.push_back({name,
                       it == parent_of.end() ? std::nullopt
                                             : std::optional<std::string>(it->second),
                       false});
    }
    return build(std::move(specs));
  }

  /// Hierarchy file: JSON array of {"name", "parent" (string or null),
  /// "other" (bool, optional)}.
  static LabelTree from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw Error("hierarchy file: expected a JSON array");
    std::vector<NodeSpec> specs;
    for (const auto& n : j) {
      NodeSpec s;
      s.name = n.at("name").get<std::string>();
      if (n.contains("parent") && !n.at("parent").is_null())
        s.parent = n.at("parent").get<std::string>();
      s.is_other = n.value("other", false);
      specs.push_back(std::move(s));
    }
    return build(std::move(specs));
  }

  static LabelTree load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open hierarchy file: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }

  nlohmann::json to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& n : nodes_) {
      nlohmann::json e{{"name", n.name}, {"other", n.is_other}};
      e["parent"] = n.parent ? nlohmann::json(nodes_[*n.parent].name)
                             : nlohmann::json(nullptr);
      out.push_back(std::move(e));
    }
    return out;
  }

  const NodeRecord& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  const std::vector<NodeRecord>& nodes() const { return nodes_; }
  int root_id() const { return 0; }
  /// L: deepest non-root level. The root level itself is not counted.
  int depth() const { return depth_; }
  /// C: category nodes, root excluded. Prototype row of node id n is n-1.
  int category_count() const { return static_cast<int>(nodes_.size()) - 1; }

  bool has_name(const std::string& name) const { return id_by_name_.count(name) > 0; }
  int id_of(const std::string& name) const {
    auto it = id_by_name_.find(name);
    if (it == id_by_name_.end())
      throw UnknownCategory("unknown category '" + name + "'");
    return it->second;
  }

  const std::vector<int>& children(int id) const {
    return children_.at(static_cast<std::size_t>(id));
  }
  bool is_leaf(int id) const { return children(id).empty(); }
  const std::vector<int>& nodes_at_level(int l) const {
    if (l < 1 || l > depth_)
      throw EmptyLevel("no categories at level " + std::to_string(l));
    return by_level_[static_cast<std::size_t>(l) - 1];
  }

  /// Ancestor chain of a node from level 1 down to the node itself.
  const std::vector<int>& path_of(int id) const {
    return paths_.at(static_cast<std::size_t>(id));
  }

  /// Unique ancestor of `id` at level l; the node itself when l equals its
  /// own level.
  int ancestor_at_level(int id, int l) const {
    const NodeRecord& n = node(id);
    if (l < 1 || l > n.level)
      throw LevelOutOfRange("level " + std::to_string(l) + " out of range for node '" +
                            n.name + "' at level " + std::to_string(n.level));
    return paths_[static_cast<std::size_t>(id)][static_cast<std::size_t>(l) - 1];
  }

  /// Label an annotated category name. Other* nodes resolve to their
  /// parent, so ambiguous instances participate only at the coarse levels.
  HierLabel resolve_label(const std::string& name) const {
    int id = id_of(name);
    if (id == root_id())
      throw UnknownCategory("the root is not an annotation target");
    if (nodes_[static_cast<std::size_t>(id)].is_other)
      id = *nodes_[static_cast<std::size_t>(id)].parent;
    HierLabel label;
    if (id != root_id()) label.path = paths_[static_cast<std::size_t>(id)];
    return label;
  }

 private:
  void finish() {
    children_.assign(nodes_.size(), {});
    paths_.assign(nodes_.size(), {});
    depth_ = 0;
    for (const auto& n : nodes_) {
      depth_ = std::max(depth_, n.level);
      id_by_name_[n.name] = n.id;
      if (n.parent) {
        children_[static_cast<std::size_t>(*n.parent)].push_back(n.id);
        auto p = paths_[static_cast<std::size_t>(*n.parent)];
        p.push_back(n.id);
        paths_[static_cast<std::size_t>(n.id)] = std::move(p);
      }
    }
    for (const auto& n : nodes_) {
      if (n.is_other && !children_[static_cast<std::size_t>(n.id)].empty())
        throw Error("hierarchy: Other* node '" + n.name + "' has children");
    }
    by_level_.assign(static_cast<std::size_t>(std::max(depth_, 1)), {});
    for (const auto& n : nodes_)
      if (n.level >= 1) by_level_[static_cast<std::size_t>(n.level) - 1].push_back(n.id);
  }

  std::vector<NodeRecord> nodes_;
  std::map<std::string, int> id_by_name_;
  std::vector<std::vector<int>> children_;
  std::vector<std::vector<int>> paths_;
  std::vector<std::vector<int>> by_level_;  // level l -> node ids (l >= 1)
  int depth_ = 0;
};

/// Per-level weights exp(1/(L+1-l)) / sum, l = 1..L. Strictly increasing
/// toward the leaf level and normalized to 1.
inline std::vector<double> penalty_weights(int depth) {
  if (depth < 1) throw Error("penalty_weights: depth must be >= 1");
  std::vector<double> w(static_cast<std::size_t>(depth));
  double total = 0.0;
  for (int l = 1; l <= depth; ++l) {
    w[static_cast<std::size_t>(l) - 1] = std::exp(1.0 / static_cast<double>(depth + 1 - l));
    total += w[static_cast<std::size_t>(l) - 1];
  }
  for (double& x : w) x /= total;
  return w;
}

}  // namespace hiercl
