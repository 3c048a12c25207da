#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "loopvet/so3.hpp"

namespace loopvet {

using NodeId = std::int64_t;
using EdgeId = std::int64_t;

enum class EdgeKind { Ego, LoopClosure };
enum class Truth { Inlier, Outlier };

struct Node {
  NodeId id = 0;
  int map_id = 0;

  friend bool operator==(const Node&, const Node&) = default;
};

/// Directed measurement src -> dst. `rotation` maps the src frame to the dst
/// frame, i.e. approximately R_dst * R_src^T.
struct Edge {
  EdgeId id = 0;
  NodeId src = 0;
  NodeId dst = 0;
  so3::RotationMatrix rotation = so3::RotationMatrix::Identity();
  EdgeKind kind = EdgeKind::LoopClosure;
  double prior_inlier = 0.5;
  std::optional<Truth> truth;

  bool is_loop_closure() const { return kind == EdgeKind::LoopClosure; }
};

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Immutable pose graph. Nodes and edges are kept sorted by id; every
/// constructed instance satisfies the graph invariants.
class PoseGraph {
 public:
  PoseGraph() = default;

  PoseGraph(std::vector<Node> nodes, std::vector<Edge> edges)
      : nodes_(std::move(nodes)), edges_(std::move(edges)) {
    std::sort(nodes_.begin(), nodes_.end(),
              [](const Node& a, const Node& b) { return a.id < b.id; });
    std::sort(edges_.begin(), edges_.end(),
              [](const Edge& a, const Edge& b) { return a.id < b.id; });
    validate();
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_edges() const { return edges_.size(); }

  bool has_node(NodeId id) const { return node_index_.count(id) != 0; }
  bool has_edge(EdgeId id) const { return edge_index_.count(id) != 0; }

  std::size_t node_index(NodeId id) const {
    auto it = node_index_.find(id);
    if (it == node_index_.end()) throw GraphError("unknown node " + std::to_string(id));
    return it->second;
  }

  std::size_t edge_index(EdgeId id) const {
    auto it = edge_index_.find(id);
    if (it == edge_index_.end()) throw GraphError("unknown edge " + std::to_string(id));
    return it->second;
  }

  const Edge& edge(EdgeId id) const { return edges_[edge_index(id)]; }
  const Node& node(NodeId id) const { return nodes_[node_index(id)]; }

  /// Loop-closure edges in id order.
  std::vector<Edge> loop_closure_edges() const {
    std::vector<Edge> out;
    for (const auto& e : edges_) {
      if (e.is_loop_closure()) out.push_back(e);
    }
    return out;
  }

 private:
  void validate() {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const Node& n = nodes_[i];
      if (n.map_id < 0) throw GraphError("node " + std::to_string(n.id) + " has negative map id");
      if (!node_index_.emplace(n.id, i).second) {
        throw GraphError("duplicate node id " + std::to_string(n.id));
      }
    }
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      const Edge& e = edges_[i];
      const std::string tag = "edge " + std::to_string(e.id);
      if (!edge_index_.emplace(e.id, i).second) throw GraphError("duplicate edge id " + std::to_string(e.id));
      if (!has_node(e.src)) throw GraphError(tag + " references unknown node " + std::to_string(e.src));
      if (!has_node(e.dst)) throw GraphError(tag + " references unknown node " + std::to_string(e.dst));
      if (e.src == e.dst) throw GraphError(tag + " is a self-loop");
      if (!(e.prior_inlier >= 0.0 && e.prior_inlier <= 1.0)) throw GraphError(tag + " prior outside [0,1]");
      if (e.kind == EdgeKind::Ego && e.prior_inlier != 1.0) throw GraphError(tag + " is ego with prior != 1");
      if (!so3::is_rotation(e.rotation)) throw GraphError(tag + " rotation is not in SO(3)");
    }
  }

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::map<NodeId, std::size_t> node_index_;
  std::map<EdgeId, std::size_t> edge_index_;
};

}  // namespace loopvet
