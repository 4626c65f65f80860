#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "peel/chain.hpp"

namespace peel {

/// Reference graph of one chain. Nodes are premises, derived premises,
/// relationships and conclusions in P < R < C, ascending-index order; edges
/// run operand -> relationship and relationship -> target.
class ChainDag {
 public:
  const std::vector<RefLabel>& nodes() const noexcept { return nodes_; }
  const std::vector<std::pair<RefLabel, RefLabel>>& edges() const noexcept { return edges_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }

  bool contains(RefLabel node) const noexcept { return index_.count(node) != 0; }
  std::span<const RefLabel> successors(RefLabel node) const;
  std::span<const RefLabel> predecessors(RefLabel node) const;

  /// True when `node` is reachable from `ancestor` along at least one edge.
  bool is_descendant(RefLabel node, RefLabel ancestor) const;
  std::vector<RefLabel> ancestors(RefLabel node) const;

  /// Longest path (in edges) from any in-degree-0 node.
  std::size_t depth(RefLabel node) const;
  std::size_t max_depth() const noexcept;

  /// Deterministic topological order (Kahn's algorithm, smallest ready label first).
  const std::vector<RefLabel>& topological_order() const noexcept { return topo_; }

 private:
  friend ChainDag build_dag(const ReasoningChain& chain);

  std::size_t slot(RefLabel node) const;

  std::vector<RefLabel> nodes_;
  std::map<RefLabel, std::size_t> index_;
  std::vector<std::pair<RefLabel, RefLabel>> edges_;
  std::vector<std::vector<RefLabel>> out_;
  std::vector<std::vector<RefLabel>> in_;
  std::vector<RefLabel> topo_;
  std::vector<std::size_t> depth_;
};

/// Throws UnknownNode for references that resolve to nothing in the chain and
/// CycleDetected (with the offending node sequence) for reference cycles.
ChainDag build_dag(const ReasoningChain& chain);

/// Throws UnknownNode.
std::size_t node_depth(const ChainDag& dag, RefLabel node);

}  // namespace peel
