#include "peel/dag.hpp"

#include <algorithm>
#include <queue>
#include <set>

#include "peel/error.hpp"

namespace peel {

std::size_t ChainDag::slot(RefLabel node) const {
  auto it = index_.find(node);
  if (it == index_.end()) throw UnknownNode(node.str());
  return it->second;
}

std::span<const RefLabel> ChainDag::successors(RefLabel node) const { return out_[slot(node)]; }

std::span<const RefLabel> ChainDag::predecessors(RefLabel node) const { return in_[slot(node)]; }

bool ChainDag::is_descendant(RefLabel node, RefLabel ancestor) const {
  const std::size_t target = slot(node);
  std::vector<bool> seen(nodes_.size(), false);
  std::vector<std::size_t> stack{slot(ancestor)};
  while (!stack.empty()) {
    const std::size_t cur = stack.back();
    stack.pop_back();
    for (const auto& next : out_[cur]) {
      const std::size_t n = index_.at(next);
      if (n == target) return true;
      if (!seen[n]) {
        seen[n] = true;
        stack.push_back(n);
      }
    }
  }
  return false;
}

std::vector<RefLabel> ChainDag::ancestors(RefLabel node) const {
  std::set<RefLabel> found;
  std::vector<RefLabel> stack{node};
  slot(node);
  while (!stack.empty()) {
    const RefLabel cur = stack.back();
    stack.pop_back();
    for (const auto& prev : in_[index_.at(cur)]) {
      if (found.insert(prev).second) stack.push_back(prev);
    }
  }
  return {found.begin(), found.end()};
}

std::size_t ChainDag::depth(RefLabel node) const { return depth_[slot(node)]; }

std::size_t ChainDag::max_depth() const noexcept {
  return depth_.empty() ? 0 : *std::max_element(depth_.begin(), depth_.end());
}

namespace {

// Reports the first cycle found by DFS as a label sequence that starts and
// ends on the same node.
[[noreturn]] void report_cycle(const std::vector<RefLabel>& nodes,
                               const std::vector<std::vector<std::size_t>>& out) {
  enum class Mark { White, Grey, Black };
  std::vector<Mark> mark(nodes.size(), Mark::White);
  std::vector<std::size_t> path;

  auto dfs = [&](auto&& self, std::size_t u) -> bool {
    mark[u] = Mark::Grey;
    path.push_back(u);
    for (std::size_t v : out[u]) {
      if (mark[v] == Mark::Grey) {
        path.push_back(v);
        return true;
      }
      if (mark[v] == Mark::White && self(self, v)) return true;
    }
    path.pop_back();
    mark[u] = Mark::Black;
    return false;
  };

  for (std::size_t s = 0; s < nodes.size(); ++s) {
    if (mark[s] != Mark::White) continue;
    if (dfs(dfs, s)) {
      const std::size_t closing = path.back();
      auto first = std::find(path.begin(), path.end(), closing);
      std::vector<std::string> cycle;
      for (auto it = first; it != path.end(); ++it) cycle.push_back(nodes[*it].str());
      throw CycleDetected(std::move(cycle));
    }
  }
  throw CycleDetected({});
}

}  // namespace

ChainDag build_dag(const ReasoningChain& chain) {
  ChainDag dag;
  std::set<RefLabel> labels;
  for (const auto& p : chain.premises) labels.insert(p.id);
  for (const auto& p : chain.derived_premises) labels.insert(p.id);
  for (const auto& r : chain.relationships) labels.insert(r.id);
  for (const auto& c : chain.conclusions) labels.insert(c.id);
  dag.nodes_.assign(labels.begin(), labels.end());
  for (std::size_t i = 0; i < dag.nodes_.size(); ++i) dag.index_[dag.nodes_[i]] = i;

  const std::size_t n = dag.nodes_.size();
  dag.out_.assign(n, {});
  dag.in_.assign(n, {});
  std::vector<std::vector<std::size_t>> out_idx(n);

  auto add_edge = [&](RefLabel from, RefLabel to) {
    const std::size_t a = dag.slot(from);
    const std::size_t b = dag.slot(to);
    dag.edges_.emplace_back(from, to);
    dag.out_[a].push_back(to);
    dag.in_[b].push_back(from);
    out_idx[a].push_back(b);
  };
  for (const auto& rel : chain.relationships) {
    for (const auto& op : rel.operands) add_edge(op, rel.id);
    if (rel.target) add_edge(rel.id, *rel.target);
  }

  // Kahn's algorithm with a min-heap on node order.
  std::vector<std::size_t> indegree(n, 0);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v : out_idx[u]) ++indegree[v];
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t u = 0; u < n; ++u) {
    if (indegree[u] == 0) ready.push(u);
  }
  dag.depth_.assign(n, 0);
  while (!ready.empty()) {
    const std::size_t u = ready.top();
    ready.pop();
    dag.topo_.push_back(dag.nodes_[u]);
    for (std::size_t v : out_idx[u]) {
      dag.depth_[v] = std::max(dag.depth_[v], dag.depth_[u] + 1);
      if (--indegree[v] == 0) ready.push(v);
    }
  }
  if (dag.topo_.size() != n) report_cycle(dag.nodes_, out_idx);
  return dag;
}

std::size_t node_depth(const ChainDag& dag, RefLabel node) { return dag.depth(node); }

}  // namespace peel
