#pragma once

// Independent reference implementations and mutation generators shared by the
// unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "peel/chain.hpp"
#include "peel/disagreement.hpp"
#include "peel/validator.hpp"
#include "support.hpp"

namespace peel::test {

// Chi-square upper tail in long double from the closed forms.
// Even df = 2m: e^{-x/2} sum_{k<m} (x/2)^k / k!.
// Odd df = 2m+1: erfc(sqrt(x/2)) + e^{-x/2} sum_{k=1..m} (x/2)^{k-1/2} / Gamma(k+1/2).
inline long double chi2_oracle(long double x, int df) {
  const long double h = x / 2;
  long double sum = 0;
  if (df % 2 == 0) {
    long double term = 1;
    for (int k = 0; k < df / 2; ++k) {
      if (k > 0) term *= h / k;
      sum += term;
    }
    return std::exp(-h) * sum;
  }
  long double term = std::sqrt(h) / std::tgamma(1.5L);
  for (int k = 1; k <= df / 2; ++k) {
    if (k > 1) term *= h / (k - 0.5L);
    sum += term;
  }
  return std::erfc(std::sqrt(h)) + std::exp(-h) * sum;
}

// --- root divergence ------------------------------------------------------------
// Works on the raw relationship lists, without ChainDag.

struct RawGraph {
  std::map<RefLabel, std::vector<RefLabel>> out;

  explicit RawGraph(const ReasoningChain& c) {
    for (const auto& r : c.relationships) {
      for (const auto& o : r.operands) out[o].push_back(r.id);
      if (r.target) out[r.id].push_back(*r.target);
    }
  }

  // Nodes reachable from `from` along at least one edge.
  std::set<RefLabel> below(RefLabel from) const {
    std::set<RefLabel> seen;
    std::function<void(RefLabel)> walk = [&](RefLabel u) {
      auto it = out.find(u);
      if (it == out.end()) return;
      for (const auto& v : it->second) {
        if (seen.insert(v).second) walk(v);
      }
    };
    walk(from);
    return seen;
  }

  // Longest path ending at `n`, trying every predecessor recursively.
  std::size_t longest_to(RefLabel n) const {
    std::size_t best = 0;
    for (const auto& [u, vs] : out) {
      for (const auto& v : vs) {
        if (v == n) best = std::max(best, longest_to(u) + 1);
      }
    }
    return best;
  }
};

inline std::size_t oracle_root(const std::vector<Divergence>& ds, const RawGraph& b, const RawGraph& d) {
  const std::size_t n = ds.size();
  // dep[i][j]: divergence i sits below divergence j on either side.
  std::vector<std::vector<bool>> dep(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) {
        dep[i][j] = b.below(ds[j].boomer_ref).count(ds[i].boomer_ref) || d.below(ds[j].doomer_ref).count(ds[i].doomer_ref);
      }
    }
  }
  auto reach = [&](std::size_t i) {
    std::set<std::size_t> seen;
    std::vector<std::size_t> stack{i};
    while (!stack.empty()) {
      const auto u = stack.back();
      stack.pop_back();
      for (std::size_t v = 0; v < n; ++v) {
        if (dep[u][v] && seen.insert(v).second) stack.push_back(v);
      }
    }
    return seen;
  };
  // A root depends on nothing that does not depend back on it.
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    bool ok = true;
    for (std::size_t j : reach(i)) ok = ok && reach(j).count(i);
    if (ok) candidates.push_back(i);
  }
  std::sort(candidates.begin(), candidates.end(), [&](std::size_t x, std::size_t y) {
    const auto dx = b.longest_to(ds[x].boomer_ref) + d.longest_to(ds[x].doomer_ref);
    const auto dy = b.longest_to(ds[y].boomer_ref) + d.longest_to(ds[y].doomer_ref);
    if (dx != dy) return dx < dy;
    if (ds[x].boomer_ref != ds[y].boomer_ref) return ds[x].boomer_ref < ds[y].boomer_ref;
    if (ds[x].doomer_ref != ds[y].doomer_ref) return ds[x].doomer_ref < ds[y].doomer_ref;
    return x < y;
  });
  return candidates.at(0);
}

inline std::vector<RefLabel> referable(const ReasoningChain& c) {
  std::vector<RefLabel> out;
  for (const auto& p : c.premises) out.push_back(p.id);
  for (const auto& p : c.derived_premises) out.push_back(p.id);
  for (const auto& r : c.relationships) out.push_back(r.id);
  return out;
}

// Random divergence set of 1..6 entries between two chains.
inline std::vector<Divergence> random_divergences(std::mt19937_64& rng, const ReasoningChain& b,
                                                  const ReasoningChain& d) {
  const auto bref = referable(b);
  const auto dref = referable(d);
  const int k = std::uniform_int_distribution<int>(1, 6)(rng);
  std::vector<Divergence> ds;
  for (int i = 0; i < k; ++i) {
    Divergence x;
    x.id = "D" + std::to_string(i + 1);
    x.boomer_ref = bref[std::uniform_int_distribution<std::size_t>(0, bref.size() - 1)(rng)];
    x.doomer_ref = dref[std::uniform_int_distribution<std::size_t>(0, dref.size() - 1)(rng)];
    ds.push_back(x);
  }
  return ds;
}

// --- seeded chain defects -----------------------------------------------------------

enum class Defect { DeleteOperandPremise, InjectCycle, EvalOnNonMoral, ConfidenceOutOfRange, DuplicateId, BadArity };

inline constexpr Defect kDefects[] = {Defect::DeleteOperandPremise, Defect::InjectCycle,   Defect::EvalOnNonMoral,
                                      Defect::ConfidenceOutOfRange, Defect::DuplicateId, Defect::BadArity};

inline const char* defect_name(Defect d) {
  switch (d) {
    case Defect::DeleteOperandPremise: return "delete-operand-premise";
    case Defect::InjectCycle: return "inject-cycle";
    case Defect::EvalOnNonMoral: return "eval-on-non-moral";
    case Defect::ConfidenceOutOfRange: return "confidence-out-of-range";
    case Defect::DuplicateId: return "duplicate-id";
    case Defect::BadArity: return "bad-arity";
  }
  return "?";
}

inline ViolationCode expected_code(Defect d) {
  switch (d) {
    case Defect::DeleteOperandPremise: return ViolationCode::V2_UnresolvedRef;
    case Defect::InjectCycle: return ViolationCode::V3_Cycle;
    case Defect::EvalOnNonMoral: return ViolationCode::V6_EvalNotMoral;
    case Defect::ConfidenceOutOfRange: return ViolationCode::V7_ConfidenceRange;
    case Defect::DuplicateId: return ViolationCode::V1_DuplicateId;
    case Defect::BadArity: return ViolationCode::V8_BadArity;
  }
  return ViolationCode::V1_DuplicateId;
}

// Applies one defect to a chain built by random_chain.
inline void mutate(ReasoningChain& c, Defect d, std::mt19937_64& rng) {
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  switch (d) {
    case Defect::DeleteOperandPremise:
      c.premises.erase(c.premises.begin() + static_cast<std::ptrdiff_t>(pick(c.premises.size())));
      break;
    case Defect::InjectCycle: {
      // R1 feeds the evaluation; make R1 consume it.
      const auto eval = std::find_if(c.relationships.begin(), c.relationships.end(),
                                     [](const Relationship& r) { return r.kind == RelationKind::Evaluate; });
      c.relationships.front().operands.push_back(eval->id);
      break;
    }
    case Defect::EvalOnNonMoral:
      c.premises.back().type = kPremiseTypes[pick(4)];
      break;
    case Defect::ConfidenceOutOfRange:
      c.premises[pick(c.premises.size())].confidence =
          pick(2) ? 101 + static_cast<int>(pick(50)) : -1 - static_cast<int>(pick(50));
      break;
    case Defect::DuplicateId: {
      const Premise copy = c.premises[pick(c.premises.size())];
      c.premises.push_back(copy);
      break;
    }
    case Defect::BadArity:
      c.relationships.front().operands.resize(1);
      break;
  }
}

}  // namespace peel::test
