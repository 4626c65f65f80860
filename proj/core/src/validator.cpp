#include "peel/validator.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "peel/dag.hpp"
#include "peel/error.hpp"

namespace peel {

std::string_view to_string(ViolationCode code) noexcept {
  switch (code) {
    case ViolationCode::V1_DuplicateId: return "V1_DuplicateId";
    case ViolationCode::V2_UnresolvedRef: return "V2_UnresolvedRef";
    case ViolationCode::V3_Cycle: return "V3_Cycle";
    case ViolationCode::V4_UnsupportedConclusion: return "V4_UnsupportedConclusion";
    case ViolationCode::V5_OrphanPremise: return "V5_OrphanPremise";
    case ViolationCode::V6_EvalNotMoral: return "V6_EvalNotMoral";
    case ViolationCode::V7_ConfidenceRange: return "V7_ConfidenceRange";
    case ViolationCode::V8_BadArity: return "V8_BadArity";
  }
  return "?";
}

std::string_view to_string(Severity severity) noexcept {
  return severity == Severity::Error ? "error" : "warning";
}

std::optional<ViolationCode> violation_code_from_string(std::string_view text) noexcept {
  for (int i = 0; i <= static_cast<int>(ViolationCode::V8_BadArity); ++i) {
    const auto code = static_cast<ViolationCode>(i);
    if (to_string(code) == text) return code;
  }
  return std::nullopt;
}

Severity severity_of(ViolationCode code) noexcept {
  return code == ViolationCode::V5_OrphanPremise ? Severity::Warning : Severity::Error;
}

bool ValidationReport::has(ViolationCode code) const noexcept {
  return std::any_of(violations.begin(), violations.end(),
                     [code](const Violation& v) { return v.code == code; });
}

std::vector<ViolationCode> ValidationReport::error_codes() const {
  std::set<ViolationCode> codes;
  for (const auto& v : violations) {
    if (v.severity == Severity::Error) codes.insert(v.code);
  }
  return {codes.begin(), codes.end()};
}

std::string chain_id(const ReasoningChain& chain) {
  std::string id = chain.episode.empty() ? "?" : chain.episode;
  id += "/";
  id += chain.speaker.name.empty() ? "?" : chain.speaker.name;
  if (!chain.conclusions.empty()) id += "/" + chain.conclusions.front().id.str();
  return id;
}

namespace {

class Checker {
 public:
  explicit Checker(const ReasoningChain& chain) : chain_(chain) {}

  std::vector<Violation> run() {
    check_duplicates();
    check_references_and_arity();
    check_cycles();
    check_support_and_orphans();
    check_evaluations();
    check_confidence();
    std::sort(out_.begin(), out_.end(), [](const Violation& a, const Violation& b) {
      if (a.code != b.code) return a.code < b.code;
      if (a.subject != b.subject) return a.subject < b.subject;
      return a.detail < b.detail;
    });
    return std::move(out_);
  }

 private:
  void add(ViolationCode code, RefLabel subject, std::string detail) {
    out_.push_back(Violation{code, severity_of(code), subject, std::move(detail)});
  }

  void check_duplicates() {
    std::map<RefLabel, int> seen;
    for (const auto& p : chain_.premises) ++seen[p.id];
    for (const auto& p : chain_.derived_premises) ++seen[p.id];
    for (const auto& r : chain_.relationships) ++seen[r.id];
    for (const auto& c : chain_.conclusions) ++seen[c.id];
    for (const auto& [id, count] : seen) {
      if (count > 1) add(ViolationCode::V1_DuplicateId, id, id.str() + " defined " + std::to_string(count) + " times");
      known_.insert(id);
    }
  }

  void check_references_and_arity() {
    for (const auto& rel : chain_.relationships) {
      if (auto bad = arity_violation(rel)) add(ViolationCode::V8_BadArity, rel.id, *bad);
      auto refs = rel.operands;
      if (rel.target) refs.push_back(*rel.target);
      for (const auto& ref : refs) {
        if (!known_.count(ref)) {
          add(ViolationCode::V2_UnresolvedRef, rel.id, rel.id.str() + " references missing " + ref.str());
          continue;
        }
      }
      for (const auto& op : rel.operands) {
        if (known_.count(op)) edges_.emplace_back(op, rel.id);
      }
      if (rel.target && known_.count(*rel.target)) edges_.emplace_back(rel.id, *rel.target);
    }
  }

  void check_cycles() {
    std::map<RefLabel, std::vector<RefLabel>> out;
    for (const auto& [a, b] : edges_) out[a].push_back(b);
    std::map<RefLabel, int> mark;  // 0 white, 1 grey, 2 black
    std::set<RefLabel> reported;
    std::vector<RefLabel> path;
    auto dfs = [&](auto&& self, RefLabel u) -> void {
      mark[u] = 1;
      path.push_back(u);
      for (const auto& v : out[u]) {
        if (mark[v] == 1) {
          auto first = std::find(path.begin(), path.end(), v);
          std::string seq;
          for (auto it = first; it != path.end(); ++it) seq += it->str() + " -> ";
          seq += v.str();
          const RefLabel subject = *std::min_element(first, path.end());
          if (reported.insert(subject).second) add(ViolationCode::V3_Cycle, subject, "cycle " + seq);
        } else if (mark[v] == 0) {
          self(self, v);
        }
      }
      path.pop_back();
      mark[u] = 2;
    };
    for (const auto& id : known_) {
      if (mark[id] == 0) dfs(dfs, id);
    }
  }

  void check_support_and_orphans() {
    std::set<RefLabel> has_in;
    std::set<RefLabel> has_out;
    for (const auto& [a, b] : edges_) {
      has_out.insert(a);
      has_in.insert(b);
    }
    for (const auto& c : chain_.conclusions) {
      if (!has_in.count(c.id)) {
        add(ViolationCode::V4_UnsupportedConclusion, c.id, c.id.str() + " is not the target of any relationship");
      }
    }
    auto check_orphan = [&](const Premise& p) {
      if (!has_out.count(p.id) && !has_in.count(p.id)) {
        add(ViolationCode::V5_OrphanPremise, p.id, p.id.str() + " is never used");
      }
    };
    for (const auto& p : chain_.premises) check_orphan(p);
    for (const auto& p : chain_.derived_premises) check_orphan(p);
  }

  void check_evaluations() {
    for (const auto& rel : chain_.relationships) {
      if (rel.kind != RelationKind::Evaluate || rel.operands.size() < 2) continue;
      const RefLabel judged = rel.operands[1];
      if (!known_.count(judged)) continue;  // already V2
      const Premise* p = judged.kind() == LabelKind::Premise ? chain_.find_premise(judged) : nullptr;
      if (!p) {
        add(ViolationCode::V6_EvalNotMoral, rel.id, "second operand " + judged.str() + " is not a premise");
      } else if (!p->type) {
        add(ViolationCode::V6_EvalNotMoral, rel.id,
            "second operand " + judged.str() + " has no settled type");
      } else if (*p->type != PremiseType::Moral) {
        add(ViolationCode::V6_EvalNotMoral, rel.id,
            "second operand " + judged.str() + " is " + std::string(to_string(*p->type)));
      }
    }
  }

  void check_confidence() {
    auto check = [&](const Premise& p) {
      if (p.confidence < 0 || p.confidence > 100) {
        add(ViolationCode::V7_ConfidenceRange, p.id,
            "confidence " + std::to_string(p.confidence) + " outside [0,100]");
      }
    };
    for (const auto& p : chain_.premises) check(p);
    for (const auto& p : chain_.derived_premises) check(p);
  }

  const ReasoningChain& chain_;
  std::set<RefLabel> known_;
  std::vector<std::pair<RefLabel, RefLabel>> edges_;
  std::vector<Violation> out_;
};

}  // namespace

ValidationReport validate_chain(const ReasoningChain& chain) {
  ValidationReport report;
  report.chain_id = chain_id(chain);
  report.violations = Checker(chain).run();
  report.is_valid = std::none_of(report.violations.begin(), report.violations.end(),
                                 [](const Violation& v) { return v.severity == Severity::Error; });
  return report;
}

ValidationReport validate_chain(const ReasoningChain& chain,
                                std::initializer_list<ViolationCode> codes) {
  ValidationReport full = validate_chain(chain);
  ValidationReport out;
  out.chain_id = full.chain_id;
  for (auto& v : full.violations) {
    if (std::find(codes.begin(), codes.end(), v.code) != codes.end()) out.violations.push_back(v);
  }
  out.is_valid = std::none_of(out.violations.begin(), out.violations.end(),
                              [](const Violation& v) { return v.severity == Severity::Error; });
  return out;
}

nlohmann::json report_to_json(const ValidationReport& report) {
  nlohmann::json violations = nlohmann::json::array();
  for (const auto& v : report.violations) {
    violations.push_back({{"code", std::string(to_string(v.code))},
                          {"severity", std::string(to_string(v.severity))},
                          {"subject", v.subject.str()},
                          {"detail", v.detail}});
  }
  return {{"chain_id", report.chain_id},
          {"is_valid", report.is_valid},
          {"violations", std::move(violations)}};
}

std::vector<GapSite> coherence_gap_report(const ReasoningChain& chain) {
  std::vector<GapSite> sites;
  const ChainDag dag = build_dag(chain);
  for (const auto& c : chain.conclusions) {
    const auto support = dag.ancestors(c.id);
    if (support.empty()) continue;
    bool evaluated = false;
    bool all_descriptive = true;
    std::size_t premise_count = 0;
    for (const auto& node : support) {
      if (node.kind() == LabelKind::Relationship) {
        const auto* rel = chain.find_relationship(node);
        if (rel && rel->kind == RelationKind::Evaluate) evaluated = true;
      } else if (node.kind() == LabelKind::Premise) {
        const Premise* p = chain.find_premise(node);
        if (!p) continue;
        // Derived premises are intermediate results, not inputs.
        const bool derived = std::any_of(chain.derived_premises.begin(), chain.derived_premises.end(),
                                         [&](const Premise& d) { return d.id == node; });
        if (derived) continue;
        ++premise_count;
        const bool descriptive =
            p->explicitness == Explicitness::Explicit && p->type &&
            (*p->type == PremiseType::Factual || *p->type == PremiseType::Forecast);
        all_descriptive = all_descriptive && descriptive;
      }
    }
    if (!evaluated && all_descriptive && premise_count > 0) {
      sites.push_back({c.id, c.id.str() + " rests only on explicit factual/forecast premises with no evaluation"});
    }
  }
  return sites;
}

}  // namespace peel
