#include <gtest/gtest.h>

#include "peel/aggregation.hpp"
#include "peel/error.hpp"
#include "support.hpp"

using namespace peel;
using namespace peel::test;

namespace {

DivergenceInput causal_input(const std::string& key = "T001/pk/D1") {
  Divergence d;
  d.id = "D1";
  d.boomer_ref = P(1);
  d.doomer_ref = P(2);
  d.dtype = PremiseType::Causal;
  d.rationale = "speed of progress";
  return {key, d, "progress is gradual", "progress is abrupt"};
}

json new_q(const std::string& text, const std::string& b, const std::string& d) {
  return {{"question_id", nullptr},
          {"new_question", {{"text", text}, {"stances", {"gradual", "abrupt"}}}},
          {"boomer_stance", b},
          {"doomer_stance", d}};
}

json listed_q(const std::string& id, const std::string& b, const std::string& d) {
  return {{"question_id", id}, {"boomer_stance", b}, {"doomer_stance", d}};
}

EnsembleConfig votes(const json& a, const json& b, const json& i) {
  json responses = json::array();
  for (const auto& [role, reply] : {std::pair{"worker_a", a}, {"worker_b", b}, {"integrator", i}}) {
    responses.push_back({{"task", "aggregate_classify"}, {"role", role}, {"response", reply}});
  }
  return mock_ensemble(json{{"strict", true}, {"responses", responses}});
}

}  // namespace

TEST(ConflictMap, AddAndDeduplicate) {
  ConflictMap m;
  const auto& q = m.add("Will takeoff be fast?", {"yes", "no"});
  EXPECT_EQ(q.question_id, "Q001");
  EXPECT_EQ(q.revision_added, 1);
  m.add("  will TAKEOFF be fast? ", {"a", "b"});
  EXPECT_EQ(m.revision(), 1);
  EXPECT_EQ(m.questions().size(), 1u);
  EXPECT_THROW(m.add("Other?", {"same", "SAME"}), MalformedOutput);
  EXPECT_THROW(m.add("", {"a", "b"}), MalformedOutput);
  EXPECT_THROW(m.record({"k", "Q404"}), SchemaError);
  m.record({"k", "Q001", "yes", "no"});
  const auto back = ConflictMap::from_json(m.to_json());
  EXPECT_EQ(back.questions(), m.questions());
  EXPECT_EQ(back.assignments(), m.assignments());
  EXPECT_EQ(back.revision(), 1);
}

TEST(ClassifyDivergence, NonCausalRejected) {
  auto in = causal_input();
  in.divergence.dtype = PremiseType::Factual;
  ConflictMap m;
  EXPECT_THROW(classify_divergence(in, m, votes({}, {}, {})), NotCausal);
}

TEST(ClassifyDivergence, NewQuestionThenReuse) {
  ConflictMap m;
  const auto v = new_q("Is progress gradual?", "gradual", "abrupt");
  const auto r = classify_divergence(causal_input(), m, votes(v, v, v));
  EXPECT_EQ(r.assignment.question_id, "Q001");
  EXPECT_TRUE(r.assignment.created_question);
  EXPECT_EQ(r.assignment.agreement, AgreementOutcome::R3);
  EXPECT_EQ(m.revision(), 1);
  ASSERT_EQ(m.assignments().size(), 1u);

  const auto l = listed_q("Q001", "Gradual", "abrupt");
  const auto r2 = classify_divergence(causal_input("T001/pk2/D1"), m, votes(l, new_q("is progress GRADUAL?", "gradual", "abrupt"), l));
  EXPECT_FALSE(r2.assignment.created_question);
  EXPECT_EQ(r2.assignment.boomer_stance, "gradual");  // question's own spelling
  EXPECT_EQ(r2.assignment.agreement, AgreementOutcome::R3);
  EXPECT_EQ(m.revision(), 1);
  EXPECT_DOUBLE_EQ(consistency_rate(m), 1.0);
}

TEST(ClassifyDivergence, DisagreeingWorkers) {
  ConflictMap m;
  m.add("Is progress gradual?", {"gradual", "abrupt"});
  m.add("Can AI be controlled?", {"controllable", "uncontrollable"});
  const auto r = classify_divergence(causal_input(), m,
                                     votes(listed_q("Q001", "gradual", "abrupt"),
                                           listed_q("Q002", "controllable", "uncontrollable"),
                                           listed_q("Q002", "controllable", "uncontrollable")));
  EXPECT_EQ(r.assignment.agreement, AgreementOutcome::R2MatchesB);
  EXPECT_DOUBLE_EQ(consistency_rate(m), 0.0);
}

TEST(ClassifyDivergence, StanceMustBelongToQuestion) {
  ConflictMap m;
  m.add("Is progress gradual?", {"gradual", "abrupt"});
  const auto bad = listed_q("Q001", "maybe", "abrupt");
  const auto good = listed_q("Q001", "gradual", "abrupt");
  // Worker A never conforms and is recorded as absent.
  const auto r = classify_divergence(causal_input(), m, votes(bad, good, good));
  EXPECT_TRUE(r.record.worker_a_out.is_null());
  EXPECT_EQ(r.assignment.agreement, AgreementOutcome::R2MatchesB);
}

TEST(ConsistencyRate, EmptyThrows) {
  ConflictMap m;
  EXPECT_THROW(consistency_rate(m), EmptyInput);
}

TEST(Themes, ParseFile) {
  const auto t = load_theme_file(fixture("themes.csv"));
  EXPECT_EQ(t.size(), 2u);
  EXPECT_EQ(t.at("Q001"), "Controllability of advanced AI");
  EXPECT_THROW(parse_theme_csv("Q1,a,b\n"), FormatError);
  EXPECT_THROW(parse_theme_csv("Q1,a\nQ1,b\n"), FormatError);
  EXPECT_EQ(parse_theme_csv("Q1,a\n\nQ2,b\n").size(), 2u);
}

TEST(Themes, ReportSharesOverAssignments) {
  ConflictMap m;
  m.add("q1", {"a", "b"});
  m.add("q2", {"a", "b"});
  m.record({"k1", "Q001", "a", "b"});
  m.record({"k2", "Q001", "a", "b"});
  m.record({"k3", "Q002", "a", "b"});
  const auto r = theme_report(m, {{"Q001", "X"}, {"Q002", "Y"}});
  EXPECT_EQ(r.assignments, 3u);
  EXPECT_DOUBLE_EQ(r.shares.at("X"), 2.0 / 3.0);
  EXPECT_EQ(r.counts.at("Y"), 1u);
  EXPECT_EQ(theme_report_csv(r), "theme,count,share\r\nX,2,0.666667\r\nY,1,0.333333\r\n");
  EXPECT_EQ(to_json(r).at("themes").size(), 2u);
  try {
    theme_report(m, {{"Q001", "X"}});
    FAIL();
  } catch (const UnmappedQuestion& e) {
    EXPECT_EQ(e.question_id(), "Q002");
  }
}
