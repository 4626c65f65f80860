#include <gtest/gtest.h>

#include <functional>
#include <random>
#include <set>

#include "peel/disagreement.hpp"
#include "peel/error.hpp"
#include "oracles.hpp"

using namespace peel;
using namespace peel::test;

namespace {

ClassifiedConclusion cc(const std::string& key, const std::string& topic, Attitude att, bool ai = true) {
  ClassifiedConclusion c;
  c.key = key;
  c.topic_id = topic;
  c.attitude = att;
  c.is_ai_risk = ai;
  return c;
}

Divergence div(const std::string& id, RefLabel b, RefLabel d, PremiseType t = PremiseType::Factual) {
  Divergence x;
  x.id = id;
  x.boomer_ref = b;
  x.doomer_ref = d;
  x.dtype = t;
  return x;
}

}  // namespace

TEST(Pairs, Counts) {
  std::vector<ClassifiedConclusion> cs;
  for (int i = 0; i < 26; ++i) cs.push_back(cc("b" + std::to_string(i), "T001", Attitude::Optimistic));
  for (int i = 0; i < 43; ++i) cs.push_back(cc("d" + std::to_string(i), "T001", Attitude::Pessimistic));
  for (int i = 0; i < 7; ++i) cs.push_back(cc("jb" + std::to_string(i), "T010", Attitude::Optimistic));
  for (int i = 0; i < 6; ++i) cs.push_back(cc("jd" + std::to_string(i), "T010", Attitude::Pessimistic));
  cs.push_back(cc("n", "T001", Attitude::Neutral));
  cs.push_back(cc("x", "T001", Attitude::Optimistic, false));
  const auto x = enumerate_pairs("T001", cs);
  EXPECT_EQ(x.size(), 1118u);
  EXPECT_EQ(x.front().boomer_key, "b0");
  EXPECT_EQ(x.front().doomer_key, "d0");
  EXPECT_EQ(x[1].doomer_key, "d1");  // boomers outermost
  EXPECT_EQ(enumerate_pairs("T010", cs).size(), 42u);
  EXPECT_TRUE(enumerate_pairs("T099", cs).empty());
}

TEST(Pairs, KeysUniqueAndFileSafe) {
  std::set<std::string> keys;
  for (int i = 0; i < 50; ++i) {
    for (int j = 0; j < 50; ++j) {
      ChainPair p{"T1", "ep/Speaker " + std::to_string(i) + "/1/C1", "ep/Other/" + std::to_string(j) + "/C2"};
      const auto k = p.pair_key();
      for (char ch : k) ASSERT_TRUE(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_') << k;
      ASSERT_LE(k.size(), 130u);
      keys.insert(k);
    }
  }
  EXPECT_EQ(keys.size(), 2500u);
}

TEST(DivergenceType, Rules) {
  const auto b = lecun();
  const auto d = yampolskiy();
  // P19 (factual) vs P6 (factual)
  EXPECT_EQ(divergence_type(b, d, P(19), P(6), std::nullopt, std::nullopt), PremiseType::Factual);
  // P23 causal vs P27 moral: precedence puts causal first, primary overrides.
  EXPECT_EQ(divergence_type(b, d, P(23), P(27), std::nullopt, std::nullopt), PremiseType::Causal);
  EXPECT_EQ(divergence_type(b, d, P(23), P(27), std::string("doomer"), std::nullopt), PremiseType::Moral);
  DtypeRule moral_first;
  moral_first.precedence = {PremiseType::Moral, PremiseType::Causal, PremiseType::Factual, PremiseType::Forecast,
                            PremiseType::Definitional};
  EXPECT_EQ(divergence_type(b, d, P(23), P(27), std::nullopt, std::nullopt, moral_first), PremiseType::Moral);
  // One relationship side: the typed side wins; two relationships: the stated type.
  EXPECT_EQ(divergence_type(b, d, R(20), P(6), std::nullopt, PremiseType::Causal), PremiseType::Factual);
  EXPECT_EQ(divergence_type(b, d, R(20), R(17), std::nullopt, PremiseType::Causal), PremiseType::Causal);
  EXPECT_THROW(divergence_type(b, d, R(20), R(17), std::nullopt, std::nullopt), SchemaError);
}

TEST(FindRoot, ReplayStructure) {
  const auto b = lecun();
  const auto d = yampolskiy();
  const auto bd = build_dag(b);
  const auto dd = build_dag(d);
  std::vector<Divergence> ds = {div("D2", P(23), P(26), PremiseType::Causal), div("D3", R(20), R(17)),
                                div("D1", P(19), P(6))};
  compute_dependencies(ds, bd, dd);
  // Doomer side: R17 => R18 => P26, so D2 also sits below D3.
  EXPECT_EQ(ds[0].depends_on, (std::vector<std::string>{"D3", "D1"}));
  EXPECT_EQ(ds[1].depends_on, std::vector<std::string>{"D1"});
  EXPECT_TRUE(ds[2].depends_on.empty());
  const auto root = find_root(ds, bd, dd);
  EXPECT_EQ(root.index, 2u);
  EXPECT_EQ(root.minimal_count, 1u);
  EXPECT_FALSE(root.dependency_cycle);
  EXPECT_THROW(find_root(std::vector<Divergence>{}, bd, dd), EmptyInput);
}

TEST(FindRoot, TieBreaks) {
  const auto b = lecun();
  const auto d = yampolskiy();
  const auto bd = build_dag(b);
  const auto dd = build_dag(d);
  // Both independent and at depth 0: label order decides, not list order.
  std::vector<Divergence> ds = {div("A", P(20), P(7)), div("B", P(19), P(8))};
  auto r = find_root(ds, bd, dd);
  EXPECT_EQ(r.index, 1u);
  EXPECT_EQ(r.minimal_count, 2u);
  // Shallower wins over smaller label.
  ds = {div("A", P(15), P(32)), div("B", P(24), P(7))};
  EXPECT_EQ(find_root(ds, bd, dd).index, 1u);
}

TEST(FindRoot, MutualDependencyGroup) {
  const auto b = lecun();
  const auto d = yampolskiy();
  const auto bd = build_dag(b);
  const auto dd = build_dag(d);
  // X below Y on the boomer side, Y below X on the doomer side.
  std::vector<Divergence> ds = {div("X", R(15), P(6)), div("Y", P(15), R(9))};
  const auto r = find_root(ds, bd, dd);
  EXPECT_TRUE(r.dependency_cycle);
  EXPECT_EQ(r.minimal_count, 2u);
}

// 200 random pairs of chains with random divergence sets, compared with the
// brute-force oracle above.
TEST(FindRootProperty, MatchesBruteForceOracle) {
  std::mt19937_64 rng(20240601);
  for (int iter = 0; iter < 200; ++iter) {
    const auto boomer = random_chain(rng, 10);
    const auto doomer = random_chain(rng, 10);
    const auto bd = build_dag(boomer);
    const auto dd = build_dag(doomer);
    const auto ds = random_divergences(rng, boomer, doomer);
    const std::size_t expect = oracle_root(ds, RawGraph(boomer), RawGraph(doomer));
    ASSERT_EQ(find_root(ds, bd, dd).index, expect) << "iteration " << iter;
  }
}

TEST(ParseAnalysis, ValidatesPayload) {
  const auto b = lecun();
  const auto d = yampolskiy();
  json ok = {{"is_disagreement", true},
             {"divergences", {{{"boomer_ref", "P19"}, {"doomer_ref", "P6"}, {"type", "factual"}}}},
             {"root", "D1"}};
  const auto p = parse_analysis(ok, b, d);
  ASSERT_EQ(p.divergences.size(), 1u);
  EXPECT_EQ(p.divergences[0].id, "D1");
  EXPECT_EQ(p.root, "D1");
  auto bad = ok;
  bad["divergences"][0]["boomer_ref"] = "P99";
  EXPECT_THROW(parse_analysis(bad, b, d), UnknownNode);
  bad = ok;
  bad["divergences"][0]["boomer_ref"] = "C3";
  EXPECT_THROW(parse_analysis(bad, b, d), SchemaError);
  bad = ok;
  bad["divergences"] = json::array();
  EXPECT_THROW(parse_analysis(bad, b, d), SchemaError);
  bad = ok;
  bad["divergences"][0]["depends_on"] = {"D7"};
  EXPECT_THROW(parse_analysis(bad, b, d), SchemaError);
  bad = ok;
  bad.erase("is_disagreement");
  EXPECT_THROW(parse_analysis(bad, b, d), SchemaError);
  json none = {{"is_disagreement", false}, {"divergences", json::array()}};
  EXPECT_FALSE(parse_analysis(none, b, d).is_disagreement);
}

TEST(AnalyzePair, ScriptedReplay) {
  const auto b = lecun();
  const auto d = yampolskiy();
  const ChainPair pair{"T001", "416/Yann LeCun/1/C3", "431/Roman Yampolskiy/1/C1"};
  const auto result = analyze_pair(pair, b, d, mock_ensemble(fixture("table2.mock")));
  const auto& r = result.report;
  ASSERT_TRUE(r.is_disagreement);
  const Divergence* root = r.root_divergence();
  ASSERT_NE(root, nullptr);
  EXPECT_EQ(root->boomer_ref, P(19));
  EXPECT_EQ(root->doomer_ref, P(6));
  EXPECT_EQ(root->dtype, PremiseType::Factual);
  EXPECT_EQ(r.llm_root, "D1");
  EXPECT_FALSE(r.root_mismatch);
  EXPECT_EQ(r.agreement, AgreementOutcome::R3);
  EXPECT_EQ(r.divergences.size(), 3u);
  EXPECT_EQ(result.record.trace.size(), 1u);  // the comparison step
  EXPECT_EQ(to_json(report_from_json(to_json(r))), to_json(r));

  const std::vector<DisagreementReport> reports = {r};
  const auto dist = root_type_distribution(reports);
  EXPECT_EQ(dist.n, 1u);
  EXPECT_EQ(dist.counts[index_of(PremiseType::Factual)], 1u);
  const auto cons = disagreement_consistency(reports);
  EXPECT_EQ(cons.all_disagree, 1u);
  EXPECT_EQ(cons.root_three_way, 1u);
}

TEST(RootDistribution, EmptyThrows) {
  EXPECT_THROW(root_type_distribution(std::vector<DisagreementReport>{}), EmptyInput);
  DisagreementReport r;
  r.is_disagreement = false;
  EXPECT_THROW(root_type_distribution(std::vector<DisagreementReport>{r}), EmptyInput);
}
