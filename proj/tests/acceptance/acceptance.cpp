// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "peel/dag.hpp"
#include "peel/disagreement.hpp"
#include "peel/ensemble.hpp"
#include "peel/stats.hpp"
#include "peel/topics.hpp"
#include "peel/validator.hpp"

using namespace peel;
using namespace peel::test;
namespace fs = std::filesystem;

namespace {

// Collects failure notes for one criterion.
struct Check {
  std::vector<std::string> failures;
  std::string note;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

struct Criterion {
  int number;
  std::string title;
  double limit_s;  // 0: no runtime limit
  std::function<void(Check&)> body;
};

std::string fmt(double v, int precision = 10) {
  std::ostringstream out;
  out.precision(precision);
  out << v;
  return out.str();
}

// --- 1 ---------------------------------------------------------------------------

void golden_parse(Check& c) {
  std::ifstream in(fixture("table2_relationships.txt"));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  c.expect(lines.size() == 30, "expected 30 lines, found " + std::to_string(lines.size()));
  std::size_t ok = 0;
  for (const auto& line : lines) {
    try {
      const Relationship r = parse_relation(line);
      const std::string canon = serialize_relation(r);
      const bool round = parse_relation(canon) == r && serialize_relation(parse_relation(canon)) == canon;
      const bool arity = !arity_violation(r);
      c.expect(round, "round trip: " + line);
      c.expect(arity, "arity: " + line);
      if (round && arity) ++ok;
    } catch (const Error& e) {
      c.expect(false, line + ": " + e.what());
    }
  }
  for (const auto& chain : {lecun(), yampolskiy()}) {
    const auto report = validate_chain(chain);
    c.expect(report.is_valid, chain_id(chain) + " has error-severity violations");
  }
  c.note = std::to_string(ok) + "/" + std::to_string(lines.size()) +
           " lines (boomer R15-R24 + doomer R1-R20; the stated total of 34 does not match that range)";
}

// --- 2 ---------------------------------------------------------------------------

void fixture_counts(Check& c) {
  const auto d = yampolskiy();
  const auto b = lecun();
  c.expect(d.premises.size() == 31, "doomer premises " + std::to_string(d.premises.size()));
  c.expect(d.derived_premises.size() == 3 && d.derived_premises[0].id == P(32) && d.derived_premises[1].id == P(33) &&
               d.derived_premises[2].id == P(34),
           "doomer derived premises are not P32-P34");
  std::size_t implicit_moral = 0;
  for (const auto& p : d.premises) {
    if (p.explicitness == Explicitness::Implicit && p.type == PremiseType::Moral) ++implicit_moral;
  }
  c.expect(implicit_moral == 5, "doomer implicit moral " + std::to_string(implicit_moral));
  c.expect(b.premises.size() == 12, "boomer premises " + std::to_string(b.premises.size()));
  std::string implicit_ids;
  std::size_t implicit = 0;
  for (const auto& p : b.premises) {
    if (p.explicitness == Explicitness::Implicit) {
      ++implicit;
      implicit_ids += (implicit_ids.empty() ? "" : ",") + p.id.str();
    }
  }
  // Four boomer premises carry the implicit marking in the source chain.
  c.expect(implicit == 4, "boomer implicit " + std::to_string(implicit));
  c.note = "doomer 31+3 derived, 5 implicit moral; boomer 12, implicit " + implicit_ids +
           " (source chain marks 4; criterion text says 3)";
}

// --- 3 ---------------------------------------------------------------------------

void root_oracle(Check& c) {
  std::mt19937_64 rng(20240603);
  std::size_t agree = 0;
  for (int i = 0; i < 200; ++i) {
    const auto boomer = random_chain(rng, 10);
    const auto doomer = random_chain(rng, 10);
    const auto ds = random_divergences(rng, boomer, doomer);
    const auto got = find_root(ds, build_dag(boomer), build_dag(doomer)).index;
    const auto want = oracle_root(ds, RawGraph(boomer), RawGraph(doomer));
    if (got == want) {
      ++agree;
    } else {
      c.expect(false, "pair " + std::to_string(i) + ": find_root " + std::to_string(got) + ", oracle " +
                          std::to_string(want));
    }
  }
  c.note = std::to_string(agree) + "/200 agree";
}

// --- 4 ---------------------------------------------------------------------------

void scripted_replay(Check& c) {
  const auto b = lecun();
  const auto d = yampolskiy();
  const ChainPair pair{"T001", "416/Yann LeCun/1/C3", "431/Roman Yampolskiy/1/C1"};
  const auto result = analyze_pair(pair, b, d, mock_ensemble(fixture("table2.mock")));
  const Divergence* root = result.report.root_divergence();
  c.expect(root != nullptr, "no root divergence");
  if (!root) return;
  c.expect(root->boomer_ref == P(19), "boomer root " + root->boomer_ref.str());
  c.expect(root->doomer_ref == P(6), "doomer root " + root->doomer_ref.str());
  c.expect(root->dtype == PremiseType::Factual, "root type " + std::string(to_string(root->dtype)));
  c.note = "root " + root->boomer_ref.str() + " vs " + root->doomer_ref.str() + ", " +
           std::string(to_string(root->dtype));
}

// --- 5 ---------------------------------------------------------------------------

void pair_counting(Check& c) {
  std::vector<ClassifiedConclusion> cs;
  auto add = [&](const std::string& key, const std::string& topic, Attitude att) {
    ClassifiedConclusion x;
    x.key = key;
    x.topic_id = topic;
    x.attitude = att;
    x.is_ai_risk = true;
    cs.push_back(x);
  };
  for (int i = 0; i < 26; ++i) add("b" + std::to_string(i), "T001", Attitude::Optimistic);
  for (int i = 0; i < 43; ++i) add("d" + std::to_string(i), "T001", Attitude::Pessimistic);
  for (int i = 0; i < 7; ++i) add("jb" + std::to_string(i), "T010", Attitude::Optimistic);
  for (int i = 0; i < 6; ++i) add("jd" + std::to_string(i), "T010", Attitude::Pessimistic);
  const auto big = enumerate_pairs("T001", cs).size();
  const auto small = enumerate_pairs("T010", cs).size();
  c.expect(big == 1118, "26x43 gave " + std::to_string(big));
  c.expect(small == 42, "7x6 gave " + std::to_string(small));
  c.note = std::to_string(big) + " and " + std::to_string(small) + " pairs";
}

// --- 6 ---------------------------------------------------------------------------

void base_probability_check(Check& c) {
  std::mt19937_64 rng(7);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    DivergencePairStats s;
    const std::size_t n = pick(1, 50);
    for (std::size_t k = 0; k < n; ++k) {
      PairTypeCounts p;
      for (auto& v : p.boomer) v = pick(0, 40);
      for (auto& v : p.doomer) v = pick(0, 40);
      if (p.boomer_total() + p.doomer_total() == 0) p.doomer[pick(0, 4)] = 1;
      s.pairs.push_back(p);
    }
    double sum = 0;
    for (double v : base_probabilities(s)) sum += v;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  c.expect(worst <= 1e-12, "max |sum-1| = " + fmt(worst));

  // 12 causal premises out of 43 in a single pair.
  DivergencePairStats s;
  PairTypeCounts p;
  p.boomer[index_of(PremiseType::Causal)] = 4;
  p.boomer[index_of(PremiseType::Factual)] = 8;
  p.doomer[index_of(PremiseType::Causal)] = 8;
  p.doomer[index_of(PremiseType::Moral)] = 23;
  s.pairs.push_back(p);
  const double causal = base_probability(s, PremiseType::Causal);
  c.expect(std::abs(causal - 12.0 / 43.0) <= 1e-12, "hand example " + fmt(causal, 17));
  c.note = "max |sum-1| " + fmt(worst, 3) + " over 1000 inputs; hand example " + fmt(causal, 12);
}

// --- 7 ---------------------------------------------------------------------------

void statistics_numerics(Check& c) {
  double worst = 0;
  for (int df = 1; df <= 10; ++df) {
    for (double x : {0.01, 0.1, 0.5, 1.0, 2.0, 3.84, 5.0, 7.5, 10.0, 15.0, 20.0, 30.0, 50.0, 100.0}) {
      const double err = std::abs(chi_square_upper_tail(x, df) - static_cast<double>(chi2_oracle(x, df)));
      worst = std::max(worst, err);
      if (err > 1e-8) c.expect(false, "chi-square df=" + std::to_string(df) + " x=" + fmt(x) + " err " + fmt(err));
    }
  }
  const std::vector<double> obs = {30, 10};
  const std::vector<double> uniform = {0.5, 0.5};
  const double stat = chi_square_gof(obs, uniform).statistic;
  c.expect(stat == 10.0, "[30,10] statistic " + fmt(stat, 17));

  // Hand example: 90/100 vs 50/100, pooled.
  const double z = two_prop_z(90, 100, 50, 100).z;
  const double stated = 6.0302;
  c.expect(std::abs(z - stated) <= 1e-4,
           "two_prop_z(90/100, 50/100) = " + fmt(z, 8) + ", stated " + fmt(stated) + " (pooled formula gives 6.172134)");
  c.note = "chi-square max err " + fmt(worst, 3) + "; [30,10] stat " + fmt(stat) + "; z " + fmt(z, 8);
}

// --- 8 ---------------------------------------------------------------------------

void agreement_truth_table(Check& c) {
  auto eq = [](int x, int y) { return x == y; };
  auto jeq = [](const nlohmann::json& x, const nlohmann::json& y) { return x == y; };
  int rows = 0;
  int matched = 0;
  for (bool a_present : {true, false}) {
    for (bool b_present : {true, false}) {
      for (bool ab_equal : {true, false}) {
        for (int choice = 0; choice < 3; ++choice) {  // final = a, b, neither
          const int av = 1;
          const int bv = ab_equal ? 1 : 2;
          const int fv = choice == 0 ? av : choice == 1 ? bv : 3;
          const std::optional<int> a = a_present ? std::optional<int>(av) : std::nullopt;
          const std::optional<int> b = b_present ? std::optional<int>(bv) : std::nullopt;
          // R3: all three agree. R2: final matches exactly one worker output. R1: neither.
          AgreementOutcome want = AgreementOutcome::R1;
          const bool fa = a_present && fv == av;
          const bool fb = b_present && fv == bv;
          if (fa && fb && ab_equal) want = AgreementOutcome::R3;
          else if (fa) want = AgreementOutcome::R2MatchesA;
          else if (fb) want = AgreementOutcome::R2MatchesB;
          const auto got = classify_agreement(a, b, fv, eq);
          const auto got_json = classify_agreement_json(a ? nlohmann::json(*a) : nlohmann::json(),
                                                        b ? nlohmann::json(*b) : nlohmann::json(), fv, jeq);
          ++rows;
          if (got == want && got_json == want) {
            ++matched;
          } else {
            c.expect(false, "a=" + std::to_string(a_present) + " b=" + std::to_string(b_present) +
                                " a==b=" + std::to_string(ab_equal) + " final=" + std::to_string(choice) + " gave " +
                                std::string(to_string(got)));
          }
        }
      }
    }
  }
  c.note = std::to_string(matched) + "/" + std::to_string(rows) + " rows";
}

// --- 9 ---------------------------------------------------------------------------

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

// One offline run-all into `out`; returns the process exit status or -1.
int run_all_once(const fs::path& out) {
#ifdef PEEL_CLI_PATH
  std::string cmd = quote(PEEL_CLI_PATH) + " run-all --mock --script " + quote(fixture("empty.mock")) +
                    " --speakers " + quote(fixture("speakers.csv")) + " --out " + quote(out);
  for (const auto& f : mini_corpus()) cmd += " --input " + quote(f);
  cmd += " > " + quote(out / "stdout.txt") + " 2>&1";
  fs::create_directories(out);
  const int rc = std::system(cmd.c_str());
  fs::remove(out / "stdout.txt");
  return rc;
#else
  PipelineConfig cfg = mock_pipeline_config(fixture("empty.mock"));
  const std::string csv = read_file(fixture("speakers.csv"));
  cfg.speakers = SpeakerDirectory::from_csv(csv);
  cfg.speakers_digest = sha256_hex(csv);
  const auto inputs = mini_corpus();
  Pipeline p(out / "runs", Pipeline::default_run_id(inputs, cfg), cfg);
  p.set_inputs(inputs);
  p.run_all();
  return 0;
#endif
}

void determinism(Check& c) {
  TempDir tmp;
  const int rc1 = run_all_once(tmp / "one");
  const int rc2 = run_all_once(tmp / "two");
  c.expect(rc1 == 0 && rc2 == 0, "run-all exit status " + std::to_string(rc1) + "/" + std::to_string(rc2));
  if (rc1 != 0 || rc2 != 0) return;
  const auto h1 = tree_hash(tmp / "one");
  const auto h2 = tree_hash(tmp / "two");
  c.expect(h1 == h2, "tree hashes differ: " + h1 + " vs " + h2);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(tmp / "one")) files += e.is_regular_file();
  c.expect(files > 10, "run tree has only " + std::to_string(files) + " files");
#ifdef PEEL_CLI_PATH
  c.note = "peel run-all x2, ";
#else
  c.note = "Pipeline::run_all x2, ";
#endif
  c.note += std::to_string(files) + " files, tree " + h1.substr(0, 16);
}

// --- 10 --------------------------------------------------------------------------

void mutation_suite(Check& c) {
  std::mt19937_64 rng(99);
  std::string summary;
  for (const Defect d : kDefects) {
    int hit = 0;
    for (int i = 0; i < 500; ++i) {
      auto chain = random_chain(rng, 10);
      mutate(chain, d, rng);
      const auto codes = validate_chain(chain).error_codes();
      if (codes == std::vector<ViolationCode>{expected_code(d)}) {
        ++hit;
      } else if (c.failures.size() < 10) {
        std::string got;
        for (auto code : codes) got += std::string(to_string(code)) + " ";
        c.expect(false, std::string(defect_name(d)) + " mutant " + std::to_string(i) + " gave " + got);
      }
    }
    if (hit != 500) c.expect(false, std::string(defect_name(d)) + " " + std::to_string(hit) + "/500");
    summary += std::string(defect_name(d)) + " " + std::to_string(hit) + "/500; ";
  }
  summary.resize(summary.size() - 2);
  c.note = summary;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "golden relationship lines parse, validate and round-trip", 1.0, golden_parse},
      {2, "fixture chain counts", 0, fixture_counts},
      {3, "find_root matches brute-force oracle on 200 random pairs", 10.0, root_oracle},
      {4, "scripted replay yields root P19 vs P6, factual", 0, scripted_replay},
      {5, "pair counting 1118 and 42", 0, pair_counting},
      {6, "base probabilities sum to one; 12/43 example", 0, base_probability_check},
      {7, "chi-square oracle, two_prop_z example, [30,10] statistic", 0, statistics_numerics},
      {8, "agreement classification truth table", 0, agreement_truth_table},
      {9, "two offline run-all executions give identical run trees", 30.0, determinism},
      {10, "mutation suite: 6 defects x 500 mutants", 0, mutation_suite},
  };

  int failed = 0;
  for (const auto& cr : criteria) {
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      cr.body(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (cr.limit_s > 0 && secs >= cr.limit_s) {
      check.expect(false, "took " + fmt(secs, 3) + " s, limit " + fmt(cr.limit_s) + " s");
    }
    const bool pass = check.failures.empty();
    failed += !pass;
    std::printf("%s criterion %d: %s [%.3f s] %s\n", pass ? "PASS" : "FAIL", cr.number, cr.title.c_str(), secs,
                check.note.c_str());
    for (const auto& f : check.failures) std::printf("    %s\n", f.c_str());
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
