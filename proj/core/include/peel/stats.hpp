#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "peel/chain.hpp"

namespace peel {

// ---------------------------------------------------------------------------
// Base probability of root-divergence types
// ---------------------------------------------------------------------------

/// Premise-type counts of the two chains in one disagreeing pair.
struct PairTypeCounts {
  std::array<std::size_t, 5> boomer{};
  std::array<std::size_t, 5> doomer{};

  std::size_t boomer_total() const noexcept;
  std::size_t doomer_total() const noexcept;
};

struct DivergencePairStats {
  std::vector<PairTypeCounts> pairs;
  std::size_t n() const noexcept { return pairs.size(); }
};

/// Counts over listed premises; derived premises without a type are skipped.
std::array<std::size_t, 5> premise_type_counts(const ReasoningChain& chain);

/// Mean over pairs of (boomer_t + doomer_t) / (boomer_total + doomer_total):
/// the root-type share expected if roots fell on premise types in proportion
/// to their local prevalence. Throws EmptyInput (no pairs) or ZeroTotal.
double base_probability(const DivergencePairStats& stats, PremiseType type);
std::array<double, 5> base_probabilities(const DivergencePairStats& stats);

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

// p-values smaller than this are reported as the bound with `p_clamped` set.
inline constexpr double kMinReportedP = 1e-300;

struct ChiSquareResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  bool p_clamped = false;
  std::vector<double> observed;
  std::vector<double> expected;  // expected counts, E_k * n
};

/// Goodness of fit of observed counts against category probabilities.
/// Throws DimensionMismatch, ZeroExpected, EmptyInput.
ChiSquareResult chi_square_gof(std::span<const double> observed, std::span<const double> expected_probs);

/// Upper tail of the chi-square distribution, P(X >= x) with `df` degrees of freedom.
double chi_square_upper_tail(double x, int df);

/// Regularized incomplete gamma functions P(a, x) and Q(a, x) = 1 - P(a, x):
/// series below x = a + 1, Lentz continued fraction above.
double regularized_gamma_p(double a, double x);
double regularized_gamma_q(double a, double x);

struct ZTestResult {
  double z = 0.0;
  double p_value = 0.5;  // one-sided, H1: p1 > p2
};

/// Pooled one-sided two-proportion z-test, no continuity correction.
/// Throws DegeneratePool when the pooled proportion is 0 or 1.
ZTestResult two_prop_z(std::size_t x1, std::size_t n1, std::size_t x2, std::size_t n2);

double normal_upper_tail(double z);

// ---------------------------------------------------------------------------
// Premise composition
// ---------------------------------------------------------------------------

struct ChainComposition {
  std::string chain_id;
  std::size_t total = 0;
  std::size_t implicit = 0;
  std::array<double, 5> type_share{};           // sums to 1
  std::array<double, 5> explicit_type_share{};  // share of all premises
  std::array<double, 5> implicit_type_share{};  // explicit + implicit = type_share
  double implicit_share = 0.0;
};

struct CompositionSummary {
  std::vector<ChainComposition> per_chain;
  // Unweighted means over chains that have at least one typed premise.
  std::array<double, 5> mean_type_share{};
  std::array<double, 5> mean_explicit_type_share{};
  std::array<double, 5> mean_implicit_type_share{};
  double mean_implicit_share = 0.0;
  double enthymeme_rate = 0.0;  // chains with any implicit premise
  std::size_t empty_chains = 0;
  std::map<std::size_t, std::size_t> premise_count_histogram;
  // Corpus-wide explicit/implicit counts per type (z-test inputs).
  std::array<std::size_t, 5> implicit_counts{};
  std::array<std::size_t, 5> type_counts{};
};

/// Throws EmptyInput for an empty chain list.
CompositionSummary composition_summary(std::span<const ReasoningChain> chains);

nlohmann::json to_json(const ChiSquareResult& r);
nlohmann::json to_json(const ZTestResult& r);
nlohmann::json to_json(const CompositionSummary& s);

// ---------------------------------------------------------------------------
// Regression export
// ---------------------------------------------------------------------------

struct ConclusionRecord {
  std::string key;
  std::string topic;
  Attitude attitude = Attitude::Neutral;
  bool is_ai_risk = true;
  const ReasoningChain* chain = nullptr;
};

/// Header of the regression export, in column order.
const std::vector<std::string>& regression_csv_header();

/// One RFC 4180 row per AI-risk conclusion; a header-only file when empty.
std::string export_regression_csv(std::span<const ConclusionRecord> records);

}  // namespace peel
