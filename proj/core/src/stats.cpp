#include "peel/stats.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "peel/csv.hpp"
#include "peel/error.hpp"
#include "peel/validator.hpp"

namespace peel {

std::size_t PairTypeCounts::boomer_total() const noexcept {
  return std::accumulate(boomer.begin(), boomer.end(), std::size_t{0});
}

std::size_t PairTypeCounts::doomer_total() const noexcept {
  return std::accumulate(doomer.begin(), doomer.end(), std::size_t{0});
}

std::array<std::size_t, 5> premise_type_counts(const ReasoningChain& chain) {
  std::array<std::size_t, 5> counts{};
  for (const auto& p : chain.premises) {
    if (p.type) ++counts[index_of(*p.type)];
  }
  return counts;
}

std::array<double, 5> base_probabilities(const DivergencePairStats& stats) {
  if (stats.n() == 0) throw EmptyInput("base probability needs at least one disagreeing pair");
  std::array<double, 5> sums{};
  for (std::size_t i = 0; i < stats.pairs.size(); ++i) {
    const auto& pair = stats.pairs[i];
    const std::size_t total = pair.boomer_total() + pair.doomer_total();
    if (total == 0) throw ZeroTotal("pair " + std::to_string(i) + " has no typed premises");
    for (std::size_t t = 0; t < 5; ++t) {
      sums[t] += static_cast<double>(pair.boomer[t] + pair.doomer[t]) / static_cast<double>(total);
    }
  }
  for (auto& s : sums) s /= static_cast<double>(stats.n());
  return sums;
}

double base_probability(const DivergencePairStats& stats, PremiseType type) {
  return base_probabilities(stats)[index_of(type)];
}

// ---------------------------------------------------------------------------

namespace {

constexpr int kMaxIterations = 10000;
constexpr double kEpsilon = 1e-16;

// log of x^a e^-x / Gamma(a)
double log_gamma_prefactor(double a, double x) { return a * std::log(x) - x - std::lgamma(a); }

// Series: P(a,x) = prefactor * sum_n x^n / (a (a+1) ... (a+n))
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < kMaxIterations; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kEpsilon) break;
  }
  return sum * std::exp(log_gamma_prefactor(a, x));
}

// Continued fraction for Q(a,x), modified Lentz. Returns log Q so that deep
// tails stay representable.
double log_gamma_q_fraction(double a, double x) {
  constexpr double tiny = std::numeric_limits<double>::min() / kEpsilon;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEpsilon) break;
  }
  return log_gamma_prefactor(a, x) + std::log(h);
}

void check_gamma_args(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0)) throw InputError("incomplete gamma needs a > 0 and x >= 0");
}

}  // namespace

double regularized_gamma_p(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - std::exp(log_gamma_q_fraction(a, x));
}

double regularized_gamma_q(double a, double x) {
  check_gamma_args(a, x);
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return std::exp(log_gamma_q_fraction(a, x));
}

double chi_square_upper_tail(double x, int df) {
  if (df < 1) throw InputError("chi-square needs df >= 1");
  if (x <= 0.0) return 1.0;
  return regularized_gamma_q(0.5 * df, 0.5 * x);
}

ChiSquareResult chi_square_gof(std::span<const double> observed, std::span<const double> expected_probs) {
  if (observed.size() != expected_probs.size()) {
    throw DimensionMismatch("observed has " + std::to_string(observed.size()) + " categories, expected has " +
                            std::to_string(expected_probs.size()));
  }
  if (observed.size() < 2) throw DimensionMismatch("chi-square needs at least 2 categories");
  const double n = std::accumulate(observed.begin(), observed.end(), 0.0);
  if (!(n >= 1.0)) throw EmptyInput("chi-square needs at least one observation");
  const double prob_sum = std::accumulate(expected_probs.begin(), expected_probs.end(), 0.0);
  if (std::fabs(prob_sum - 1.0) > 1e-9) {
    throw DimensionMismatch("expected probabilities sum to " + std::to_string(prob_sum) + ", not 1");
  }

  ChiSquareResult r;
  r.df = static_cast<int>(observed.size()) - 1;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    if (!(expected_probs[k] > 0.0)) {
      throw ZeroExpected("expected probability of category " + std::to_string(k) + " is zero");
    }
    const double e = expected_probs[k] * n;
    r.observed.push_back(observed[k]);
    r.expected.push_back(e);
    r.statistic += (observed[k] - e) * (observed[k] - e) / e;
  }

  const double a = 0.5 * r.df;
  const double x = 0.5 * r.statistic;
  double log_p = 0.0;
  if (x == 0.0) {
    log_p = 0.0;
  } else if (x < a + 1.0) {
    log_p = std::log(1.0 - gamma_p_series(a, x));
  } else {
    log_p = log_gamma_q_fraction(a, x);
  }
  if (log_p < std::log(kMinReportedP)) {
    r.p_value = kMinReportedP;
    r.p_clamped = true;
  } else {
    r.p_value = std::min(1.0, std::exp(log_p));
  }
  return r;
}

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

ZTestResult two_prop_z(std::size_t x1, std::size_t n1, std::size_t x2, std::size_t n2) {
  if (n1 == 0 || n2 == 0) throw InputError("two_prop_z needs n1, n2 >= 1");
  if (x1 > n1 || x2 > n2) throw InputError("two_prop_z needs x <= n");
  const double pooled = static_cast<double>(x1 + x2) / static_cast<double>(n1 + n2);
  if (pooled <= 0.0 || pooled >= 1.0) throw DegeneratePool();
  const double p1 = static_cast<double>(x1) / static_cast<double>(n1);
  const double p2 = static_cast<double>(x2) / static_cast<double>(n2);
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
  ZTestResult r;
  r.z = (p1 - p2) / se;
  r.p_value = normal_upper_tail(r.z);
  return r;
}

// ---------------------------------------------------------------------------

CompositionSummary composition_summary(std::span<const ReasoningChain> chains) {
  if (chains.empty()) throw EmptyInput("composition summary needs at least one chain");
  CompositionSummary s;
  std::size_t counted = 0;
  std::size_t enthymemes = 0;
  for (const auto& chain : chains) {
    const EnthymemeStats e = enthymeme_stats(chain);
    ChainComposition c;
    c.chain_id = chain_id(chain);
    c.total = e.total();
    c.implicit = e.implicit_total;
    ++s.premise_count_histogram[c.total];
    for (auto t : kPremiseTypes) {
      const auto& split = e.by_type[index_of(t)];
      s.type_counts[index_of(t)] += split.total();
      s.implicit_counts[index_of(t)] += split.implicit_count;
    }
    if (c.total == 0) {
      ++s.empty_chains;
      s.per_chain.push_back(std::move(c));
      continue;
    }
    const double total = static_cast<double>(c.total);
    for (auto t : kPremiseTypes) {
      const auto& split = e.by_type[index_of(t)];
      const std::size_t i = index_of(t);
      c.type_share[i] = static_cast<double>(split.total()) / total;
      c.explicit_type_share[i] = static_cast<double>(split.explicit_count) / total;
      c.implicit_type_share[i] = static_cast<double>(split.implicit_count) / total;
      s.mean_type_share[i] += c.type_share[i];
      s.mean_explicit_type_share[i] += c.explicit_type_share[i];
      s.mean_implicit_type_share[i] += c.implicit_type_share[i];
    }
    c.implicit_share = e.implicit_share();
    s.mean_implicit_share += c.implicit_share;
    if (e.is_enthymeme()) ++enthymemes;
    ++counted;
    s.per_chain.push_back(std::move(c));
  }
  if (counted > 0) {
    const double k = static_cast<double>(counted);
    for (std::size_t i = 0; i < 5; ++i) {
      s.mean_type_share[i] /= k;
      s.mean_explicit_type_share[i] /= k;
      s.mean_implicit_type_share[i] /= k;
    }
    s.mean_implicit_share /= k;
    s.enthymeme_rate = static_cast<double>(enthymemes) / k;
  }
  return s;
}

namespace {

nlohmann::json type_map(const std::array<double, 5>& values) {
  nlohmann::json out = nlohmann::json::object();
  for (auto t : kPremiseTypes) out[std::string(to_string(t))] = values[index_of(t)];
  return out;
}

nlohmann::json type_map(const std::array<std::size_t, 5>& values) {
  nlohmann::json out = nlohmann::json::object();
  for (auto t : kPremiseTypes) out[std::string(to_string(t))] = values[index_of(t)];
  return out;
}

}  // namespace

nlohmann::json to_json(const ChiSquareResult& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t k = 0; k < r.observed.size(); ++k) {
    cells.push_back({{"observed", r.observed[k]}, {"expected", r.expected[k]}});
  }
  return {{"statistic", r.statistic}, {"df", r.df}, {"p_value", r.p_value},
          {"p_clamped", r.p_clamped}, {"cells", std::move(cells)}};
}

nlohmann::json to_json(const ZTestResult& r) { return {{"z", r.z}, {"p_value", r.p_value}}; }

nlohmann::json to_json(const CompositionSummary& s) {
  nlohmann::json per_chain = nlohmann::json::array();
  for (const auto& c : s.per_chain) {
    per_chain.push_back({{"chain_id", c.chain_id},
                         {"total", c.total},
                         {"implicit", c.implicit},
                         {"implicit_share", c.implicit_share},
                         {"type_share", type_map(c.type_share)},
                         {"explicit_type_share", type_map(c.explicit_type_share)},
                         {"implicit_type_share", type_map(c.implicit_type_share)}});
  }
  nlohmann::json histogram = nlohmann::json::array();
  for (const auto& [count, chains] : s.premise_count_histogram) {
    histogram.push_back({{"premises", count}, {"chains", chains}});
  }
  return {{"per_chain", std::move(per_chain)},
          {"mean_type_share", type_map(s.mean_type_share)},
          {"mean_explicit_type_share", type_map(s.mean_explicit_type_share)},
          {"mean_implicit_type_share", type_map(s.mean_implicit_type_share)},
          {"mean_implicit_share", s.mean_implicit_share},
          {"enthymeme_rate", s.enthymeme_rate},
          {"empty_chains", s.empty_chains},
          {"type_counts", type_map(s.type_counts)},
          {"implicit_counts", type_map(s.implicit_counts)},
          {"premise_count_histogram", std::move(histogram)}};
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& regression_csv_header() {
  static const std::vector<std::string> header = [] {
    std::vector<std::string> h = {"conclusion_key", "episode",    "speaker",         "topic",
                                  "attitude",       "profession", "gender",          "total_premises",
                                  "implicit_share"};
    for (auto t : kPremiseTypes) h.push_back("prop_" + std::string(to_string(t)));
    h.push_back("explicit_premises");
    for (auto t : kPremiseTypes) h.push_back("explicit_prop_" + std::string(to_string(t)));
    return h;
  }();
  return header;
}

namespace {

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string export_regression_csv(std::span<const ConclusionRecord> records) {
  std::string out = csv_row(regression_csv_header());
  for (const auto& rec : records) {
    if (!rec.is_ai_risk) continue;
    if (!rec.chain) throw InputError("conclusion " + rec.key + " has no chain");
    const auto& chain = *rec.chain;
    const EnthymemeStats e = enthymeme_stats(chain);
    std::vector<std::string> row = {
        rec.key,
        chain.episode,
        chain.speaker.name,
        rec.topic,
        std::string(to_string(rec.attitude)),
        chain.speaker.profession ? std::string(to_string(*chain.speaker.profession)) : std::string(),
        std::string(to_string(chain.speaker.gender)),
        std::to_string(e.total()),
        fixed(e.implicit_share())};
    for (auto t : kPremiseTypes) row.push_back(fixed(e.type_share(t)));
    row.push_back(std::to_string(e.explicit_total));
    for (auto t : kPremiseTypes) {
      const double share = e.explicit_total == 0
                               ? 0.0
                               : static_cast<double>(e.by_type[index_of(t)].explicit_count) /
                                     static_cast<double>(e.explicit_total);
      row.push_back(fixed(share));
    }
    out += csv_row(row);
  }
  return out;
}

}  // namespace peel
