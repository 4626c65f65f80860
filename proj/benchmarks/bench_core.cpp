#include <benchmark/benchmark.h>

#include <filesystem>
#include <string>
#include <vector>

#include "peel/chain_io.hpp"
#include "peel/dag.hpp"
#include "peel/disagreement.hpp"
#include "peel/relation.hpp"
#include "peel/stats.hpp"
#include "peel/validator.hpp"

namespace {

using namespace peel;

std::filesystem::path fixture(const char* name) { return std::filesystem::path(PEEL_FIXTURE_DIR) / name; }

void BM_ParseRelation(benchmark::State& state) {
  const std::string line = "R1: P1 + P2 => P32 → The existence of X-risk implies extinction risk.";
  for (auto _ : state) benchmark::DoNotOptimize(parse_relation(line));
}
BENCHMARK(BM_ParseRelation);

void BM_ValidateChain(benchmark::State& state) {
  const auto chain = load_chain_file(fixture("table2_yampolskiy.json"));
  for (auto _ : state) benchmark::DoNotOptimize(validate_chain(chain));
}
BENCHMARK(BM_ValidateChain);

void BM_FindRoot(benchmark::State& state) {
  const auto boomer = load_chain_file(fixture("table2_lecun.json"));
  const auto doomer = load_chain_file(fixture("table2_yampolskiy.json"));
  const auto bd = build_dag(boomer);
  const auto dd = build_dag(doomer);
  std::vector<Divergence> ds(3);
  ds[0].id = "D1";
  ds[0].boomer_ref = RefLabel::premise(19);
  ds[0].doomer_ref = RefLabel::premise(6);
  ds[1].id = "D2";
  ds[1].boomer_ref = RefLabel::premise(23);
  ds[1].doomer_ref = RefLabel::premise(26);
  ds[2].id = "D3";
  ds[2].boomer_ref = RefLabel::relationship(20);
  ds[2].doomer_ref = RefLabel::relationship(17);
  for (auto _ : state) benchmark::DoNotOptimize(find_root(ds, bd, dd));
}
BENCHMARK(BM_FindRoot);

void BM_ChiSquareUpperTail(benchmark::State& state) {
  const int df = static_cast<int>(state.range(0));
  double x = 0.5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(chi_square_upper_tail(x, df));
    x = x < 200 ? x * 1.01 : 0.5;
  }
}
BENCHMARK(BM_ChiSquareUpperTail)->Arg(1)->Arg(4)->Arg(10);

}  // namespace

BENCHMARK_MAIN();
