#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "peel/chain.hpp"
#include "peel/chain_io.hpp"
#include "peel/digest.hpp"
#include "peel/ensemble.hpp"
#include "peel/mock_backend.hpp"
#include "peel/pipeline.hpp"
#include "peel/fsutil.hpp"
#include "peel/relation.hpp"

namespace peel::test {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(PEEL_FIXTURE_DIR) / name; }

inline ReasoningChain lecun() { return load_chain_file(fixture("table2_lecun.json")); }
inline ReasoningChain yampolskiy() { return load_chain_file(fixture("table2_yampolskiy.json")); }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("peel-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline Relationship rel(std::uint32_t id, RelationKind kind, std::vector<RefLabel> operands,
                        std::optional<RefLabel> target = std::nullopt) {
  Relationship r;
  r.id = RefLabel::relationship(id);
  r.kind = kind;
  r.operands = std::move(operands);
  r.target = target;
  return r;
}

inline RefLabel P(std::uint32_t i) { return RefLabel::premise(i); }
inline RefLabel R(std::uint32_t i) { return RefLabel::relationship(i); }
inline RefLabel C(std::uint32_t i) { return RefLabel::conclusion(i); }

// Random well-formed chain: n premises (3..max_premises), the last one moral.
// Non-moral premises are combined in groups of two or three, sometimes into a
// derived premise; the groups are combined, evaluated against the moral
// premise, and the evaluation implies C1. Always passes every error check.
inline ReasoningChain random_chain(std::mt19937_64& rng, std::uint32_t max_premises = 10) {
  auto pick = [&](std::uint32_t lo, std::uint32_t hi) {
    return std::uniform_int_distribution<std::uint32_t>(lo, hi)(rng);
  };
  ReasoningChain chain;
  chain.speaker.name = "S" + std::to_string(pick(1, 999));
  chain.episode = "E" + std::to_string(pick(1, 99));
  const std::uint32_t n = pick(3, std::max<std::uint32_t>(3, max_premises));
  for (std::uint32_t i = 1; i <= n; ++i) {
    Premise p;
    p.id = P(i);
    p.text = "premise " + std::to_string(i);
    p.type = i == n ? PremiseType::Moral : kPremiseTypes[pick(0, 3)];
    p.explicitness = pick(0, 1) ? Explicitness::Explicit : Explicitness::Implicit;
    p.confidence = static_cast<int>(pick(0, 100));
    chain.premises.push_back(p);
  }
  std::uint32_t next_rel = 1;
  std::uint32_t next_derived = n + 1;
  std::vector<RefLabel> tops;
  std::uint32_t i = 1;
  while (i < n) {
    std::uint32_t size = std::min(pick(2, 3), n - i);
    if (n - (i + size) == 1) ++size;  // never leave a single premise behind
    std::vector<RefLabel> ops;
    for (std::uint32_t k = 0; k < size; ++k) ops.push_back(P(i + k));
    i += size;
    if (ops.size() == 1) {
      tops.push_back(ops[0]);
      continue;
    }
    if (pick(0, 3) == 0) {
      const RefLabel d = P(next_derived++);
      chain.relationships.push_back(rel(next_rel++, RelationKind::Combine, ops, d));
      Premise dp;
      dp.id = d;
      dp.text = "derived";
      dp.type = kPremiseTypes[pick(0, 3)];
      chain.derived_premises.push_back(dp);
      tops.push_back(d);
    } else {
      chain.relationships.push_back(rel(next_rel++, RelationKind::Combine, ops));
      tops.push_back(R(next_rel - 1));
    }
  }
  RefLabel top = tops.front();
  if (tops.size() > 1) {
    chain.relationships.push_back(rel(next_rel++, RelationKind::Combine, tops));
    top = R(next_rel - 1);
  }
  const std::uint32_t eval = next_rel++;
  chain.relationships.push_back(rel(eval, RelationKind::Evaluate, {top, P(n)}));
  chain.relationships.push_back(rel(next_rel++, RelationKind::Imply, {R(eval)}, C(1)));
  Conclusion c;
  c.id = C(1);
  c.text = "conclusion";
  chain.conclusions.push_back(c);
  return chain;
}

// Ensemble of three mock backends sharing one script, with a fixed clock and
// no real sleeping.
inline EnsembleConfig mock_ensemble(std::shared_ptr<MockScript> shared, std::uint64_t seed = 0) {
  EnsembleConfig ens;
  ens.worker_a = std::make_shared<MockBackend>("mock-worker-a", shared, seed);
  ens.worker_b = std::make_shared<MockBackend>("mock-worker-b", shared, seed);
  ens.integrator = std::make_shared<MockBackend>("mock-integrator", shared, seed);
  ens.sleep = [](std::chrono::milliseconds) {};
  ens.clock = fixed_clock(format_utc(0));
  return ens;
}

inline EnsembleConfig mock_ensemble(const std::filesystem::path& script, std::uint64_t seed = 0) {
  return mock_ensemble(std::make_shared<MockScript>(MockScript::load(script)), seed);
}

inline EnsembleConfig mock_ensemble(const nlohmann::json& script, std::uint64_t seed = 0) {
  return mock_ensemble(std::make_shared<MockScript>(MockScript::from_json(script)), seed);
}

inline PipelineConfig mock_pipeline_config(const std::filesystem::path& script, std::uint64_t seed = 0) {
  PipelineConfig cfg;
  cfg.ensemble = mock_ensemble(script, seed);
  cfg.backend_settings = {{"mock", true}, {"seed", seed}, {"script", sha256_hex(read_file(script))}};
  return cfg;
}

inline std::vector<std::filesystem::path> mini_corpus() {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(fixture("mini_corpus"))) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// SHA-256 over every file below `root` (relative path plus bytes), in path order.
inline std::string tree_hash(const std::filesystem::path& root) {
  std::vector<std::string> rels;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) rels.push_back(std::filesystem::relative(e.path(), root).generic_string());
  }
  std::sort(rels.begin(), rels.end());
  std::string acc;
  for (const auto& r : rels) acc += r + "\n" + sha256_hex(read_file(root / r)) + "\n";
  return sha256_hex(acc);
}

}  // namespace peel::test
