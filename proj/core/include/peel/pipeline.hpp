#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "peel/chain.hpp"
#include "peel/ensemble.hpp"
#include "peel/store.hpp"

namespace peel {

/// Profession and gender per speaker, from a CSV with header
/// `speaker,episode,profession,gender`. An empty episode applies to every
/// episode.
class SpeakerDirectory {
 public:
  static SpeakerDirectory from_csv(std::string_view text);
  SpeakerMeta lookup(const std::string& episode, const std::string& name) const;
  bool empty() const noexcept { return by_episode_.empty() && any_.empty(); }

 private:
  std::map<std::pair<std::string, std::string>, SpeakerMeta> by_episode_;
  std::map<std::string, SpeakerMeta> any_;
};

struct PipelineConfig {
  EnsembleConfig ensemble;
  std::size_t parallel = 1;
  std::vector<std::string> topics;  // ids or labels to analyze; empty means all
  SpeakerDirectory speakers;
  std::string speakers_digest;
  std::optional<std::map<std::string, std::string>> themes;
  std::string themes_digest;
  // Non-secret backend settings that change outputs (mock seed, script digest).
  nlohmann::json backend_settings = nlohmann::json::object();
  // Weights of R3, R2 and R1 in the composite reliability score.
  std::array<double, 3> reliability_weights = {1.0, 0.5, 0.0};
};

/// Runs stages over one run directory `<runs_dir>/<run_id>`.
class Pipeline {
 public:
  /// Opens the run if its manifest exists, otherwise starts a new one.
  Pipeline(std::filesystem::path runs_dir, std::string run_id, PipelineConfig config);

  /// Run id derived from the inputs and settings, used when none is given.
  static std::string default_run_id(const std::vector<std::filesystem::path>& transcripts,
                                    const PipelineConfig& config);

  const std::string& run_id() const noexcept { return manifest_.run_id; }
  std::filesystem::path run_dir() const { return runs_dir_ / manifest_.run_id; }
  const RunManifest& manifest() const noexcept { return manifest_; }
  StageSettings settings() const;
  ResumePoint status() const;

  /// Transcript files for the ingest stage.
  void set_inputs(std::vector<std::filesystem::path> transcripts);

  /// Runs one stage. A stage that is complete and current is skipped
  /// (returns false). A complete but stale stage forks a new run that keeps
  /// the still-valid upstream artifacts. Throws UsageError when an input
  /// stage has not run.
  bool run(Stage stage);

  /// Every pending stage in order; returns the stages that ran.
  std::vector<Stage> run_all();

 private:
  void save_manifest();
  void fork(const std::vector<Stage>& invalidated, const std::string& reason_digest);
  void ensure_ready(Stage stage);

  void do_ingest(StageRecord& rec);
  void do_segment(StageRecord& rec);
  void do_summarize(StageRecord& rec);
  void do_extract(StageRecord& rec);
  void do_classify(StageRecord& rec);
  void do_pairs(StageRecord& rec);
  void do_disagree(StageRecord& rec);
  void do_aggregate(StageRecord& rec);
  void do_stats(StageRecord& rec);
  void do_report(StageRecord& rec);

  std::filesystem::path runs_dir_;
  PipelineConfig config_;
  RunManifest manifest_;
  std::optional<ArtifactStore> store_;
  std::vector<std::filesystem::path> inputs_;
};

/// Reads chain files (*.json: single chains, arrays or {"chains": [...]}) from
/// a file or directory tree, in sorted path order.
std::vector<ReasoningChain> load_chains(const std::filesystem::path& path);

}  // namespace peel
