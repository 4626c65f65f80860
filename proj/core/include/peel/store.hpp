#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace peel {

/// Artifacts of one run live under a single directory and are written once.
/// Rewriting identical bytes is a no-op; different bytes throw
/// WriteOnceViolation.
class ArtifactStore {
 public:
  explicit ArtifactStore(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }

  /// Returns the SHA-256 of the bytes written. JSON is stored pretty-printed
  /// with sorted keys and a trailing newline.
  std::string put_json(const std::string& rel, const nlohmann::json& doc);
  std::string put_text(const std::string& rel, std::string_view text);

  bool exists(const std::string& rel) const;
  std::string get_text(const std::string& rel) const;
  nlohmann::json get_json(const std::string& rel) const;
  std::string digest_of(const std::string& rel) const;

  /// Relative paths of regular files below `rel_dir`, sorted.
  std::vector<std::string> list(const std::string& rel_dir) const;

 private:
  std::filesystem::path root_;
};

enum class Stage { Ingest, Segment, Summarize, Extract, Classify, Pairs, Disagree, Aggregate, Stats, Report };

inline constexpr std::array<Stage, 10> kStages = {Stage::Ingest,   Stage::Segment,  Stage::Summarize, Stage::Extract,
                                                  Stage::Classify, Stage::Pairs,    Stage::Disagree,  Stage::Aggregate,
                                                  Stage::Stats,    Stage::Report};

std::string_view to_string(Stage stage) noexcept;
std::optional<Stage> stage_from_string(std::string_view text) noexcept;
/// Stages whose outputs a stage reads.
const std::vector<Stage>& stage_inputs(Stage stage);
/// Every stage reachable downstream of `stage`, in pipeline order.
std::vector<Stage> downstream_of(Stage stage);

struct StageRecord {
  bool complete = false;
  std::string input_digest;
  std::map<std::string, std::string> artifacts;  // relative path -> sha256
  std::string completed_at;

  /// Digest over the artifact map; what downstream input digests see.
  std::string output_digest() const;
};

struct RunManifest {
  std::string run_id;
  std::string parent_run;  // set when forked from an earlier run
  std::string config_digest;
  std::map<std::string, std::string> prompt_versions;
  std::string created_at;
  std::map<Stage, StageRecord> stages;
  std::map<Stage, std::string> settings;  // settings digest each stage last ran with
  std::vector<std::string> classification_order;
  std::vector<std::string> assignment_order;

  bool complete(Stage s) const;
  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& doc);
};

/// Per-stage configuration digests (prompt version, models, settings, input
/// files). A change invalidates that stage and everything downstream.
using StageSettings = std::map<Stage, std::string>;

/// Digest of everything a stage consumes: its settings plus the output
/// digests of its input stages as recorded in the manifest.
std::string stage_input_digest(Stage stage, const RunManifest& manifest, const StageSettings& settings);

struct ResumePoint {
  std::optional<Stage> next;        // nullopt: every stage is complete and current
  std::vector<Stage> invalidated;   // complete stages whose inputs changed
};

/// Checks every completed stage's artifacts against their recorded digests
/// (CorruptArtifact on mismatch), then returns the first stage that is
/// pending or whose input digest no longer matches.
ResumePoint resume_run(const RunManifest& manifest, const ArtifactStore& store, const StageSettings& settings);

}  // namespace peel
