#include "peel/store.hpp"

#include <algorithm>

#include "peel/digest.hpp"
#include "peel/error.hpp"
#include "peel/fsutil.hpp"

namespace peel {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// ArtifactStore
// ---------------------------------------------------------------------------

ArtifactStore::ArtifactStore(fs::path root) : root_(std::move(root)) {}

namespace {

void check_relative(const std::string& rel) {
  const fs::path p(rel);
  if (rel.empty() || p.is_absolute()) throw UsageError("artifact path must be relative: " + rel);
  for (const auto& part : p) {
    if (part == "..") throw UsageError("artifact path escapes the run directory: " + rel);
  }
}

}  // namespace

std::string ArtifactStore::put_text(const std::string& rel, std::string_view text) {
  check_relative(rel);
  const fs::path path = root_ / rel;
  if (fs::exists(path)) {
    if (read_file(path) == text) return sha256_hex(text);
    throw WriteOnceViolation("artifact already written with different content: " + path.string());
  }
  write_file_atomic(path, text);
  return sha256_hex(text);
}

std::string ArtifactStore::put_json(const std::string& rel, const json& doc) { return put_text(rel, doc.dump(2) + "\n"); }

bool ArtifactStore::exists(const std::string& rel) const { return fs::is_regular_file(root_ / rel); }

std::string ArtifactStore::get_text(const std::string& rel) const {
  if (!exists(rel)) throw UsageError("missing artifact " + (root_ / rel).string());
  return read_file(root_ / rel);
}

json ArtifactStore::get_json(const std::string& rel) const {
  try {
    return json::parse(get_text(rel));
  } catch (const json::parse_error& e) {
    throw CorruptArtifact((root_ / rel).string() + ": " + e.what());
  }
}

std::string ArtifactStore::digest_of(const std::string& rel) const { return sha256_hex(get_text(rel)); }

std::vector<std::string> ArtifactStore::list(const std::string& rel_dir) const {
  std::vector<std::string> out;
  const fs::path dir = root_ / rel_dir;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.find(".tmp.") != std::string::npos) continue;
    out.push_back(fs::relative(entry.path(), root_).generic_string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

namespace {

constexpr std::array<std::string_view, 10> kStageNames = {"ingest", "segment", "summarize", "extract", "classify",
                                                          "pairs",  "disagree", "aggregate", "stats",  "report"};

}  // namespace

std::string_view to_string(Stage stage) noexcept { return kStageNames[static_cast<std::size_t>(stage)]; }

std::optional<Stage> stage_from_string(std::string_view text) noexcept {
  for (std::size_t i = 0; i < kStageNames.size(); ++i) {
    if (kStageNames[i] == text) return static_cast<Stage>(i);
  }
  return std::nullopt;
}

const std::vector<Stage>& stage_inputs(Stage stage) {
  static const std::map<Stage, std::vector<Stage>> inputs = {
      {Stage::Ingest, {}},
      {Stage::Segment, {Stage::Ingest}},
      {Stage::Summarize, {Stage::Ingest, Stage::Segment}},
      {Stage::Extract, {Stage::Summarize}},
      {Stage::Classify, {Stage::Extract}},
      {Stage::Pairs, {Stage::Classify}},
      {Stage::Disagree, {Stage::Extract, Stage::Classify, Stage::Pairs}},
      {Stage::Aggregate, {Stage::Extract, Stage::Disagree}},
      {Stage::Stats, {Stage::Extract, Stage::Classify, Stage::Disagree}},
      {Stage::Report,
       {Stage::Summarize, Stage::Extract, Stage::Classify, Stage::Disagree, Stage::Aggregate, Stage::Stats}},
  };
  return inputs.at(stage);
}

std::vector<Stage> downstream_of(Stage stage) {
  std::vector<Stage> out;
  std::vector<bool> hit(kStages.size(), false);
  hit[static_cast<std::size_t>(stage)] = true;
  for (Stage s : kStages) {
    if (s == stage) continue;
    for (Stage in : stage_inputs(s)) {
      if (hit[static_cast<std::size_t>(in)]) {
        hit[static_cast<std::size_t>(s)] = true;
        out.push_back(s);
        break;
      }
    }
  }
  return out;
}

std::string StageRecord::output_digest() const {
  json doc = json::object();
  for (const auto& [path, digest] : artifacts) doc[path] = digest;
  return digest_json(doc);
}

bool RunManifest::complete(Stage s) const {
  auto it = stages.find(s);
  return it != stages.end() && it->second.complete;
}

json RunManifest::to_json() const {
  json st = json::object();
  for (const auto& [stage, rec] : stages) {
    st[std::string(peel::to_string(stage))] = {{"complete", rec.complete},
                                               {"input_digest", rec.input_digest},
                                               {"output_digest", rec.output_digest()},
                                               {"artifacts", rec.artifacts},
                                               {"completed_at", rec.completed_at}};
  }
  json set = json::object();
  for (const auto& [stage, digest] : settings) set[std::string(peel::to_string(stage))] = digest;
  return {{"run_id", run_id},
          {"parent_run", parent_run.empty() ? json() : json(parent_run)},
          {"config_digest", config_digest},
          {"prompt_versions", prompt_versions},
          {"created_at", created_at},
          {"stages", st},
          {"settings", set},
          {"classification_order", classification_order},
          {"assignment_order", assignment_order}};
}

RunManifest RunManifest::from_json(const json& doc) {
  try {
    RunManifest m;
    m.run_id = doc.at("run_id").get<std::string>();
    if (doc.value("parent_run", json()).is_string()) m.parent_run = doc.at("parent_run").get<std::string>();
    m.config_digest = doc.value("config_digest", "");
    m.prompt_versions = doc.value("prompt_versions", std::map<std::string, std::string>{});
    m.created_at = doc.value("created_at", "");
    for (const auto& [name, rec] : doc.at("stages").items()) {
      const auto stage = stage_from_string(name);
      if (!stage) throw CorruptArtifact("manifest names unknown stage " + name);
      StageRecord r;
      r.complete = rec.at("complete").get<bool>();
      r.input_digest = rec.at("input_digest").get<std::string>();
      r.artifacts = rec.at("artifacts").get<std::map<std::string, std::string>>();
      r.completed_at = rec.value("completed_at", "");
      m.stages[*stage] = std::move(r);
    }
    if (doc.contains("settings")) {
      for (const auto& [name, digest] : doc.at("settings").items()) {
        const auto stage = stage_from_string(name);
        if (!stage) throw CorruptArtifact("manifest names unknown stage " + name);
        m.settings[*stage] = digest.get<std::string>();
      }
    }
    m.classification_order = doc.value("classification_order", std::vector<std::string>{});
    m.assignment_order = doc.value("assignment_order", std::vector<std::string>{});
    return m;
  } catch (const json::exception& e) {
    throw CorruptArtifact(std::string("manifest: ") + e.what());
  }
}

std::string stage_input_digest(Stage stage, const RunManifest& manifest, const StageSettings& settings) {
  json upstream = json::object();
  for (Stage in : stage_inputs(stage)) {
    auto it = manifest.stages.find(in);
    upstream[std::string(to_string(in))] =
        it != manifest.stages.end() && it->second.complete ? json(it->second.output_digest()) : json();
  }
  auto s = settings.find(stage);
  return digest_json({{"stage", to_string(stage)},
                      {"settings", s == settings.end() ? std::string() : s->second},
                      {"upstream", upstream}});
}

ResumePoint resume_run(const RunManifest& manifest, const ArtifactStore& store, const StageSettings& settings) {
  for (const auto& [stage, rec] : manifest.stages) {
    if (!rec.complete) continue;
    for (const auto& [path, digest] : rec.artifacts) {
      if (!store.exists(path)) {
        throw CorruptArtifact("stage " + std::string(to_string(stage)) + ": artifact missing: " + path);
      }
      if (store.digest_of(path) != digest) {
        throw CorruptArtifact("stage " + std::string(to_string(stage)) + ": digest mismatch for " + path);
      }
    }
  }
  ResumePoint point;
  for (Stage s : kStages) {
    if (!manifest.complete(s)) {
      point.next = s;
      break;
    }
    if (manifest.stages.at(s).input_digest != stage_input_digest(s, manifest, settings)) {
      point.next = s;
      point.invalidated.push_back(s);
      for (Stage d : downstream_of(s)) {
        if (manifest.complete(d)) point.invalidated.push_back(d);
      }
      break;
    }
  }
  return point;
}

}  // namespace peel
