#include "peel/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "peel/aggregation.hpp"
#include "peel/chain_io.hpp"
#include "peel/csv.hpp"
#include "peel/digest.hpp"
#include "peel/disagreement.hpp"
#include "peel/error.hpp"
#include "peel/fsutil.hpp"
#include "peel/log.hpp"
#include "peel/stages.hpp"
#include "peel/stats.hpp"
#include "peel/text.hpp"
#include "peel/topics.hpp"
#include "peel/transcript.hpp"

namespace peel {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Speakers
// ---------------------------------------------------------------------------

SpeakerDirectory SpeakerDirectory::from_csv(std::string_view text) {
  SpeakerDirectory dir;
  const auto rows = parse_csv(text);
  std::size_t line = 0;
  for (const auto& row : rows) {
    ++line;
    if (row.empty() || (row.size() == 1 && trim(row[0]).empty())) continue;
    if (line == 1 && !row.empty() && to_lower(trim(row[0])) == "speaker") continue;
    if (row.size() < 2) throw FormatError(line, "expected speaker,episode,profession,gender");
    SpeakerMeta meta;
    meta.name = std::string(trim(row[0]));
    const std::string episode(trim(row[1]));
    if (row.size() > 2 && !trim(row[2]).empty()) {
      meta.profession = profession_from_string(trim(row[2]));
      if (!meta.profession) throw FormatError(line, "unknown profession '" + row[2] + "'");
    }
    if (row.size() > 3 && !trim(row[3]).empty()) {
      const auto g = gender_from_string(trim(row[3]));
      if (!g) throw FormatError(line, "unknown gender '" + row[3] + "'");
      meta.gender = *g;
    }
    if (meta.name.empty()) throw FormatError(line, "empty speaker name");
    if (episode.empty()) {
      dir.any_[meta.name] = meta;
    } else {
      dir.by_episode_[{episode, meta.name}] = meta;
    }
  }
  return dir;
}

SpeakerMeta SpeakerDirectory::lookup(const std::string& episode, const std::string& name) const {
  if (auto it = by_episode_.find({episode, name}); it != by_episode_.end()) return it->second;
  // split episodes "<ep>#k" inherit the parent's entries
  if (auto hash = episode.find('#'); hash != std::string::npos) {
    if (auto it = by_episode_.find({episode.substr(0, hash), name}); it != by_episode_.end()) return it->second;
  }
  if (auto it = any_.find(name); it != any_.end()) return it->second;
  SpeakerMeta meta;
  meta.name = name;
  return meta;
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads. The exception of the
// lowest failing index is rethrown after all threads finish.
template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& fn) {
  if (n == 0) return;
  workers = std::clamp<std::size_t>(workers, 1, n);
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n && !failed; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
            failed = true;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string file_slug(const std::string& name) {
  std::string s = slugify(name);
  return s.empty() ? "x" : s;
}

bool valid_run_id(const std::string& id) {
  if (id.empty() || id.size() > 128 || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '_' || c == '.';
  });
}

std::string short_hash(const std::string& hex, std::size_t n = 12) { return hex.substr(0, n); }

// Statistic that may fail on degenerate input: the value, or the error.
template <typename F>
json guarded(F&& fn) {
  try {
    return fn();
  } catch (const InputError& e) {
    return {{"error", e.what()}};
  }
}

// By value: range-for over a reference into a temporary document dangles.
json member(json doc, const char* key) { return std::move(doc.at(key)); }

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct Corpus {
  std::vector<ReasoningChain> chains;
  std::vector<std::size_t> index_in_file;  // 1-based chain index per speaker file
  std::map<std::string, std::size_t> by_conclusion;

  const ReasoningChain& chain_for(const std::string& key) const {
    auto it = by_conclusion.find(key);
    if (it == by_conclusion.end()) throw CorruptArtifact("no chain holds conclusion " + key);
    return chains[it->second];
  }
};

Corpus load_corpus(const ArtifactStore& store) {
  Corpus corpus;
  const json index = store.get_json("chains/index.json");
  for (const auto& entry : index.at("files")) {
    const json doc = store.get_json(entry.at("file").get<std::string>());
    std::size_t i = 0;
    for (const auto& c : doc.at("chains")) {
      ReasoningChain chain = chain_from_json(c);
      ++i;
      for (const auto& concl : chain.conclusions) {
        corpus.by_conclusion[conclusion_key(chain, i, concl)] = corpus.chains.size();
      }
      corpus.chains.push_back(std::move(chain));
      corpus.index_in_file.push_back(i);
    }
  }
  return corpus;
}

std::vector<ClassifiedConclusion> load_classified(const ArtifactStore& store) {
  std::vector<ClassifiedConclusion> out;
  for (const auto& c : member(store.get_json("classified/conclusions.json"), "conclusions")) {
    out.push_back(classified_from_json(c));
  }
  return out;
}

struct StoredReport {
  DisagreementReport report;
  EnsembleTaskRecord record;
};

std::vector<StoredReport> load_reports(const ArtifactStore& store) {
  std::vector<StoredReport> out;
  for (const auto& entry : member(store.get_json("disagreement/index.json"), "reports")) {
    if (!entry.contains("file")) continue;
    const json doc = store.get_json(entry.at("file").get<std::string>());
    out.push_back({report_from_json(doc.at("report")), record_from_json(doc.at("record"))});
  }
  return out;
}

void put_table(ArtifactStore& store, StageRecord& rec, const std::string& base, const json& doc,
               const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  rec.artifacts[base + ".json"] = store.put_json(base + ".json", doc);
  std::string csv = csv_row(header);
  for (const auto& r : rows) csv += csv_row(r);
  rec.artifacts[base + ".csv"] = store.put_text(base + ".csv", csv);
}

}  // namespace

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

Pipeline::Pipeline(fs::path runs_dir, std::string run_id, PipelineConfig config)
    : runs_dir_(std::move(runs_dir)), config_(std::move(config)) {
  config_.ensemble.check();
  if (!valid_run_id(run_id)) throw UsageError("invalid run id '" + run_id + "'");
  const fs::path manifest_path = runs_dir_ / run_id / "manifest.json";
  if (fs::exists(manifest_path)) {
    try {
      manifest_ = RunManifest::from_json(json::parse(read_file(manifest_path)));
    } catch (const json::parse_error& e) {
      throw CorruptArtifact(manifest_path.string() + ": " + e.what());
    }
    if (manifest_.run_id != run_id) throw CorruptArtifact("manifest run id does not match its directory");
  } else {
    manifest_.run_id = run_id;
    manifest_.created_at = config_.ensemble.clock();
  }
  store_.emplace(run_dir());
  save_manifest();
}

std::string Pipeline::default_run_id(const std::vector<fs::path>& transcripts, const PipelineConfig& config) {
  json inputs = json::array();
  for (const auto& p : transcripts) inputs.push_back(sha256_hex(read_file(p)));
  return "run-" + short_hash(digest_json({{"inputs", inputs},
                                          {"models", config.ensemble.models()},
                                          {"backend", config.backend_settings}}));
}

void Pipeline::set_inputs(std::vector<fs::path> transcripts) { inputs_ = std::move(transcripts); }

StageSettings Pipeline::settings() const {
  StageSettings s;
  const auto& ens = config_.ensemble;
  const json backend = {{"models", ens.models()},
                        {"backend", config_.backend_settings},
                        {"temperature", ens.params.temperature},
                        {"max_tokens", ens.params.max_tokens}};
  auto llm = [&](TaskKind kind, json extra = json::object()) {
    extra["prompt_version"] = ens.prompt_version(kind);
    extra["backend"] = backend;
    return digest_json(extra);
  };
  if (!inputs_.empty()) {
    json files = json::array();
    for (const auto& p : inputs_) {
      files.push_back({{"name", p.filename().string()}, {"sha256", sha256_hex(read_file(p))}});
    }
    s[Stage::Ingest] = digest_json(files);
  } else if (auto it = manifest_.settings.find(Stage::Ingest); it != manifest_.settings.end()) {
    s[Stage::Ingest] = it->second;
  }
  s[Stage::Segment] = llm(TaskKind::Segment);
  s[Stage::Summarize] = llm(TaskKind::Summarize);
  s[Stage::Extract] = llm(TaskKind::Extract, {{"speakers", config_.speakers_digest}});
  s[Stage::Classify] =
      llm(TaskKind::ClassifyTopicAttitude, {{"seed", sha256_hex(embedded_resource("data/topics_seed.json"))}});
  s[Stage::Pairs] = digest_json({{"topics", config_.topics}});
  json precedence = json::array();
  for (auto t : DtypeRule{}.precedence) precedence.push_back(to_string(t));
  s[Stage::Disagree] = llm(TaskKind::Disagree, {{"dtype_precedence", precedence}});
  s[Stage::Aggregate] = llm(TaskKind::AggregateClassify, {{"themes", config_.themes_digest}});
  s[Stage::Stats] = digest_json({{"stats", 1}});
  s[Stage::Report] = digest_json({{"weights", config_.reliability_weights}});
  return s;
}

ResumePoint Pipeline::status() const { return resume_run(manifest_, *store_, settings()); }

void Pipeline::save_manifest() {
  const StageSettings s = settings();
  json all = json::object();
  for (const auto& [stage, digest] : s) all[std::string(to_string(stage))] = digest;
  manifest_.config_digest = digest_json(all);
  for (TaskKind k : {TaskKind::Segment, TaskKind::Summarize, TaskKind::Extract, TaskKind::ClassifyTopicAttitude,
                     TaskKind::Disagree, TaskKind::AggregateClassify}) {
    manifest_.prompt_versions[std::string(to_string(k))] = config_.ensemble.prompt_version(k);
  }
  write_file_atomic(run_dir() / "manifest.json", manifest_.to_json().dump(2) + "\n");
  write_file_atomic(runs_dir_ / "LATEST", manifest_.run_id + "\n");
}

void Pipeline::fork(const std::vector<Stage>& invalidated, const std::string& reason_digest) {
  RunManifest next = manifest_;
  next.parent_run = manifest_.run_id;
  next.run_id = manifest_.run_id + "-" + short_hash(reason_digest, 8);
  const fs::path next_dir = runs_dir_ / next.run_id;
  log_info("inputs changed; continuing in run " + next.run_id);
  if (fs::exists(next_dir / "manifest.json")) {
    manifest_ = RunManifest::from_json(json::parse(read_file(next_dir / "manifest.json")));
    store_.emplace(run_dir());
    save_manifest();
    return;
  }
  for (Stage s : invalidated) {
    next.stages.erase(s);
    if (s == Stage::Classify) next.classification_order.clear();
    if (s == Stage::Aggregate) next.assignment_order.clear();
  }
  for (const auto& [stage, rec] : next.stages) {
    for (const auto& [path, digest] : rec.artifacts) {
      const fs::path to = next_dir / path;
      fs::create_directories(to.parent_path());
      fs::copy_file(run_dir() / path, to, fs::copy_options::overwrite_existing);
    }
  }
  next.created_at = config_.ensemble.clock();
  manifest_ = std::move(next);
  store_.emplace(run_dir());
  save_manifest();
}

void Pipeline::ensure_ready(Stage stage) {
  const ResumePoint point = resume_run(manifest_, *store_, settings());
  for (Stage in : stage_inputs(stage)) {
    if (!manifest_.complete(in)) {
      throw UsageError("stage '" + std::string(to_string(stage)) + "' needs the output of '" +
                       std::string(to_string(in)) + "'; run '" + std::string(to_string(in)) + "' first");
    }
    if (std::find(point.invalidated.begin(), point.invalidated.end(), in) != point.invalidated.end()) {
      throw UsageError("stage '" + std::string(to_string(in)) + "' is out of date; rerun from '" +
                       std::string(to_string(*point.next)) + "'");
    }
  }
}

bool Pipeline::run(Stage stage) {
  if (stage == Stage::Ingest && inputs_.empty() && !manifest_.complete(Stage::Ingest)) {
    throw UsageError("ingest needs at least one transcript (--input)");
  }
  ensure_ready(stage);
  const StageSettings current = settings();
  std::string digest = stage_input_digest(stage, manifest_, current);
  if (manifest_.complete(stage)) {
    if (manifest_.stages.at(stage).input_digest == digest) {
      log_info(std::string(to_string(stage)) + " is up to date");
      return false;
    }
    std::vector<Stage> invalid{stage};
    for (Stage d : downstream_of(stage)) invalid.push_back(d);
    fork(invalid, digest);
    digest = stage_input_digest(stage, manifest_, current);
    if (manifest_.complete(stage) && manifest_.stages.at(stage).input_digest == digest) return false;
  }
  log_info("running stage " + std::string(to_string(stage)));
  StageRecord rec;
  rec.input_digest = digest;
  switch (stage) {
    case Stage::Ingest: do_ingest(rec); break;
    case Stage::Segment: do_segment(rec); break;
    case Stage::Summarize: do_summarize(rec); break;
    case Stage::Extract: do_extract(rec); break;
    case Stage::Classify: do_classify(rec); break;
    case Stage::Pairs: do_pairs(rec); break;
    case Stage::Disagree: do_disagree(rec); break;
    case Stage::Aggregate: do_aggregate(rec); break;
    case Stage::Stats: do_stats(rec); break;
    case Stage::Report: do_report(rec); break;
  }
  rec.complete = true;
  rec.completed_at = config_.ensemble.clock();
  manifest_.stages[stage] = std::move(rec);
  if (auto it = current.find(stage); it != current.end()) manifest_.settings[stage] = it->second;
  save_manifest();
  return true;
}

std::vector<Stage> Pipeline::run_all() {
  std::vector<Stage> ran;
  for (Stage s : kStages) {
    if (run(s)) ran.push_back(s);
  }
  return ran;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

void Pipeline::do_ingest(StageRecord& rec) {
  std::vector<Transcript> all;
  for (const auto& path : inputs_) {
    for (auto& part : split_sequential_interviews(ingest_transcript(path))) all.push_back(std::move(part));
  }
  std::sort(all.begin(), all.end(), [](const Transcript& a, const Transcript& b) { return a.episode < b.episode; });
  std::set<std::string> slugs;
  json index = json::array();
  for (const auto& t : all) {
    const std::string slug = file_slug(t.episode);
    if (!slugs.insert(slug).second) throw UsageError("two transcripts map to episode id '" + t.episode + "'");
    const std::string rel = "transcripts/" + slug + ".json";
    rec.artifacts[rel] = store_->put_json(rel, to_json(t));
    index.push_back({{"episode", t.episode}, {"file", rel}, {"turns", t.turns.size()}});
  }
  rec.artifacts["transcripts/index.json"] = store_->put_json("transcripts/index.json", {{"episodes", index}});
}

namespace {

std::vector<Transcript> load_transcripts(const ArtifactStore& store) {
  std::vector<Transcript> out;
  for (const auto& e : member(store.get_json("transcripts/index.json"), "episodes")) {
    out.push_back(transcript_from_json(store.get_json(e.at("file").get<std::string>())));
  }
  return out;
}

}  // namespace

void Pipeline::do_segment(StageRecord& rec) {
  const auto transcripts = load_transcripts(*store_);
  std::vector<SegmentResult> results(transcripts.size());
  parallel_for(transcripts.size(), config_.parallel,
               [&](std::size_t i) { results[i] = segment_transcript(transcripts[i], config_.ensemble); });
  for (std::size_t i = 0; i < transcripts.size(); ++i) {
    const std::string rel = "segments/" + file_slug(transcripts[i].episode) + ".json";
    rec.artifacts[rel] = store_->put_json(rel, {{"episode", transcripts[i].episode},
                                                {"segments", to_json(results[i].segments)},
                                                {"record", to_json(results[i].record)}});
  }
}

void Pipeline::do_summarize(StageRecord& rec) {
  const auto transcripts = load_transcripts(*store_);
  struct Job {
    std::size_t transcript;
    std::string speaker;
  };
  std::vector<std::vector<Segment>> segments;
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < transcripts.size(); ++i) {
    const json doc = store_->get_json("segments/" + file_slug(transcripts[i].episode) + ".json");
    segments.push_back(segments_from_json(doc.at("segments")));
    for (const auto& sp : speakers_of(transcripts[i])) jobs.push_back({i, sp});
  }
  std::vector<std::optional<SummaryResult>> results(jobs.size());
  parallel_for(jobs.size(), config_.parallel, [&](std::size_t j) {
    try {
      results[j] = summarize_speaker(transcripts[jobs[j].transcript], segments[jobs[j].transcript], jobs[j].speaker,
                                     config_.ensemble);
    } catch (const EmptyInput& e) {
      log_warn(transcripts[jobs[j].transcript].episode + "/" + jobs[j].speaker + ": " + e.what());
    }
  });
  json index = json::array();
  std::set<std::string> used;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    if (!results[j]) continue;
    const auto& t = transcripts[jobs[j].transcript];
    std::string rel = "summaries/" + file_slug(t.episode) + "/" + file_slug(jobs[j].speaker) + ".json";
    if (!used.insert(rel).second) {
      rel = "summaries/" + file_slug(t.episode) + "/" + file_slug(jobs[j].speaker) + "-" +
            short_hash(sha256_hex(jobs[j].speaker), 8) + ".json";
      used.insert(rel);
    }
    rec.artifacts[rel] =
        store_->put_json(rel, {{"summary", to_json(results[j]->summary)}, {"record", to_json(results[j]->record)}});
    index.push_back({{"episode", t.episode}, {"speaker", jobs[j].speaker}, {"file", rel}});
  }
  rec.artifacts["summaries/index.json"] = store_->put_json("summaries/index.json", {{"summaries", index}});
}

void Pipeline::do_extract(StageRecord& rec) {
  std::vector<SpeakerSummary> summaries;
  std::vector<std::string> files;
  for (const auto& e : member(store_->get_json("summaries/index.json"), "summaries")) {
    files.push_back(e.at("file").get<std::string>());
    summaries.push_back(summary_from_json(store_->get_json(files.back()).at("summary")));
  }
  std::vector<std::optional<ExtractionResult>> results(summaries.size());
  parallel_for(summaries.size(), config_.parallel, [&](std::size_t i) {
    if (trim(summaries[i].text).empty()) return;
    const SpeakerMeta meta = config_.speakers.lookup(summaries[i].episode, summaries[i].speaker);
    results[i] = extract_reasoning(summaries[i], meta, config_.ensemble);
  });
  json index = json::array();
  json skipped = json::array();
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    if (!results[i]) {
      skipped.push_back({{"episode", summaries[i].episode}, {"speaker", summaries[i].speaker}});
      continue;
    }
    const std::string rel = "chains/" + files[i].substr(std::string("summaries/").size());
    rec.artifacts[rel] = store_->put_json(rel, {{"episode", summaries[i].episode},
                                                {"speaker", summaries[i].speaker},
                                                {"chains", member(chains_to_json(results[i]->chains), "chains")},
                                                {"record", to_json(results[i]->record)}});
    index.push_back({{"episode", summaries[i].episode},
                     {"speaker", summaries[i].speaker},
                     {"file", rel},
                     {"chains", results[i]->chains.size()}});
  }
  rec.artifacts["chains/index.json"] =
      store_->put_json("chains/index.json", {{"files", index}, {"skipped_empty_summary", skipped}});
}

void Pipeline::do_classify(StageRecord& rec) {
  const Corpus corpus = load_corpus(*store_);
  TopicList topics = TopicList::seeded();
  json conclusions = json::array();
  json records = json::array();
  std::vector<std::string> order;
  // One conclusion at a time: each vote sees the list as left by the previous one.
  for (std::size_t i = 0; i < corpus.chains.size(); ++i) {
    const auto& chain = corpus.chains[i];
    for (const auto& c : chain.conclusions) {
      const ConclusionInput in = conclusion_input(chain, corpus.index_in_file[i], c);
      ClassificationResult r = assign_topic_attitude(in, topics, config_.ensemble);
      order.push_back(in.key);
      conclusions.push_back(to_json(r.classified));
      records.push_back(to_json(r.record));
    }
  }
  rec.artifacts["classified/conclusions.json"] =
      store_->put_json("classified/conclusions.json", {{"conclusions", conclusions}});
  rec.artifacts["classified/topics.json"] = store_->put_json("classified/topics.json", topics.to_json());
  rec.artifacts["classified/records.json"] = store_->put_json("classified/records.json", {{"records", records}});
  manifest_.classification_order = std::move(order);
}

void Pipeline::do_pairs(StageRecord& rec) {
  const auto classified = load_classified(*store_);
  const TopicList topics = TopicList::from_json(store_->get_json("classified/topics.json"));
  std::vector<const TopicEntry*> selected;
  if (config_.topics.empty()) {
    for (const auto& e : topics.entries()) {
      if (e.label != kNonAiTopic) selected.push_back(&e);
    }
  } else {
    for (const auto& want : config_.topics) {
      const TopicEntry* e = topics.find_id(want);
      if (!e) e = topics.find_label(want);
      if (!e) throw UsageError("unknown topic '" + want + "'");
      if (std::find(selected.begin(), selected.end(), e) == selected.end()) selected.push_back(e);
    }
  }
  json out = json::array();
  std::size_t total = 0;
  for (const TopicEntry* e : selected) {
    std::size_t optimistic = 0, pessimistic = 0;
    for (const auto& c : classified) {
      if (c.topic_id != e->topic_id || !c.is_ai_risk) continue;
      optimistic += c.attitude == Attitude::Optimistic;
      pessimistic += c.attitude == Attitude::Pessimistic;
    }
    json pairs = json::array();
    for (const auto& p : enumerate_pairs(e->topic_id, classified)) {
      pairs.push_back({{"boomer", p.boomer_key}, {"doomer", p.doomer_key}, {"pair_key", p.pair_key()}});
    }
    total += pairs.size();
    out.push_back({{"topic_id", e->topic_id},
                   {"label", e->label},
                   {"optimistic", optimistic},
                   {"pessimistic", pessimistic},
                   {"pair_count", pairs.size()},
                   {"pairs", pairs}});
  }
  rec.artifacts["pairs/pairs.json"] = store_->put_json("pairs/pairs.json", {{"topics", out}, {"total_pairs", total}});
}

void Pipeline::do_disagree(StageRecord& rec) {
  const Corpus corpus = load_corpus(*store_);
  std::vector<ChainPair> pairs;
  for (const auto& t : member(store_->get_json("pairs/pairs.json"), "topics")) {
    for (const auto& p : t.at("pairs")) {
      pairs.push_back({t.at("topic_id").get<std::string>(), p.at("boomer").get<std::string>(),
                       p.at("doomer").get<std::string>()});
    }
  }
  std::vector<std::optional<DisagreementResult>> results(pairs.size());
  std::vector<std::string> failures(pairs.size());
  parallel_for(pairs.size(), config_.parallel, [&](std::size_t i) {
    try {
      results[i] = analyze_pair(pairs[i], corpus.chain_for(pairs[i].boomer_key), corpus.chain_for(pairs[i].doomer_key),
                                config_.ensemble);
    } catch (const MalformedOutput& e) {
      failures[i] = e.what();
      log_warn("pair " + pairs[i].pair_key() + ": " + e.what());
    }
  });
  json index = json::array();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    json entry = {{"topic_id", pairs[i].topic_id}, {"pair_key", pairs[i].pair_key()}};
    if (results[i]) {
      const std::string rel = "disagreement/" + file_slug(pairs[i].topic_id) + "/" + pairs[i].pair_key() + ".json";
      rec.artifacts[rel] =
          store_->put_json(rel, {{"report", to_json(results[i]->report)}, {"record", to_json(results[i]->record)}});
      entry["file"] = rel;
    } else {
      entry["error"] = failures[i];
    }
    index.push_back(entry);
  }
  rec.artifacts["disagreement/index.json"] = store_->put_json("disagreement/index.json", {{"reports", index}});
}

void Pipeline::do_aggregate(StageRecord& rec) {
  const Corpus corpus = load_corpus(*store_);
  const auto reports = load_reports(*store_);
  ConflictMap map;
  json records = json::array();
  std::vector<std::string> order;
  std::size_t with_root = 0;
  for (const auto& stored : reports) {
    const auto& r = stored.report;
    const Divergence* root = r.root_divergence();
    if (!r.is_disagreement || !root) continue;
    ++with_root;
    if (root->dtype != PremiseType::Causal) continue;
    const DivergenceInput in = root_divergence_input(r, corpus.chain_for(r.pair.boomer_key),
                                                     corpus.chain_for(r.pair.doomer_key));
    AssignmentResult a = classify_divergence(in, map, config_.ensemble);
    order.push_back(in.key);
    records.push_back(to_json(a.record));
  }
  json rate = guarded([&] { return json(consistency_rate(map)); });
  rec.artifacts["aggregation/conflict_map.json"] = store_->put_json("aggregation/conflict_map.json", map.to_json());
  rec.artifacts["aggregation/records.json"] = store_->put_json("aggregation/records.json", {{"records", records}});
  rec.artifacts["aggregation/summary.json"] =
      store_->put_json("aggregation/summary.json", {{"root_divergences", with_root},
                                                    {"causal_roots", order.size()},
                                                    {"questions", map.questions().size()},
                                                    {"consistency_rate", rate}});
  if (config_.themes) {
    const ThemeReport tr = theme_report(map, *config_.themes);
    rec.artifacts["aggregation/themes.json"] = store_->put_json("aggregation/themes.json", to_json(tr));
    rec.artifacts["aggregation/themes.csv"] = store_->put_text("aggregation/themes.csv", theme_report_csv(tr));
  }
  manifest_.assignment_order = std::move(order);
}

namespace {

json z_tests_json(const CompositionSummary& comp) {
  json by_type = json::object();
  for (auto t : kPremiseTypes) {
    const std::size_t x1 = comp.implicit_counts[index_of(t)];
    const std::size_t n1 = comp.type_counts[index_of(t)];
    std::size_t x2 = 0, n2 = 0;
    for (auto o : kPremiseTypes) {
      if (o == t) continue;
      x2 += comp.implicit_counts[index_of(o)];
      n2 += comp.type_counts[index_of(o)];
    }
    json res = guarded([&] { return to_json(two_prop_z(x1, n1, x2, n2)); });
    res["implicit"] = x1;
    res["total"] = n1;
    res["other_implicit"] = x2;
    res["other_total"] = n2;
    by_type[std::string(to_string(t))] = res;
  }
  return {{"hypothesis", "implicit share of the type exceeds that of all other types"}, {"by_type", by_type}};
}

json root_block(const std::vector<const StoredReport*>& reports, const Corpus& corpus) {
  std::vector<DisagreementReport> rs;
  DivergencePairStats pair_stats;
  for (const auto* s : reports) {
    if (!s->report.is_disagreement || !s->report.root_divergence()) continue;
    rs.push_back(s->report);
    PairTypeCounts counts;
    counts.boomer = premise_type_counts(corpus.chain_for(s->report.pair.boomer_key));
    counts.doomer = premise_type_counts(corpus.chain_for(s->report.pair.doomer_key));
    pair_stats.pairs.push_back(counts);
  }
  json block = json::object();
  block["pairs"] = reports.size();
  block["disagreements"] = rs.size();
  block["actual"] = guarded([&] { return to_json(root_type_distribution(rs)); });
  json base = guarded([&] {
    const auto probs = base_probabilities(pair_stats);
    json b = json::object();
    for (auto t : kPremiseTypes) b[std::string(to_string(t))] = probs[index_of(t)];
    return b;
  });
  block["base_probability"] = base;
  block["chi_square"] = guarded([&]() -> json {
    if (rs.empty()) throw EmptyInput("no root divergences");
    const auto dist = root_type_distribution(rs);
    const auto probs = base_probabilities(pair_stats);
    std::vector<double> observed, expected;
    for (auto t : kPremiseTypes) {
      observed.push_back(static_cast<double>(dist.counts[index_of(t)]));
      expected.push_back(probs[index_of(t)]);
    }
    return to_json(chi_square_gof(observed, expected));
  });
  return block;
}

}  // namespace

void Pipeline::do_stats(StageRecord& rec) {
  const Corpus corpus = load_corpus(*store_);
  const auto classified = load_classified(*store_);
  const auto reports = load_reports(*store_);

  json composition = guarded([&] { return to_json(composition_summary(corpus.chains)); });
  json z = guarded([&] { return z_tests_json(composition_summary(corpus.chains)); });
  rec.artifacts["stats/composition.json"] = store_->put_json("stats/composition.json", composition);
  rec.artifacts["stats/z_tests.json"] = store_->put_json("stats/z_tests.json", z);

  std::vector<const StoredReport*> all;
  std::map<std::string, std::vector<const StoredReport*>> by_topic;
  for (const auto& s : reports) {
    all.push_back(&s);
    by_topic[s.report.pair.topic_id].push_back(&s);
  }
  json topics = json::object();
  for (const auto& [id, rs] : by_topic) topics[id] = root_block(rs, corpus);
  rec.artifacts["stats/root_divergence.json"] =
      store_->put_json("stats/root_divergence.json", {{"overall", root_block(all, corpus)}, {"by_topic", topics}});

  std::vector<ConclusionRecord> rows;
  for (const auto& c : classified) {
    rows.push_back({c.key, c.topic_label, c.attitude, c.is_ai_risk, &corpus.chain_for(c.key)});
  }
  rec.artifacts["stats/regression.csv"] = store_->put_text("stats/regression.csv", export_regression_csv(rows));
}

void Pipeline::do_report(StageRecord& rec) {
  auto& store = *store_;
  const auto classified = load_classified(store);
  const auto reports = load_reports(store);
  const TopicList topics = TopicList::from_json(store.get_json("classified/topics.json"));

  // Premise composition (mean shares per type, explicit and implicit parts).
  {
    const json comp = store.get_json("stats/composition.json");
    json doc = json::array();
    std::vector<std::vector<std::string>> rows;
    if (!comp.contains("error")) {
      for (auto t : kPremiseTypes) {
        const std::string name(to_string(t));
        const double all = comp.at("mean_type_share").at(name).get<double>();
        const double ex = comp.at("mean_explicit_type_share").at(name).get<double>();
        const double im = comp.at("mean_implicit_type_share").at(name).get<double>();
        doc.push_back({{"type", name}, {"share", all}, {"explicit_share", ex}, {"implicit_share", im}});
        rows.push_back({name, fmt_double(all), fmt_double(ex), fmt_double(im)});
      }
    }
    put_table(store, rec, "reports/composition", {{"rows", doc}, {"source", comp}},
              {"type", "share", "explicit_share", "implicit_share"}, rows);
  }

  // Attitude by topic over AI-risk conclusions.
  {
    json doc = json::array();
    std::vector<std::vector<std::string>> rows;
    for (const auto& e : topics.entries()) {
      if (e.label == kNonAiTopic) continue;
      std::array<std::size_t, 3> n{};
      for (const auto& c : classified) {
        if (c.topic_id == e.topic_id && c.is_ai_risk) ++n[static_cast<std::size_t>(c.attitude)];
      }
      const std::size_t total = n[0] + n[1] + n[2];
      doc.push_back({{"topic_id", e.topic_id},
                     {"label", e.label},
                     {"theme", e.theme},
                     {"optimistic", n[0]},
                     {"neutral", n[1]},
                     {"pessimistic", n[2]},
                     {"total", total}});
      rows.push_back({e.topic_id, e.label, e.theme, std::to_string(n[0]), std::to_string(n[1]), std::to_string(n[2]),
                      std::to_string(total)});
    }
    put_table(store, rec, "reports/attitude_by_topic", {{"rows", doc}},
              {"topic_id", "label", "theme", "optimistic", "neutral", "pessimistic", "total"}, rows);
  }

  // Actual root-divergence type shares against base probabilities.
  {
    const json rd = store.get_json("stats/root_divergence.json");
    json doc = json::array();
    std::vector<std::vector<std::string>> rows;
    auto add = [&](const std::string& scope, const json& block) {
      const json& actual = block.at("actual");
      const json& base = block.at("base_probability");
      if (actual.contains("error") || base.contains("error")) return;
      for (auto t : kPremiseTypes) {
        const std::string name(to_string(t));
        const auto count = actual.at("counts").at(name).get<std::size_t>();
        const double share = actual.at("probabilities").at(name).get<double>();
        const double bp = base.at(name).get<double>();
        doc.push_back({{"scope", scope}, {"type", name}, {"count", count}, {"actual", share}, {"base", bp}});
        rows.push_back({scope, name, std::to_string(count), fmt_double(share), fmt_double(bp)});
      }
    };
    add("all", rd.at("overall"));
    for (const auto& [id, block] : rd.at("by_topic").items()) add(id, block);
    put_table(store, rec, "reports/root_vs_base", {{"rows", doc}, {"chi_square", rd.at("overall").at("chi_square")}},
              {"scope", "type", "count", "actual", "base"}, rows);
  }

  // Theme distribution of causal questions (needs the human theme file).
  if (store.exists("aggregation/themes.json")) {
    const json th = store.get_json("aggregation/themes.json");
    rec.artifacts["reports/themes.json"] = store.put_json("reports/themes.json", th);
    rec.artifacts["reports/themes.csv"] = store.put_text("reports/themes.csv", store.get_text("aggregation/themes.csv"));
  }

  // Classification consistency.
  {
    const AgreementTable table = agreement_table(classified);
    rec.artifacts["reports/agreement_classification.json"] =
        store.put_json("reports/agreement_classification.json", to_json(table));
    rec.artifacts["reports/agreement_classification.csv"] =
        store.put_text("reports/agreement_classification.csv", agreement_table_csv(table));
  }

  // Disagreement and root consistency.
  {
    std::vector<DisagreementReport> rs;
    for (const auto& s : reports) rs.push_back(s.report);
    const DisagreementConsistency c = disagreement_consistency(rs);
    const json doc = to_json(c);
    std::vector<std::vector<std::string>> rows;
    auto row = [&](const char* block, const char* name, std::size_t k, std::size_t n) {
      rows.push_back({block, name, std::to_string(k), fmt_double(n ? static_cast<double>(k) / n : 0.0)});
    };
    row("disagreement_identification", "all_3_disagreement", c.all_disagree, c.pairs);
    row("disagreement_identification", "all_3_no_disagreement", c.all_no_disagreement, c.pairs);
    row("disagreement_identification", "partial_2_of_3", c.partial, c.pairs);
    row("root_identification", "three_way", c.root_three_way, c.disagreement_pairs);
    row("root_identification", "integrator_with_a_only", c.root_a_only, c.disagreement_pairs);
    row("root_identification", "integrator_with_b_only", c.root_b_only, c.disagreement_pairs);
    row("root_identification", "introduced_by_integrator", c.root_integrator_only, c.disagreement_pairs);
    put_table(store, rec, "reports/agreement_disagreement", doc, {"block", "row", "count", "share"}, rows);
  }

  // Per-stage R1/R2/R3 tallies and the weighted composite.
  {
    std::map<std::string, std::array<std::size_t, 4>> tally;
    auto count = [&](const json& record) {
      if (!record.contains("agreement") || record.at("agreement").is_null()) return;
      const auto outcome = agreement_from_string(record.at("agreement").get<std::string>());
      if (!outcome) return;
      ++tally[record.at("task_kind").get<std::string>()][static_cast<std::size_t>(*outcome)];
    };
    for (const auto& e : member(store.get_json("summaries/index.json"), "summaries")) {
      count(store.get_json(e.at("file").get<std::string>()).at("record"));
    }
    for (const auto& e : member(store.get_json("chains/index.json"), "files")) {
      count(store.get_json(e.at("file").get<std::string>()).at("record"));
    }
    for (const auto& r : member(store.get_json("classified/records.json"), "records")) count(r);
    for (const auto& s : reports) count(to_json(s.record));
    for (const auto& r : member(store.get_json("aggregation/records.json"), "records")) count(r);

    const auto& w = config_.reliability_weights;
    json doc = json::array();
    std::vector<std::vector<std::string>> rows;
    for (const auto& [kind, n] : tally) {
      const std::size_t r1 = n[0], r2a = n[1], r2b = n[2], r3 = n[3];
      const std::size_t total = r1 + r2a + r2b + r3;
      const double composite =
          total == 0 ? 0.0 : (w[0] * r3 + w[1] * (r2a + r2b) + w[2] * r1) / static_cast<double>(total);
      doc.push_back({{"task_kind", kind},
                     {"R3", r3},
                     {"R2_matches_a", r2a},
                     {"R2_matches_b", r2b},
                     {"R1", r1},
                     {"total", total},
                     {"composite", composite}});
      rows.push_back({kind, std::to_string(r3), std::to_string(r2a), std::to_string(r2b), std::to_string(r1),
                      std::to_string(total), fmt_double(composite)});
    }
    put_table(store, rec, "reports/stage_agreement",
              {{"rows", doc}, {"weights", {{"R3", w[0]}, {"R2", w[1]}, {"R1", w[2]}}}},
              {"task_kind", "R3", "R2_matches_a", "R2_matches_b", "R1", "total", "composite"}, rows);
  }
}

// ---------------------------------------------------------------------------

std::vector<ReasoningChain> load_chains(const fs::path& path) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::recursive_directory_iterator(path)) {
      if (!e.is_regular_file() || e.path().extension() != ".json") continue;
      if (e.path().filename() == "index.json") continue;
      if (e.path().filename().string().find(".tmp.") != std::string::npos) continue;
      files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::is_regular_file(path)) {
    files.push_back(path);
  } else {
    throw UsageError("no such chain file or directory: " + path.string());
  }
  std::vector<ReasoningChain> out;
  for (const auto& f : files) {
    json doc;
    try {
      doc = json::parse(read_file(f));
    } catch (const json::parse_error& e) {
      throw SchemaError(f.string() + ": " + e.what());
    }
    if (doc.is_object() && doc.contains("chains")) doc = doc.at("chains");
    for (auto& c : chains_from_json(doc)) out.push_back(std::move(c));
  }
  return out;
}

}  // namespace peel
