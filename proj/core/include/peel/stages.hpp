#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "peel/chain.hpp"
#include "peel/ensemble.hpp"
#include "peel/transcript.hpp"

namespace peel {

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

struct Segment {
  std::string summary;
  int start_turn = 1;
  int end_turn = 1;

  friend bool operator==(const Segment&, const Segment&) = default;
};

nlohmann::json to_json(const std::vector<Segment>& segments);
std::vector<Segment> segments_from_json(const nlohmann::json& doc);

/// Segments must be ordered, non-overlapping ranges inside [1, turn_count]
/// with start <= end. Returns the violated rule, or empty when fine.
std::string segment_problem(const std::vector<Segment>& segments, int turn_count);

struct SegmentResult {
  std::vector<Segment> segments;
  EnsembleTaskRecord record;
};

/// Single-model stage on the integrator backend. Throws EmptyTranscript or
/// MalformedOutput.
SegmentResult segment_transcript(const Transcript& transcript, const EnsembleConfig& config);

// ---------------------------------------------------------------------------
// Summarization
// ---------------------------------------------------------------------------

struct SpeakerSummary {
  std::string episode;
  std::string speaker;
  std::string text;  // empty: nothing about AI was said
  bool needs_review = false;

  friend bool operator==(const SpeakerSummary&, const SpeakerSummary&) = default;
};

nlohmann::json to_json(const SpeakerSummary& s);
SpeakerSummary summary_from_json(const nlohmann::json& doc);

struct SummaryResult {
  SpeakerSummary summary;
  EnsembleTaskRecord record;
};

/// Speakers in order of first appearance.
std::vector<std::string> speakers_of(const Transcript& transcript);

/// Each worker summarizes every segment the speaker talks in, and its
/// per-segment summaries are joined; the integrator then writes the final
/// summary from the whole conversation and both drafts. Throws EmptyInput
/// when the speaker appears in no segment.
SummaryResult summarize_speaker(const Transcript& transcript, const std::vector<Segment>& segments,
                                const std::string& speaker, const EnsembleConfig& config);

// ---------------------------------------------------------------------------
// Reasoning extraction
// ---------------------------------------------------------------------------

struct ExtractionResult {
  std::vector<ReasoningChain> chains;
  EnsembleTaskRecord record;
};

/// Parses an extraction payload {"chains": [...]} into chains attributed to
/// `speaker` and `episode`. Throws the chain parsing errors.
std::vector<ReasoningChain> chains_from_payload(const nlohmann::json& payload, const SpeakerMeta& speaker,
                                                const std::string& episode);

/// Checks applied to every extraction reply: schema first, then V1-V3 and
/// V7-V8 of the validator.
PayloadCheck check_extraction_payload(const nlohmann::json& payload);

/// Chains extracted from one summary, in payload order; structural
/// equality modulo glosses decides worker agreement. Throws EmptyInput for
/// an empty summary, MalformedOutput, BackendError.
ExtractionResult extract_reasoning(const SpeakerSummary& summary, const SpeakerMeta& speaker,
                                   const EnsembleConfig& config);

bool extraction_payloads_equivalent(const nlohmann::json& a, const nlohmann::json& b);

}  // namespace peel
