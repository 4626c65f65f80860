#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace peel {

struct Turn {
  int number = 0;  // 1-based, consecutive
  std::string speaker;
  std::string text;

  friend bool operator==(const Turn&, const Turn&) = default;
};

struct Transcript {
  std::string episode;
  std::string title;
  std::vector<Turn> turns;
  // Several guests interviewed one after another by the same host.
  bool sequential = false;

  friend bool operator==(const Transcript&, const Transcript&) = default;
};

/// Two formats:
///  - JSON lines, one {"speaker", "text"} object per turn. An optional first
///    line {"episode", "title", "sequential"} without a speaker is a header.
///  - Plain text, one `SPEAKER: text` turn per line; lines without a prefix
///    continue the previous turn; a leading `# title` line names the episode.
/// The format is sniffed from the first non-blank character. The episode id
/// defaults to the file stem. Throws FormatError (with line number) or
/// EmptyTranscript.
Transcript ingest_transcript(const std::filesystem::path& path);
Transcript parse_transcript(std::string_view content, const std::string& default_episode);

nlohmann::json to_json(const Transcript& t);
Transcript transcript_from_json(const nlohmann::json& doc);

/// Turns rendered as "[n] SPEAKER: text" lines.
std::string render_turns(const std::vector<Turn>& turns);

/// Splits a sequential-interview transcript into one transcript per guest.
/// The host is the first speaker; a block runs until a speaker other than
/// the host and the block's guest talks. Blocks are renumbered from 1 and
/// get episode ids "<episode>#<k>". Non-sequential transcripts come back as is.
std::vector<Transcript> split_sequential_interviews(const Transcript& t);

}  // namespace peel
