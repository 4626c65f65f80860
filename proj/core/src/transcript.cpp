#include "peel/transcript.hpp"

#include "peel/error.hpp"
#include "peel/fsutil.hpp"
#include "peel/text.hpp"

namespace peel {

using nlohmann::json;

namespace {

std::vector<std::string_view> split_lines(std::string_view content) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (end == content.size()) break;
    start = end + 1;
  }
  return lines;
}

Transcript parse_jsonl(std::string_view content, const std::string& episode) {
  Transcript t;
  t.episode = episode;
  const auto lines = split_lines(content);
  bool first = true;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (trim(lines[i]).empty()) continue;
    json doc;
    try {
      doc = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      throw FormatError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw FormatError(line_no, "expected a JSON object");
    const bool header = first && !doc.contains("speaker") && !doc.contains("text");
    first = false;
    if (header) {
      if (doc.contains("episode")) t.episode = doc.at("episode").get<std::string>();
      t.title = doc.value("title", "");
      t.sequential = doc.value("sequential", false);
      continue;
    }
    auto sp = doc.find("speaker");
    if (sp == doc.end() || !sp->is_string()) throw FormatError(line_no, "missing string field 'speaker'");
    auto tx = doc.find("text");
    if (tx == doc.end() || !tx->is_string()) throw FormatError(line_no, "missing string field 'text'");
    const std::string speaker(trim(sp->get<std::string>()));
    if (speaker.empty()) throw FormatError(line_no, "empty speaker name");
    t.turns.push_back({static_cast<int>(t.turns.size()) + 1, speaker, std::string(trim(tx->get<std::string>()))});
  }
  return t;
}

Transcript parse_prefixed(std::string_view content, const std::string& episode) {
  Transcript t;
  t.episode = episode;
  const auto lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const std::string_view line = trim(lines[i]);
    if (line.empty()) continue;
    if (t.turns.empty() && t.title.empty() && line.front() == '#') {
      t.title = std::string(trim(line.substr(1)));
      continue;
    }
    const std::size_t colon = line.find(':');
    const bool prefixed = colon != std::string_view::npos && colon > 0 && colon <= 60 &&
                          line.substr(0, colon).find_first_of("\"{[") == std::string_view::npos;
    if (prefixed) {
      const std::string speaker(trim(line.substr(0, colon)));
      if (speaker.empty()) throw FormatError(line_no, "empty speaker name");
      t.turns.push_back({static_cast<int>(t.turns.size()) + 1, speaker, std::string(trim(line.substr(colon + 1)))});
    } else if (!t.turns.empty()) {
      t.turns.back().text += ' ';
      t.turns.back().text += line;
    } else {
      throw FormatError(line_no, "expected 'SPEAKER: text'");
    }
  }
  return t;
}

}  // namespace

Transcript parse_transcript(std::string_view content, const std::string& default_episode) {
  const std::size_t first = content.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) throw EmptyTranscript();
  Transcript t = content[first] == '{' ? parse_jsonl(content, default_episode)
                                       : parse_prefixed(content, default_episode);
  if (t.turns.empty()) throw EmptyTranscript();
  return t;
}

Transcript ingest_transcript(const std::filesystem::path& path) {
  return parse_transcript(read_file(path), path.stem().string());
}

json to_json(const Transcript& t) {
  json turns = json::array();
  for (const auto& turn : t.turns) turns.push_back({{"n", turn.number}, {"speaker", turn.speaker}, {"text", turn.text}});
  return {{"episode", t.episode}, {"title", t.title}, {"sequential", t.sequential}, {"turns", turns}};
}

Transcript transcript_from_json(const json& doc) {
  try {
    Transcript t;
    t.episode = doc.at("episode").get<std::string>();
    t.title = doc.value("title", "");
    t.sequential = doc.value("sequential", false);
    int expected = 1;
    for (const auto& turn : doc.at("turns")) {
      Turn tu{turn.at("n").get<int>(), turn.at("speaker").get<std::string>(), turn.at("text").get<std::string>()};
      if (tu.number != expected++) throw SchemaError("transcript turns are not numbered consecutively from 1");
      t.turns.push_back(std::move(tu));
    }
    if (t.turns.empty()) throw EmptyTranscript();
    return t;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("transcript: ") + e.what());
  }
}

std::string render_turns(const std::vector<Turn>& turns) {
  std::string out;
  for (const auto& t : turns) {
    out += "[" + std::to_string(t.number) + "] " + t.speaker + ": " + t.text + "\n";
  }
  return out;
}

std::vector<Transcript> split_sequential_interviews(const Transcript& t) {
  if (!t.sequential || t.turns.empty()) return {t};
  const std::string host = t.turns.front().speaker;
  std::vector<Transcript> parts;
  std::string guest;
  auto open_block = [&] {
    Transcript part;
    part.episode = t.episode + "#" + std::to_string(parts.size() + 1);
    part.title = t.title;
    parts.push_back(std::move(part));
  };
  open_block();
  for (const auto& turn : t.turns) {
    if (turn.speaker != host) {
      if (guest.empty()) {
        guest = turn.speaker;
      } else if (turn.speaker != guest) {
        // The host's hand-over lines stay with the block they close.
        guest = turn.speaker;
        open_block();
      }
    }
    auto& cur = parts.back();
    cur.turns.push_back({static_cast<int>(cur.turns.size()) + 1, turn.speaker, turn.text});
  }
  return parts;
}

}  // namespace peel
