#pragma once

// JSON-lines session transcript: the event log written during administration
// and the replay that rebuilds a SessionState from it.
//
// Events, one JSON object per line, each with an "event" field:
//   session_started   session_id, bank_id, config, prior, unscored_assignment
//   item_served       position, item_id
//   answer_submitted  position, item_id, selected_index, correct, scored,
//                     posterior_mean, posterior_sd
//   session_completed score

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "adaptest/cat_engine.hpp"

namespace adaptest {

using Event = nlohmann::json;

/// session_started followed by item_served for the first item.
std::vector<Event> start_events(const SessionState& state);

/// answer_submitted for the latest answer, then item_served or
/// session_completed depending on the state after it.
std::vector<Event> answer_events(const SessionState& state);

struct AnswerRecord {
  std::string item_id;
  int selected_index = 0;
};

/// Drives a fresh session with the given answers; returns the state after
/// each answer (the first element is the state right after start).
std::vector<SessionState> replay_answers(const ItemBank& bank, const SessionConfig& config,
                                         const std::string& session_id,
                                         std::span<const AnswerRecord> answers);

/// Rebuilds the session from its event log and checks every logged value
/// (served items, correctness, posterior moments, final score) bit-exactly.
/// Throws Error(validation, ...) on the first divergence. A trailing partial
/// sequence (e.g. served but unanswered item) is accepted.
SessionState replay_transcript(const ItemBank& bank, std::span<const Event> events);

std::vector<Event> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, std::span<const Event> events);

}  // namespace adaptest
