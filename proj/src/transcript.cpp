#include "adaptest/transcript.hpp"

#include <fstream>

namespace adaptest {

using nlohmann::json;

namespace {

Event served_event(const SessionState& state) {
  return {{"event", "item_served"},
          {"position", state.next_position()},
          {"item_id", *state.pending_item}};
}

Event completed_event(const SessionState& state) {
  return {{"event", "session_completed"}, {"score", score_to_json(final_score(state))}};
}

[[noreturn]] void diverged(const std::string& what) {
  throw Error(ErrorCode::validation, "transcript replay diverged: " + what);
}

}  // namespace

std::vector<Event> start_events(const SessionState& state) {
  json assignment = json::object();
  for (const auto& [pos, id] : state.unscored_assignment) assignment[std::to_string(pos)] = id;
  std::vector<Event> out;
  out.push_back({{"event", "session_started"},
                 {"session_id", state.session_id},
                 {"bank_id", state.bank_id},
                 {"config", config_to_json(state.config)},
                 {"prior", {{"mean", state.posterior.mean()}, {"sd", state.posterior.sd()}}},
                 {"unscored_assignment", assignment}});
  if (state.pending_item) out.push_back(served_event(state));
  return out;
}

std::vector<Event> answer_events(const SessionState& state) {
  if (state.administered.empty()) {
    throw Error(ErrorCode::invalid_argument, "no answer to record");
  }
  const auto& last = state.administered.back();
  std::vector<Event> out;
  out.push_back({{"event", "answer_submitted"},
                 {"position", state.administered.size()},
                 {"item_id", last.item_id},
                 {"selected_index", last.selected_index},
                 {"correct", last.correct},
                 {"scored", last.scored},
                 {"posterior_mean", state.posterior.mean()},
                 {"posterior_sd", state.posterior.sd()}});
  if (state.status == SessionStatus::completed) {
    out.push_back(completed_event(state));
  } else if (state.pending_item) {
    out.push_back(served_event(state));
  }
  return out;
}

std::vector<SessionState> replay_answers(const ItemBank& bank, const SessionConfig& config,
                                         const std::string& session_id,
                                         std::span<const AnswerRecord> answers) {
  std::vector<SessionState> trajectory;
  trajectory.push_back(start_session(bank, config, session_id));
  for (const auto& a : answers) {
    trajectory.push_back(submit_answer(trajectory.back(), bank, a.item_id, a.selected_index));
  }
  return trajectory;
}

SessionState replay_transcript(const ItemBank& bank, std::span<const Event> events) {
  if (events.empty() || events.front().value("event", "") != "session_started") {
    throw Error(ErrorCode::validation, "transcript must begin with session_started");
  }
  const Event& head = events.front();
  if (head.at("bank_id").get<std::string>() != bank.bank_id) {
    diverged("bank_id mismatch (" + head.at("bank_id").get<std::string>() + " vs " + bank.bank_id + ")");
  }
  SessionState state = start_session(bank, config_from_json(head.at("config")),
                                     head.at("session_id").get<std::string>());
  for (const auto& [pos, id] : head.at("unscored_assignment").items()) {
    auto it = state.unscored_assignment.find(std::stoul(pos));
    if (it == state.unscored_assignment.end() || it->second != id.get<std::string>()) {
      diverged("unscored assignment at position " + pos);
    }
  }
  if (head.at("unscored_assignment").size() != state.unscored_assignment.size()) {
    diverged("unscored assignment size");
  }

  for (std::size_t k = 1; k < events.size(); ++k) {
    const Event& e = events[k];
    const std::string kind = e.at("event").get<std::string>();
    if (kind == "item_served") {
      if (!state.pending_item || *state.pending_item != e.at("item_id").get<std::string>() ||
          state.next_position() != e.at("position").get<std::size_t>()) {
        diverged("served item at event " + std::to_string(k));
      }
    } else if (kind == "answer_submitted") {
      state = submit_answer(std::move(state), bank, e.at("item_id").get<std::string>(),
                            e.at("selected_index").get<int>());
      const auto& last = state.administered.back();
      if (last.correct != e.at("correct").get<bool>() || last.scored != e.at("scored").get<bool>() ||
          state.posterior.mean() != e.at("posterior_mean").get<double>() ||
          state.posterior.sd() != e.at("posterior_sd").get<double>()) {
        diverged("answer at event " + std::to_string(k));
      }
    } else if (kind == "session_completed") {
      if (final_score(state) != score_from_json(e.at("score"))) {
        diverged("final score");
      }
    } else {
      throw Error(ErrorCode::validation, "unknown transcript event '" + kind + "'");
    }
  }
  return state;
}

std::vector<Event> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  std::vector<Event> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error&) {
      // A torn final line from an interrupted write is dropped; anything
      // earlier is corruption.
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw Error(ErrorCode::validation, "malformed transcript line in '" + path.string() + "'");
    }
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, std::span<const Event> events) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io, "cannot write '" + path.string() + "'");
  for (const auto& e : events) out << e.dump() << '\n';
}

}  // namespace adaptest
