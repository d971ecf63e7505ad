#include "adaptest/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <iterator>
#include <random>

#include <httplib.h>

#include "adaptest/error.hpp"

namespace adaptest {

using nlohmann::json;

namespace {

struct HttpError {
  int status;
  std::string code;
  std::string message;
};

ApiResponse error_response(int status, const std::string& code, const std::string& message) {
  return {status, {{"error", {{"code", code}, {"message", message}}}}};
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found: return 404;
    case ErrorCode::conflict: return 409;
    case ErrorCode::infeasible:
    case ErrorCode::invalid_argument: return 422;
    case ErrorCode::validation: return 400;
    case ErrorCode::numerical:
    case ErrorCode::io: return 500;
  }
  return 500;
}

std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::infeasible: return "infeasible";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::validation: return "bad_request";
    case ErrorCode::numerical: return "numerical";
    case ErrorCode::io: return "io";
  }
  return "internal";
}

template <typename F>
ApiResponse guarded(F&& f) {
  try {
    return f();
  } catch (const HttpError& e) {
    return error_response(e.status, e.code, e.message);
  } catch (const Error& e) {
    return error_response(status_for(e.code()), std::string(code_name(e.code())), e.what());
  } catch (const json::exception& e) {
    return error_response(400, "bad_request", std::string("malformed request: ") + e.what());
  }
}

json parse_body(const std::string& body) {
  json j = json::parse(body.empty() ? "{}" : body);
  if (!j.is_object()) throw HttpError{400, "bad_request", "request body must be a JSON object"};
  return j;
}

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::uint64_t random_u64() {
  static std::mutex mutex;
  static std::random_device device;
  std::lock_guard lock(mutex);
  return (static_cast<std::uint64_t>(device()) << 32) ^ device();
}

std::string new_session_id() {
  static const char* hex = "0123456789abcdef";
  std::string id;
  for (int w = 0; w < 2; ++w) {
    std::uint64_t x = random_u64();
    for (int i = 0; i < 16; ++i, x >>= 4) id.push_back(hex[x & 0xf]);
  }
  return id;
}

bool valid_session_id(const std::string& id) {
  return id.size() == 32 && id.find_first_not_of("0123456789abcdef") == std::string::npos;
}

void fsync_dir(const std::filesystem::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

// Appends whole lines and fsyncs before returning.
void durable_append(const std::filesystem::path& path, const std::string& data) {
  const bool created = !std::filesystem::exists(path);
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (fd < 0) throw Error(ErrorCode::io, "cannot open '" + path.string() + "': " + std::strerror(errno));
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string msg = std::strerror(errno);
      ::close(fd);
      throw Error(ErrorCode::io, "write to '" + path.string() + "' failed: " + msg);
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    throw Error(ErrorCode::io, "fsync of '" + path.string() + "' failed");
  }
  ::close(fd);
  if (created) fsync_dir(path.parent_path());
}

// Drops a partial final line left by an interrupted write so later appends
// start on a fresh line.
void truncate_torn_tail(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return;
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.empty() || data.back() == '\n') return;
  const auto last = data.rfind('\n');
  std::filesystem::resize_file(path, last == std::string::npos ? 0 : last + 1);
}

std::string lines_of(const std::vector<Event>& events) {
  std::string out;
  for (const auto& e : events) {
    out += e.dump();
    out += '\n';
  }
  return out;
}

bool constant_time_equal(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) return false;
  unsigned char diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff |= static_cast<unsigned char>(a[i] ^ b[i]);
  return diff == 0;
}

const std::set<std::string> kOverrideKeys = {"scored_length",     "covering_dimensions",
                                             "n_unscored_interleaved", "unscored_positions",
                                             "rng_seed",          "prior"};

}  // namespace

ServiceConfig load_service_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::validation, "service config is not valid JSON: " + std::string(e.what()));
  }
  const std::set<std::string> known = {"host", "port", "data_dir", "banks", "hidden_result_banks", "layout_seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw Error(ErrorCode::validation, "unknown service config key '" + key + "'");
  }
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };
  ServiceConfig c;
  try {
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.layout_seed = j.value("layout_seed", c.layout_seed);
    if (j.contains("data_dir")) c.data_dir = resolve(j.at("data_dir").get<std::string>());
    for (const auto& b : j.value("banks", std::vector<std::string>{})) c.banks.push_back(resolve(b));
    for (const auto& b : j.value("hidden_result_banks", std::vector<std::string>{})) c.hidden_result_banks.insert(b);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::validation, "invalid service config: " + std::string(e.what()));
  }
  if (const char* token = std::getenv(kAdminTokenEnv)) c.admin_token = token;
  return c;
}

json public_item_view(const Item& item, std::size_t position, std::size_t total_length) {
  return {{"item_id", item.item_id},
          {"stimulus", {{"image_ref", item.stimulus.image_ref}, {"alt_text", item.stimulus.alt_text}}},
          {"question", item.question},
          {"options", item.options},
          {"position", position},
          {"total_length", total_length}};
}

SessionService::SessionService(std::vector<ItemBank> banks, std::filesystem::path data_dir,
                               std::set<std::string> hidden_result_banks, std::string admin_token,
                               std::uint64_t layout_seed)
    : data_dir_(std::move(data_dir)),
      hidden_result_banks_(std::move(hidden_result_banks)),
      admin_token_(std::move(admin_token)),
      layout_seed_(layout_seed) {
  for (auto& b : banks) {
    const std::string id = b.bank_id;
    if (!banks_.emplace(id, std::move(b)).second) {
      throw Error(ErrorCode::validation, "duplicate bank_id '" + id + "'");
    }
  }
  std::filesystem::create_directories(data_dir_ / "sessions");
  restore();
}

void SessionService::restore() {
  const auto index = data_dir_ / "index.jsonl";
  if (!std::filesystem::exists(index)) return;
  truncate_torn_tail(index);
  for (const auto& entry : read_jsonl(index)) {
    const std::string id = entry.value("session_id", "");
    try {
      if (!valid_session_id(id)) throw Error(ErrorCode::validation, "invalid session id in index");
      const auto bank = banks_.find(entry.value("bank_id", ""));
      if (bank == banks_.end()) throw Error(ErrorCode::not_found, "bank not loaded");
      const auto log_path = data_dir_ / "sessions" / (id + ".jsonl");
      truncate_torn_tail(log_path);
      auto events = read_jsonl(log_path);
      auto session = std::make_shared<Session>(replay_transcript(bank->second, events));
      session->log_path = log_path;
      session->events = std::move(events);
      sessions_[id] = std::move(session);
    } catch (const std::exception& e) {
      restore_warnings_.push_back("session " + id + ": " + e.what());
    }
  }
}

std::shared_ptr<SessionService::Session> SessionService::find_session(const std::string& session_id) const {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(ErrorCode::not_found, "unknown session");
  return it->second;
}

const ItemBank& SessionService::bank_for(const SessionState& state) const { return banks_.at(state.bank_id); }

bool SessionService::admin_ok(const std::string& token) const {
  return !admin_token_.empty() && constant_time_equal(token, admin_token_);
}

json SessionService::progress(const SessionState& state) const {
  return {{"position", state.pending_item ? state.next_position() : state.administered.size()},
          {"answered", state.administered.size()},
          {"total", state.config.total_length()}};
}

json SessionService::current_view(const SessionState& state) const {
  if (!state.pending_item) return nullptr;
  return public_item_view(bank_for(state).at(*state.pending_item), state.next_position(),
                          state.config.total_length());
}

void SessionService::append(Session& session, const std::vector<Event>& events) {
  std::vector<Event> stamped = events;
  const auto ts = now_ms();
  for (auto& e : stamped) e["ts"] = ts;
  durable_append(session.log_path, lines_of(stamped));
  session.events.insert(session.events.end(), stamped.begin(), stamped.end());
}

ApiResponse SessionService::create_session(const std::string& body) {
  return guarded([&] {
    const json req = parse_body(body);
    if (!req.contains("bank_id") || !req.at("bank_id").is_string()) {
      throw HttpError{400, "bad_request", "bank_id is required"};
    }
    const auto bank_it = banks_.find(req.at("bank_id").get<std::string>());
    if (bank_it == banks_.end()) throw Error(ErrorCode::not_found, "unknown bank");
    const ItemBank& bank = bank_it->second;

    const json overrides = req.value("config_overrides", json::object());
    if (!overrides.is_object()) throw HttpError{400, "bad_request", "config_overrides must be an object"};
    for (const auto& [key, _] : overrides.items()) {
      if (!kOverrideKeys.count(key)) throw HttpError{400, "bad_request", "unknown config override '" + key + "'"};
    }
    const std::uint64_t seed =
        overrides.contains("rng_seed") ? overrides.at("rng_seed").get<std::uint64_t>() : random_u64();
    SessionConfig config = default_session_config(bank, layout_seed_);
    config.rng_seed = seed;
    if (overrides.contains("scored_length")) config.scored_length = overrides.at("scored_length").get<std::size_t>();
    if (overrides.contains("covering_dimensions")) {
      config.covering_dimensions = overrides.at("covering_dimensions").get<std::vector<std::string>>();
    }
    if (overrides.contains("n_unscored_interleaved")) {
      config.n_unscored_interleaved = overrides.at("n_unscored_interleaved").get<std::size_t>();
    }
    if (overrides.contains("unscored_positions")) {
      config.unscored_positions = overrides.at("unscored_positions").get<std::vector<std::size_t>>();
    } else if (overrides.contains("scored_length") || overrides.contains("n_unscored_interleaved")) {
      config.unscored_positions =
          draw_unscored_positions(config.total_length(), config.n_unscored_interleaved, layout_seed_);
    }
    if (overrides.contains("prior")) {
      const auto& p = overrides.at("prior");
      config.prior_override = ThetaPrior{p.at("mean").get<double>(), p.at("sd").get<double>()};
    }

    std::string id;
    {
      std::shared_lock lock(sessions_mutex_);
      do id = new_session_id();
      while (sessions_.count(id));
    }
    auto session = std::make_shared<Session>(start_session(bank, config, id));
    session->log_path = data_dir_ / "sessions" / (id + ".jsonl");
    append(*session, start_events(session->state));
    {
      std::lock_guard lock(index_mutex_);
      const json entry = {{"session_id", id}, {"bank_id", bank.bank_id}, {"created", now_ms()}};
      durable_append(data_dir_ / "index.jsonl", entry.dump() + "\n");
    }
    json out = {{"session_id", id}, {"item", current_view(session->state)}, {"progress", progress(session->state)}};
    {
      std::unique_lock lock(sessions_mutex_);
      sessions_[id] = std::move(session);
    }
    return ApiResponse{201, out};
  });
}

ApiResponse SessionService::get_session(const std::string& session_id) {
  return guarded([&] {
    const auto session = find_session(session_id);
    std::lock_guard lock(session->mutex);
    const auto& s = session->state;
    json out = {{"session_id", session_id},
                {"bank_id", s.bank_id},
                {"status", to_string(s.status)},
                {"progress", progress(s)}};
    if (s.pending_item) out["item"] = current_view(s);
    return ApiResponse{200, out};
  });
}

ApiResponse SessionService::submit_answer(const std::string& session_id, const std::string& body) {
  return guarded([&] {
    const json req = parse_body(body);
    if (!req.contains("item_id") || !req.at("item_id").is_string() || !req.contains("selected_index") ||
        !req.at("selected_index").is_number_integer()) {
      throw HttpError{400, "bad_request", "item_id and selected_index are required"};
    }
    const std::string item_id = req.at("item_id").get<std::string>();
    const int selected = req.at("selected_index").get<int>();
    std::optional<std::size_t> position;
    if (req.contains("position")) position = req.at("position").get<std::size_t>();

    const auto session = find_session(session_id);
    std::lock_guard lock(session->mutex);
    const SessionState& state = session->state;

    auto answer_body = [&](const SessionState& s) {
      json out = {{"status", to_string(s.status)}, {"progress", progress(s)}};
      if (s.pending_item) out["next_item"] = current_view(s);
      return out;
    };

    if (!state.pending_item || *state.pending_item != item_id) {
      // A retried delivery of the most recent answer gets the original reply.
      if (!state.administered.empty()) {
        const auto& last = state.administered.back();
        if (last.item_id == item_id && last.selected_index == selected &&
            (!position || *position == state.administered.size())) {
          return ApiResponse{200, answer_body(state)};
        }
      }
      if (state.status == SessionStatus::completed) throw Error(ErrorCode::conflict, "session is completed");
      throw Error(ErrorCode::conflict, "out-of-order answer");
    }
    if (position && *position != state.next_position()) throw Error(ErrorCode::conflict, "out-of-order answer");

    SessionState next = adaptest::submit_answer(state, bank_for(state), item_id, selected);
    append(*session, answer_events(next));
    session->state = std::move(next);
    return ApiResponse{200, answer_body(session->state)};
  });
}

ApiResponse SessionService::get_result(const std::string& session_id) {
  return guarded([&] {
    const auto session = find_session(session_id);
    std::lock_guard lock(session->mutex);
    const auto& s = session->state;
    if (hidden_result_banks_.count(s.bank_id)) {
      throw HttpError{403, "forbidden", "results are not shown for this test"};
    }
    if (s.status != SessionStatus::completed) throw Error(ErrorCode::conflict, "session not completed");
    const Score score = final_score(s);
    const ItemBank& bank = bank_for(s);
    json coverage = json::object();
    for (const auto& dim : s.config.covering_dimensions) {
      std::set<std::string> seen;
      for (const auto& a : s.administered) {
        if (!a.scored) continue;
        const auto& f = bank.at(a.item_id).features;
        if (const auto it = f.find(dim); it != f.end()) seen.insert(it->second);
      }
      std::vector<std::string> covered, uncovered;
      for (const auto& v : feature_values(bank, dim)) (seen.count(v) ? covered : uncovered).push_back(v);
      coverage[dim] = {{"covered", covered}, {"uncovered", uncovered}};
    }
    json out = {{"session_id", session_id},
                {"theta_mean", score.theta_mean},
                {"theta_se", score.theta_se},
                {"raw_correctness", score.raw_correctness},
                {"n_scored", score.n_scored},
                {"n_correct", score.n_correct},
                {"administered_count", s.administered.size()},
                {"coverage", coverage}};
    return ApiResponse{200, out};
  });
}

ApiResponse SessionService::list_banks(const std::string& token) const {
  if (!admin_ok(token)) return error_response(401, "unauthorized", "admin token required");
  json banks = json::array();
  for (const auto& [id, bank] : banks_) {
    banks.push_back({{"bank_id", id},
                     {"test_family", to_string(bank.test_family)},
                     {"n_items", bank.items.size()},
                     {"n_scored", bank.scored_count()},
                     {"results_visible", !hidden_result_banks_.count(id)}});
  }
  return {200, {{"banks", banks}}};
}

ApiResponse SessionService::list_sessions(const std::string& token, const std::optional<std::string>& bank_id) {
  if (!admin_ok(token)) return error_response(401, "unauthorized", "admin token required");
  std::vector<std::shared_ptr<Session>> snapshot;
  std::vector<std::string> ids;
  {
    std::shared_lock lock(sessions_mutex_);
    for (const auto& [id, s] : sessions_) {
      ids.push_back(id);
      snapshot.push_back(s);
    }
  }
  json out = json::array();
  for (std::size_t k = 0; k < snapshot.size(); ++k) {
    std::lock_guard lock(snapshot[k]->mutex);
    const auto& s = snapshot[k]->state;
    if (bank_id && s.bank_id != *bank_id) continue;
    const auto& ev = snapshot[k]->events;
    out.push_back({{"session_id", ids[k]},
                   {"bank_id", s.bank_id},
                   {"status", to_string(s.status)},
                   {"answered", s.administered.size()},
                   {"total", s.config.total_length()},
                   {"created", ev.empty() ? json(nullptr) : ev.front().value("ts", json(nullptr))},
                   {"updated", ev.empty() ? json(nullptr) : ev.back().value("ts", json(nullptr))}});
  }
  return {200, {{"sessions", out}}};
}

ApiResponse SessionService::get_transcript(const std::string& token, const std::string& session_id) {
  if (!admin_ok(token)) return error_response(401, "unauthorized", "admin token required");
  return guarded([&] {
    const auto session = find_session(session_id);
    std::lock_guard lock(session->mutex);
    return ApiResponse{200, {{"session_id", session_id}, {"events", session->events}}};
  });
}

std::size_t SessionService::session_count() const {
  std::shared_lock lock(sessions_mutex_);
  return sessions_.size();
}

struct HttpServer::Impl {
  explicit Impl(SessionService& s) : service(s) {}
  SessionService& service;
  httplib::Server server;
};

namespace {

void send(httplib::Response& res, const ApiResponse& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

}  // namespace

HttpServer::HttpServer(SessionService& service) : impl_(std::make_unique<Impl>(service)) {
  auto& s = impl_->server;
  auto& svc = impl_->service;
  s.Post("/api/v1/sessions", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.create_session(req.body));
  });
  s.Get(R"(/api/v1/sessions/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.get_session(req.matches[1]));
  });
  s.Post(R"(/api/v1/sessions/([^/]+)/answers)", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.submit_answer(req.matches[1], req.body));
  });
  s.Get(R"(/api/v1/sessions/([^/]+)/result)", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.get_result(req.matches[1]));
  });
  s.Get("/api/v1/banks", [&svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc.list_banks(req.get_header_value(kAdminTokenHeader)));
  });
  s.Get("/api/v1/admin/sessions", [&svc](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> bank;
    if (req.has_param("bank_id")) bank = req.get_param_value("bank_id");
    send(res, svc.list_sessions(req.get_header_value(kAdminTokenHeader), bank));
  });
  s.Get(R"(/api/v1/admin/sessions/([^/]+)/transcript)",
        [&svc](const httplib::Request& req, httplib::Response& res) {
          send(res, svc.get_transcript(req.get_header_value(kAdminTokenHeader), req.matches[1]));
        });
  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      send(res, error_response(res.status, res.status == 404 ? "not_found" : "error", "no such endpoint"));
    }
  });
  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send(res, error_response(500, "internal", what));
  });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind(const std::string& host, int port) {
  auto& s = impl_->server;
  if (port == 0) {
    const int bound = s.bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::io, "cannot bind " + host);
    return bound;
  }
  if (!s.bind_to_port(host, port)) throw Error(ErrorCode::io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

}  // namespace adaptest
