#pragma once

// HTTP session service for live test administration.
//
// Every session is an append-only JSON-lines event log under
// <data_dir>/sessions/<session_id>.jsonl (fsync'd per append), listed in
// <data_dir>/index.jsonl. On startup the service replays each log to rebuild
// its in-memory state.
//
// Endpoints (all JSON):
//   POST /api/v1/sessions                      {bank_id, config_overrides?}
//   GET  /api/v1/sessions/{id}                 current item and progress
//   POST /api/v1/sessions/{id}/answers         {item_id, selected_index, position?}
//   GET  /api/v1/sessions/{id}/result          score once completed
//   GET  /api/v1/banks                         admin
//   GET  /api/v1/admin/sessions?bank_id=...    admin
//   GET  /api/v1/admin/sessions/{id}/transcript admin
// Admin endpoints need the X-Admin-Token header to match the configured token.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "adaptest/cat_engine.hpp"
#include "adaptest/item_bank.hpp"
#include "adaptest/transcript.hpp"

namespace adaptest {

inline constexpr const char* kAdminTokenEnv = "CAT_ADMIN_TOKEN";
inline constexpr const char* kAdminTokenHeader = "X-Admin-Token";

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir = "data";
  std::vector<std::filesystem::path> banks;
  /// Banks whose results are not shown to test takers (403 on /result).
  std::set<std::string> hidden_result_banks;
  /// Empty disables the admin endpoints.
  std::string admin_token;
  /// Seeds the deployment-wide unscored slot positions; sessions only vary
  /// which unscored item goes into which slot.
  std::uint64_t layout_seed = 0;
};

/// Reads {host, port, data_dir, banks, hidden_result_banks, layout_seed};
/// relative paths
/// resolve against the config file's directory. The admin token is taken
/// from the environment.
ServiceConfig load_service_config(const std::filesystem::path& path);

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// The only item representation sent to test takers: no answer key, no
/// parameters, no kind and no feature tags.
nlohmann::json public_item_view(const Item& item, std::size_t position, std::size_t total_length);

/// Transport-independent request handling.
class SessionService {
 public:
  SessionService(std::vector<ItemBank> banks, std::filesystem::path data_dir,
                 std::set<std::string> hidden_result_banks, std::string admin_token,
                 std::uint64_t layout_seed = 0);

  ApiResponse create_session(const std::string& body);
  ApiResponse get_session(const std::string& session_id);
  ApiResponse submit_answer(const std::string& session_id, const std::string& body);
  ApiResponse get_result(const std::string& session_id);
  ApiResponse list_banks(const std::string& token) const;
  ApiResponse list_sessions(const std::string& token, const std::optional<std::string>& bank_id);
  ApiResponse get_transcript(const std::string& token, const std::string& session_id);

  std::size_t session_count() const;
  /// Sessions that could not be restored at startup, with the reason.
  const std::vector<std::string>& restore_warnings() const { return restore_warnings_; }

 private:
  struct Session {
    explicit Session(SessionState s) : state(std::move(s)) {}
    std::mutex mutex;
    SessionState state;
    std::vector<Event> events;
    std::filesystem::path log_path;
  };

  void restore();
  std::shared_ptr<Session> find_session(const std::string& session_id) const;
  const ItemBank& bank_for(const SessionState& state) const;
  bool admin_ok(const std::string& token) const;
  nlohmann::json progress(const SessionState& state) const;
  nlohmann::json current_view(const SessionState& state) const;
  void append(Session& session, const std::vector<Event>& events);

  std::map<std::string, ItemBank> banks_;
  std::filesystem::path data_dir_;
  std::set<std::string> hidden_result_banks_;
  std::string admin_token_;
  std::uint64_t layout_seed_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex index_mutex_;
  std::vector<std::string> restore_warnings_;
};

/// Serves the API until stop() is called from another thread.
class HttpServer {
 public:
  explicit HttpServer(SessionService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks serving requests.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace adaptest
