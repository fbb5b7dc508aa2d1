#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mopref/basis.hpp"
#include "mopref/engine.hpp"
#include "mopref/momdp.hpp"
#include "mopref/oracle.hpp"

namespace httplib {
class Server;
}

namespace mopref {

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
};

/// Human-in-the-loop elicitation sessions. Each session keeps an append-only
/// JSON-lines event log (create, answer, abort) under `data_dir`; on startup
/// sessions are rebuilt by replaying their logs through a fresh engine.
///
/// Handlers for different sessions run concurrently; one session's handlers
/// are serialized.
class SessionService {
 public:
  explicit SessionService(std::filesystem::path data_dir);
  ~SessionService();

  /// Registers an instance under `id` (and under its digest).
  void add_instance(const std::string& id, Momdp mdp);
  /// Replays every event log found in the data directory; returns the count.
  std::size_t restore();

  ServiceResponse create_session(const nlohmann::json& body);
  ServiceResponse fetch_query(const std::string& session_id);
  ServiceResponse submit_answer(const std::string& session_id, const nlohmann::json& body);
  ServiceResponse fetch_result(const std::string& session_id);
  ServiceResponse abort_session(const std::string& session_id);
  ServiceResponse fetch_transcript(const std::string& session_id);
  ServiceResponse list_instances() const;
  ServiceResponse health() const;

  /// Routes: POST /sessions, GET /sessions/{id}/query, POST /sessions/{id}/answer,
  /// GET /sessions/{id}/result, GET /sessions/{id}/transcript,
  /// DELETE /sessions/{id}, GET /instances, GET /healthz.
  void mount(httplib::Server& server);

 private:
  struct Session;
  struct Instance {
    std::string id;
    std::shared_ptr<const Momdp> mdp;
  };

  std::shared_ptr<Session> find(const std::string& session_id) const;
  std::optional<Instance> find_instance(const std::string& reference) const;
  std::shared_ptr<Session> open_session(const std::string& id, const Instance& instance,
                                        const ElicitationConfig& config,
                                        const nlohmann::json& create_event);
  std::filesystem::path log_path(const std::string& session_id) const;
  void append_event(const std::string& session_id, const nlohmann::json& event) const;

  std::filesystem::path data_dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, Instance> instances_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  BasisCache cache_;
};

}  // namespace mopref
