#include "mopref/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "mopref/io.hpp"
#include "mopref/trajectory.hpp"

// After Eigen: <resolv.h> defines a _res macro.
#include <httplib.h>

namespace mopref {

using nlohmann::json;

namespace {

ServiceResponse error(int status, const std::string& message) {
  return {status, {{"error", message}}};
}

std::string random_session_id() {
  std::random_device device;
  static constexpr char kHex[] = "0123456789abcdef";
  std::string id;
  for (int i = 0; i < 4; ++i) {
    std::uint32_t bits = device();
    for (int j = 0; j < 8; ++j, bits >>= 4) id.push_back(kHex[bits & 0xF]);
  }
  return id;
}

}  // namespace

struct SessionService::Session {
  enum class Status { Active, Complete, Aborted };

  std::mutex mutex;
  std::string id;
  std::string instance_id;
  std::shared_ptr<const Momdp> mdp;
  ElicitationConfig config;
  std::unique_ptr<ElicitationEngine> engine;
  OracleSession oracle;
  std::unique_ptr<QueryBuilder> builder;
  Status status = Status::Active;
  std::string abort_reason;
  std::string created;
  std::string updated;

  Session(std::shared_ptr<const Momdp> m, const ElicitationConfig& c, BasisCache& cache)
      : mdp(std::move(m)),
        config(c),
        engine(std::make_unique<ElicitationEngine>(*mdp, c, &cache)),
        oracle(c.budget),
        builder(std::make_unique<QueryBuilder>(*mdp, c.representation)) {
    pump();
  }

  /// Posts the engine's next comparison, or marks the session complete.
  void pump() {
    if (status != Status::Active || oracle.awaiting()) return;
    auto request = engine->pending();
    if (!request) {
      status = Status::Complete;
      return;
    }
    try {
      oracle.post_query(builder->build(*request, oracle.next_query_id()));
    } catch (const OracleError& e) {
      status = Status::Aborted;
      abort_reason = e.what();
    }
  }

  /// 0 on success, otherwise an HTTP status.
  int check_answer(const std::string& query_id) const {
    if (status == Status::Aborted) return 410;
    if (status == Status::Complete || !oracle.awaiting()) return 409;
    if (oracle.pending()->query_id != query_id) return 409;
    return 0;
  }

  void apply_answer(const std::string& query_id, Verdict verdict) {
    oracle.receive_answer(query_id, verdict);
    engine->answer(verdict);
    pump();
  }

  std::string_view status_name() const {
    switch (status) {
      case Status::Active: return "active";
      case Status::Complete: return "complete";
      case Status::Aborted: return "aborted";
    }
    return "aborted";
  }

  json operand_json(const QueryOperand& operand) const {
    json out = {{"value", vector_to_json(operand.value)}};
    if (operand.trajectories) {
      out["trajectories"] = trajectory_set_to_json(*mdp, *operand.trajectories);
    } else {
      json components = json::array();
      for (const auto& c : operand.policy.components())
        components.push_back({{"weight", c.weight}, {"policy", policy_to_json(*mdp, c.policy)}});
      out["components"] = std::move(components);
    }
    return out;
  }

  json query_json() const {
    const ComparisonQuery& q = *oracle.pending();
    return {{"session_id", id},
            {"query_id", q.query_id},
            {"phase", to_string(q.phase)},
            {"left", operand_json(q.left)},
            {"right", operand_json(q.right)},
            {"progress",
             {{"answered", oracle.answered()},
              {"cap", query_cap(mdp->objectives(), static_cast<std::size_t>(mdp->objectives()),
                                config)}}}};
  }

  json state_json() const {
    json out = {{"session_id", id},
                {"status", status_name()},
                {"instance", instance_id},
                {"created", created},
                {"updated", updated}};
    if (status == Status::Active) out["query"] = query_json();
    if (status == Status::Complete) out["result"] = "/sessions/" + id + "/result";
    if (status == Status::Aborted) out["reason"] = abort_reason;
    return out;
  }
};

SessionService::SessionService(std::filesystem::path data_dir) : data_dir_(std::move(data_dir)) {
  std::filesystem::create_directories(data_dir_ / "sessions");
}

SessionService::~SessionService() = default;

void SessionService::add_instance(const std::string& id, Momdp mdp) {
  auto shared = std::make_shared<const Momdp>(std::move(mdp));
  const std::string digest = instance_digest(*shared);
  std::unique_lock lock(mutex_);
  instances_[id] = {id, shared};
  instances_.try_emplace(digest, Instance{id, shared});
}

std::optional<SessionService::Instance> SessionService::find_instance(
    const std::string& reference) const {
  std::shared_lock lock(mutex_);
  auto it = instances_.find(reference);
  if (it == instances_.end()) return std::nullopt;
  return it->second;
}

std::shared_ptr<SessionService::Session> SessionService::find(const std::string& session_id) const {
  std::shared_lock lock(mutex_);
  auto it = sessions_.find(session_id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::filesystem::path SessionService::log_path(const std::string& session_id) const {
  return data_dir_ / "sessions" / (session_id + ".jsonl");
}

void SessionService::append_event(const std::string& session_id, const json& event) const {
  const std::string line = event.dump() + "\n";
  const std::string path = log_path(session_id).string();
  const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw std::runtime_error("cannot open " + path + ": " + std::strerror(errno));
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int saved = errno;
      ::close(fd);
      throw std::runtime_error("cannot write " + path + ": " + std::strerror(saved));
    }
    written += static_cast<std::size_t>(n);
  }
  const int synced = ::fsync(fd);
  ::close(fd);
  if (synced != 0) throw std::runtime_error("cannot sync " + path);
}

std::shared_ptr<SessionService::Session> SessionService::open_session(
    const std::string& id, const Instance& instance, const ElicitationConfig& config,
    const json& create_event) {
  auto session = std::make_shared<Session>(instance.mdp, config, cache_);
  session->id = id;
  session->instance_id = instance.id;
  session->created = create_event.value("time", std::string());
  session->updated = session->created;
  return session;
}

ServiceResponse SessionService::create_session(const json& body) {
  if (!body.is_object() || !body.contains("instance") || !body["instance"].is_string())
    return error(400, "body must be an object with a string \"instance\"");
  const auto instance = find_instance(body["instance"].get<std::string>());
  if (!instance) return error(404, "unknown instance '" + body["instance"].get<std::string>() + "'");

  json config_doc = body.value("config", json::object());
  if (!config_doc.is_object()) return error(400, "config must be an object");
  if (!config_doc.contains("representation")) config_doc["representation"] = "trajset";
  ElicitationConfig config;
  try {
    config = config_from_json(config_doc);
  } catch (const ValidationError& e) {
    return error(400, e.what());
  }

  std::string id;
  do id = random_session_id();
  while (find(id));
  const json event = {{"event", "create"},
                      {"session_id", id},
                      {"instance", instance->id},
                      {"instance_digest", instance_digest(*instance->mdp)},
                      {"config", config_to_json(config)},
                      {"time", utc_timestamp()}};
  auto session = open_session(id, *instance, config, event);
  append_event(id, event);
  {
    std::unique_lock lock(mutex_);
    sessions_[id] = session;
  }
  std::lock_guard guard(session->mutex);
  return {201, session->state_json()};
}

ServiceResponse SessionService::fetch_query(const std::string& session_id) {
  auto session = find(session_id);
  if (!session) return error(404, "unknown session");
  std::lock_guard guard(session->mutex);
  return {session->status == Session::Status::Aborted ? 410 : 200, session->state_json()};
}

ServiceResponse SessionService::submit_answer(const std::string& session_id, const json& body) {
  auto session = find(session_id);
  if (!session) return error(404, "unknown session");
  if (!body.is_object() || !body.contains("query_id") || !body["query_id"].is_string() ||
      !body.contains("verdict") || !body["verdict"].is_string())
    return error(400, "body must carry string \"query_id\" and \"verdict\"");
  const auto verdict = parse_verdict(body["verdict"].get<std::string>());
  if (!verdict) return error(400, "verdict must be \"left\", \"right\" or \"indistinguishable\"");
  const std::string query_id = body["query_id"].get<std::string>();

  std::lock_guard guard(session->mutex);
  if (const int status = session->check_answer(query_id)) {
    ServiceResponse out = error(status, status == 410 ? "session aborted"
                                                      : "query '" + query_id + "' is not pending");
    out.body["state"] = session->state_json();
    return out;
  }
  const std::string now = utc_timestamp();
  append_event(session_id, {{"event", "answer"},
                            {"query_id", query_id},
                            {"verdict", to_string(*verdict)},
                            {"time", now}});
  session->apply_answer(query_id, *verdict);
  session->updated = now;

  json out = session->state_json();
  if (session->status == Session::Status::Complete)
    out["report"] = report_to_json(*session->mdp, session->engine->report());
  return {200, std::move(out)};
}

ServiceResponse SessionService::fetch_result(const std::string& session_id) {
  auto session = find(session_id);
  if (!session) return error(404, "unknown session");
  std::lock_guard guard(session->mutex);
  if (session->status == Session::Status::Aborted) return error(410, "session aborted");
  if (session->status != Session::Status::Complete) return error(409, "session is still active");
  const ElicitationReport& report = session->engine->report();
  return {200,
          {{"session_id", session_id},
           {"status", "complete"},
           {"report", report_to_json(*session->mdp, report)},
           {"trajectories",
            trajectory_set_to_json(*session->mdp,
                                   expand_compress(*session->mdp, report.output_policy))}}};
}

ServiceResponse SessionService::abort_session(const std::string& session_id) {
  auto session = find(session_id);
  if (!session) return error(404, "unknown session");
  std::lock_guard guard(session->mutex);
  if (session->status == Session::Status::Complete) return error(409, "session is complete");
  if (session->status == Session::Status::Active) {
    append_event(session_id, {{"event", "abort"}, {"time", utc_timestamp()}});
    session->status = Session::Status::Aborted;
    session->abort_reason = "aborted by client";
  }
  return {200, session->state_json()};
}

ServiceResponse SessionService::fetch_transcript(const std::string& session_id) {
  auto session = find(session_id);
  if (!session) return error(404, "unknown session");
  std::lock_guard guard(session->mutex);
  json records = json::array();
  for (const auto& r : session->oracle.transcript()) records.push_back(transcript_record_to_json(r));
  return {200, {{"session_id", session_id}, {"transcript", std::move(records)}}};
}

ServiceResponse SessionService::list_instances() const {
  std::shared_lock lock(mutex_);
  json list = json::array();
  for (const auto& [key, instance] : instances_)
    if (key == instance.id)
      list.push_back({{"id", instance.id},
                      {"digest", instance_digest(*instance.mdp)},
                      {"objectives", instance.mdp->objectives()},
                      {"horizon", instance.mdp->horizon()}});
  return {200, {{"instances", std::move(list)}}};
}

ServiceResponse SessionService::health() const { return {200, {{"status", "ok"}}}; }

std::size_t SessionService::restore() {
  std::size_t restored = 0;
  for (const auto& entry : std::filesystem::directory_iterator(data_dir_ / "sessions")) {
    if (entry.path().extension() != ".jsonl") continue;
    std::ifstream in(entry.path());
    std::vector<json> events;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        events.push_back(json::parse(line));
      } catch (const json::parse_error&) {
        break;  // torn final write
      }
    }
    try {
      if (events.empty() || events.front().value("event", "") != "create")
        throw std::runtime_error("log does not start with a create event");
      const json& create = events.front();
      const std::string id = create.at("session_id").get<std::string>();
      auto instance = find_instance(create.at("instance_digest").get<std::string>());
      if (!instance) throw std::runtime_error("instance is not loaded");
      auto session = open_session(id, *instance, config_from_json(create.at("config")), create);
      for (std::size_t i = 1; i < events.size(); ++i) {
        const json& e = events[i];
        const std::string kind = e.value("event", "");
        if (kind == "answer") {
          const std::string query_id = e.at("query_id").get<std::string>();
          const auto verdict = parse_verdict(e.at("verdict").get<std::string>());
          if (!verdict || session->check_answer(query_id) != 0)
            throw std::runtime_error("answer " + query_id + " does not replay");
          session->apply_answer(query_id, *verdict);
        } else if (kind == "abort") {
          session->status = Session::Status::Aborted;
          session->abort_reason = "aborted by client";
        }
        session->updated = e.value("time", session->updated);
      }
      std::unique_lock lock(mutex_);
      sessions_[id] = std::move(session);
      ++restored;
    } catch (const std::exception& e) {
      std::cerr << "skipping session log " << entry.path() << ": " << e.what() << '\n';
    }
  }
  return restored;
}

void SessionService::mount(httplib::Server& server) {
  auto reply = [](httplib::Response& res, const ServiceResponse& out) {
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  };
  auto guarded = [reply](auto handler) {
    return [reply, handler](const httplib::Request& req, httplib::Response& res) {
      try {
        reply(res, handler(req));
      } catch (const std::exception& e) {
        reply(res, error(500, e.what()));
      }
    };
  };
  auto parse_body = [](const httplib::Request& req) -> std::optional<json> {
    try {
      return json::parse(req.body.empty() ? std::string("{}") : req.body);
    } catch (const json::parse_error&) {
      return std::nullopt;
    }
  };

  server.Get("/healthz", guarded([this](const httplib::Request&) { return health(); }));
  server.Get("/instances", guarded([this](const httplib::Request&) { return list_instances(); }));
  server.Post("/sessions", guarded([this, parse_body](const httplib::Request& req) {
                auto body = parse_body(req);
                return body ? create_session(*body) : error(400, "malformed JSON body");
              }));
  server.Get(R"(/sessions/([0-9a-f]+)/query)", guarded([this](const httplib::Request& req) {
               return fetch_query(req.matches[1]);
             }));
  server.Post(R"(/sessions/([0-9a-f]+)/answer)",
              guarded([this, parse_body](const httplib::Request& req) {
                auto body = parse_body(req);
                return body ? submit_answer(req.matches[1], *body)
                            : error(400, "malformed JSON body");
              }));
  server.Get(R"(/sessions/([0-9a-f]+)/result)", guarded([this](const httplib::Request& req) {
               return fetch_result(req.matches[1]);
             }));
  server.Get(R"(/sessions/([0-9a-f]+)/transcript)", guarded([this](const httplib::Request& req) {
               return fetch_transcript(req.matches[1]);
             }));
  server.Delete(R"(/sessions/([0-9a-f]+))", guarded([this](const httplib::Request& req) {
                  return abort_session(req.matches[1]);
                }));
}

}  // namespace mopref
