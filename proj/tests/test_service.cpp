#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "fixtures.hpp"
#include "mopref/service.hpp"
#include "mopref/trajectory.hpp"

// After Eigen: <resolv.h> defines a _res macro.
#include <httplib.h>

using namespace mopref;
using namespace mopref::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("mopref-test-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path path;
};

std::string verdict_for(SimulatedUser& user, const json& query) {
  const Verdict v = user.answer(vector_from_json(query["left"]["value"]),
                                vector_from_json(query["right"]["value"]));
  return std::string(to_string(v));
}

SimulatedUser bandit_user() { return SimulatedUser(Eigen::VectorXd::Ones(3), 1e-6); }

std::string in_process_report(const Momdp& mdp, const std::vector<Verdict>& verdicts) {
  ElicitationConfig config;
  config.representation = Representation::TrajectorySet;
  ScriptedResponder script(verdicts);
  OracleSession session;
  ComparisonChannel channel(mdp, session, script, config.representation);
  return report_to_json(mdp, run_elicitation(mdp, channel, config)).dump();
}

}  // namespace

TEST_CASE("session lifecycle through the handlers") {
  TempDir dir;
  SessionService service(dir.path);
  const Momdp mdp = load_fixture("bandit4");
  service.add_instance("bandit4", mdp);

  CHECK(service.health().status == 200);
  CHECK(service.list_instances().body["instances"].size() == 1);
  CHECK(service.create_session({{"instance", "nope"}}).status == 404);
  CHECK(service.create_session({{"instance", "bandit4"}, {"config", {{"mode", "bogus"}}}}).status == 400);
  CHECK(service.create_session(json::array()).status == 400);

  const ServiceResponse created = service.create_session({{"instance", "bandit4"}});
  REQUIRE(created.status == 201);
  const std::string id = created.body["session_id"];
  CHECK(id.size() == 32);
  CHECK(created.body["status"] == "active");
  const json first = created.body["query"];
  CHECK(first["phase"] == "benchmark");
  CHECK(first["left"].contains("trajectories"));
  CHECK(first["left"]["trajectories"]["items"].size() >= 1);

  const ServiceResponse again = service.fetch_query(id);
  CHECK(again.status == 200);
  CHECK(again.body["query"] == first);
  CHECK(service.fetch_query("0123").status == 404);
  CHECK(service.fetch_result(id).status == 409);

  CHECK(service.submit_answer(id, {{"query_id", first["query_id"]}, {"verdict", "maybe"}}).status == 400);
  CHECK(service.submit_answer(id, {{"verdict", "left"}}).status == 400);
  CHECK(service.submit_answer(id, {{"query_id", "q9999"}, {"verdict", "left"}}).status == 409);
  CHECK(service.submit_answer("ffff", {{"query_id", "q0001"}, {"verdict", "left"}}).status == 404);

  SimulatedUser user = bandit_user();
  std::vector<Verdict> given;
  json query = first;
  json last;
  for (int guard = 0; guard < 500; ++guard) {
    const std::string verdict = verdict_for(user, query);
    given.push_back(*parse_verdict(verdict));
    const ServiceResponse step = service.submit_answer(id, {{"query_id", query["query_id"]}, {"verdict", verdict}});
    REQUIRE(step.status == 200);
    if (step.body["status"] == "complete") {
      last = step.body;
      break;
    }
    CHECK(step.body["query"]["query_id"] != query["query_id"]);
    query = step.body["query"];
  }
  REQUIRE(last.contains("report"));
  CHECK(service.submit_answer(id, {{"query_id", query["query_id"]}, {"verdict", "left"}}).status == 409);
  CHECK(service.fetch_query(id).body["status"] == "complete");
  CHECK(service.abort_session(id).status == 409);

  const ServiceResponse result = service.fetch_result(id);
  REQUIRE(result.status == 200);
  CHECK(result.body["report"] == last["report"]);
  CHECK(result.body["report"]["output_policy"] == policy_to_json(mdp, play(mdp, "a3")));
  CHECK(result.body["trajectories"]["items"].size() == 1);
  CHECK(result.body["report"].dump() == in_process_report(mdp, given));

  const ServiceResponse transcript = service.fetch_transcript(id);
  CHECK(transcript.body["transcript"].size() == given.size());
}

TEST_CASE("aborted sessions") {
  TempDir dir;
  SessionService service(dir.path);
  service.add_instance("bandit4", load_fixture("bandit4"));
  const std::string id = service.create_session({{"instance", "bandit4"}}).body["session_id"];
  const std::string qid = service.fetch_query(id).body["query"]["query_id"];
  CHECK(service.abort_session(id).status == 200);
  CHECK(service.fetch_query(id).status == 410);
  CHECK(service.fetch_result(id).status == 410);
  CHECK(service.submit_answer(id, {{"query_id", qid}, {"verdict", "left"}}).status == 410);
  CHECK(service.abort_session("abcd").status == 404);
}

TEST_CASE("sessions resume after a restart") {
  TempDir dir;
  const Momdp mdp = load_fixture("bandit4");
  std::string id;
  json pending;
  std::vector<Verdict> given;
  SimulatedUser user = bandit_user();
  {
    SessionService service(dir.path);
    service.add_instance("bandit4", mdp);
    id = service.create_session({{"instance", "bandit4"}}).body["session_id"];
    json query = service.fetch_query(id).body["query"];
    for (int i = 0; i < 7; ++i) {
      const std::string verdict = verdict_for(user, query);
      given.push_back(*parse_verdict(verdict));
      query = service.submit_answer(id, {{"query_id", query["query_id"]}, {"verdict", verdict}}).body["query"];
    }
    pending = query;
  }
  {
    // A torn trailing line from a crash mid-write is ignored.
    std::ofstream log(dir.path / "sessions" / (id + ".jsonl"), std::ios::app);
    log << R"({"event":"answer","query_id":)";
  }
  SessionService restarted(dir.path);
  restarted.add_instance("bandit4", mdp);
  CHECK(restarted.restore() == 1);
  const ServiceResponse resumed = restarted.fetch_query(id);
  REQUIRE(resumed.status == 200);
  CHECK(resumed.body["query"]["query_id"] == pending["query_id"]);
  CHECK(resumed.body["query"]["left"] == pending["left"]);
  CHECK(resumed.body["query"]["right"] == pending["right"]);

  json query = pending;
  json report;
  for (int guard = 0; guard < 500 && report.is_null(); ++guard) {
    const std::string verdict = verdict_for(user, query);
    given.push_back(*parse_verdict(verdict));
    const ServiceResponse step = restarted.submit_answer(id, {{"query_id", query["query_id"]}, {"verdict", verdict}});
    REQUIRE(step.status == 200);
    if (step.body.contains("report")) report = step.body["report"];
    else query = step.body["query"];
  }
  CHECK(report.dump() == in_process_report(mdp, given));
}

TEST_CASE("http round trip") {
  TempDir dir;
  SessionService service(dir.path);
  const Momdp mdp = load_fixture("bandit4");
  service.add_instance("bandit4", mdp);
  httplib::Server server;
  service.mount(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(client.Post("/sessions", "{not json", "application/json")->status == 400);
  CHECK(client.Get("/sessions/abc123/query")->status == 404);

  auto created = client.Post("/sessions", R"({"instance":"bandit4"})", "application/json");
  REQUIRE(created);
  REQUIRE(created->status == 201);
  const std::string id = json::parse(created->body)["session_id"];
  json query = json::parse(created->body)["query"];

  SimulatedUser user = bandit_user();
  std::vector<Verdict> given;
  json report;
  for (int guard = 0; guard < 500 && report.is_null(); ++guard) {
    const std::string verdict = verdict_for(user, query);
    given.push_back(*parse_verdict(verdict));
    const json body = {{"query_id", query["query_id"]}, {"verdict", verdict}};
    auto res = client.Post("/sessions/" + id + "/answer", body.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 200);
    const json doc = json::parse(res->body);
    if (doc.contains("report")) report = doc["report"];
    else query = doc["query"];
  }
  auto result = client.Get("/sessions/" + id + "/result");
  REQUIRE(result);
  CHECK(result->status == 200);
  CHECK(json::parse(result->body)["report"].dump() == in_process_report(mdp, given));
  CHECK(json::parse(client.Get("/sessions/" + id + "/transcript")->body)["transcript"].size() == given.size());
  CHECK(client.Delete("/sessions/" + id)->status == 409);

  server.stop();
  worker.join();
}

TEST_CASE("concurrent sessions") {
  TempDir dir;
  SessionService service(dir.path);
  const Momdp mdp = load_fixture("bandit4");
  service.add_instance("bandit4", mdp);
  const std::string expected = [&] {
    SimulatedUser user = bandit_user();
    SimulatedResponder responder(user);
    OracleSession session;
    ElicitationConfig config;
    config.representation = Representation::TrajectorySet;
    ComparisonChannel channel(mdp, session, responder, config.representation);
    return report_to_json(mdp, run_elicitation(mdp, channel, config)).dump();
  }();

  std::vector<std::string> reports(4);
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < reports.size(); ++t)
    threads.emplace_back([&, t] {
      SimulatedUser user = bandit_user();
      const ServiceResponse created = service.create_session({{"instance", "bandit4"}});
      const std::string id = created.body["session_id"];
      json query = created.body["query"];
      for (int guard = 0; guard < 500; ++guard) {
        const ServiceResponse step = service.submit_answer(
            id, {{"query_id", query["query_id"]}, {"verdict", verdict_for(user, query)}});
        if (step.body.contains("report")) {
          reports[t] = step.body["report"].dump();
          return;
        }
        query = step.body["query"];
      }
    });
  for (auto& t : threads) t.join();
  for (const auto& r : reports) CHECK(r == expected);
}
