#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mopref/basis.hpp"
#include "mopref/engine.hpp"
#include "mopref/experiments.hpp"
#include "mopref/io.hpp"
#include "mopref/oracle.hpp"
#include "mopref/service.hpp"
#include "mopref/trajectory.hpp"

// After Eigen: <resolv.h> defines a _res macro.
#include <httplib.h>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mopref;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

Eigen::VectorXd parse_weights(const std::string& text, int k) {
  std::vector<double> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("weights", "'" + item + "' is not a number");
    }
  }
  if (static_cast<int>(values.size()) != k)
    throw ValidationError("weights", "expected " + std::to_string(k) + " values, got " +
                                         std::to_string(values.size()));
  return Eigen::Map<Eigen::VectorXd>(values.data(), k);
}

void write_json(const json& doc, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << doc.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << doc.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

SimulatedUser load_user(const std::string& path, int k, double epsilon) {
  const json doc = read_json_file(path);
  if (!doc.is_object() || !doc.contains("preference"))
    throw ValidationError("user.preference", "missing");
  Eigen::VectorXd w = vector_from_json(doc["preference"]);
  if (w.size() != k)
    throw ValidationError("user.preference", "expected " + std::to_string(k) + " components");
  std::optional<double> bound;
  if (doc.contains("norm_bound")) bound = doc["norm_bound"].get<double>();
  try {
    return SimulatedUser(w, epsilon, bound);
  } catch (const std::invalid_argument& e) {
    throw ValidationError("user", e.what());
  }
}

int cmd_validate(const std::string& path) {
  const Momdp mdp = load_instance(path);
  std::cout << "ok " << instance_digest(mdp) << " states=" << mdp.num_states()
            << " actions=" << mdp.num_actions() << " horizon=" << mdp.horizon()
            << " objectives=" << mdp.objectives() << " policies=" << policy_count(mdp) << '\n';
  return kOk;
}

int cmd_plan(const std::string& instance, const std::string& weights, const std::string& out) {
  const Momdp mdp = load_instance(instance);
  const PlanResult plan = scalarized_plan(mdp, parse_weights(weights, mdp.objectives()));
  write_json({{"policy", policy_to_json(mdp, plan.policy)},
              {"scalar", plan.value},
              {"value", vector_to_json(vector_value(mdp, plan.policy))}},
             out);
  return kOk;
}

int cmd_trajset(const std::string& instance, const std::string& policy_path,
                const std::string& weights, const std::string& method, bool no_compress,
                const std::string& out) {
  const Momdp mdp = load_instance(instance);
  Policy policy;
  if (!policy_path.empty()) {
    json doc = read_json_file(policy_path);
    // Accept the output of `plan` as well as a bare policy document.
    if (doc.is_object() && doc.contains("policy")) doc = doc["policy"];
    policy = policy_from_json(mdp, doc);
  } else if (!weights.empty()) {
    policy = scalarized_plan(mdp, parse_weights(weights, mdp.objectives())).policy;
  } else {
    throw ValidationError("policy", "give --policy or --weights");
  }
  if (method == "expand" && no_compress)
    throw ValidationError("no-compress", "only applies to --method flow");
  const WeightedTrajectorySet set = method == "expand" ? expand_compress(mdp, policy)
                                                       : flow_decompose(mdp, policy, !no_compress);
  json doc = trajectory_set_to_json(mdp, set);
  const SetValidation check = validate_set(mdp, policy, set);
  doc["validation"] = {{"ok", check.ok()},
                       {"value_error", check.value_error},
                       {"failures", check.failures}};
  write_json(doc, out);
  return no_compress || check.ok() ? kOk : kRuntime;
}

int cmd_elicit(const std::string& instance, const std::string& user_path, double epsilon,
               const std::string& mode, const std::string& representation,
               std::optional<std::size_t> budget, const std::string& transcript_path,
               const std::string& cache_path, const std::string& out) {
  const Momdp mdp = load_instance(instance);
  SimulatedUser user = load_user(user_path, mdp.objectives(), epsilon);
  json config_doc = {{"mode", mode}, {"representation", representation}};
  if (budget) config_doc["budget"] = *budget;
  const ElicitationConfig config = config_from_json(config_doc);

  BasisCache cache;
  if (!cache_path.empty() && fs::exists(cache_path))
    cache.merge_json(mdp, read_json_file(cache_path));

  SimulatedResponder responder(user);
  OracleSession session(config.budget);
  ComparisonChannel channel(mdp, session, responder, config.representation);
  ElicitationReport report = run_elicitation(mdp, channel, config, &cache);
  attach_diagnostics(mdp, report, user, optimal_personalized_value(mdp, user.preference()));

  if (!transcript_path.empty()) {
    std::ofstream t(transcript_path);
    if (!t) throw std::runtime_error("cannot write " + transcript_path);
    write_transcript(t, session.transcript());
  }
  if (!cache_path.empty()) write_json(cache.to_json(mdp), cache_path);
  write_json(report_to_json(mdp, report), out);
  return kOk;
}

int cmd_experiment(const std::string& config_path, const std::string& out_dir) {
  const ExperimentConfig config = experiment_config_from_json(read_json_file(config_path));
  const std::vector<TrialRow> rows = run_experiment(config);
  const ExperimentSummary summary = aggregate(rows);
  fs::create_directories(out_dir);
  std::ostringstream trials, timings, summary_csv, table;
  write_trials_csv(trials, rows);
  write_timings_csv(timings, rows);
  write_summary_csv(summary_csv, summary);
  write_summary_table(table, summary);
  write_text(fs::path(out_dir) / "trials.csv", trials.str());
  write_text(fs::path(out_dir) / "timings.csv", timings.str());
  write_text(fs::path(out_dir) / "summary.csv", summary_csv.str());
  write_text(fs::path(out_dir) / "summary.txt", table.str());
  std::cout << table.str();
  return kOk;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const std::string& host, int port, const std::vector<std::string>& instances,
              const std::string& data_dir) {
  SessionService service(data_dir);
  for (const auto& path : instances) service.add_instance(fs::path(path).stem().string(), load_instance(path));
  const std::size_t restored = service.restore();
  httplib::Server server;
  service.mount(server);
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  std::cerr << "serving " << instances.size() << " instance(s), " << restored
            << " restored session(s) on " << host << ':' << port << '\n';
  if (!server.listen(host, port)) throw std::runtime_error("cannot listen on port " + std::to_string(port));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Preference elicitation for multi-objective MDPs"};
  app.require_subcommand(1);

  std::string instance, weights, policy, method = "expand", out, user, mode = "full",
                                         representation = "explicit", transcript, cache, config,
                                         data_dir = "mopref-data", host = "127.0.0.1";
  bool no_compress = false;
  double epsilon = 0.0;
  int port = 8080;
  std::optional<std::size_t> budget;
  std::vector<std::string> instances;

  auto* validate = app.add_subcommand("validate", "Check an instance file");
  validate->add_option("instance", instance, "Instance file")->required();

  auto* plan = app.add_subcommand("plan", "Optimal policy for a linear scalarization");
  plan->add_option("--instance", instance)->required();
  plan->add_option("--weights", weights, "w1,...,wk")->required();
  plan->add_option("--out", out, "Output file (default stdout)");

  auto* trajset = app.add_subcommand("trajset", "Weighted trajectory set of a policy");
  trajset->add_option("--instance", instance)->required();
  auto* policy_opt = trajset->add_option("--policy", policy, "Policy JSON file");
  trajset->add_option("--weights", weights, "Plan the policy for these weights instead")
      ->excludes(policy_opt);
  trajset->add_option("--method", method)->check(CLI::IsMember({"expand", "flow"}));
  trajset->add_flag("--no-compress", no_compress, "Skip compression (flow only)");
  trajset->add_option("--out", out);

  auto* elicit = app.add_subcommand("elicit", "Elicit a simulated user's preference");
  elicit->add_option("--instance", instance)->required();
  elicit->add_option("--user", user, "User file {\"preference\": [...]}")->required();
  elicit->add_option("--epsilon", epsilon, "Comparison precision")->required()->check(
      CLI::NonNegativeNumber);
  elicit->add_option("--mode", mode)->check(CLI::IsMember({"full", "truncated"}));
  elicit->add_option("--representation", representation)
      ->check(CLI::IsMember({"explicit", "trajset"}));
  elicit->add_option("--budget", budget, "Maximum number of comparisons");
  elicit->add_option("--transcript", transcript, "Write the transcript (JSON lines)");
  elicit->add_option("--cache", cache, "Directional basis cache file");
  elicit->add_option("--out", out);

  auto* experiment = app.add_subcommand("experiment", "Seeded experiment over an epsilon grid");
  experiment->add_option("--config", config)->required();
  experiment->add_option("--out", out, "Output directory")->required();

  auto* serve = app.add_subcommand("serve", "HTTP session service");
  serve->add_option("--port", port)->check(CLI::Range(0, 65535));
  serve->add_option("--host", host);
  serve->add_option("--instance", instances, "Instance file (repeatable)")->required();
  serve->add_option("--data", data_dir, "Session log directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*validate) return cmd_validate(instance);
    if (*plan) return cmd_plan(instance, weights, out);
    if (*trajset) return cmd_trajset(instance, policy, weights, method, no_compress, out);
    if (*elicit)
      return cmd_elicit(instance, user, epsilon, mode, representation, budget, transcript, cache,
                        out);
    if (*experiment) return cmd_experiment(config, out);
    if (*serve) return cmd_serve(host, port, instances, data_dir);
  } catch (const ValidationError& e) {
    std::cerr << "invalid: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kRuntime;
}
