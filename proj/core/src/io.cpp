#include "mopref/io.hpp"

#include <array>
#include <fstream>
#include <map>
#include <sstream>

#include <openssl/evp.h>

namespace mopref {

using nlohmann::json;

namespace {

const json& require(const json& doc, const char* key) {
  if (!doc.contains(key)) throw ValidationError(key, "missing required key");
  return doc.at(key);
}

template <typename T>
T get_as(const json& node, const std::string& field) {
  try {
    return node.get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(field, std::string("wrong type: ") + e.what());
  }
}

std::vector<std::string> name_list(const json& node, const char* field) {
  if (!node.is_array()) throw ValidationError(field, "must be an array of strings");
  return get_as<std::vector<std::string>>(node, field);
}

std::size_t lookup(const std::vector<std::string>& names, const std::string& name,
                   const std::string& field) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw ValidationError(field, "unknown reference '" + name + "'");
}

}  // namespace

Momdp parse_instance(const json& doc) {
  if (!doc.is_object()) throw ValidationError("document", "instance must be a JSON object");

  MomdpDescription d;
  d.objectives = get_as<int>(require(doc, "k"), "k");
  d.horizon = get_as<int>(require(doc, "horizon"), "horizon");
  d.states = name_list(require(doc, "states"), "states");
  d.actions = name_list(require(doc, "actions"), "actions");
  d.initial_state = lookup(d.states, get_as<std::string>(require(doc, "initial_state"), "initial_state"),
                           "initial_state");

  const json& noop = require(doc, "do_nothing");
  if (!noop.is_object() || !noop.contains("state") || !noop.contains("action"))
    throw ValidationError("do_nothing", "must be {\"state\": ..., \"action\": ...}");
  d.do_nothing_state =
      lookup(d.states, get_as<std::string>(noop.at("state"), "do_nothing.state"), "do_nothing.state");
  d.do_nothing_action = lookup(d.actions, get_as<std::string>(noop.at("action"), "do_nothing.action"),
                               "do_nothing.action");

  const std::size_t ns = d.states.size();
  const std::size_t na = d.actions.size();

  d.available.assign(ns, {});
  if (doc.contains("available_actions")) {
    const json& avail = doc.at("available_actions");
    if (!avail.is_object()) throw ValidationError("available_actions", "must be an object");
    for (const auto& [state, list] : avail.items()) {
      const std::string field = "available_actions." + state;
      const std::size_t s = lookup(d.states, state, field);
      for (const auto& name : name_list(list, field.c_str()))
        d.available[s].push_back(lookup(d.actions, name, field));
    }
    for (std::size_t s = 0; s < ns; ++s)
      if (!avail.contains(d.states[s]))
        throw ValidationError("available_actions." + d.states[s], "missing entry");
  } else {
    // Default: every action everywhere, except do-nothing outside its state.
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t a = 0; a < na; ++a)
        if (s == d.do_nothing_state || a != d.do_nothing_action) d.available[s].push_back(a);
  }

  d.transitions.assign(ns, std::vector<std::vector<double>>(na));
  d.rewards.assign(ns, std::vector<std::vector<double>>(na));
  const json& transitions = require(doc, "transitions");
  const json& rewards = require(doc, "rewards");
  if (!transitions.is_object()) throw ValidationError("transitions", "must be an object");
  if (!rewards.is_object()) throw ValidationError("rewards", "must be an object");

  for (const auto& [state, by_action] : transitions.items()) {
    const std::string sfield = "transitions." + state;
    const std::size_t s = lookup(d.states, state, sfield);
    if (!by_action.is_object()) throw ValidationError(sfield, "must be an object");
    for (const auto& [action, row] : by_action.items()) {
      const std::string afield = sfield + "." + action;
      const std::size_t a = lookup(d.actions, action, afield);
      if (!row.is_object()) throw ValidationError(afield, "must map states to probabilities");
      auto& dense = d.transitions[s][a];
      dense.assign(ns, 0.0);
      for (const auto& [target, p] : row.items()) {
        const std::string tfield = afield + "." + target;
        dense[lookup(d.states, target, tfield)] = get_as<double>(p, tfield);
      }
    }
  }
  for (const auto& [state, by_action] : rewards.items()) {
    const std::string sfield = "rewards." + state;
    const std::size_t s = lookup(d.states, state, sfield);
    if (!by_action.is_object()) throw ValidationError(sfield, "must be an object");
    for (const auto& [action, vec] : by_action.items()) {
      const std::string afield = sfield + "." + action;
      const std::size_t a = lookup(d.actions, action, afield);
      if (!vec.is_array()) throw ValidationError(afield, "must be an array of k numbers");
      d.rewards[s][a] = get_as<std::vector<double>>(vec, afield);
    }
  }
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t a : d.available[s]) {
      if (a >= na) continue;
      if (d.transitions[s][a].empty())
        throw ValidationError("transitions." + d.states[s] + "." + d.actions[a],
                              "missing transition row for available action");
      if (d.rewards[s][a].empty())
        throw ValidationError("rewards." + d.states[s] + "." + d.actions[a],
                              "missing reward for available action");
    }
  }
  return Momdp(std::move(d));
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("document", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("document", std::string("malformed JSON: ") + e.what());
  }
}

Momdp parse_instance_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError("document", std::string("malformed JSON: ") + e.what());
  }
  return parse_instance(doc);
}

Momdp load_instance(const std::filesystem::path& path) { return parse_instance(read_json_file(path)); }

json instance_to_json(const Momdp& mdp) {
  json doc;
  doc["k"] = mdp.objectives();
  doc["horizon"] = mdp.horizon();
  json states = json::array();
  json actions = json::array();
  for (StateIndex s = 0; s < mdp.num_states(); ++s) states.push_back(mdp.state_name(s));
  for (ActionIndex a = 0; a < mdp.num_actions(); ++a) actions.push_back(mdp.action_name(a));
  doc["states"] = std::move(states);
  doc["actions"] = std::move(actions);
  doc["initial_state"] = mdp.state_name(mdp.initial_state());
  doc["do_nothing"] = {{"state", mdp.state_name(mdp.do_nothing_state())},
                       {"action", mdp.action_name(mdp.do_nothing_action())}};
  json avail = json::object();
  json transitions = json::object();
  json rewards = json::object();
  for (StateIndex s = 0; s < mdp.num_states(); ++s) {
    const std::string& sname = mdp.state_name(s);
    json list = json::array();
    for (ActionIndex a : mdp.available(s)) {
      const std::string& aname = mdp.action_name(a);
      list.push_back(aname);
      json row = json::object();
      for (const Successor& nxt : mdp.successors(s, a))
        row[mdp.state_name(nxt.state)] = nxt.probability;
      transitions[sname][aname] = std::move(row);
      rewards[sname][aname] = vector_to_json(mdp.reward(s, a));
    }
    avail[sname] = std::move(list);
  }
  doc["available_actions"] = std::move(avail);
  doc["transitions"] = std::move(transitions);
  doc["rewards"] = std::move(rewards);
  return doc;
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

std::string instance_digest(const Momdp& mdp) { return sha256_hex(instance_to_json(mdp).dump()); }

std::string policy_digest(const Policy& policy) {
  std::ostringstream out;
  out << policy.horizon() << ':' << policy.num_states();
  for (ActionIndex a : policy.table()) out << ',' << a;
  return sha256_hex(out.str());
}

json policy_to_json(const Momdp& mdp, const Policy& policy) {
  json steps = json::array();
  for (int h = 0; h < policy.horizon(); ++h) {
    json step = json::object();
    for (StateIndex s = 0; s < policy.num_states(); ++s)
      step[mdp.state_name(s)] = mdp.action_name(policy.action(h, s));
    steps.push_back(std::move(step));
  }
  return {{"assignment", std::move(steps)}};
}

Policy policy_from_json(const Momdp& mdp, const json& doc) {
  const std::size_t ns = mdp.num_states();
  const int horizon = mdp.horizon();
  Policy policy = lowest_index_policy(mdp);
  std::vector<bool> seen(static_cast<std::size_t>(horizon) * ns, false);

  auto read_step = [&](const json& step, int h, const std::string& field) {
    if (!step.is_object()) throw ValidationError(field, "must map states to actions");
    for (const auto& [state, action] : step.items()) {
      const std::string sfield = field + "." + state;
      auto s = mdp.find_state(state);
      if (!s) throw ValidationError(sfield, "unknown state");
      auto a = mdp.find_action(get_as<std::string>(action, sfield));
      if (!a) throw ValidationError(sfield, "unknown action");
      policy.set_action(h, *s, *a);
      seen[static_cast<std::size_t>(h) * ns + *s] = true;
    }
  };

  if (doc.contains("assignment")) {
    const json& steps = doc.at("assignment");
    if (!steps.is_array() || static_cast<int>(steps.size()) != horizon)
      throw ValidationError("assignment", "must hold one entry per step");
    for (int h = 0; h < horizon; ++h)
      read_step(steps[static_cast<std::size_t>(h)], h, "assignment." + std::to_string(h));
  } else if (doc.contains("stationary")) {
    for (int h = 0; h < horizon; ++h) read_step(doc.at("stationary"), h, "stationary");
  } else {
    throw ValidationError("policy", "expected \"assignment\" or \"stationary\"");
  }
  for (std::size_t c = 0; c < seen.size(); ++c)
    if (!seen[c])
      throw ValidationError("assignment." + std::to_string(c / ns) + "." + mdp.state_name(c % ns),
                            "missing action");
  check_policy(mdp, policy);
  return policy;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vector_from_json(const json& array) {
  const auto values = get_as<std::vector<double>>(array, "vector");
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace mopref
