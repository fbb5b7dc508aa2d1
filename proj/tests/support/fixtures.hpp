#pragma once

#include <string>
#include <vector>

#include "mopref/io.hpp"

#ifndef MOPREF_FIXTURE_DIR
#error "MOPREF_FIXTURE_DIR must be defined"
#endif

namespace mopref::testing {

inline std::string fixture(const std::string& name) {
  return std::string(MOPREF_FIXTURE_DIR) + "/" + name;
}

inline Momdp load_fixture(const std::string& name) { return load_instance(fixture(name + ".json")); }

}  // namespace mopref::testing

namespace mopref::testing {

/// One-state, horizon-1 instance: a0 plus one action per reward vector.
inline Momdp bandit(const std::vector<std::vector<double>>& rewards, int horizon = 1) {
  const std::size_t k = rewards.front().size();
  nlohmann::json doc = {{"k", k},
                        {"horizon", horizon},
                        {"states", {"s0"}},
                        {"initial_state", "s0"},
                        {"do_nothing", {{"state", "s0"}, {"action", "a0"}}}};
  doc["actions"] = {"a0"};
  doc["transitions"]["s0"]["a0"] = {{"s0", 1.0}};
  doc["rewards"]["s0"]["a0"] = std::vector<double>(k, 0.0);
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    const std::string a = "a" + std::to_string(i + 1);
    doc["actions"].push_back(a);
    doc["transitions"]["s0"][a] = {{"s0", 1.0}};
    doc["rewards"]["s0"][a] = rewards[i];
  }
  return parse_instance(doc);
}

inline Policy play(const Momdp& mdp, const std::string& action) {
  Policy p = do_nothing_policy(mdp);
  for (int h = 0; h < mdp.horizon(); ++h) p.set_action(h, 0, *mdp.find_action(action));
  return p;
}

}  // namespace mopref::testing
