#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "mopref/io.hpp"
#include "mopref/momdp.hpp"
#include "oracles.hpp"

using namespace mopref;
using namespace mopref::testing;
using nlohmann::json;

namespace {

Policy stationary(const Momdp& mdp, std::initializer_list<std::pair<const char*, const char*>> map) {
  json doc = json::object();
  for (auto [s, a] : map) doc[s] = a;
  return policy_from_json(mdp, {{"stationary", doc}});
}

Trajectory path(const Momdp& mdp, std::vector<std::string> states, std::vector<std::string> actions) {
  Trajectory t;
  for (const auto& s : states) t.states.push_back(*mdp.find_state(s));
  for (const auto& a : actions) t.actions.push_back(*mdp.find_action(a));
  return t;
}

json two_by_two() {
  return json::parse(R"({
    "k": 1, "horizon": 2, "states": ["s0", "s1"], "actions": ["a0", "a1", "a2"],
    "initial_state": "s0", "do_nothing": {"state": "s0", "action": "a0"},
    "available_actions": {"s0": ["a0", "a1"], "s1": ["a1", "a2"]},
    "transitions": {"s0": {"a0": {"s0": 1}, "a1": {"s1": 1}},
                    "s1": {"a1": {"s0": 1}, "a2": {"s1": 1}}},
    "rewards": {"s0": {"a0": [0], "a1": [0.5]}, "s1": {"a1": [0.2], "a2": [0.7]}}
  })");
}

}  // namespace

TEST_CASE("bandit4 fixture parses with the scaled rewards") {
  const Momdp mdp = load_fixture("bandit4");
  CHECK(mdp.objectives() == 3);
  CHECK(mdp.horizon() == 1);
  CHECK(mdp.num_actions() == 5);
  const ValueVector r3 = mdp.reward(0, *mdp.find_action("a3"));
  CHECK(r3(0) == doctest::Approx(85.0 / 96).epsilon(1e-15));
  CHECK(r3(1) == doctest::Approx(25.0 / 48).epsilon(1e-15));
  CHECK(r3(2) == doctest::Approx(35.0 / 96).epsilon(1e-15));
}

TEST_CASE("scalarized planning on bandit4") {
  const Momdp mdp = load_fixture("bandit4");
  const PlanResult e1 = scalarized_plan(mdp, Eigen::Vector3d(1, 0, 0));
  CHECK(mdp.action_name(e1.policy.action(0, 0)) == "a1");
  CHECK(e1.value == doctest::Approx(1.0));

  const PlanResult zero = scalarized_plan(mdp, Eigen::Vector3d::Zero());
  CHECK(zero.value == 0.0);
  CHECK(zero.policy == lowest_index_policy(mdp));
}

TEST_CASE("planner ties go to the lowest action index") {
  const Momdp mdp = load_fixture("bandit4");
  // a2 = (1,2,3)/8 and a4 = (1,3,2)/8 both score 1/2 under (-1,1,1); a3 scores 0.
  const PlanResult plan = scalarized_plan(mdp, Eigen::Vector3d(-1, 1, 1));
  CHECK(plan.value == doctest::Approx(0.5));
  CHECK(mdp.action_name(plan.policy.action(0, 0)) == "a2");
}

TEST_CASE("validation names the offending field") {
  json doc = read_json_file(fixture("bandit4.json"));

  SUBCASE("transition mass") {
    doc["transitions"]["s0"]["a1"]["s0"] = 0.9;
    try {
      parse_instance(doc);
      FAIL("accepted");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("transition mass") != std::string::npos);
      CHECK(e.field() == "transitions.s0.a1");
    }
  }
  SUBCASE("reward range") {
    doc["rewards"]["s0"]["a2"][1] = 8;
    try {
      parse_instance(doc);
      FAIL("accepted");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("reward range") != std::string::npos);
      CHECK(e.field().find("rewards.s0.a2") == 0);
    }
  }
  SUBCASE("negative probability") {
    doc["transitions"]["s0"]["a1"] = {{"s0", -0.5}};
    CHECK_THROWS_AS(parse_instance(doc), ValidationError);
  }
  SUBCASE("do-nothing must be a zero-reward self loop") {
    doc["rewards"]["s0"]["a0"] = {0.1, 0, 0};
    CHECK_THROWS_AS(parse_instance(doc), ValidationError);
  }
  SUBCASE("unknown state reference") {
    doc["transitions"]["s0"]["a1"] = {{"nowhere", 1.0}};
    try {
      parse_instance(doc);
      FAIL("accepted");
    } catch (const ValidationError& e) {
      CHECK(e.field().find("transitions.s0.a1") == 0);
    }
  }
  SUBCASE("reward of the wrong dimension") {
    doc["rewards"]["s0"]["a1"] = {1, 0};
    CHECK_THROWS_AS(parse_instance(doc), ValidationError);
  }
  SUBCASE("missing key") {
    doc.erase("horizon");
    CHECK_THROWS_AS(parse_instance(doc), ValidationError);
  }
}

TEST_CASE("do-nothing action only at the initial state") {
  json doc = read_json_file(fixture("coinflip.json"));
  doc["available_actions"]["sA"] = {"a0", "stay"};
  CHECK_THROWS_AS(parse_instance(doc), ValidationError);
}

TEST_CASE("values of simple policies") {
  const Momdp mdp = load_fixture("bandit4");
  CHECK(vector_value(mdp, do_nothing_policy(mdp)) == ValueVector::Zero(3));
  const ValueVector v = vector_value(mdp, stationary(mdp, {{"s0", "a3"}}));
  CHECK(v(0) == doctest::Approx(85.0 / 96));
  CHECK(v(1) == doctest::Approx(25.0 / 48));
  CHECK(v(2) == doctest::Approx(35.0 / 96));
}

TEST_CASE("trajectory returns") {
  const Momdp bandit = load_fixture("bandit4");
  const ValueVector r = trajectory_return(bandit, path(bandit, {"s0", "s0"}, {"a1"}));
  CHECK(r(0) == 1.0);
  CHECK(r(1) == 0.5);
  CHECK(r(2) == 0.25);
  CHECK(trajectory_return(bandit, path(bandit, {"s0", "s0"}, {"a0"})) == ValueVector::Zero(3));

  const Momdp chain = load_fixture("chain");
  const ValueVector c = trajectory_return(chain, path(chain, {"s0", "s1", "s2"}, {"step", "step"}));
  CHECK(c(0) == doctest::Approx(0.4));
  CHECK(c(1) == doctest::Approx(0.6));

  Trajectory bad = path(bandit, {"s0", "s0"}, {"a1"});
  bad.actions[0] = 42;
  CHECK_THROWS_AS(trajectory_return(bandit, bad), ValidationError);
}

TEST_CASE("trajectory probabilities") {
  const Momdp chain = load_fixture("chain");
  const Policy walk = stationary(chain, {{"s0", "step"}, {"s1", "step"}, {"s2", "step"}});
  CHECK(trajectory_probability(chain, walk, path(chain, {"s0", "s1", "s2"}, {"step", "step"})) == 1.0);

  const Momdp coin = load_fixture("coinflip");
  const Policy go = stationary(coin, {{"s0", "go"}, {"sA", "stay"}, {"sB", "stay"}});
  CHECK(trajectory_probability(coin, go, path(coin, {"s0", "sA", "sA"}, {"go", "stay"})) == 0.5);
  CHECK(trajectory_probability(coin, do_nothing_policy(coin),
                               path(coin, {"s0", "sA", "sA"}, {"go", "stay"})) == 0.0);
  CHECK(trajectory_probability(coin, go, path(coin, {"s0", "sA"}, {"go"})) == 0.0);
}

TEST_CASE("policy enumeration counts") {
  CHECK(PolicyEnumerator(parse_instance(two_by_two()), 100).size() == 16);
  CHECK(PolicyEnumerator(load_fixture("bandit4"), 100).size() == 5);

  json three = two_by_two();
  three["states"].push_back("s2");
  three["available_actions"]["s1"] = {"a1", "a2"};
  three["available_actions"]["s2"] = {"a1", "a2"};
  three["transitions"]["s2"] = {{"a1", {{"s2", 1}}}, {"a2", {{"s0", 1}}}};
  three["rewards"]["s2"] = {{"a1", {0.1}}, {"a2", {0.3}}};
  CHECK(PolicyEnumerator(parse_instance(three), 100).size() == 64);

  CHECK_THROWS_AS(PolicyEnumerator(parse_instance(two_by_two()), 15), PolicyLimitExceeded);
}

TEST_CASE("policy enumeration yields each policy once") {
  const Momdp mdp = parse_instance(two_by_two());
  PolicyEnumerator policies(mdp, 100);
  std::vector<std::vector<ActionIndex>> seen;
  while (auto p = policies.next()) {
    check_policy(mdp, *p);
    seen.push_back(p->table());
  }
  std::sort(seen.begin(), seen.end());
  CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
  CHECK(seen.size() == 16);
}

TEST_CASE("property: planner dominates every enumerated policy") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const Momdp mdp = random_instance(rng, random_dims(rng, 3, 3, 3, 3));
    Eigen::VectorXd w(mdp.objectives());
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = uniform(rng, -1, 1);
    const PlanResult plan = scalarized_plan(mdp, w);
    double best = -1e300;
    for (const auto& p : all_policies(mdp)) {
      const double v = w.dot(value_by_enumeration(mdp, p));
      CHECK(v <= plan.value + 1e-9);
      best = std::max(best, v);
    }
    CHECK(plan.value == doctest::Approx(best).epsilon(1e-12));
    CHECK(w.dot(vector_value(mdp, plan.policy)) == doctest::Approx(plan.value).epsilon(1e-12));
  }
}

TEST_CASE("property: values agree with trajectory enumeration") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 60; ++trial) {
    const Momdp mdp = random_instance(rng, random_dims(rng, 4, 3, 4, 4));
    const auto policies = all_policies(mdp);
    const Policy& p = policies[std::uniform_int_distribution<std::size_t>(0, policies.size() - 1)(rng)];
    const ValueVector direct = vector_value(mdp, p);
    CHECK((direct - value_by_enumeration(mdp, p)).cwiseAbs().maxCoeff() <= 1e-9);
    for (int j = 0; j < mdp.objectives(); ++j) {
      CHECK(direct(j) >= -1e-12);
      CHECK(direct(j) <= mdp.horizon() + 1e-12);
    }
    double mass = 0.0;
    for (const auto& t : enumerate_trajectories(mdp, p)) {
      const double q = trajectory_probability(mdp, p, t.trajectory);
      CHECK(q == doctest::Approx(t.probability).epsilon(1e-12));
      mass += q;
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("property: mixture values are the weighted component values") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 40; ++trial) {
    const Momdp mdp = random_instance(rng, random_dims(rng, 3, 3, 3, 3));
    const auto policies = all_policies(mdp);
    auto pick = [&] {
      return policies[std::uniform_int_distribution<std::size_t>(0, policies.size() - 1)(rng)];
    };
    const double a = uniform(rng);
    const Policy p = pick(), q = pick();
    const MixturePolicy mix({{a, p}, {1.0 - a, q}});
    const ValueVector expected = a * vector_value(mdp, p) + (1.0 - a) * vector_value(mdp, q);
    CHECK(vector_value(mdp, mix) == expected);
  }
}

TEST_CASE("mixture weights must form a simplex") {
  const Momdp mdp = load_fixture("bandit4");
  const Policy p = lowest_index_policy(mdp);
  CHECK_THROWS(MixturePolicy({{0.5, p}, {0.4, p}}));
  CHECK_THROWS(MixturePolicy({{1.5, p}, {-0.5, p}}));
  CHECK_NOTHROW(MixturePolicy({{0.5, p}, {0.5, p}}));
}
