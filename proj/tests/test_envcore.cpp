#include "doctest.h"
#include "test_support.hpp"

using namespace vistext;
using namespace vistext::envcore;

namespace {

std::shared_ptr<const WorldSpec> world(std::uint64_t seed, Level level) {
  return std::make_shared<const WorldSpec>(
      generate_world(seed, Difficulty::for_level(level, seed), EntityPool::minihouse()));
}

}  // namespace

TEST_CASE("minihouse pool is valid and tag-consistent") {
  auto p = EntityPool::minihouse();
  CHECK_NOTHROW(p.validate());
  for (const auto& o : p.objects)
    for (const auto& c : p.goal_map.at(o.name)) CHECK(p.find_container(c)->visual_tag == o.visual_tag);
}

TEST_CASE("difficulty invariants") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    auto e = generate_world(s, Difficulty::for_level(Level::easy, s), EntityPool::minihouse());
    CHECK(e.rooms.size() == 1);
    CHECK(e.max_score >= 1);
    CHECK(e.max_score <= 3);
    auto h = generate_world(s, Difficulty::for_level(Level::hard, s), EntityPool::minihouse());
    CHECK((h.rooms.size() == 3 || h.rooms.size() == 4));
    CHECK((h.goals.size() == 4 || h.goals.size() == 5));
  }
  CHECK_THROWS(Difficulty{Level::easy, 2, 1}.validate());
  CHECK_THROWS(Difficulty{Level::easy, 1, 4}.validate());
}

TEST_CASE("generate_world is deterministic and misplaces every object") {
  auto d = Difficulty::for_level(Level::medium, 7);
  auto a = generate_world(7, d, EntityPool::minihouse());
  auto b = generate_world(7, d, EntityPool::minihouse());
  CHECK(save_world(a) == save_world(b));
  CHECK(load_world(save_world(a)) == a);
  for (const auto& [obj, goal] : a.goals) CHECK(a.placements.at(obj).support != goal);
}

TEST_CASE("pool too small names the category") {
  auto p = EntityPool::minihouse();
  p.objects.resize(2);
  p = EntityPool::from_tags(p.objects, p.containers, p.rooms);
  try {
    generate_world(1, Difficulty{Level::hard, 3, 5}, p);
    FAIL("expected PoolTooSmall");
  } catch (const PoolTooSmall& e) {
    CHECK(e.category() == "objects");
  }
}

TEST_CASE("split_pools is name-disjoint") {
  auto [tr, out] = split_pools(EntityPool::minihouse(), 1, 0.3);
  CHECK(out.objects.size() == 6);
  CHECK(tr.objects.size() == 14);
  for (const auto& o : out.objects) CHECK(tr.find_object(o.name) == nullptr);
  for (const auto& c : out.containers) CHECK(tr.find_container(c.name) == nullptr);
  CHECK_NOTHROW(tr.validate());
  CHECK_NOTHROW(out.validate());
}

TEST_CASE("parse_command grammar") {
  CHECK(parse_command("take the apple") == Command{Verb::take, "apple", std::nullopt, std::nullopt});
  CHECK(parse_command("put apple in fridge") == Command{Verb::put, "apple", "fridge", Prep::in});
  CHECK(parse_command("PUT the book ON a shelf") == Command{Verb::put, "book", "shelf", Prep::on});
  CHECK(parse_command("take apple from fridge").arg2 == "fridge");
  CHECK(parse_command("look").verb == Verb::look);
  try {
    parse_command("dance wildly");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.token() == "dance");
  }
}

TEST_CASE("reset, step and reward accounting") {
  auto w = vt_test::easy_world(4, 1);
  auto [s, obs] = reset(w);
  CHECK(obs.score == 0);
  CHECK(obs.reward == 0.0);
  CHECK(std::find(obs.admissible_actions.begin(), obs.admissible_actions.end(), "look") !=
        obs.admissible_actions.end());
  for (const auto& a : obs.admissible_actions) CHECK(a.rfind("put", 0) != 0);
  CHECK(std::is_sorted(obs.admissible_actions.begin(), obs.admissible_actions.end()));

  const auto& [obj, goal] = *w->goals.begin();
  const auto prep = to_string(w->entities.find_container(goal)->preposition);
  auto [s1, o1] = step(s, "take " + obj);
  CHECK(s1.inventory.count(obj) == 1);
  CHECK(o1.reward == 0.0);
  auto [s2, o2] = step(s1, "put " + obj + " " + std::string(prep) + " " + goal);
  CHECK(o2.reward == 1.0);
  CHECK(o2.done);
  CHECK_THROWS_AS(step(s2, "look"), EpisodeOver);
}

TEST_CASE("placed flag prevents re-earning") {
  auto w = vt_test::easy_world(5, 2);
  auto [s, obs] = reset(w);
  const auto& [obj, goal] = *w->goals.begin();
  const std::string put = "put " + obj + " " + std::string(to_string(w->entities.find_container(goal)->preposition)) +
                          " " + goal;
  std::tie(s, obs) = step(s, "take " + obj);
  std::tie(s, obs) = step(s, put);
  CHECK(obs.reward == 1.0);
  std::tie(s, obs) = step(s, "take " + obj + " from " + goal);
  std::tie(s, obs) = step(s, put);
  CHECK(obs.reward == 0.0);
  CHECK(s.score == 1);
}

TEST_CASE("invalid actions consume a step") {
  auto [s, obs] = reset(vt_test::easy_world(6, 1));
  auto [s1, o1] = step(s, "take unicorn");
  CHECK(o1.text == kInvalidText);
  CHECK(s1.steps_taken == 1);
  CHECK(state_fingerprint(s1) == state_fingerprint(s));
  auto [s2, o2] = step(s1, "dance");
  CHECK(o2.text == kInvalidText);
}

TEST_CASE("step cap ends the episode") {
  auto [s, obs] = reset(vt_test::easy_world(6, 1), 3);
  for (int i = 0; i < 3; ++i) std::tie(s, obs) = step(s, "look");
  CHECK(obs.done);
  CHECK(s.steps_taken == 3);
}

TEST_CASE("properties over random walks") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (Level lv : {Level::easy, Level::hard}) {
      auto w = world(seed, lv);
      auto sol = solve(w);
      REQUIRE(sol.has_value());
      auto [s, obs] = reset(w);
      Rng rng(seed);
      double rewards = 0.0;
      int last_score = 0;
      while (!obs.done) {
        const auto acts = obs.admissible_actions;
        REQUIRE(!acts.empty());
        std::tie(s, obs) = step(s, acts[rng.index(acts.size())]);
        CHECK(obs.text != kInvalidText);
        CHECK(obs.score >= last_score);
        last_score = obs.score;
        rewards += obs.reward;
      }
      CHECK(rewards == doctest::Approx(obs.score));
      // replaying the solution reaches max score
      auto [t, o] = reset(w);
      for (const auto& a : *sol) std::tie(t, o) = step(t, a);
      CHECK(o.score == w->max_score);
    }
  }
}

TEST_CASE("observation is deterministic across runs") {
  auto w = world(9, Level::hard);
  auto run = [&] {
    MiniHouseEnv env(w);
    std::vector<Observation> seq{env.reset()};
    Rng rng(2);
    for (int i = 0; i < 20 && !seq.back().done; ++i) {
      const auto& acts = seq.back().admissible_actions;
      seq.push_back(env.step(acts[rng.index(acts.size())]));
    }
    return seq;
  };
  CHECK(run() == run());
}
