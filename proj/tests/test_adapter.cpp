#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"
#include "vistext/adapter.hpp"

using namespace vistext;
using namespace vistext::adapter;
using nlohmann::json;

TEST_CASE("reset message yields an observation") {
  AdapterSession s;
  auto r = json::parse(s.handle(R"({"type":"reset","seed":7,"difficulty":"easy"})"));
  CHECK(r["type"] == "observation");
  CHECK(r["done"] == false);
  CHECK(!r["admissible_actions"].empty());
}

TEST_CASE("step before reset is an error") {
  AdapterSession s;
  auto r = json::parse(s.handle(R"({"type":"step","action":"look"})"));
  CHECK(r["type"] == "error");
  CHECK(json::parse(s.handle("not json"))["type"] == "error");
  CHECK(json::parse(s.handle(R"({"type":"fly"})"))["type"] == "error");
}

TEST_CASE("close terminates the session") {
  std::istringstream in(R"({"type":"reset","seed":1,"difficulty":"easy"})"
                        "\n"
                        R"({"type":"step","action":"look"})"
                        "\n"
                        R"({"type":"close"})"
                        "\n"
                        R"({"type":"step","action":"look"})"
                        "\n");
  std::ostringstream out;
  serve_adapter(in, out);
  std::istringstream lines(out.str());
  std::vector<std::string> got;
  for (std::string l; std::getline(lines, l);) got.push_back(l);
  REQUIRE(got.size() == 3);
  CHECK(json::parse(got[2])["type"] == "close");
}

TEST_CASE("adapter env matches the built-in engine") {
  AdapterSession session;
  AdapterEnv env([&](const std::string& line) { return session.handle(line); },
                 R"({"type":"reset","seed":3,"difficulty":"easy"})", 1, "remote");
  auto w = std::make_shared<const envcore::WorldSpec>(envcore::generate_world(
      3, envcore::Difficulty::for_level(envcore::Level::easy, 3), envcore::EntityPool::minihouse()));
  envcore::MiniHouseEnv local(w);
  auto a = env.reset();
  auto b = local.reset();
  CHECK(a == b);
  for (int i = 0; i < 5 && !a.done; ++i) {
    const auto act = a.admissible_actions.front();
    a = env.step(act);
    b = local.step(act);
    CHECK(a == b);
  }
}

TEST_CASE("observation message round trip") {
  envcore::Observation o{"You see a mug.", {"look", "take mug"}, 1.0, 1, true};
  CHECK(parse_observation_message(observation_message(o)) == o);
  CHECK_THROWS(parse_observation_message(error_message("x")));
}
