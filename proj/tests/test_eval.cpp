#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"
#include "vistext/eval.hpp"

using namespace vistext;
using namespace vistext::eval;

namespace {

CellMetrics cell(std::string agent, std::string diff, std::string split, double score, double steps) {
  CellMetrics c;
  c.agent = std::move(agent);
  c.difficulty = std::move(diff);
  c.split = std::move(split);
  c.runs = 1;
  c.mean_score = score;
  c.mean_steps = steps;
  c.run_scores = {score};
  c.run_steps = {steps};
  c.seeds = {1};
  return c;
}

}  // namespace

TEST_CASE("normalized score") {
  CHECK(normalized_score(3, 4) == 0.75);
  CHECK(normalized_score(0, 1) == 0.0);
  CHECK_THROWS(normalized_score(1, 0));
  CHECK_THROWS(normalized_score(5, 4));
}

TEST_CASE("best index tie-breaks low") {
  CHECK(best_index({0.5, 0.9, 0.9}, true) == 1);
  CHECK(best_index({12, 7, 7}, false) == 1);
}

TEST_CASE("report json and csv") {
  MetricsReport r;
  r.config_hash = "abc";
  r.master_seed = 7;
  r.cells = {cell("text_only", "easy", "OUT", 0.5, 20)};
  CHECK(MetricsReport::from_json(r.to_json()) == r);
  auto csv = r.to_csv();
  CHECK(csv.rfind("agent,difficulty,split,runs,mean_score,std_score,mean_steps,std_steps\n", 0) == 0);
  CHECK(csv.find("text_only,easy,OUT,1,") != std::string::npos);
}

TEST_CASE("merge rejects mixed step caps") {
  MetricsReport a, b;
  a.cells = {cell("random", "easy", "IN", 0.1, 50)};
  b.cells = {cell("multimodal", "easy", "IN", 0.9, 10)};
  CHECK(merge({a, b}).cells.size() == 2);
  b.step_cap = 10;
  CHECK_THROWS(merge({a, b}));
}

TEST_CASE("compare marks the best cell per column") {
  MetricsReport a, b;
  a.cells = {cell("text_only", "easy", "OUT", 0.6, 30), cell("text_only", "easy", "IN", 0.9, 12)};
  b.cells = {cell("multimodal", "easy", "OUT", 0.8, 25), cell("multimodal", "easy", "IN", 0.9, 14)};
  auto cmp = compare({a, b});
  CHECK(cmp.text.find("0.80*") != std::string::npos);
  CHECK(cmp.text.find("25.00*") != std::string::npos);
  CHECK(cmp.text.find("12.00*") != std::string::npos);
  CHECK(cmp.text.find("0.60*") == std::string::npos);
  CHECK(cmp.csv.find("0.900000*") < cmp.csv.find("multimodal"));
  std::istringstream lines(cmp.csv);
  std::string header;
  std::getline(lines, header);
  CHECK(header.find("score:easy-IN") < header.find("score:easy-OUT"));
}

TEST_CASE("curves svg lists every series") {
  std::vector<agent::CurveRow> c(3);
  for (int i = 0; i < 3; ++i) {
    c[i].episode = i;
    c[i].normalized_score = i / 2.0;
  }
  auto svg = curves_svg({{"text_only", c}, {"multimodal", c}}, "easy");
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("text_only") != std::string::npos);
  CHECK(svg.find("multimodal") != std::string::npos);
  CHECK(svg.find("<polyline") != std::string::npos);
}

TEST_CASE("bundled game sets") {
  GameSetSpec in;
  auto a = bundled_games(in);
  auto b = bundled_games(in);
  REQUIRE(a.size() == 10);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(*a[i] == *b[i]);
  GameSetSpec out = in;
  out.out_split = true;
  out.count = 5;
  auto o = bundled_games(out);
  REQUIRE(o.size() == 5);
  for (const auto& g : a)
    for (const auto& [obj, goal] : g->goals)
      for (const auto& h : o) CHECK(h->goals.count(obj) == 0);
  for (const auto& g : o) CHECK(g->rooms.size() == 1);
}

TEST_CASE("random walk oracle agrees with its uncapped form and with simulation") {
  auto w = vt_test::easy_world(11, 1);
  const double t = random_walk_absorption_time(w);
  CHECK(t > 1.0);
  CHECK(random_walk_expected_steps(w, 100000) == doctest::Approx(t).epsilon(1e-6));
  CHECK(random_walk_expected_steps(w, 1) == 1.0);
  const double capped = random_walk_expected_steps(w, 50);
  CHECK(capped <= t);
  Rng rng(3);
  double total = 0.0;
  const int n = 3000;
  for (int i = 0; i < n; ++i) {
    auto [s, obs] = envcore::reset(w, 50);
    while (!obs.done) std::tie(s, obs) = envcore::step(s, obs.admissible_actions[rng.index(obs.admissible_actions.size())]);
    total += s.steps_taken;
  }
  CHECK(total / n == doctest::Approx(capped).epsilon(0.05));
}

TEST_CASE("evaluate is deterministic and seeds runs") {
  GameSetSpec gs;
  gs.count = 2;
  auto games = bundled_games(gs);
  agent::AgentResources res;
  agent::TrainConfig cfg;
  cfg.step_cap = 20;
  EvalSpec spec;
  spec.runs = 3;
  auto a = evaluate(agent::AgentKind::random, res, games, cfg, spec);
  auto b = evaluate(agent::AgentKind::random, res, games, cfg, spec);
  CHECK(a.to_json() == b.to_json());
  REQUIRE(a.cells.size() == 1);
  const auto& c = a.cells[0];
  CHECK(c.runs == 3);
  CHECK(c.run_scores.size() == 3);
  CHECK(c.mean_steps <= 20.0);
  CHECK(c.seeds[0] != c.seeds[1]);
  CHECK(run_seed(1, agent::AgentKind::random, "g", 0) == run_seed(1, agent::AgentKind::random, "g", 0));
  CHECK(run_seed(1, agent::AgentKind::random, "g", 0) != run_seed(2, agent::AgentKind::random, "g", 0));
}
