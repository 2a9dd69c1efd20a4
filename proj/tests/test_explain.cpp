#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"
#include "vistext/explain.hpp"

using namespace vistext;
using namespace vistext::explain;

namespace {

FeatureTarget sum_target() {
  return [](const Vec& f, Vec& df) {
    df = Vec::Ones(f.size());
    return f.sum();
  };
}

}  // namespace

TEST_CASE("matched filter localizes the stimulus") {
  auto m = matched_filter_model(64);
  for (int q = 0; q < 4; ++q) {
    auto hm = grad_cam(patch_stimulus(64, q), sum_target(), m);
    auto mass = hm.quadrant_mass();
    CHECK(mass[q] >= 0.6);
    CHECK(*std::max_element(hm.grid.begin(), hm.grid.end()) == doctest::Approx(1.0));
    for (double v : hm.grid) CHECK(v >= 0.0);
  }
}

TEST_CASE("constant target gives an all-zero map") {
  auto m = matched_filter_model(64);
  FeatureTarget constant = [](const Vec& f, Vec& df) {
    df = Vec::Zero(f.size());
    return 1.0;
  };
  auto hm = grad_cam(patch_stimulus(64, 1), constant, m);
  for (double v : hm.grid) CHECK(v == 0.0);
  for (double v : hm.quadrant_mass()) CHECK(v == 0.0);
  CHECK(hm.overlay.in_unit_range());
}

TEST_CASE("grid matches the last conv resolution") {
  auto m = matched_filter_model(64);
  auto hm = grad_cam(patch_stimulus(64, 0), sum_target(), m);
  CHECK(hm.grid_h == 4);
  CHECK(hm.grid_w == 4);
  CHECK(hm.upsampled.size() == 64u * 64u);
}

TEST_CASE("explain_step and bundle export") {
  auto world = vt_test::easy_world(2, 1);
  auto vocab = agent::build_vocabulary({world});
  agent::TrainConfig cfg;
  cfg.encoder = vt_test::reduced_encoder();
  auto model = encoders::init_model(cfg.encoder, vocab, 1);
  auto gen = imagery::init_generator(vt_test::reduced_generator(vocab), 2);
  agent::AgentResources res;
  res.model = &model;
  res.generator = &gen;
  envcore::MiniHouseEnv env(world);
  auto obs = env.reset();
  auto b = explain_step(obs, agent::AgentKind::multimodal, res, cfg);
  CHECK(!b.action.empty());
  CHECK(b.heatmaps.size() == b.queries.size());
  CHECK(!b.heatmaps.empty());
  auto dir = vt_test::temp_dir("explain");
  export_bundle(b, dir);
  auto man = nlohmann::json::parse(read_file(dir / "manifest.json"));
  CHECK(man["items"].size() == b.heatmaps.size());
  CHECK(man["items"][0].contains("mass_per_quadrant"));
  CHECK(png_title(read_file(dir / "0_overlay.png")) == b.action);
  CHECK(png_title(read_file(dir / "0_raw.png")) == b.queries[0]);
  std::filesystem::remove_all(dir);

  auto t = explain_step(obs, agent::AgentKind::text_only, res, cfg);
  CHECK(t.heatmaps.empty());
  CHECK(!t.note.empty());
}
