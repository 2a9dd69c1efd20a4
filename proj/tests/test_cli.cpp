#include <cstdlib>
#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"
#include "test_support.hpp"
#include "vistext/cli.hpp"

using namespace vistext;
using nlohmann::json;

namespace {

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "vistext");
  return cli::cli_main(args);
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run_cli({}) == 2);
  CHECK(run_cli({"train", "--bogus"}) == 2);
  CHECK(run_cli({"eval"}) == 2);
  CHECK(run_cli({"cache", "frobnicate"}) == 2);
  CHECK(run_cli({"--help"}) == 0);
}

TEST_CASE("runtime errors exit with 1") {
  auto dir = vt_test::temp_dir("cli-rt");
  CHECK(run_cli({"eval", "--model", (dir / "nope").string(), "--out", (dir / "e").string()}) == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("gen writes worlds and a manifest") {
  auto dir = vt_test::temp_dir("cli-gen");
  REQUIRE(run_cli({"gen", "--seed", "4", "--count", "3", "--difficulty", "hard", "--out", dir.string()}) == 0);
  CHECK(std::filesystem::exists(dir / "world_002.json"));
  auto w = envcore::load_world(read_file(dir / "world_000.json"));
  CHECK(w.rooms.size() >= 3);
  auto m = cli::RunManifest::from_json(read_file(dir / "manifest.json"));
  CHECK(m.command == "gen");
  CHECK(m.master_seed == 4);
  CHECK(!m.finished.empty());
  std::filesystem::remove_all(dir);
}

TEST_CASE("config precedence: flag over file over default") {
  auto dir = vt_test::temp_dir("cli-cfg");
  agent::TrainConfig file_cfg;
  file_cfg.encoder = vt_test::reduced_encoder();
  file_cfg.episodes = 3;
  file_cfg.step_cap = 4;
  file_cfg.learning_rate = 0.05;
  write_file_atomic(dir / "cfg.json", file_cfg.to_json());
  REQUIRE(run_cli({"train", "--agent", "text_only", "--config", (dir / "cfg.json").string(), "--episodes", "2",
               "--count", "2", "--seed", "9", "--out", (dir / "run").string()}) == 0);
  auto m = cli::RunManifest::from_json(read_file(dir / "run" / "manifest.json"));
  auto cfg = agent::TrainConfig::from_json(m.config_json);
  CHECK(cfg.episodes == 2);
  CHECK(cfg.step_cap == 4);
  CHECK(cfg.learning_rate == 0.05);
  CHECK(cfg.entropy_weight == agent::TrainConfig{}.entropy_weight);
  CHECK(cfg.master_seed == 9);
  CHECK(m.config_json.find("image_size") != std::string::npos);
  auto curve = read_file(dir / "run" / "curve.csv");
  CHECK(std::count(curve.begin(), curve.end(), '\n') == 3);
  std::filesystem::remove_all(dir);
}

TEST_CASE("train, eval and compare on a small multimodal run") {
  auto dir = vt_test::temp_dir("cli-flow");
  setenv("SCENE_CACHE_DIR", (dir / "cache").c_str(), 1);
  agent::TrainConfig c;
  c.encoder = vt_test::reduced_encoder();
  c.episodes = 2;
  c.step_cap = 3;
  c.finetune_generator = true;
  write_file_atomic(dir / "cfg.json", c.to_json());
  REQUIRE(run_cli({"pretrain-gen", "--epochs", "1", "--image-size", "8", "--out", (dir / "gen").string()}) == 0);
  REQUIRE(run_cli({"train", "--config", (dir / "cfg.json").string(), "--generator", (dir / "gen" / "generator.ckpt").string(),
               "--count", "2", "--out", (dir / "mm").string()}) == 0);
  CHECK(std::filesystem::exists(dir / "mm" / "model.ckpt"));
  CHECK(std::filesystem::exists(dir / "mm" / "generator.ckpt"));
  REQUIRE(run_cli({"eval", "--model", (dir / "mm").string(), "--runs", "2", "--count", "2", "--split", "out", "--out",
               (dir / "ev").string()}) == 0);
  auto rep = json::parse(read_file(dir / "ev" / "report.json"));
  CHECK(rep["cells"][0]["agent"] == "multimodal");
  CHECK(rep["cells"][0]["split"] == "OUT");
  CHECK(rep["cells"][0]["runs"] == 2);
  REQUIRE(run_cli({"eval", "--agent", "random", "--runs", "2", "--count", "2", "--split", "out", "--step-cap", "3",
               "--out", (dir / "ev_r").string()}) == 0);
  REQUIRE(run_cli({"compare", (dir / "ev").string(), (dir / "ev_r").string(), "--run", (dir / "mm").string(), "--out",
               (dir / "cmp").string()}) == 0);
  CHECK(read_file(dir / "cmp" / "table.txt").find("multimodal") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "cmp" / "table.csv"));
  CHECK(std::filesystem::exists(dir / "cmp" / "curves_easy.svg"));
  REQUIRE(run_cli({"explain", "--model", (dir / "mm").string(), "--out", (dir / "ex").string()}) == 0);
  CHECK(std::filesystem::exists(dir / "ex" / "bundle" / "manifest.json"));
  unsetenv("SCENE_CACHE_DIR");
  std::filesystem::remove_all(dir);
}

TEST_CASE("cache warm, stats and clear") {
  auto dir = vt_test::temp_dir("cli-cache");
  setenv("SCENE_CACHE_DIR", (dir / "cache").c_str(), 1);
  write_file_atomic(dir / "q.txt", "red apple\nThe Red Apple\nblue mug\n");
  CHECK(run_cli({"cache", "warm", "--queries", (dir / "q.txt").string(), "--out", (dir / "o").string()}) == 0);
  auto stats = json::parse(read_file(dir / "o" / "cache_stats.json"));
  CHECK(stats["backend_calls"] == 2);
  CHECK(stats["entries"] == 2);
  CHECK(run_cli({"cache", "stats"}) == 0);
  CHECK(run_cli({"cache", "clear"}) == 0);
  CHECK(imagery::ImageCache(dir / "cache" / "images").size() == 0);
  unsetenv("SCENE_CACHE_DIR");
  std::filesystem::remove_all(dir);
}

TEST_CASE("the binary speaks the adapter protocol") {
  const char* bin = std::getenv("VISTEXT_CLI");
  if (!bin) return;
  auto dir = vt_test::temp_dir("cli-serve");
  write_file_atomic(dir / "in.txt", "{\"type\":\"reset\",\"seed\":2,\"difficulty\":\"easy\"}\n{\"type\":\"close\"}\n");
  const std::string cmd = std::string(bin) + " serve-env < " + (dir / "in.txt").string() + " > " + (dir / "out.txt").string();
  REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
  auto out = read_file(dir / "out.txt");
  CHECK(out.find("\"type\":\"observation\"") != std::string::npos);
  CHECK(out.find("\"type\":\"close\"") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifest round trip and config hash") {
  cli::RunManifest m;
  m.command = "train";
  m.argv = {"vistext", "train"};
  m.config_json = R"({"b":1,"a":2})";
  m.master_seed = 3;
  auto back = cli::RunManifest::from_json(m.to_json());
  CHECK(back.command == "train");
  CHECK(cli::config_hash(R"({"b":1,"a":2})") == cli::config_hash(R"({"a":2,"b":1})"));
}
