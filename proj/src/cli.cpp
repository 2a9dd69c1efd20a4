#include "vistext/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "vistext/adapter.hpp"
#include "vistext/agent.hpp"
#include "vistext/common.hpp"
#include "vistext/eval.hpp"
#include "vistext/explain.hpp"
#include "vistext/imagery.hpp"
#include "vistext/phrasex.hpp"

namespace vistext::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string config_hash(std::string_view json_text) { return sha256_hex(json::parse(json_text).dump()); }

std::string RunManifest::to_json() const {
  json j = {{"command", command},
            {"argv", argv},
            {"config", config_json.empty() ? json::object() : json::parse(config_json)},
            {"config_hash", config_json.empty() ? "" : config_hash(config_json)},
            {"master_seed", master_seed},
            {"module_versions", module_versions},
            {"outputs", outputs},
            {"extra", extra},
            {"started", started},
            {"finished", finished}};
  return j.dump(2);
}

RunManifest RunManifest::from_json(const std::string& text) {
  json j = json::parse(text);
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.argv = j.at("argv").get<std::vector<std::string>>();
  m.config_json = j.at("config").dump();
  m.master_seed = j.at("master_seed").get<std::uint64_t>();
  m.module_versions = j.at("module_versions").get<std::map<std::string, std::string>>();
  m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
  m.extra = j.value("extra", std::map<std::string, std::string>{});
  m.started = j.at("started").get<std::string>();
  m.finished = j.at("finished").get<std::string>();
  return m;
}

fs::path cache_root() {
  if (const char* env = std::getenv("SCENE_CACHE_DIR"); env && *env) return env;
  return ".vistext-cache";
}

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::map<std::string, std::string> module_versions() {
  std::map<std::string, std::string> v;
  for (const char* m : {"envcore", "phrasex", "imagery", "encoders", "agent", "eval", "explain", "cli"}) v[m] = kVersion;
  return v;
}

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = ".";
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Master seed");
  app->add_option("--config", c.config, "JSON config file (flags take precedence)")->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "Output directory");
}

// Tracks one run directory and keeps its manifest current on disk.
class Run {
 public:
  Run(std::string command, std::vector<std::string> argv, const fs::path& out) : dir_(out) {
    fs::create_directories(dir_);
    m_.command = std::move(command);
    m_.argv = std::move(argv);
    m_.module_versions = module_versions();
    m_.started = utc_timestamp();
  }
  RunManifest& manifest() { return m_; }
  const fs::path& dir() const { return dir_; }
  void output(const std::string& role, const fs::path& p) { m_.outputs[role] = p.filename().string(); }
  void write() { write_file_atomic(dir_ / "manifest.json", m_.to_json()); }
  void finish() {
    m_.finished = utc_timestamp();
    write();
  }

 private:
  fs::path dir_;
  RunManifest m_;
};

// ---------------------------------------------------------------------------
// Config resolution: flag > config file > default

struct TrainFlags {
  std::string agent = "multimodal";
  std::optional<int> episodes, step_cap, k_images, checkpoint_interval;
  std::optional<double> lr, gamma, entropy, value_weight, gen_lr_scale, clip, name_dropout;
  std::optional<std::string> optimizer, image_source;
  bool finetune = false, no_finetune = false;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("--agent", f.agent, "random | text_only | multimodal");
  app->add_option("--episodes", f.episodes, "Training episodes");
  app->add_option("--step-cap", f.step_cap, "Steps per episode");
  app->add_option("--lr", f.lr, "Learning rate");
  app->add_option("--optimizer", f.optimizer, "sgd | adam");
  app->add_option("--gamma", f.gamma, "Discount");
  app->add_option("--entropy", f.entropy, "Entropy bonus weight");
  app->add_option("--value-weight", f.value_weight, "Value loss weight");
  app->add_option("--image-source", f.image_source, "generator | retrieval | none");
  app->add_option("--k-images", f.k_images, "Image queries per step");
  app->add_option("--generator-lr-scale", f.gen_lr_scale, "Generator learning-rate multiplier");
  app->add_option("--max-grad-norm", f.clip, "Gradient clipping norm (0 disables)");
  app->add_option("--name-dropout", f.name_dropout, "Per-episode entity-name masking probability");
  app->add_option("--checkpoint-interval", f.checkpoint_interval, "Episodes between checkpoints (0 disables)");
  app->add_flag("--finetune", f.finetune, "Fine-tune the generator through the policy loss");
  app->add_flag("--no-finetune", f.no_finetune, "Keep the generator fixed");
}

agent::TrainConfig resolve_config(const Common& c, const TrainFlags& f) {
  agent::TrainConfig cfg;
  if (!c.config.empty()) cfg = agent::TrainConfig::from_json(read_file(c.config));
  if (c.seed) cfg.master_seed = *c.seed;
  if (f.episodes) cfg.episodes = *f.episodes;
  if (f.step_cap) cfg.step_cap = *f.step_cap;
  if (f.k_images) cfg.k_images = *f.k_images;
  if (f.checkpoint_interval) cfg.checkpoint_interval = *f.checkpoint_interval;
  if (f.lr) cfg.learning_rate = *f.lr;
  if (f.gamma) cfg.gamma = *f.gamma;
  if (f.entropy) cfg.entropy_weight = *f.entropy;
  if (f.value_weight) cfg.value_weight = *f.value_weight;
  if (f.gen_lr_scale) cfg.generator_lr_scale = *f.gen_lr_scale;
  if (f.clip) cfg.max_grad_norm = *f.clip;
  if (f.name_dropout) cfg.name_dropout = *f.name_dropout;
  if (f.optimizer) cfg.optimizer = agent::parse_optimizer(*f.optimizer);
  if (f.image_source) cfg.image_source = agent::parse_image_source(*f.image_source);
  if (f.finetune && f.no_finetune) throw UsageError("--finetune and --no-finetune conflict");
  if (f.finetune) cfg.finetune_generator = true;
  if (f.no_finetune) cfg.finetune_generator = false;
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Games

struct GameFlags {
  std::string games_dir;
  std::string difficulty = "easy";
  int count = 10;
  std::string split = "in";
  std::uint64_t split_seed = 1;
  std::uint64_t world_seed = 1;
};

void add_game_flags(CLI::App* app, GameFlags& g) {
  app->add_option("--games", g.games_dir, "Directory of world JSON files (from `gen`)");
  app->add_option("--difficulty", g.difficulty, "easy | medium | hard (generated sets)");
  app->add_option("--count", g.count, "Worlds in a generated set");
  app->add_option("--split", g.split, "in | out (generated sets)");
  app->add_option("--split-seed", g.split_seed, "Seed of the entity split");
  app->add_option("--world-seed", g.world_seed, "Seed of the generated world set");
}

bool is_out(const std::string& split) {
  auto s = to_lower(split);
  if (s != "in" && s != "out") throw UsageError("--split must be in or out");
  return s == "out";
}

std::vector<agent::Game> load_games(const GameFlags& g) {
  std::vector<agent::Game> games;
  if (!g.games_dir.empty()) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(g.games_dir))
      if (e.path().extension() == ".json" && e.path().filename() != "manifest.json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) games.push_back(std::make_shared<const envcore::WorldSpec>(envcore::load_world(read_file(f))));
    if (games.empty()) throw std::runtime_error("no world files in " + g.games_dir);
    return games;
  }
  eval::GameSetSpec spec;
  spec.level = envcore::parse_level(g.difficulty);
  spec.count = g.count;
  spec.out_split = is_out(g.split);
  spec.split_seed = g.split_seed;
  spec.world_seed = g.world_seed;
  return eval::bundled_games(spec);
}

// ---------------------------------------------------------------------------
// Model and generator files

const char* kModelFile = "model.ckpt";
const char* kGeneratorFile = "generator.ckpt";

void save_model(const fs::path& path, const encoders::Model& model, agent::AgentKind kind,
                const agent::TrainConfig& cfg) {
  json meta = {{"agent", std::string(agent::to_string(kind))},
               {"train_config", json::parse(cfg.to_json())},
               {"vocab", model.vocab.words()}};
  save_checkpoint(path, model.store, meta.dump());
}

struct LoadedModel {
  agent::AgentKind kind = agent::AgentKind::multimodal;
  agent::TrainConfig config;
  encoders::Model model;
};

LoadedModel load_model(const fs::path& path) {
  std::string meta_text;
  LoadedModel lm;
  lm.model.store = load_checkpoint(path, &meta_text);
  json meta = json::parse(meta_text);
  lm.kind = agent::parse_agent_kind(meta.at("agent").get<std::string>());
  lm.config = agent::TrainConfig::from_json(meta.at("train_config").dump());
  lm.model.config = lm.config.encoder;
  auto words = meta.at("vocab").get<std::vector<std::string>>();
  lm.model.vocab = Vocabulary(std::vector<std::string>(words.begin(), words.end()));
  return lm;
}

imagery::GeneratorParams load_generator(const fs::path& path) {
  std::string meta;
  imagery::GeneratorParams g;
  g.store = load_checkpoint(path, &meta);
  g.config = imagery::GeneratorConfig::from_json(meta);
  return g;
}

// Owns whatever image source the config asks for.
struct ImageBackend {
  std::unique_ptr<imagery::RetrievalBackend> backend;
  std::unique_ptr<imagery::ImageCache> cache;
  std::unique_ptr<imagery::RetrievalSource> source;
};

std::unique_ptr<imagery::RetrievalBackend> make_backend(const std::string& kind, const std::string& corpus,
                                                        const std::string& url) {
  if (kind == "offline") return std::make_unique<imagery::OfflineBackend>();
  if (kind == "http") {
    if (url.empty()) throw UsageError("--backend http needs --url");
    return std::make_unique<imagery::HttpBackend>(url);
  }
  if (kind != "local") throw UsageError("--backend must be local, offline or http");
  fs::path dir = corpus.empty() ? cache_root() / "corpus" : fs::path(corpus);
  if (corpus.empty() && !fs::exists(dir)) imagery::write_synthetic_corpus(dir, envcore::EntityPool::minihouse());
  return imagery::local_corpus_backend(dir);
}

ImageBackend make_retrieval(const std::string& corpus) {
  ImageBackend b;
  b.backend = make_backend("local", corpus, "");
  b.cache = std::make_unique<imagery::ImageCache>(cache_root() / "images");
  b.source = std::make_unique<imagery::RetrievalSource>(*b.backend, *b.cache);
  return b;
}

std::vector<std::string> argv_vector(int argc, char** argv) { return {argv, argv + argc}; }

// ---------------------------------------------------------------------------
// Subcommands

int cmd_gen(const Common& c, const GameFlags& g, const std::vector<std::string>& args) {
  Run run("gen", args, c.out);
  const std::uint64_t seed = c.seed.value_or(1);
  run.manifest().master_seed = seed;
  run.manifest().config_json = json{{"difficulty", g.difficulty}, {"count", g.count}, {"split", g.split},
                                    {"split_seed", g.split_seed}}.dump();
  run.write();
  GameFlags gen = g;
  gen.games_dir.clear();
  gen.world_seed = seed;
  auto games = load_games(gen);
  for (std::size_t i = 0; i < games.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "world_%03zu.json", i);
    write_file_atomic(run.dir() / name, envcore::save_world(*games[i]));
    run.output("world_" + std::to_string(i), name);
  }
  run.finish();
  std::cout << "wrote " << games.size() << " worlds to " << run.dir().string() << "\n";
  return 0;
}

struct PretrainFlags {
  std::optional<int> epochs;
  std::optional<double> lr;
  std::optional<std::string> objective;
  std::optional<int> image_size;
};

int cmd_pretrain(const Common& c, const PretrainFlags& f, const std::vector<std::string>& args) {
  imagery::PretrainConfig pc;
  if (!c.config.empty()) {
    json j = json::parse(read_file(c.config));
    pc.epochs = j.value("epochs", pc.epochs);
    pc.batch_size = j.value("batch_size", pc.batch_size);
    pc.learning_rate = j.value("learning_rate", pc.learning_rate);
    pc.token_dropout = j.value("token_dropout", pc.token_dropout);
    if (j.value("objective", std::string("reconstruction")) == "adversarial")
      pc.objective = imagery::PretrainObjective::adversarial;
    pc.seed = j.value("seed", pc.seed);
    pc.generator.image_size = j.value("image_size", pc.generator.image_size);
  }
  if (c.seed) pc.seed = *c.seed;
  if (f.epochs) pc.epochs = *f.epochs;
  if (f.lr) pc.learning_rate = *f.lr;
  if (f.image_size) pc.generator.image_size = *f.image_size;
  if (f.objective) {
    if (*f.objective == "adversarial") pc.objective = imagery::PretrainObjective::adversarial;
    else if (*f.objective == "reconstruction") pc.objective = imagery::PretrainObjective::reconstruction;
    else throw UsageError("--objective must be reconstruction or adversarial");
  }
  Run run("pretrain-gen", args, c.out);
  run.manifest().master_seed = pc.seed;
  run.manifest().config_json =
      json{{"epochs", pc.epochs}, {"batch_size", pc.batch_size}, {"learning_rate", pc.learning_rate},
           {"token_dropout", pc.token_dropout}, {"image_size", pc.generator.image_size},
           {"objective", pc.objective == imagery::PretrainObjective::adversarial ? "adversarial" : "reconstruction"},
           {"seed", pc.seed}}.dump();
  run.output("generator", kGeneratorFile);
  run.output("loss", "pretrain_loss.csv");
  run.write();
  auto ds = imagery::color_caption_dataset(envcore::EntityPool::minihouse(), pc.generator.image_size);
  auto result = imagery::pretrain_generator(ds, pc, [](int e, double l) {
    std::cerr << "epoch " << e << " loss " << l << "\n";
  });
  save_checkpoint(run.dir() / kGeneratorFile, result.params.store, result.params.config.to_json());
  std::ostringstream csv;
  csv.precision(17);
  csv << "epoch,loss\n";
  for (std::size_t i = 0; i < result.epoch_loss.size(); ++i) csv << i << ',' << result.epoch_loss[i] << '\n';
  write_file_atomic(run.dir() / "pretrain_loss.csv", csv.str());
  run.finish();
  return 0;
}

struct ResourceFlags {
  std::string generator;
  std::string corpus;
};

// Resources for `kind`; the generator comes from `generator_path`, or is
// pretrained with defaults when none is given.
agent::AgentResources make_resources(agent::AgentKind kind, const agent::TrainConfig& cfg, encoders::Model* model,
                                     const fs::path& generator_path, imagery::GeneratorParams& gen_store,
                                     ImageBackend& retrieval, const std::string& corpus, const fs::path& out_dir) {
  agent::AgentResources res;
  res.model = kind == agent::AgentKind::random ? nullptr : model;
  res.noise_seed = derive_seed({"noise", std::to_string(cfg.master_seed)});
  if (kind != agent::AgentKind::multimodal) return res;
  if (cfg.image_source == agent::ImageSourceKind::generator) {
    if (!generator_path.empty()) {
      gen_store = load_generator(generator_path);
    } else {
      std::cerr << "no --generator given; pretraining one with default settings\n";
      imagery::PretrainConfig pc;
      pc.seed = cfg.master_seed;
      pc.generator.image_size = cfg.encoder.image_size;
      gen_store = imagery::pretrain_generator(imagery::color_caption_dataset(envcore::EntityPool::minihouse(),
                                                                             cfg.encoder.image_size),
                                              pc)
                      .params;
      if (!out_dir.empty())
        save_checkpoint(out_dir / "generator_pretrained.ckpt", gen_store.store, gen_store.config.to_json());
    }
    res.generator = &gen_store;
  } else if (cfg.image_source == agent::ImageSourceKind::retrieval) {
    retrieval = make_retrieval(corpus);
    res.retrieval = retrieval.source.get();
  }
  return res;
}

int cmd_train(const Common& c, const TrainFlags& f, const GameFlags& g, const ResourceFlags& r,
              const std::vector<std::string>& args) {
  const auto kind = agent::parse_agent_kind(f.agent);
  auto cfg = resolve_config(c, f);
  Run run("train", args, c.out);
  run.manifest().master_seed = cfg.master_seed;
  run.manifest().config_json = cfg.to_json();
  run.manifest().extra = {{"agent", std::string(agent::to_string(kind))},
                          {"difficulty", g.difficulty},
                          {"split", g.games_dir.empty() ? to_lower(g.split) : "custom"}};
  run.output("model", kModelFile);
  run.output("curve", "curve.csv");
  if (cfg.finetune_generator && kind == agent::AgentKind::multimodal) run.output("generator", kGeneratorFile);
  run.write();

  auto games = load_games(g);
  encoders::Model model = encoders::init_model(cfg.encoder, agent::build_vocabulary(games),
                                               derive_seed({"init", std::to_string(cfg.master_seed)}));
  imagery::GeneratorParams gen;
  ImageBackend retrieval;
  auto res = make_resources(kind, cfg, &model, r.generator, gen, retrieval, r.corpus, run.dir());
  auto hook = [&](int ep) {
    fs::create_directories(run.dir() / "checkpoints");
    save_model(run.dir() / "checkpoints" / ("model_ep" + std::to_string(ep) + ".ckpt"), model, kind, cfg);
  };
  auto result = agent::train(kind, games, res, cfg, hook, [](const agent::CurveRow& row) {
    if ((row.episode + 1) % 10 == 0)
      std::cerr << "episode " << row.episode + 1 << " score " << row.normalized_score << " steps " << row.steps
                << "\n";
  });
  write_file_atomic(run.dir() / "curve.csv", agent::curve_csv(result.curve));
  save_model(run.dir() / kModelFile, model, kind, cfg);
  if (cfg.finetune_generator && res.generator)
    save_checkpoint(run.dir() / kGeneratorFile, gen.store, gen.config.to_json());
  if (res.generator && !cfg.finetune_generator && !r.generator.empty())
    run.manifest().extra["generator"] = fs::absolute(r.generator).string();
  run.finish();
  return 0;
}

struct EvalFlags {
  std::string model;
  std::string agent;
  int runs = eval::kDefaultRuns;
  std::optional<int> step_cap;
};

fs::path model_path(const std::string& p) {
  fs::path path = p;
  if (fs::is_directory(path)) path /= kModelFile;
  if (!fs::exists(path)) throw std::runtime_error("no model checkpoint at " + path.string());
  return path;
}

// Fine-tuned generator beside the model wins over --generator.
fs::path generator_for(const fs::path& model_file, const std::string& flag) {
  auto sibling = model_file.parent_path() / kGeneratorFile;
  if (fs::exists(sibling)) return sibling;
  if (!flag.empty()) return flag;
  auto man = model_file.parent_path() / "manifest.json";
  if (fs::exists(man)) {
    auto m = RunManifest::from_json(read_file(man));
    if (auto it = m.extra.find("generator"); it != m.extra.end()) return it->second;
    if (fs::exists(model_file.parent_path() / "generator_pretrained.ckpt"))
      return model_file.parent_path() / "generator_pretrained.ckpt";
  }
  return {};
}

int cmd_eval(const Common& c, const EvalFlags& f, const GameFlags& g, const ResourceFlags& r,
             const std::vector<std::string>& args) {
  LoadedModel lm;
  agent::AgentKind kind;
  fs::path mfile;
  if (f.model.empty()) {
    if (f.agent != "random") throw UsageError("eval needs --model unless --agent random");
    kind = agent::AgentKind::random;
    if (!c.config.empty()) lm.config = agent::TrainConfig::from_json(read_file(c.config));
  } else {
    mfile = model_path(f.model);
    lm = load_model(mfile);
    kind = lm.kind;
    if (!f.agent.empty() && agent::parse_agent_kind(f.agent) != kind)
      throw UsageError("--agent disagrees with the checkpoint's agent");
  }
  auto cfg = lm.config;
  if (c.seed) cfg.master_seed = *c.seed;
  if (f.step_cap) cfg.step_cap = *f.step_cap;
  Run run("eval", args, c.out);
  run.manifest().master_seed = cfg.master_seed;
  run.manifest().config_json = cfg.to_json();
  run.output("report", "report.json");
  run.output("report_csv", "report.csv");
  run.write();

  auto games = load_games(g);
  imagery::GeneratorParams gen;
  ImageBackend retrieval;
  fs::path gpath = mfile.empty() ? fs::path(r.generator) : generator_for(mfile, r.generator);
  auto res = make_resources(kind, cfg, &lm.model, gpath, gen, retrieval, r.corpus, run.dir());
  eval::EvalSpec spec;
  spec.runs = f.runs;
  spec.difficulty = g.games_dir.empty() ? g.difficulty : "custom";
  spec.split = g.games_dir.empty() ? (is_out(g.split) ? "OUT" : "IN") : "custom";
  auto report = eval::evaluate(kind, res, games, cfg, spec);
  write_file_atomic(run.dir() / "report.json", report.to_json());
  write_file_atomic(run.dir() / "report.csv", report.to_csv());
  run.finish();
  for (const auto& cell : report.cells)
    std::cout << cell.agent << " " << cell.difficulty << "-" << cell.split << " score " << cell.mean_score
              << " steps " << cell.mean_steps << "\n";
  return 0;
}

std::vector<agent::CurveRow> read_curve(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  std::vector<agent::CurveRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    agent::CurveRow r;
    char comma;
    ls >> r.episode >> comma >> r.normalized_score >> comma >> r.steps >> comma >> r.policy_loss >> comma >>
        r.value_loss >> comma >> r.entropy;
    if (!ls) throw std::runtime_error("malformed curve row in " + path.string());
    rows.push_back(r);
  }
  return rows;
}

int cmd_compare(const Common& c, const std::vector<std::string>& report_paths, const std::vector<std::string>& runs,
                const std::vector<std::string>& args) {
  if (report_paths.empty()) throw UsageError("compare needs at least one report");
  std::vector<eval::MetricsReport> reports;
  for (const auto& p : report_paths) {
    fs::path path = p;
    if (fs::is_directory(path)) path /= "report.json";
    reports.push_back(eval::MetricsReport::from_json(read_file(path)));
  }
  Run run("compare", args, c.out);
  run.output("table", "table.txt");
  run.output("table_csv", "table.csv");
  run.write();
  auto cmp = eval::compare(reports);
  write_file_atomic(run.dir() / "table.txt", cmp.text);
  write_file_atomic(run.dir() / "table.csv", cmp.csv);
  std::map<std::string, std::map<std::string, std::vector<agent::CurveRow>>> by_difficulty;
  for (const auto& d : runs) {
    auto m = RunManifest::from_json(read_file(fs::path(d) / "manifest.json"));
    const std::string diff = m.extra.count("difficulty") ? m.extra.at("difficulty") : "custom";
    const std::string label = (m.extra.count("agent") ? m.extra.at("agent") : fs::path(d).filename().string());
    by_difficulty[diff][label] = read_curve(fs::path(d) / "curve.csv");
  }
  for (const auto& [diff, curves] : by_difficulty) {
    const std::string name = "curves_" + diff + ".svg";
    write_file_atomic(run.dir() / name, eval::curves_svg(curves, "Training curves (" + diff + ")"));
    run.output("plot_" + diff, name);
  }
  run.finish();
  std::cout << cmp.text;
  return 0;
}

struct CacheFlags {
  std::string action;
  std::string queries;
  std::string backend = "local";
  std::string corpus;
  std::string url;
};

int cmd_cache(const Common& c, const CacheFlags& f) {
  imagery::ImageCache cache(cache_root() / "images");
  if (f.action == "stats") {
    json j = {{"root", cache.root().string()}, {"entries", cache.size()}};
    std::cout << j.dump(2) << "\n";
    return 0;
  }
  if (f.action == "clear") {
    cache.clear();
    std::cout << "cleared " << cache.root().string() << "\n";
    return 0;
  }
  if (f.action == "warm") {
    if (f.queries.empty()) throw UsageError("cache warm needs --queries <file>");
    auto backend = make_backend(f.backend, f.corpus, f.url);
    std::istringstream in(read_file(f.queries));
    std::string line;
    auto lex = phrasex::Lexicon::default_lexicon();
    while (std::getline(in, line)) {
      auto q = phrasex::normalize_query(line, lex);
      if (!q.empty()) imagery::fetch_retrieved(q, *backend, cache);
    }
    auto s = cache.stats();
    json j = {{"entries", cache.size()}, {"hits", s.hits}, {"misses", s.misses}, {"backend_calls", s.backend_calls}};
    std::cout << j.dump(2) << "\n";
    if (c.out != ".") {
      fs::create_directories(c.out);
      write_file_atomic(fs::path(c.out) / "cache_stats.json", j.dump(2));
    }
    return 0;
  }
  throw UsageError("cache action must be stats, clear or warm");
}

struct ExplainFlags {
  std::string model;
  std::string world;
  std::vector<std::string> actions;
};

int cmd_explain(const Common& c, const ExplainFlags& f, const GameFlags& g, const ResourceFlags& r,
                const std::vector<std::string>& args) {
  auto mfile = model_path(f.model);
  auto lm = load_model(mfile);
  auto cfg = lm.config;
  if (c.seed) cfg.master_seed = *c.seed;
  agent::Game world;
  if (!f.world.empty()) {
    world = std::make_shared<const envcore::WorldSpec>(envcore::load_world(read_file(f.world)));
  } else {
    GameFlags one = g;
    one.count = 1;
    world = load_games(one).front();
  }
  Run run("explain", args, c.out);
  run.manifest().master_seed = cfg.master_seed;
  run.manifest().config_json = cfg.to_json();
  run.output("manifest", "bundle/manifest.json");
  run.write();
  imagery::GeneratorParams gen;
  ImageBackend retrieval;
  auto res = make_resources(lm.kind, cfg, &lm.model, generator_for(mfile, r.generator), gen, retrieval, r.corpus,
                            run.dir());
  envcore::MiniHouseEnv env(world, cfg.step_cap);
  auto obs = env.reset();
  for (const auto& a : f.actions) obs = env.step(a);
  if (obs.done) throw std::runtime_error("the episode is already over after the given actions");
  auto bundle = explain::explain_step(obs, lm.kind, res, cfg);
  explain::export_bundle(bundle, run.dir() / "bundle");
  run.finish();
  std::cout << "action: " << bundle.action << "\n";
  for (const auto& hm : bundle.heatmaps) std::cout << "  query: " << hm.query << "\n";
  if (!bundle.note.empty()) std::cout << bundle.note << "\n";
  return 0;
}

int cmd_phrases(const std::string& text) {
  auto lex = phrasex::Lexicon::default_lexicon();
  auto phrases = phrasex::extract_phrases(text, lex);
  json items = json::array();
  for (const auto& p : phrases)
    items.push_back({{"surface", p.surface},
                     {"kind", p.kind == phrasex::PhraseKind::relation ? "relation" : "object"},
                     {"query", p.query}});
  json j = {{"phrases", items}, {"queries", phrasex::select_queries(phrases, phrasex::kDefaultQueriesPerStep)}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args) {
  CLI::App app{"Text-game agents that imagine what they read"};
  app.name("vistext");
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common gen_c, pre_c, train_c, eval_c, cmp_c, cache_c, expl_c, phr_c, serve_c;
  GameFlags gen_g, train_g, eval_g, expl_g;
  TrainFlags train_f;
  PretrainFlags pre_f;
  ResourceFlags train_r, eval_r, expl_r;
  EvalFlags eval_f;
  CacheFlags cache_f;
  ExplainFlags expl_f;
  std::vector<std::string> cmp_reports, cmp_runs;
  std::string phrase_text;

  auto* gen = app.add_subcommand("gen", "Generate MiniHouse worlds as JSON");
  add_common(gen, gen_c);
  gen->add_option("--difficulty", gen_g.difficulty, "easy | medium | hard");
  gen->add_option("--count", gen_g.count, "Number of worlds");
  gen->add_option("--split", gen_g.split, "in | out");
  gen->add_option("--split-seed", gen_g.split_seed, "Seed of the entity split");
  gen_g.count = 1;

  auto* pre = app.add_subcommand("pretrain-gen", "Pretrain the toy generator on color captions");
  add_common(pre, pre_c);
  pre->add_option("--epochs", pre_f.epochs, "Epochs");
  pre->add_option("--lr", pre_f.lr, "Learning rate");
  pre->add_option("--objective", pre_f.objective, "reconstruction | adversarial");
  pre->add_option("--image-size", pre_f.image_size, "Output image side")->check(CLI::Range(8, 256));

  auto* train = app.add_subcommand("train", "Train an agent; writes a checkpoint and a curve CSV");
  add_common(train, train_c);
  add_train_flags(train, train_f);
  add_game_flags(train, train_g);
  train->add_option("--generator", train_r.generator, "Pretrained generator checkpoint")->check(CLI::ExistingFile);
  train->add_option("--corpus", train_r.corpus, "Local image corpus for retrieval");

  auto* ev = app.add_subcommand("eval", "Evaluate a trained agent with greedy actions");
  add_common(ev, eval_c);
  ev->add_option("--model", eval_f.model, "Model checkpoint or training directory");
  ev->add_option("--agent", eval_f.agent, "Agent kind (random needs no model)");
  ev->add_option("--runs", eval_f.runs, "Runs per game set")->check(CLI::PositiveNumber);
  ev->add_option("--step-cap", eval_f.step_cap, "Steps per episode");
  add_game_flags(ev, eval_g);
  eval_g.count = 5;
  eval_g.world_seed = 2;  // IN test worlds are fresh seeds over the training pool
  ev->add_option("--generator", eval_r.generator, "Generator checkpoint")->check(CLI::ExistingFile);
  ev->add_option("--corpus", eval_r.corpus, "Local image corpus for retrieval");

  auto* cmp = app.add_subcommand("compare", "Tabulate reports and plot training curves");
  add_common(cmp, cmp_c);
  cmp->add_option("reports", cmp_reports, "report.json files or eval directories")->required();
  cmp->add_option("--run", cmp_runs, "Training directory whose curve to plot (repeatable)");

  auto* cache = app.add_subcommand("cache", "Inspect, clear or warm the image cache");
  add_common(cache, cache_c);
  cache->add_option("action", cache_f.action, "stats | clear | warm")->required();
  cache->add_option("--queries", cache_f.queries, "File with one query per line (warm)");
  cache->add_option("--backend", cache_f.backend, "local | offline | http");
  cache->add_option("--corpus", cache_f.corpus, "Local corpus directory");
  cache->add_option("--url", cache_f.url, "HTTP backend base URL");

  auto* expl = app.add_subcommand("explain", "Grad-CAM maps for one decision");
  add_common(expl, expl_c);
  expl->add_option("--model", expl_f.model, "Model checkpoint or training directory")->required();
  expl->add_option("--world", expl_f.world, "World JSON file")->check(CLI::ExistingFile);
  expl->add_option("--action", expl_f.actions, "Action to play before explaining (repeatable)");
  add_game_flags(expl, expl_g);
  expl->add_option("--generator", expl_r.generator, "Generator checkpoint")->check(CLI::ExistingFile);
  expl->add_option("--corpus", expl_r.corpus, "Local image corpus for retrieval");

  auto* phr = app.add_subcommand("phrases", "Print extracted phrases and image queries");
  add_common(phr, phr_c);
  phr->add_option("text", phrase_text, "Observation text")->required();

  auto* serve = app.add_subcommand("serve-env", "Serve MiniHouse over the line-JSON adapter protocol");
  add_common(serve, serve_c);

  std::vector<const char*> cargs;
  for (const auto& a : args) cargs.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen(gen_c, gen_g, args);
    if (*pre) return cmd_pretrain(pre_c, pre_f, args);
    if (*train) return cmd_train(train_c, train_f, train_g, train_r, args);
    if (*ev) return cmd_eval(eval_c, eval_f, eval_g, eval_r, args);
    if (*cmp) return cmd_compare(cmp_c, cmp_reports, cmp_runs, args);
    if (*cache) return cmd_cache(cache_c, cache_f);
    if (*expl) return cmd_explain(expl_c, expl_f, expl_g, expl_r, args);
    if (*phr) return cmd_phrases(phrase_text);
    if (*serve) {
      adapter::serve_adapter(std::cin, std::cout);
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

int cli_main(int argc, char** argv) { return cli_main(argv_vector(argc, argv)); }

}  // namespace vistext::cli
