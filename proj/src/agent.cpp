#include "vistext/agent.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vistext/common.hpp"

namespace vistext::agent {

using nlohmann::json;

std::string_view to_string(AgentKind k) {
  switch (k) {
    case AgentKind::random: return "random";
    case AgentKind::text_only: return "text_only";
    case AgentKind::multimodal: return "multimodal";
  }
  return "?";
}

AgentKind parse_agent_kind(std::string_view s) {
  if (s == "random") return AgentKind::random;
  if (s == "text_only" || s == "text-only" || s == "text") return AgentKind::text_only;
  if (s == "multimodal") return AgentKind::multimodal;
  throw std::invalid_argument("unknown agent kind '" + std::string(s) + "'");
}

std::string_view to_string(ImageSourceKind k) {
  switch (k) {
    case ImageSourceKind::retrieval: return "retrieval";
    case ImageSourceKind::generator: return "generator";
    case ImageSourceKind::none: return "none";
  }
  return "?";
}

ImageSourceKind parse_image_source(std::string_view s) {
  if (s == "retrieval") return ImageSourceKind::retrieval;
  if (s == "generator") return ImageSourceKind::generator;
  if (s == "none") return ImageSourceKind::none;
  throw std::invalid_argument("unknown image source '" + std::string(s) + "'");
}

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  if (episodes < 0) throw std::invalid_argument("episodes must be non-negative");
  if (step_cap < 1) throw std::invalid_argument("step_cap must be positive");
  if (k_images < 1) throw std::invalid_argument("k_images must be at least 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(name_dropout >= 0.0 && name_dropout <= 1.0)) throw std::invalid_argument("name_dropout must lie in [0, 1]");
}

std::string TrainConfig::to_json() const {
  json j = {{"gamma", gamma},
            {"learning_rate", learning_rate},
            {"optimizer", std::string(to_string(optimizer))},
            {"entropy_weight", entropy_weight},
            {"value_weight", value_weight},
            {"episodes", episodes},
            {"step_cap", step_cap},
            {"finetune_generator", finetune_generator},
            {"generator_lr_scale", generator_lr_scale},
            {"max_grad_norm", max_grad_norm},
            {"name_dropout", name_dropout},
            {"image_source", std::string(to_string(image_source))},
            {"k_images", k_images},
            {"master_seed", master_seed},
            {"checkpoint_interval", checkpoint_interval},
            {"encoder", json::parse(encoder.to_json())}};
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  TrainConfig c;
  c.gamma = j.value("gamma", c.gamma);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  if (j.contains("optimizer")) c.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
  c.entropy_weight = j.value("entropy_weight", c.entropy_weight);
  c.value_weight = j.value("value_weight", c.value_weight);
  c.episodes = j.value("episodes", c.episodes);
  c.step_cap = j.value("step_cap", c.step_cap);
  c.finetune_generator = j.value("finetune_generator", c.finetune_generator);
  c.generator_lr_scale = j.value("generator_lr_scale", c.generator_lr_scale);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.name_dropout = j.value("name_dropout", c.name_dropout);
  if (j.contains("image_source")) c.image_source = parse_image_source(j.at("image_source").get<std::string>());
  c.k_images = j.value("k_images", c.k_images);
  c.master_seed = j.value("master_seed", c.master_seed);
  c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
  if (j.contains("encoder")) c.encoder = encoders::EncoderConfig::from_json(j.at("encoder").dump());
  c.validate();
  return c;
}

double Trajectory::normalized_score() const {
  return max_score > 0 ? static_cast<double>(final_score) / max_score : 0.0;
}

std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    g[i] = acc;
  }
  return g;
}

std::size_t select_action(const Vec& policy, SelectMode mode, Rng& rng) {
  const auto n = static_cast<std::size_t>(policy.size());
  if (n == 0) throw std::invalid_argument("empty policy");
  switch (mode) {
    case SelectMode::greedy: {
      std::size_t best = 0;
      for (std::size_t i = 1; i < n; ++i)
        if (policy(i) > policy(best)) best = i;
      return best;
    }
    case SelectMode::random:
      return rng.index(n);
    case SelectMode::sample: {
      double u = rng.uniform(), acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += policy(i);
        if (u < acc) return i;
      }
      return n - 1;
    }
  }
  return 0;
}

double entropy(const Vec& policy) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < policy.size(); ++i)
    if (policy(i) > 0.0) h -= policy(i) * std::log(policy(i));
  return h;
}

// ---------------------------------------------------------------------------
// Forward graph

struct ImageNode {
  bool generated = false;
  imagery::GeneratorTrace gen;
  encoders::ImageTrace cnn;
};

struct StepGraph {
  encoders::TextTrace text;
  std::vector<std::string> image_keys;
  encoders::ScoreTrace score;
};

struct EpisodeGraph {
  std::vector<StepGraph> steps;
  std::map<std::string, ImageNode> images;
  encoders::TextEncoderState state;
  std::size_t fetches = 0;
  std::set<std::string> masked;
};

namespace {

const std::string kBlankKey = "\x01blank";

void check_resources(AgentKind kind, const AgentResources& res, const TrainConfig& config) {
  if (kind == AgentKind::random) return;
  if (!res.model) throw std::invalid_argument("learning agent needs a model");
  if (kind == AgentKind::multimodal) {
    if (config.image_source == ImageSourceKind::generator) {
      if (!res.generator) throw std::invalid_argument("generator image source needs generator params");
      if (res.generator->config.image_size != res.model->config.image_size)
        throw std::invalid_argument("generator and encoder image sizes differ");
    } else if (config.image_source == ImageSourceKind::retrieval) {
      if (!res.retrieval) throw std::invalid_argument("retrieval image source needs a source");
    }
  }
}

bool uses_images(AgentKind kind, const TrainConfig& config) {
  return kind == AgentKind::multimodal && config.image_source != ImageSourceKind::none;
}

std::vector<std::string> step_queries(AgentKind kind, const AgentResources& res, const TrainConfig& config,
                                      const std::string& text) {
  if (!uses_images(kind, config)) return {};
  return phrasex::select_queries(phrasex::extract_phrases(text, res.lexicon), config.k_images);
}

const ImageNode& image_node(EpisodeGraph& g, const std::string& key, AgentResources& res,
                            const TrainConfig& config) {
  auto it = g.images.find(key);
  if (it != g.images.end()) return it->second;
  ImageNode node;
  const auto& model = *res.model;
  ImageTensor img;
  if (key == kBlankKey) {
    img = imagery::blank_image(model.config.image_size);
  } else if (config.image_source == ImageSourceKind::generator) {
    node.generated = true;
    node.gen = imagery::generator_forward(res.generator->config, res.generator->store, key,
                                          imagery::query_noise_seed(res.noise_seed, key));
    img = node.gen.image;
  } else {
    img = res.retrieval->image(key);
  }
  node.cnn = encoders::encode_image(img, model);
  return g.images.emplace(key, std::move(node)).first->second;
}

std::vector<std::string> masked_tokens(const std::string& text, const std::set<std::string>& masked) {
  auto tokens = encoders::tokenize(text);
  for (auto& t : tokens)
    if (masked.count(t)) t = Vocabulary::kOovToken;
  return tokens;
}

StepGraph& forward_step(EpisodeGraph& g, AgentKind kind, AgentResources& res, const TrainConfig& config,
                        const std::string& text, const std::vector<std::string>& queries,
                        const std::vector<std::string>& admissible) {
  const auto& model = *res.model;
  StepGraph sg;
  sg.text = encoders::encode_text(masked_tokens(text, g.masked), g.state, model);
  g.state = sg.text.state_out;
  Vec image_feature = Vec::Zero(model.config.image_feature);
  if (uses_images(kind, config)) {
    sg.image_keys = queries.empty() ? std::vector<std::string>{kBlankKey} : queries;
    g.fetches += queries.size();
    for (const auto& key : sg.image_keys) image_feature += image_node(g, key, res, config).cnn.feature;
    image_feature /= static_cast<double>(sg.image_keys.size());
  }
  std::vector<std::vector<std::string>> actions;
  for (const auto& a : admissible) actions.push_back(masked_tokens(a, g.masked));
  sg.score = encoders::score_action_tokens(encoders::fuse(sg.text.feature, image_feature), actions, model);
  g.steps.push_back(std::move(sg));
  return g.steps.back();
}

std::shared_ptr<EpisodeGraph> new_graph(const AgentResources& res, const std::vector<std::string>& masked) {
  auto g = std::make_shared<EpisodeGraph>();
  g->state = encoders::TextEncoderState::zeros(res.model->config);
  for (const auto& w : masked)
    for (auto& t : encoders::tokenize(w)) g->masked.insert(t);
  return g;
}

std::string dump_transition(const Transition& t, std::size_t index) {
  std::ostringstream os;
  os << "transition " << index << ": observation='" << t.observation << "' action='" << t.action
     << "' reward=" << t.reward << " log_prob=" << t.log_prob << " value=" << t.value;
  return os.str();
}

}  // namespace

Trajectory run_episode(envcore::Environment& env, AgentKind kind, AgentResources& res, const TrainConfig& config,
                       std::uint64_t seed, SelectMode mode, bool keep_graph,
                       const std::vector<std::string>& masked_words) {
  check_resources(kind, res, config);
  Trajectory traj;
  traj.seed = seed;
  traj.masked_words = masked_words;
  traj.max_score = std::max(1, env.max_score());
  Rng rng(seed);
  std::shared_ptr<EpisodeGraph> graph = kind == AgentKind::random ? nullptr : new_graph(res, masked_words);
  envcore::Observation obs = env.reset();
  int step_index = 0;
  while (!obs.done && step_index < config.step_cap) {
    try {
      if (obs.admissible_actions.empty()) throw std::runtime_error("no admissible actions");
      Transition t;
      t.observation = obs.text;
      t.admissible = obs.admissible_actions;
      if (kind == AgentKind::random) {
        t.action_index = static_cast<int>(rng.index(t.admissible.size()));
        t.log_prob = -std::log(static_cast<double>(t.admissible.size()));
      } else {
        t.queries = step_queries(kind, res, config, obs.text);
        const auto& sg = forward_step(*graph, kind, res, config, obs.text, t.queries, t.admissible);
        t.action_index = static_cast<int>(select_action(sg.score.policy, mode, rng));
        t.log_prob = std::log(sg.score.policy(t.action_index));
        t.value = sg.score.value;
      }
      t.action = t.admissible[t.action_index];
      obs = env.step(t.action);
      t.reward = obs.reward;
      t.done = obs.done;
      traj.final_score = obs.score;
      traj.transitions.push_back(std::move(t));
    } catch (const EpisodeError&) {
      throw;
    } catch (const std::exception& e) {
      throw EpisodeError(step_index, e.what());
    }
    ++step_index;
  }
  if (graph) traj.image_fetches = graph->fetches;
  if (keep_graph) traj.graph = graph;
  return traj;
}

LossComponents a2c_loss(const Trajectory& traj, AgentKind kind, AgentResources& res, const TrainConfig& config,
                        bool accumulate, const std::vector<double>* fixed_advantages,
                        std::vector<double>* advantages_out) {
  if (kind == AgentKind::random) throw std::invalid_argument("the random agent has no loss");
  if (traj.transitions.empty()) throw std::invalid_argument("empty trajectory");
  check_resources(kind, res, config);
  auto& model = *res.model;

  std::shared_ptr<EpisodeGraph> graph = traj.graph;
  if (!graph) {
    graph = new_graph(res, traj.masked_words);
    for (const auto& t : traj.transitions) forward_step(*graph, kind, res, config, t.observation, t.queries, t.admissible);
  }
  const auto n = traj.transitions.size();
  std::vector<double> rewards;
  for (const auto& t : traj.transitions) rewards.push_back(t.reward);
  auto returns = discounted_returns(rewards, config.gamma);

  LossComponents lc;
  const int text_dim = model.config.text_feature();
  std::vector<Vec> dtext(n);
  std::map<std::string, Vec> dimage_feature;
  if (advantages_out) advantages_out->assign(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const auto& tr = traj.transitions[t];
    const auto& sg = graph->steps[t];
    const Vec& pi = sg.score.policy;
    const double v = sg.score.value;
    const double adv = fixed_advantages ? (*fixed_advantages)[t] : returns[t] - v;
    if (advantages_out) (*advantages_out)[t] = adv;
    const double logp = std::log(pi(tr.action_index));
    const double h = entropy(pi);
    lc.policy_loss += -logp * adv;
    lc.value_loss += (returns[t] - v) * (returns[t] - v);
    lc.entropy += h;
    if (!std::isfinite(logp) || !std::isfinite(v) || !std::isfinite(h))
      throw NonFiniteLoss("non-finite loss at " + dump_transition(tr, t));
    if (!accumulate) continue;

    Vec dlogits = adv * pi;
    dlogits(tr.action_index) -= adv;
    const double beta = config.entropy_weight;
    for (Eigen::Index i = 0; i < pi.size(); ++i)
      if (pi(i) > 0.0) dlogits(i) += beta * pi(i) * (std::log(pi(i)) + h);
    const double dvalue = -2.0 * config.value_weight * (returns[t] - v);
    Vec dfused = encoders::score_backward(sg.score, dlogits, dvalue, model);
    dtext[t] = dfused.head(text_dim);
    if (!sg.image_keys.empty()) {
      Vec share = dfused.tail(model.config.image_feature) / static_cast<double>(sg.image_keys.size());
      for (const auto& key : sg.image_keys) {
        auto [it, inserted] = dimage_feature.try_emplace(key, Vec::Zero(model.config.image_feature));
        it->second += share;
      }
    }
  }
  lc.total = lc.policy_loss + config.value_weight * lc.value_loss - config.entropy_weight * lc.entropy;
  if (!std::isfinite(lc.total)) throw NonFiniteLoss("non-finite total loss in episode seeded " + std::to_string(traj.seed));
  if (!accumulate) return lc;

  auto dstate = encoders::TextEncoderState::zeros(model.config);
  for (std::size_t t = n; t-- > 0;) dstate = encoders::text_backward(graph->steps[t].text, dtext[t], dstate, model);

  const bool finetune = config.finetune_generator && res.generator;
  for (const auto& [key, dfeat] : dimage_feature) {
    const auto& node = graph->images.at(key);
    const bool to_generator = finetune && node.generated;
    ImageTensor dimg = encoders::image_backward(node.cnn, dfeat, model, to_generator);
    if (to_generator)
      imagery::generator_backward(res.generator->config, res.generator->store, node.gen, dimg, res.generator->store);
  }
  return lc;
}

LossComponents a2c_update(const Trajectory& traj, AgentKind kind, AgentResources& res, const TrainConfig& config) {
  res.model->store.zero_grad();
  const bool finetune = config.finetune_generator && res.generator;
  if (finetune) res.generator->store.zero_grad();
  auto lc = a2c_loss(traj, kind, res, config, true);
  if (config.max_grad_norm > 0.0) {
    double sq = std::pow(res.model->store.grad_norm(), 2);
    if (finetune) sq += std::pow(res.generator->store.grad_norm(), 2);
    const double norm = std::sqrt(sq);
    if (norm > config.max_grad_norm) {
      const double scale = config.max_grad_norm / norm;
      auto shrink = [scale](ParamStore& s) {
        for (auto& [name, p] : s.all())
          for (double& g : p.grad) g *= scale;
      };
      shrink(res.model->store);
      if (finetune) shrink(res.generator->store);
    }
  }
  const double gen_lr = config.learning_rate * config.generator_lr_scale;
  if (config.optimizer == OptimizerKind::adam) {
    if (!res.model_optimizer) res.model_optimizer = std::make_shared<Adam>(config.learning_rate);
    res.model_optimizer->step(res.model->store);
    if (finetune) {
      if (!res.generator_optimizer) res.generator_optimizer = std::make_shared<Adam>(gen_lr);
      res.generator_optimizer->step(res.generator->store);
    }
  } else {
    sgd_step(res.model->store, config.learning_rate, {});
    if (finetune) sgd_step(res.generator->store, gen_lr, {});
  }
  if (!res.model->store.all_finite() || (finetune && !res.generator->store.all_finite()))
    throw NonFiniteLoss("parameters became non-finite after the update of episode seeded " + std::to_string(traj.seed));
  return lc;
}

std::string curve_csv(const std::vector<CurveRow>& curve) {
  std::ostringstream os;
  os.precision(17);
  os << "episode,normalized_score,steps,policy_loss,value_loss,entropy\n";
  for (const auto& r : curve)
    os << r.episode << ',' << r.normalized_score << ',' << r.steps << ',' << r.policy_loss << ',' << r.value_loss
       << ',' << r.entropy << '\n';
  return os.str();
}

std::vector<std::string> sample_masked_names(const envcore::WorldSpec& world, double p, Rng& rng) {
  std::set<std::string> names;
  for (const auto& [name, placement] : world.placements) names.insert(name);
  for (const auto& [name, room] : world.container_rooms) names.insert(name);
  std::vector<std::string> out;
  if (p <= 0.0) return out;
  for (const auto& n : names)
    if (rng.uniform() < p) out.push_back(n);
  return out;
}

Vocabulary build_vocabulary(const std::vector<Game>& games) {
  std::set<std::string> words(envcore::template_words().begin(), envcore::template_words().end());
  auto add = [&](const std::string& name) {
    for (auto& w : phrasex::word_tokens(name)) words.insert(w);
  };
  for (const auto& g : games) {
    for (const auto& o : g->entities.objects) add(o.name);
    for (const auto& c : g->entities.containers) add(c.name);
    for (const auto& r : g->entities.rooms) add(r);
    for (const auto& r : g->rooms) add(r);
  }
  return Vocabulary({words.begin(), words.end()});
}

TrainResult train(AgentKind kind, const std::vector<Game>& games, AgentResources& res, const TrainConfig& config,
                  const CheckpointHook& on_checkpoint, const std::function<void(const CurveRow&)>& log) {
  config.validate();
  if (games.empty()) throw std::invalid_argument("training needs at least one game");
  check_resources(kind, res, config);
  TrainResult result;
  for (int ep = 0; ep < config.episodes; ++ep) {
    const auto& game = games[static_cast<std::size_t>(ep) % games.size()];
    envcore::MiniHouseEnv env(game, config.step_cap);
    const std::uint64_t seed =
        derive_seed({"episode", std::to_string(config.master_seed), std::string(to_string(kind)), std::to_string(ep)});
    const SelectMode mode = kind == AgentKind::random ? SelectMode::random : SelectMode::sample;
    std::vector<std::string> masked;
    if (kind != AgentKind::random && config.name_dropout > 0.0) {
      Rng mask_rng(derive_seed({"mask", std::to_string(seed)}));
      masked = sample_masked_names(*game, config.name_dropout, mask_rng);
    }
    Trajectory traj = run_episode(env, kind, res, config, seed, mode, true, masked);
    CurveRow row;
    row.episode = ep;
    row.normalized_score = traj.normalized_score();
    row.steps = traj.steps();
    if (kind != AgentKind::random && !traj.transitions.empty()) {
      auto lc = a2c_update(traj, kind, res, config);
      row.policy_loss = lc.policy_loss;
      row.value_loss = lc.value_loss;
      row.entropy = lc.entropy / static_cast<double>(traj.steps());
    }
    result.curve.push_back(row);
    if (log) log(row);
    if (on_checkpoint && config.checkpoint_interval > 0 && (ep + 1) % config.checkpoint_interval == 0)
      on_checkpoint(ep + 1);
  }
  return result;
}

}  // namespace vistext::agent
