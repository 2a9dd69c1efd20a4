#pragma once

// Actor-critic agents over the text game: observation -> phrases -> images ->
// encoders -> action. Random and text-only baselines share the same loop.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vistext/encoders.hpp"
#include "vistext/envcore.hpp"
#include "vistext/imagery.hpp"
#include "vistext/phrasex.hpp"

namespace vistext::agent {

enum class AgentKind { random, text_only, multimodal };
enum class ImageSourceKind { retrieval, generator, none };
enum class SelectMode { sample, greedy, random };
enum class OptimizerKind { sgd, adam };

std::string_view to_string(AgentKind k);
AgentKind parse_agent_kind(std::string_view s);
std::string_view to_string(ImageSourceKind k);
ImageSourceKind parse_image_source(std::string_view s);
std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view s);

struct TrainConfig {
  double gamma = 0.9;
  double learning_rate = 0.01;
  OptimizerKind optimizer = OptimizerKind::sgd;
  double entropy_weight = 0.01;
  double value_weight = 0.5;
  int episodes = envcore::kDefaultEpisodes;
  int step_cap = envcore::kDefaultStepCap;
  bool finetune_generator = false;
  double generator_lr_scale = 1.0;
  double max_grad_norm = 5.0;  // 0 disables clipping
  // Per-episode probability of hiding each object/container name from the
  // text encoder during training; image queries keep the real words.
  double name_dropout = 0.0;
  ImageSourceKind image_source = ImageSourceKind::generator;
  int k_images = phrasex::kDefaultQueriesPerStep;
  std::uint64_t master_seed = 1;
  int checkpoint_interval = 0;  // episodes; 0 disables
  encoders::EncoderConfig encoder;

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

struct Transition {
  std::string observation;
  std::vector<std::string> queries;
  std::vector<std::string> admissible;
  std::string action;
  int action_index = 0;
  double reward = 0.0;
  double log_prob = 0.0;
  double value = 0.0;
  bool done = false;
};

struct EpisodeGraph;

struct Trajectory {
  std::vector<Transition> transitions;
  std::uint64_t seed = 0;
  int final_score = 0;
  int max_score = 1;
  std::size_t image_fetches = 0;
  std::vector<std::string> masked_words;  // read as out-of-vocabulary
  // Forward traces kept from the rollout so the update needs no replay.
  std::shared_ptr<EpisodeGraph> graph;

  int steps() const { return static_cast<int>(transitions.size()); }
  double normalized_score() const;
};

// Everything a learning agent reads or updates.
struct AgentResources {
  encoders::Model* model = nullptr;                 // null for the random agent
  imagery::GeneratorParams* generator = nullptr;    // image_source = generator
  imagery::ImageSource* retrieval = nullptr;        // image_source = retrieval
  phrasex::Lexicon lexicon = phrasex::Lexicon::default_lexicon();
  std::uint64_t noise_seed = 0;                     // base for per-query generator noise
  // Moment state when the optimizer is Adam; created on first update.
  std::shared_ptr<Adam> model_optimizer;
  std::shared_ptr<Adam> generator_optimizer;
};

// G_t = r_t + gamma * G_{t+1}
std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma);

std::size_t select_action(const Vec& policy, SelectMode mode, Rng& rng);
double entropy(const Vec& policy);

class EpisodeError : public std::runtime_error {
 public:
  EpisodeError(int step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Trajectory run_episode(envcore::Environment& env, AgentKind kind, AgentResources& res, const TrainConfig& config,
                       std::uint64_t seed, SelectMode mode, bool keep_graph = false,
                       const std::vector<std::string>& masked_words = {});

// Object and container names of `world`, each kept with probability p.
std::vector<std::string> sample_masked_names(const envcore::WorldSpec& world, double p, Rng& rng);

struct LossComponents {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;  // summed over steps
  double total = 0.0;
};

// Loss of a recorded trajectory under the current parameters. Gradients are
// accumulated into the stores when `accumulate` is set. `fixed_advantages`
// pins A_t (it is a constant in the policy term).
LossComponents a2c_loss(const Trajectory& trajectory, AgentKind kind, AgentResources& res,
                        const TrainConfig& config, bool accumulate,
                        const std::vector<double>* fixed_advantages = nullptr,
                        std::vector<double>* advantages_out = nullptr);

// Zeroes gradients, accumulates them over the trajectory, and takes one SGD step.
LossComponents a2c_update(const Trajectory& trajectory, AgentKind kind, AgentResources& res,
                          const TrainConfig& config);

struct CurveRow {
  int episode = 0;
  double normalized_score = 0.0;
  int steps = 0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

std::string curve_csv(const std::vector<CurveRow>& curve);

using Game = std::shared_ptr<const envcore::WorldSpec>;

// Template words plus every entity and room name of the training pools.
Vocabulary build_vocabulary(const std::vector<Game>& games);

struct TrainResult {
  std::vector<CurveRow> curve;
};

using CheckpointHook = std::function<void(int episode)>;

// Cycles through `games`, one update per episode. res.model must already be
// initialized (see init_model) unless kind is random.
TrainResult train(AgentKind kind, const std::vector<Game>& games, AgentResources& res, const TrainConfig& config,
                  const CheckpointHook& on_checkpoint = {},
                  const std::function<void(const CurveRow&)>& log = {});

}  // namespace vistext::agent
