#pragma once

// MiniHouse: a deterministic house-cleanup text game. Objects start on the
// floor and must be put into (or onto) a container whose visual tag matches
// their own.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vistext::envcore {

inline constexpr int kDefaultStepCap = 50;
inline constexpr int kDefaultEpisodes = 100;
inline constexpr std::string_view kFloor = "floor";

enum class Prep { in, on };
std::string_view to_string(Prep p);

struct ObjectEntity {
  std::string name;
  std::string visual_tag;
  bool operator==(const ObjectEntity&) const = default;
};

struct ContainerEntity {
  std::string name;
  std::string visual_tag;
  Prep preposition = Prep::in;  // "put x in fridge" vs "put x on shelf"
  bool operator==(const ContainerEntity&) const = default;
};

struct EntityPool {
  std::vector<ObjectEntity> objects;
  std::vector<ContainerEntity> containers;
  std::vector<std::string> rooms;
  std::map<std::string, std::vector<std::string>> goal_map;  // object -> containers

  // goal_map[o] = every container sharing o's visual tag.
  static EntityPool from_tags(std::vector<ObjectEntity> objects,
                              std::vector<ContainerEntity> containers,
                              std::vector<std::string> rooms);
  static EntityPool minihouse();

  // Throws std::invalid_argument describing the first violated invariant.
  void validate() const;

  const ObjectEntity* find_object(std::string_view name) const;
  const ContainerEntity* find_container(std::string_view name) const;
  std::vector<std::string> tags() const;

  bool operator==(const EntityPool&) const = default;
};

enum class Level { easy, medium, hard };
std::string_view to_string(Level l);
Level parse_level(std::string_view s);

struct Difficulty {
  Level level = Level::easy;
  int n_rooms = 1;
  int n_objects = 1;

  // Draws room/object counts for a level from the seed.
  static Difficulty for_level(Level level, std::uint64_t seed);
  void validate() const;
  bool operator==(const Difficulty&) const = default;
};

struct Placement {
  std::string room;
  std::string support;  // kFloor or a container name
  bool operator==(const Placement&) const = default;
};

struct WorldSpec {
  std::uint64_t seed = 0;
  Difficulty difficulty;
  std::vector<std::string> rooms;
  std::string start_room;
  std::vector<std::pair<std::string, std::string>> room_graph;  // undirected, a < b
  std::map<std::string, std::string> container_rooms;
  std::map<std::string, Placement> placements;
  std::map<std::string, std::string> goals;
  std::vector<std::string> distractors;
  int max_score = 0;
  EntityPool entities;

  std::vector<std::string> neighbours(std::string_view room) const;
  bool operator==(const WorldSpec&) const = default;
};

class PoolTooSmall : public std::runtime_error {
 public:
  PoolTooSmall(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}
  const std::string& category() const { return category_; }

 private:
  std::string category_;
};

WorldSpec generate_world(std::uint64_t seed, const Difficulty& difficulty, const EntityPool& pool);

// Entity-disjoint split: families (objects and containers sharing a tag) are
// divided so both sides keep goal coverage.
std::pair<EntityPool, EntityPool> split_pools(const EntityPool& master, std::uint64_t seed,
                                              double out_fraction);

std::string save_world(const WorldSpec& w);
WorldSpec load_world(std::string_view json_text);
std::string save_pool(const EntityPool& p);
EntityPool load_pool(std::string_view json_text);

struct Location {
  enum class Kind { floor, container, inventory };
  Kind kind = Kind::floor;
  std::string place;  // room for floor, container name for container
  bool operator==(const Location&) const = default;
};

struct GameState {
  std::shared_ptr<const WorldSpec> world;
  int step_cap = kDefaultStepCap;
  std::string agent_room;
  std::map<std::string, Location> object_locations;
  std::set<std::string> inventory;
  int steps_taken = 0;
  int score = 0;
  std::map<std::string, bool> placed_flags;
  bool done = false;
};

// Everything except the world pointer and step counter, for state hashing.
std::string state_fingerprint(const GameState& s);

struct Observation {
  std::string text;
  std::vector<std::string> admissible_actions;
  double reward = 0.0;
  int score = 0;
  bool done = false;
  bool operator==(const Observation&) const = default;
};

enum class Verb { take, put, go, examine, look };

struct Command {
  Verb verb = Verb::look;
  std::optional<std::string> arg1;
  std::optional<std::string> arg2;
  std::optional<Prep> preposition;
  bool operator==(const Command&) const = default;
};

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(std::string token)
      : std::runtime_error("cannot parse command near '" + token + "'"), token_(std::move(token)) {}
  const std::string& token() const { return token_; }

 private:
  std::string token_;
};

class EpisodeOver : public std::logic_error {
 public:
  EpisodeOver() : std::logic_error("step called on a finished episode") {}
};

inline constexpr std::string_view kInvalidText = "You can't do that here.";

Command parse_command(std::string_view action_text);
std::pair<GameState, Observation> reset(std::shared_ptr<const WorldSpec> world,
                                        int step_cap = kDefaultStepCap);
std::pair<GameState, Observation> step(const GameState& state, std::string_view action_text);
std::vector<std::string> admissible_actions(const GameState& state);
std::string describe_room(const GameState& state);

// Shortest action sequence reaching max_score, or nullopt within the cap.
std::optional<std::vector<std::string>> solve(std::shared_ptr<const WorldSpec> world,
                                              int step_cap = kDefaultStepCap);

// Words the observation and action templates can emit besides entity names.
const std::vector<std::string>& template_words();

// Common stepping surface for the built-in engine and adapter-served games.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual Observation reset() = 0;
  virtual Observation step(const std::string& action) = 0;
  virtual int max_score() const = 0;
  virtual std::string id() const = 0;
};

class MiniHouseEnv : public Environment {
 public:
  MiniHouseEnv(std::shared_ptr<const WorldSpec> world, int step_cap = kDefaultStepCap);
  Observation reset() override;
  Observation step(const std::string& action) override;
  int max_score() const override { return world_->max_score; }
  std::string id() const override;
  const GameState& state() const { return state_; }
  const WorldSpec& world() const { return *world_; }

 private:
  std::shared_ptr<const WorldSpec> world_;
  int step_cap_;
  GameState state_;
};

}  // namespace vistext::envcore
