#include "vistext/envcore.hpp"

#include <algorithm>
#include <deque>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "vistext/common.hpp"

namespace vistext::envcore {

using nlohmann::json;

std::string_view to_string(Prep p) { return p == Prep::in ? "in" : "on"; }

std::string_view to_string(Level l) {
  switch (l) {
    case Level::easy: return "easy";
    case Level::medium: return "medium";
    case Level::hard: return "hard";
  }
  return "easy";
}

Level parse_level(std::string_view s) {
  auto l = to_lower(s);
  if (l == "easy") return Level::easy;
  if (l == "medium") return Level::medium;
  if (l == "hard") return Level::hard;
  throw std::invalid_argument("unknown difficulty '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Entity pools

EntityPool EntityPool::from_tags(std::vector<ObjectEntity> objects,
                                 std::vector<ContainerEntity> containers,
                                 std::vector<std::string> rooms) {
  EntityPool p;
  p.objects = std::move(objects);
  p.containers = std::move(containers);
  p.rooms = std::move(rooms);
  for (const auto& o : p.objects) {
    auto& targets = p.goal_map[o.name];
    for (const auto& c : p.containers)
      if (c.visual_tag == o.visual_tag) targets.push_back(c.name);
  }
  return p;
}

EntityPool EntityPool::minihouse() {
  std::vector<ObjectEntity> objects;
  for (const char* n : {"apple", "tomato", "cherry", "strawberry", "radish", "pepper", "plum",
                        "salami", "beet", "raspberry"})
    objects.push_back({n, "red"});
  for (const char* n :
       {"book", "vase", "candle", "clock", "lamp", "photo", "trophy", "globe", "plate", "mug"})
    objects.push_back({n, "blue"});
  std::vector<ContainerEntity> containers;
  for (const char* n : {"fridge", "cooler", "pantry", "icebox", "crisper", "larder"})
    containers.push_back({n, "red", Prep::in});
  for (const char* n : {"shelf", "table", "desk", "counter", "dresser", "mantel"})
    containers.push_back({n, "blue", Prep::on});
  return from_tags(std::move(objects), std::move(containers),
                   {"kitchen", "lounge", "bedroom", "bathroom", "hallway", "study"});
}

void EntityPool::validate() const {
  auto unique = [](auto names, const char* what) {
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end())
      throw std::invalid_argument(std::string("duplicate name among ") + what);
  };
  std::vector<std::string> on, cn;
  for (const auto& o : objects) on.push_back(o.name);
  for (const auto& c : containers) cn.push_back(c.name);
  unique(on, "objects");
  unique(cn, "containers");
  unique(rooms, "rooms");
  for (const auto& c : containers)
    if (c.name == kFloor) throw std::invalid_argument("'floor' is reserved");
  for (const auto& o : objects) {
    auto it = goal_map.find(o.name);
    if (it == goal_map.end() || it->second.empty())
      throw std::invalid_argument("object '" + o.name + "' has no goal container");
    for (const auto& cname : it->second) {
      const auto* c = find_container(cname);
      if (!c) throw std::invalid_argument("goal '" + cname + "' is not a container");
      if (c->visual_tag != o.visual_tag)
        throw std::invalid_argument("object '" + o.name + "' and goal '" + cname +
                                    "' have different visual tags");
    }
  }
}

const ObjectEntity* EntityPool::find_object(std::string_view name) const {
  for (const auto& o : objects)
    if (o.name == name) return &o;
  return nullptr;
}

const ContainerEntity* EntityPool::find_container(std::string_view name) const {
  for (const auto& c : containers)
    if (c.name == name) return &c;
  return nullptr;
}

std::vector<std::string> EntityPool::tags() const {
  std::set<std::string> t;
  for (const auto& o : objects) t.insert(o.visual_tag);
  for (const auto& c : containers) t.insert(c.visual_tag);
  return {t.begin(), t.end()};
}

// ---------------------------------------------------------------------------
// Difficulty

Difficulty Difficulty::for_level(Level level, std::uint64_t seed) {
  Rng rng(derive_seed({"difficulty", std::to_string(seed), to_string(level)}));
  Difficulty d{level, 1, 1};
  switch (level) {
    case Level::easy: d.n_objects = 1 + static_cast<int>(rng.index(3)); break;
    case Level::medium: d.n_objects = 3 + static_cast<int>(rng.index(3)); break;
    case Level::hard:
      d.n_rooms = 3 + static_cast<int>(rng.index(2));
      d.n_objects = 4 + static_cast<int>(rng.index(2));
      break;
  }
  return d;
}

void Difficulty::validate() const {
  bool ok = n_objects >= 1;
  switch (level) {
    case Level::easy: ok = ok && n_rooms == 1 && n_objects <= 3; break;
    case Level::medium: ok = ok && n_rooms == 1 && n_objects <= 5; break;
    case Level::hard:
      ok = ok && (n_rooms == 3 || n_rooms == 4) && (n_objects == 4 || n_objects == 5);
      break;
  }
  if (!ok)
    throw std::invalid_argument("difficulty " + std::string(to_string(level)) + " cannot have " +
                                std::to_string(n_rooms) + " rooms and " +
                                std::to_string(n_objects) + " objects");
}

// ---------------------------------------------------------------------------
// World generation

std::vector<std::string> WorldSpec::neighbours(std::string_view room) const {
  std::vector<std::string> out;
  for (const auto& [a, b] : room_graph) {
    if (a == room) out.push_back(b);
    if (b == room) out.push_back(a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

WorldSpec generate_world(std::uint64_t seed, const Difficulty& difficulty, const EntityPool& pool) {
  difficulty.validate();
  pool.validate();
  Rng rng(derive_seed({"minihouse-world", std::to_string(seed), to_string(difficulty.level)}));

  if (static_cast<int>(pool.rooms.size()) < difficulty.n_rooms)
    throw PoolTooSmall("rooms", "pool has " + std::to_string(pool.rooms.size()) +
                                    " rooms, difficulty needs " +
                                    std::to_string(difficulty.n_rooms));
  if (static_cast<int>(pool.objects.size()) < difficulty.n_objects)
    throw PoolTooSmall("objects", "pool has " + std::to_string(pool.objects.size()) +
                                      " objects, difficulty needs " +
                                      std::to_string(difficulty.n_objects));
  if (pool.containers.empty()) throw PoolTooSmall("containers", "pool has no containers");

  WorldSpec w;
  w.seed = seed;
  w.difficulty = difficulty;

  auto rooms = pool.rooms;
  rng.shuffle(rooms);
  rooms.resize(difficulty.n_rooms);
  // Spanning tree over the shuffled order keeps the graph connected.
  std::set<std::pair<std::string, std::string>> edges;
  auto add_edge = [&](const std::string& a, const std::string& b) {
    edges.insert(a < b ? std::pair{a, b} : std::pair{b, a});
  };
  for (std::size_t i = 1; i < rooms.size(); ++i) add_edge(rooms[i], rooms[rng.index(i)]);
  if (rooms.size() == 4 && rng.index(2) == 0) {
    std::vector<std::pair<std::string, std::string>> missing;
    for (std::size_t i = 0; i < rooms.size(); ++i)
      for (std::size_t j = i + 1; j < rooms.size(); ++j) {
        auto e = rooms[i] < rooms[j] ? std::pair{rooms[i], rooms[j]} : std::pair{rooms[j], rooms[i]};
        if (!edges.count(e)) missing.push_back(e);
      }
    if (!missing.empty()) edges.insert(missing[rng.index(missing.size())]);
  }
  w.room_graph.assign(edges.begin(), edges.end());
  w.start_room = rooms[rng.index(rooms.size())];
  w.rooms = rooms;
  std::sort(w.rooms.begin(), w.rooms.end());

  // One container per tag family in distinct rooms; a room never holds two
  // containers of the same tag.
  std::map<std::string, std::vector<const ContainerEntity*>> by_tag;
  for (const auto& c : pool.containers) by_tag[c.visual_tag].push_back(&c);
  std::vector<std::string> world_containers;
  for (auto& [tag, members] : by_tag) {
    rng.shuffle(members);
    std::size_t max_count = std::min<std::size_t>(members.size(), rooms.size());
    std::size_t count = rooms.size() == 1 ? 1 : 1 + rng.index(max_count);
    auto room_order = rooms;
    rng.shuffle(room_order);
    for (std::size_t i = 0; i < count; ++i) {
      w.container_rooms[members[i]->name] = room_order[i];
      world_containers.push_back(members[i]->name);
    }
  }

  std::vector<const ObjectEntity*> objs;
  for (const auto& o : pool.objects) objs.push_back(&o);
  rng.shuffle(objs);
  int n_distractors = 0;
  if (difficulty.level == Level::hard &&
      static_cast<int>(objs.size()) > difficulty.n_objects)
    n_distractors = static_cast<int>(rng.index(2));

  for (int i = 0; i < difficulty.n_objects + n_distractors; ++i) {
    const auto& o = *objs[i];
    std::string room = rooms[rng.index(rooms.size())];
    w.placements[o.name] = Placement{room, std::string(kFloor)};
    if (i >= difficulty.n_objects) {
      w.distractors.push_back(o.name);
      continue;
    }
    std::vector<std::string> candidates;
    for (const auto& c : pool.goal_map.at(o.name))
      if (w.container_rooms.count(c)) candidates.push_back(c);
    std::sort(candidates.begin(), candidates.end());
    if (candidates.empty())
      throw PoolTooSmall("containers", "no container in the world accepts '" + o.name + "'");
    w.goals[o.name] = candidates[rng.index(candidates.size())];
  }
  std::sort(w.distractors.begin(), w.distractors.end());
  w.max_score = difficulty.n_objects;

  for (const auto& o : pool.objects)
    if (w.placements.count(o.name)) w.entities.objects.push_back(o);
  for (const auto& c : pool.containers)
    if (w.container_rooms.count(c.name)) w.entities.containers.push_back(c);
  w.entities.rooms = w.rooms;
  for (const auto& o : w.entities.objects) {
    auto& targets = w.entities.goal_map[o.name];
    for (const auto& c : pool.goal_map.at(o.name))
      if (w.container_rooms.count(c)) targets.push_back(c);
  }
  return w;
}

std::pair<EntityPool, EntityPool> split_pools(const EntityPool& master, std::uint64_t seed,
                                              double out_fraction) {
  master.validate();
  if (!(out_fraction > 0.0 && out_fraction < 1.0))
    throw std::invalid_argument("out_fraction must lie strictly between 0 and 1");
  Rng rng(derive_seed({"split", std::to_string(seed)}));

  std::map<std::string, std::vector<const ObjectEntity*>> fam_objects;
  std::map<std::string, std::vector<const ContainerEntity*>> fam_containers;
  for (const auto& o : master.objects) fam_objects[o.visual_tag].push_back(&o);
  for (const auto& c : master.containers) fam_containers[c.visual_tag].push_back(&c);
  std::size_t families = 0;
  for (const auto& [tag, objs] : fam_objects)
    if (!objs.empty() && fam_containers.count(tag)) ++families;
  if (families < 2)
    throw std::invalid_argument("split needs at least two goal-compatible families");

  auto out_count = [&](std::size_t n) {
    auto k = static_cast<std::size_t>(std::llround(static_cast<double>(n) * out_fraction));
    return std::clamp<std::size_t>(k, 1, n - 1);
  };

  std::set<std::string> out_objects, out_containers;
  for (const auto& tag : master.tags()) {
    auto objs = fam_objects[tag];
    auto cons = fam_containers[tag];
    if (objs.empty()) continue;  // container-only family goes to the train side
    if (objs.size() < 2 || cons.size() < 2)
      throw std::invalid_argument("family '" + tag +
                                  "' needs at least two objects and two containers to split");
    rng.shuffle(objs);
    rng.shuffle(cons);
    for (std::size_t i = 0; i < out_count(objs.size()); ++i) out_objects.insert(objs[i]->name);
    for (std::size_t i = 0; i < out_count(cons.size()); ++i) out_containers.insert(cons[i]->name);
  }

  auto build = [&](bool out_side) {
    EntityPool p;
    for (const auto& o : master.objects)
      if (out_objects.count(o.name) == static_cast<std::size_t>(out_side)) p.objects.push_back(o);
    for (const auto& c : master.containers)
      if (out_containers.count(c.name) == static_cast<std::size_t>(out_side))
        p.containers.push_back(c);
    p.rooms = master.rooms;
    for (const auto& o : p.objects) {
      auto& targets = p.goal_map[o.name];
      for (const auto& c : master.goal_map.at(o.name))
        if (out_containers.count(c) == static_cast<std::size_t>(out_side)) targets.push_back(c);
    }
    p.validate();
    return p;
  };
  return {build(false), build(true)};
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json pool_to_json(const EntityPool& p) {
  json objs = json::array(), cons = json::array();
  for (const auto& o : p.objects) objs.push_back({{"name", o.name}, {"visual_tag", o.visual_tag}});
  for (const auto& c : p.containers)
    cons.push_back({{"name", c.name},
                    {"visual_tag", c.visual_tag},
                    {"preposition", std::string(to_string(c.preposition))}});
  return {{"objects", objs}, {"containers", cons}, {"rooms", p.rooms}, {"goal_map", p.goal_map}};
}

EntityPool pool_from_json(const json& j) {
  EntityPool p;
  for (const auto& o : j.at("objects"))
    p.objects.push_back({o.at("name").get<std::string>(), o.at("visual_tag").get<std::string>()});
  for (const auto& c : j.at("containers")) {
    auto prep = c.at("preposition").get<std::string>();
    if (prep != "in" && prep != "on") throw std::invalid_argument("bad preposition " + prep);
    p.containers.push_back({c.at("name").get<std::string>(), c.at("visual_tag").get<std::string>(),
                            prep == "in" ? Prep::in : Prep::on});
  }
  p.rooms = j.at("rooms").get<std::vector<std::string>>();
  p.goal_map = j.at("goal_map").get<std::map<std::string, std::vector<std::string>>>();
  return p;
}

}  // namespace

std::string save_world(const WorldSpec& w) {
  json placements = json::object();
  for (const auto& [o, pl] : w.placements) placements[o] = {{"room", pl.room}, {"support", pl.support}};
  json graph = json::array();
  for (const auto& [a, b] : w.room_graph) graph.push_back({a, b});
  json j = {{"seed", w.seed},
            {"difficulty",
             {{"level", std::string(to_string(w.difficulty.level))},
              {"n_rooms", w.difficulty.n_rooms},
              {"n_objects", w.difficulty.n_objects}}},
            {"rooms", w.rooms},
            {"start_room", w.start_room},
            {"room_graph", graph},
            {"container_rooms", w.container_rooms},
            {"placements", placements},
            {"goals", w.goals},
            {"distractors", w.distractors},
            {"max_score", w.max_score},
            {"entities", pool_to_json(w.entities)}};
  return j.dump(2) + "\n";
}

WorldSpec load_world(std::string_view text) {
  auto j = json::parse(text);
  WorldSpec w;
  w.seed = j.at("seed").get<std::uint64_t>();
  const auto& d = j.at("difficulty");
  w.difficulty = {parse_level(d.at("level").get<std::string>()), d.at("n_rooms").get<int>(),
                  d.at("n_objects").get<int>()};
  w.rooms = j.at("rooms").get<std::vector<std::string>>();
  w.start_room = j.at("start_room").get<std::string>();
  for (const auto& e : j.at("room_graph"))
    w.room_graph.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
  w.container_rooms = j.at("container_rooms").get<std::map<std::string, std::string>>();
  for (const auto& [o, pl] : j.at("placements").items())
    w.placements[o] = {pl.at("room").get<std::string>(), pl.at("support").get<std::string>()};
  w.goals = j.at("goals").get<std::map<std::string, std::string>>();
  w.distractors = j.at("distractors").get<std::vector<std::string>>();
  w.max_score = j.at("max_score").get<int>();
  w.entities = pool_from_json(j.at("entities"));
  if (w.max_score < 1) throw std::invalid_argument("world max_score must be at least 1");
  return w;
}

std::string save_pool(const EntityPool& p) { return pool_to_json(p).dump(2) + "\n"; }

EntityPool load_pool(std::string_view text) {
  auto p = pool_from_json(json::parse(text));
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Command parsing

namespace {

std::vector<std::string> command_tokens(std::string_view text) {
  std::string cleaned;
  for (char c : to_lower(text)) {
    bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '\'' || c == '-';
    cleaned.push_back(keep ? c : ' ');
  }
  std::vector<std::string> out;
  for (auto& t : split_words(cleaned))
    if (t != "the" && t != "a" && t != "an") out.push_back(std::move(t));
  return out;
}

std::string join_range(const std::vector<std::string>& t, std::size_t b, std::size_t e) {
  return join(std::vector<std::string>(t.begin() + b, t.begin() + e), " ");
}

}  // namespace

Command parse_command(std::string_view action_text) {
  auto t = command_tokens(action_text);
  if (t.empty()) throw ParseError("");
  const auto& verb = t[0];
  Command cmd;
  if (verb == "look") {
    if (t.size() > 1) throw ParseError(t[1]);
    cmd.verb = Verb::look;
    return cmd;
  }
  if (verb == "take") {
    if (t.size() < 2) throw ParseError(verb);
    auto from = std::find(t.begin() + 1, t.end(), "from");
    std::size_t split = static_cast<std::size_t>(from - t.begin());
    if (split == 1) throw ParseError("from");
    cmd.verb = Verb::take;
    cmd.arg1 = join_range(t, 1, split);
    if (from != t.end()) {
      if (split + 1 >= t.size()) throw ParseError("from");
      cmd.arg2 = join_range(t, split + 1, t.size());
    }
    return cmd;
  }
  if (verb == "put") {
    std::size_t split = 0;
    for (std::size_t i = 2; i < t.size(); ++i)
      if (t[i] == "in" || t[i] == "on") {
        split = i;
        break;
      }
    if (split == 0) throw ParseError(t.size() > 1 ? t.back() : verb);
    if (split + 1 >= t.size()) throw ParseError(t[split]);
    cmd.verb = Verb::put;
    cmd.arg1 = join_range(t, 1, split);
    cmd.preposition = t[split] == "in" ? Prep::in : Prep::on;
    cmd.arg2 = join_range(t, split + 1, t.size());
    return cmd;
  }
  if (verb == "go") {
    if (t.size() < 2) throw ParseError(verb);
    std::size_t b = (t[1] == "to" && t.size() > 2) ? 2 : 1;
    cmd.verb = Verb::go;
    cmd.arg1 = join_range(t, b, t.size());
    return cmd;
  }
  if (verb == "examine") {
    if (t.size() < 2) throw ParseError(verb);
    cmd.verb = Verb::examine;
    cmd.arg1 = join_range(t, 1, t.size());
    return cmd;
  }
  throw ParseError(verb);
}

// ---------------------------------------------------------------------------
// Engine

namespace {

std::string article(std::string_view noun) {
  char c = noun.empty() ? 'x' : noun[0];
  return (c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u') ? "an" : "a";
}

const ContainerEntity& container(const WorldSpec& w, const std::string& name) {
  return *w.entities.find_container(name);
}

bool in_room(const GameState& s, const Location& loc) {
  if (loc.kind == Location::Kind::floor) return loc.place == s.agent_room;
  if (loc.kind == Location::Kind::container)
    return s.world->container_rooms.at(loc.place) == s.agent_room;
  return false;
}

std::vector<std::string> containers_here(const GameState& s) {
  std::vector<std::string> out;
  for (const auto& [c, room] : s.world->container_rooms)
    if (room == s.agent_room) out.push_back(c);
  return out;
}

std::string support_name(const Location& loc) {
  return loc.kind == Location::Kind::floor ? std::string(kFloor) : loc.place;
}

std::string location_phrase(const WorldSpec& w, const Location& loc) {
  if (loc.kind == Location::Kind::floor) return "on the floor";
  return std::string(to_string(container(w, loc.place).preposition)) + " the " + loc.place;
}

}  // namespace

std::string describe_room(const GameState& s) {
  const auto& w = *s.world;
  std::ostringstream out;
  out << "You are in the " << s.agent_room << ".";
  auto here = containers_here(s);
  for (const auto& c : here) out << " There is " << article(c) << " " << c << " in the " << s.agent_room << ".";
  for (const auto& [o, loc] : s.object_locations)
    if (loc.kind == Location::Kind::floor && loc.place == s.agent_room)
      out << " There is " << article(o) << " " << o << " on the floor.";
  for (const auto& c : here)
    for (const auto& [o, loc] : s.object_locations)
      if (loc.kind == Location::Kind::container && loc.place == c)
        out << " There is " << article(o) << " " << o << " " << location_phrase(w, loc) << ".";
  for (const auto& o : s.inventory) out << " You are carrying the " << o << ".";
  auto exits = w.neighbours(s.agent_room);
  if (exits.empty()) out << " There are no exits.";
  for (const auto& r : exits) out << " There is a door to the " << r << ".";
  return out.str();
}

std::vector<std::string> admissible_actions(const GameState& s) {
  std::vector<std::string> acts;
  if (s.done) return acts;
  acts.emplace_back("look");
  auto here = containers_here(s);
  for (const auto& [o, loc] : s.object_locations) {
    if (!in_room(s, loc)) continue;
    if (s.inventory.empty()) acts.push_back("take " + o + " from " + support_name(loc));
    acts.push_back("examine " + o);
  }
  for (const auto& o : s.inventory) {
    acts.push_back("examine " + o);
    for (const auto& c : here)
      acts.push_back("put " + o + " " + std::string(to_string(container(*s.world, c).preposition)) +
                     " " + c);
  }
  for (const auto& c : here) acts.push_back("examine " + c);
  for (const auto& r : s.world->neighbours(s.agent_room)) acts.push_back("go " + r);
  std::sort(acts.begin(), acts.end());
  acts.erase(std::unique(acts.begin(), acts.end()), acts.end());
  return acts;
}

std::pair<GameState, Observation> reset(std::shared_ptr<const WorldSpec> world, int step_cap) {
  if (step_cap < 1) throw std::invalid_argument("step_cap must be at least 1");
  if (!world) throw std::invalid_argument("reset needs a world");
  GameState s;
  s.world = std::move(world);
  s.step_cap = step_cap;
  s.agent_room = s.world->start_room;
  for (const auto& [o, pl] : s.world->placements) {
    Location loc;
    if (pl.support == kFloor) {
      loc = {Location::Kind::floor, pl.room};
    } else {
      loc = {Location::Kind::container, pl.support};
    }
    s.object_locations[o] = loc;
    s.placed_flags[o] = false;
  }
  Observation obs{describe_room(s), admissible_actions(s), 0.0, 0, false};
  return {std::move(s), std::move(obs)};
}

std::pair<GameState, Observation> step(const GameState& state, std::string_view action_text) {
  if (state.done) throw EpisodeOver();
  GameState s = state;
  const auto& w = *s.world;
  s.steps_taken += 1;
  double reward = 0.0;
  std::optional<std::string> text;

  std::optional<Command> cmd;
  try {
    cmd = parse_command(action_text);
  } catch (const ParseError&) {
  }

  if (cmd) {
    switch (cmd->verb) {
      case Verb::look: text = describe_room(s); break;
      case Verb::take: {
        auto it = s.object_locations.find(*cmd->arg1);
        if (it == s.object_locations.end() || !in_room(s, it->second) || !s.inventory.empty()) break;
        if (cmd->arg2 && *cmd->arg2 != support_name(it->second)) break;
        it->second = {Location::Kind::inventory, ""};
        s.inventory.insert(*cmd->arg1);
        text = "You pick up the " + *cmd->arg1 + ".";
        break;
      }
      case Verb::put: {
        const auto& obj = *cmd->arg1;
        const auto& target = *cmd->arg2;
        auto cr = w.container_rooms.find(target);
        if (!s.inventory.count(obj) || cr == w.container_rooms.end() || cr->second != s.agent_room)
          break;
        if (container(w, target).preposition != *cmd->preposition) break;
        s.inventory.erase(obj);
        s.object_locations[obj] = {Location::Kind::container, target};
        text = "You put the " + obj + " " + std::string(to_string(*cmd->preposition)) + " the " +
               target + ".";
        const auto& compatible = w.entities.goal_map.count(obj) ? w.entities.goal_map.at(obj)
                                                                : std::vector<std::string>{};
        bool goal_ok = w.goals.count(obj) &&
                       std::find(compatible.begin(), compatible.end(), target) != compatible.end();
        if (goal_ok && !s.placed_flags[obj]) {
          s.placed_flags[obj] = true;
          s.score += 1;
          reward = 1.0;
          *text += " Your score has gone up by one point.";
        }
        break;
      }
      case Verb::go: {
        auto exits = w.neighbours(s.agent_room);
        if (std::find(exits.begin(), exits.end(), *cmd->arg1) == exits.end()) break;
        s.agent_room = *cmd->arg1;
        text = "You go to the " + s.agent_room + ". " + describe_room(s);
        break;
      }
      case Verb::examine: {
        const auto& e = *cmd->arg1;
        auto it = s.object_locations.find(e);
        if (it != s.object_locations.end()) {
          if (it->second.kind == Location::Kind::inventory) {
            text = "You are carrying the " + e + ".";
          } else if (in_room(s, it->second)) {
            text = "The " + e + " is " + location_phrase(w, it->second) + ".";
          }
          break;
        }
        auto cr = w.container_rooms.find(e);
        if (cr == w.container_rooms.end() || cr->second != s.agent_room) break;
        std::vector<std::string> contents;
        for (const auto& [o, loc] : s.object_locations)
          if (loc.kind == Location::Kind::container && loc.place == e) contents.push_back("the " + o);
        text = contents.empty() ? "The " + e + " is empty."
                                : "The " + e + " contains " + join(contents, " and ") + ".";
        break;
      }
    }
  }

  if (!text) text = std::string(kInvalidText);
  s.done = s.score == w.max_score || s.steps_taken >= s.step_cap;
  if (reward > 0 && s.score == w.max_score) *text += " The house is clean.";
  Observation obs{*text, admissible_actions(s), reward, s.score, s.done};
  return {std::move(s), std::move(obs)};
}

std::string state_fingerprint(const GameState& s) {
  std::ostringstream out;
  out << s.agent_room << '|';
  for (const auto& [o, loc] : s.object_locations)
    out << o << '=' << static_cast<int>(loc.kind) << ':' << loc.place << ';';
  out << '|';
  for (const auto& o : s.inventory) out << o << ';';
  out << '|' << s.score << '|';
  for (const auto& [o, f] : s.placed_flags) out << (f ? '1' : '0');
  out << '|' << s.done;
  return out.str();
}

std::optional<std::vector<std::string>> solve(std::shared_ptr<const WorldSpec> world, int step_cap) {
  auto [start, obs] = reset(std::move(world), step_cap);
  if (start.score == start.world->max_score) return std::vector<std::string>{};
  struct Node {
    GameState state;
    std::size_t parent;
    std::string action;
  };
  std::vector<Node> nodes{{start, 0, ""}};
  std::unordered_set<std::string> seen{state_fingerprint(start)};
  std::deque<std::size_t> frontier{0};
  while (!frontier.empty()) {
    auto idx = frontier.front();
    frontier.pop_front();
    if (nodes[idx].state.done) continue;
    for (const auto& a : admissible_actions(nodes[idx].state)) {
      auto next = step(nodes[idx].state, a).first;
      if (!seen.insert(state_fingerprint(next)).second) continue;
      nodes.push_back({std::move(next), idx, a});
      auto child = nodes.size() - 1;
      if (nodes[child].state.score == nodes[child].state.world->max_score) {
        std::vector<std::string> plan;
        for (auto i = child; i != 0; i = nodes[i].parent) plan.push_back(nodes[i].action);
        std::reverse(plan.begin(), plan.end());
        return plan;
      }
      frontier.push_back(child);
    }
  }
  return std::nullopt;
}

const std::vector<std::string>& template_words() {
  static const std::vector<std::string> words = {
      "a",     "about",   "an",   "and",     "are",   "by",   "can't",  "carrying", "clean",
      "contains", "do",   "door", "empty",   "examine", "exits", "floor", "from",   "go",
      "gone",  "has",     "here", "house",   "in",    "is",   "look",   "no",       "on",
      "one",   "pick",    "point", "put",    "score", "take", "that",   "the",      "there",
      "to",    "up",      "you",  "your"};
  return words;
}

// ---------------------------------------------------------------------------

MiniHouseEnv::MiniHouseEnv(std::shared_ptr<const WorldSpec> world, int step_cap)
    : world_(std::move(world)), step_cap_(step_cap) {
  state_ = envcore::reset(world_, step_cap_).first;
}

Observation MiniHouseEnv::reset() {
  auto [s, obs] = envcore::reset(world_, step_cap_);
  state_ = std::move(s);
  return obs;
}

Observation MiniHouseEnv::step(const std::string& action) {
  auto [s, obs] = envcore::step(state_, action);
  state_ = std::move(s);
  return obs;
}

std::string MiniHouseEnv::id() const {
  return "minihouse-" + std::string(to_string(world_->difficulty.level)) + "-" +
         std::to_string(world_->seed);
}

}  // namespace vistext::envcore
