#include "vistext/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include <Eigen/Dense>

#include "json.hpp"
#include "vistext/common.hpp"

namespace vistext::eval {

using nlohmann::json;

double normalized_score(int score, int max_score) {
  if (max_score < 1) throw std::invalid_argument("max_score must be at least 1");
  if (score < 0 || score > max_score) throw std::invalid_argument("score outside [0, max_score]");
  return static_cast<double>(score) / static_cast<double>(max_score);
}

std::string MetricsReport::to_json() const {
  json cells_j = json::array();
  for (const auto& c : cells)
    cells_j.push_back({{"agent", c.agent},
                       {"difficulty", c.difficulty},
                       {"split", c.split},
                       {"runs", c.runs},
                       {"mean_score", c.mean_score},
                       {"std_score", c.std_score},
                       {"mean_steps", c.mean_steps},
                       {"std_steps", c.std_steps},
                       {"run_scores", c.run_scores},
                       {"run_steps", c.run_steps},
                       {"seeds", c.seeds}});
  json j = {{"config_hash", config_hash}, {"step_cap", step_cap}, {"master_seed", master_seed}, {"cells", cells_j}};
  return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  json j = json::parse(text);
  MetricsReport r;
  r.config_hash = j.at("config_hash").get<std::string>();
  r.step_cap = j.at("step_cap").get<int>();
  r.master_seed = j.at("master_seed").get<std::uint64_t>();
  for (const auto& c : j.at("cells")) {
    CellMetrics m;
    m.agent = c.at("agent").get<std::string>();
    m.difficulty = c.at("difficulty").get<std::string>();
    m.split = c.at("split").get<std::string>();
    m.runs = c.at("runs").get<int>();
    m.mean_score = c.at("mean_score").get<double>();
    m.std_score = c.at("std_score").get<double>();
    m.mean_steps = c.at("mean_steps").get<double>();
    m.std_steps = c.at("std_steps").get<double>();
    m.run_scores = c.value("run_scores", std::vector<double>{});
    m.run_steps = c.value("run_steps", std::vector<double>{});
    m.seeds = c.value("seeds", std::vector<std::uint64_t>{});
    r.cells.push_back(std::move(m));
  }
  return r;
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "agent,difficulty,split,runs,mean_score,std_score,mean_steps,std_steps\n";
  for (const auto& c : cells)
    os << c.agent << ',' << c.difficulty << ',' << c.split << ',' << c.runs << ',' << c.mean_score << ','
       << c.std_score << ',' << c.mean_steps << ',' << c.std_steps << '\n';
  return os.str();
}

std::uint64_t run_seed(std::uint64_t master, agent::AgentKind kind, const std::string& game_id, int run) {
  return derive_seed({std::to_string(master), agent::to_string(kind), game_id, std::to_string(run)});
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size())) : 0.0;
}

std::string config_hash(const agent::TrainConfig& config) {
  // nlohmann objects keep keys sorted, so the dump is order-independent.
  return sha256_hex(json::parse(config.to_json()).dump()).substr(0, 16);
}

}  // namespace

MetricsReport evaluate(agent::AgentKind kind, agent::AgentResources& res, const std::vector<agent::Game>& games,
                       const agent::TrainConfig& config, const EvalSpec& spec) {
  if (spec.runs < 1) throw std::invalid_argument("runs must be at least 1");
  if (games.empty()) throw std::invalid_argument("evaluation needs at least one game");
  config.validate();
  MetricsReport report;
  report.config_hash = config_hash(config);
  report.step_cap = config.step_cap;
  report.master_seed = config.master_seed;
  CellMetrics cell;
  cell.agent = std::string(agent::to_string(kind));
  cell.difficulty = spec.difficulty;
  cell.split = spec.split;
  cell.runs = spec.runs;
  const auto mode = kind == agent::AgentKind::random ? agent::SelectMode::random : agent::SelectMode::greedy;
  for (int run = 0; run < spec.runs; ++run) {
    double score = 0.0, steps = 0.0;
    for (std::size_t gi = 0; gi < games.size(); ++gi) {
      envcore::MiniHouseEnv env(games[gi], config.step_cap);
      const std::string gid = env.id();
      const auto seed = run_seed(config.master_seed, kind, gid, run);
      if (gi == 0) cell.seeds.push_back(seed);
      try {
        auto traj = agent::run_episode(env, kind, res, config, seed, mode);
        score += normalized_score(traj.final_score, traj.max_score);
        steps += traj.steps();
      } catch (const std::exception& e) {
        throw EvalError(gid, run, e.what());
      }
    }
    cell.run_scores.push_back(score / static_cast<double>(games.size()));
    cell.run_steps.push_back(steps / static_cast<double>(games.size()));
  }
  mean_std(cell.run_scores, cell.mean_score, cell.std_score);
  mean_std(cell.run_steps, cell.mean_steps, cell.std_steps);
  report.cells.push_back(std::move(cell));
  return report;
}

MetricsReport merge(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("nothing to merge");
  MetricsReport out = reports.front();
  out.cells.clear();
  for (const auto& r : reports) {
    if (r.step_cap != out.step_cap)
      throw std::invalid_argument("reports disagree on step_cap (" + std::to_string(out.step_cap) + " vs " +
                                  std::to_string(r.step_cap) + ")");
    out.cells.insert(out.cells.end(), r.cells.begin(), r.cells.end());
  }
  return out;
}

std::size_t best_index(const std::vector<double>& values, bool higher_is_better) {
  if (values.empty()) throw std::invalid_argument("no values");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (higher_is_better ? values[i] > values[best] : values[i] < values[best]) best = i;
  return best;
}

namespace {

int level_rank(const std::string& d) {
  static const std::vector<std::string> order = {"easy", "medium", "hard"};
  auto it = std::find(order.begin(), order.end(), d);
  return it == order.end() ? 3 : static_cast<int>(it - order.begin());
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

Comparison compare(const std::vector<MetricsReport>& reports) {
  MetricsReport all = merge(reports);
  std::vector<std::string> agents;
  std::vector<std::pair<std::string, std::string>> columns;
  std::map<std::tuple<std::string, std::string, std::string>, const CellMetrics*> cells;
  for (const auto& c : all.cells) {
    if (std::find(agents.begin(), agents.end(), c.agent) == agents.end()) agents.push_back(c.agent);
    std::pair<std::string, std::string> col{c.difficulty, c.split};
    if (std::find(columns.begin(), columns.end(), col) == columns.end()) columns.push_back(col);
    cells[{c.agent, c.difficulty, c.split}] = &c;
  }
  std::stable_sort(columns.begin(), columns.end(), [](const auto& a, const auto& b) {
    if (level_rank(a.first) != level_rank(b.first)) return level_rank(a.first) < level_rank(b.first);
    return a.second < b.second;
  });

  // marks[metric][agent][column]
  std::vector<std::vector<std::vector<bool>>> marks(2, std::vector<std::vector<bool>>(
                                                          agents.size(), std::vector<bool>(columns.size(), false)));
  for (int metric = 0; metric < 2; ++metric)
    for (std::size_t ci = 0; ci < columns.size(); ++ci) {
      std::vector<double> vals;
      std::vector<std::size_t> who;
      for (std::size_t ai = 0; ai < agents.size(); ++ai) {
        auto it = cells.find({agents[ai], columns[ci].first, columns[ci].second});
        if (it == cells.end()) continue;
        vals.push_back(metric == 0 ? it->second->mean_score : it->second->mean_steps);
        who.push_back(ai);
      }
      if (!vals.empty()) marks[metric][who[best_index(vals, metric == 0)]][ci] = true;
    }

  std::vector<std::string> header = {"agent"};
  for (const char* metric : {"score", "steps"})
    for (const auto& [d, s] : columns) header.push_back(std::string(metric) + ":" + d + "-" + s);
  std::vector<std::vector<std::string>> rows;
  std::ostringstream csv;
  csv << join(header, ",") << '\n';
  for (std::size_t ai = 0; ai < agents.size(); ++ai) {
    std::vector<std::string> row = {agents[ai]};
    std::vector<std::string> csv_row = {agents[ai]};
    for (int metric = 0; metric < 2; ++metric)
      for (std::size_t ci = 0; ci < columns.size(); ++ci) {
        auto it = cells.find({agents[ai], columns[ci].first, columns[ci].second});
        if (it == cells.end()) {
          row.push_back("-");
          csv_row.push_back("");
          continue;
        }
        const double v = metric == 0 ? it->second->mean_score : it->second->mean_steps;
        row.push_back(fixed(v, 2) + (marks[metric][ai][ci] ? "*" : ""));
        csv_row.push_back(fixed(v, 6) + (marks[metric][ai][ci] ? "*" : ""));
      }
    rows.push_back(row);
    csv << join(csv_row, ",") << '\n';
  }

  std::vector<std::size_t> width(header.size(), 0);
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  std::ostringstream text;
  auto emit = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) text << "  ";
      text << std::setw(static_cast<int>(width[i])) << (i == 0 ? std::left : std::right) << r[i];
    }
    text << '\n';
  };
  emit(header);
  for (const auto& r : rows) emit(r);
  return {text.str(), csv.str()};
}

std::string curves_svg(const std::map<std::string, std::vector<agent::CurveRow>>& curves, const std::string& title) {
  const double W = 640, H = 400, L = 60, R = 150, T = 40, B = 50;
  std::size_t n = 1;
  for (const auto& [name, c] : curves) n = std::max(n, c.size());
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  auto px = [&](double ep) { return L + (W - L - R) * (n > 1 ? ep / static_cast<double>(n - 1) : 0.0); };
  auto py = [&](double v) { return H - B - (H - T - B) * v; };
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
     << title << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << py(0) << "\" x2=\"" << W - R << "\" y2=\"" << py(0)
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << py(0) << "\" x2=\"" << L << "\" y2=\"" << py(1)
     << "\" stroke=\"black\"/>\n";
  for (double v : {0.0, 0.5, 1.0})
    os << "<text x=\"" << L - 8 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
       << "font-size=\"11\">" << v << "</text>\n";
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">episode</text>\n";
  os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" transform=\"rotate(-90 16 " << (T + H - B) / 2
     << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">normalized score</text>\n";
  std::size_t k = 0;
  for (const auto& [name, c] : curves) {
    const char* color = colors[k % 6];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < c.size(); ++i) os << px(static_cast<double>(i)) << ',' << py(c[i].normalized_score) << ' ';
    os << "\"/>\n";
    os << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 20 + 18 * static_cast<double>(k) << "\" fill=\"" << color
       << "\" font-family=\"sans-serif\" font-size=\"12\">" << name << "</text>\n";
    ++k;
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<agent::Game> bundled_games(const GameSetSpec& spec) {
  if (spec.count < 1) throw std::invalid_argument("count must be at least 1");
  auto [train_pool, out_pool] = envcore::split_pools(envcore::EntityPool::minihouse(), spec.split_seed, kOutFraction);
  const auto& pool = spec.out_split ? out_pool : train_pool;
  std::vector<agent::Game> games;
  for (int i = 0; i < spec.count; ++i) {
    const auto seed = derive_seed({"world", std::to_string(spec.world_seed), spec.out_split ? "OUT" : "IN",
                                   std::to_string(i)});
    games.push_back(std::make_shared<const envcore::WorldSpec>(
        envcore::generate_world(seed, envcore::Difficulty::for_level(spec.level, seed), pool)));
  }
  return games;
}

namespace {

struct Chain {
  std::vector<bool> terminal;
  std::vector<std::vector<std::size_t>> next;  // one entry per admissible action
};

constexpr std::size_t kMaxStates = 20000;

Chain build_chain(std::shared_ptr<const envcore::WorldSpec> world) {
  // A cap the walk cannot reach keeps `done` tied to completion only.
  auto [s0, o0] = envcore::reset(world, 1 << 30);
  Chain ch;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<envcore::GameState> states;
  index.emplace(envcore::state_fingerprint(s0), 0);
  states.push_back(s0);
  ch.terminal.push_back(s0.done);
  ch.next.emplace_back();
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (ch.terminal[i]) continue;
    for (const auto& a : envcore::admissible_actions(states[i])) {
      auto [s1, o1] = envcore::step(states[i], a);
      auto key = envcore::state_fingerprint(s1);
      auto it = index.find(key);
      std::size_t j;
      if (it == index.end()) {
        if (states.size() >= kMaxStates) throw std::runtime_error("state space too large for exact analysis");
        j = states.size();
        index.emplace(std::move(key), j);
        ch.terminal.push_back(s1.done);
        ch.next.emplace_back();
        states.push_back(std::move(s1));
      } else {
        j = it->second;
      }
      ch.next[i].push_back(j);
    }
  }
  return ch;
}

}  // namespace

double random_walk_expected_steps(std::shared_ptr<const envcore::WorldSpec> world, int step_cap) {
  if (step_cap < 1) throw std::invalid_argument("step_cap must be positive");
  Chain ch = build_chain(std::move(world));
  std::vector<double> p(ch.terminal.size(), 0.0), q(p.size());
  p[0] = 1.0;
  double expected = 0.0;
  for (int t = 0; t < step_cap; ++t) {
    double alive = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (!ch.terminal[i]) alive += p[i];
    expected += alive;  // P(T > t)
    std::fill(q.begin(), q.end(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] == 0.0) continue;
      if (ch.terminal[i]) {
        q[i] += p[i];
        continue;
      }
      const double share = p[i] / static_cast<double>(ch.next[i].size());
      for (std::size_t j : ch.next[i]) q[j] += share;
    }
    std::swap(p, q);
  }
  return expected;
}

double random_walk_absorption_time(std::shared_ptr<const envcore::WorldSpec> world) {
  Chain ch = build_chain(std::move(world));
  std::vector<std::size_t> transient;
  std::vector<long> pos(ch.terminal.size(), -1);
  for (std::size_t i = 0; i < ch.terminal.size(); ++i)
    if (!ch.terminal[i]) {
      pos[i] = static_cast<long>(transient.size());
      transient.push_back(i);
    }
  if (transient.empty()) return 0.0;
  const auto n = static_cast<Eigen::Index>(transient.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& nx = ch.next[transient[static_cast<std::size_t>(r)]];
    const double share = 1.0 / static_cast<double>(nx.size());
    for (std::size_t j : nx)
      if (pos[j] >= 0) A(r, pos[j]) -= share;
  }
  Eigen::VectorXd t = A.partialPivLu().solve(Eigen::VectorXd::Ones(n));
  return t(pos[0]);
}

}  // namespace vistext::eval
