#include "vistext/adapter.hpp"

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <istream>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

namespace vistext::adapter {

using nlohmann::json;

std::string observation_message(const envcore::Observation& obs) {
  json j = {{"type", "observation"},
            {"text", obs.text},
            {"admissible_actions", obs.admissible_actions},
            {"reward", obs.reward},
            {"score", obs.score},
            {"done", obs.done}};
  return j.dump();
}

std::string error_message(const std::string& detail) {
  return json{{"type", "error"}, {"detail", detail}}.dump();
}

envcore::Observation parse_observation_message(const std::string& line) {
  auto j = json::parse(line);
  auto type = j.at("type").get<std::string>();
  if (type == "error") throw std::runtime_error("adapter error: " + j.value("detail", ""));
  if (type != "observation") throw std::runtime_error("unexpected adapter message type " + type);
  envcore::Observation obs;
  obs.text = j.at("text").get<std::string>();
  obs.admissible_actions = j.at("admissible_actions").get<std::vector<std::string>>();
  obs.reward = j.at("reward").get<double>();
  obs.score = j.at("score").get<int>();
  obs.done = j.at("done").get<bool>();
  return obs;
}

AdapterSession::AdapterSession(envcore::EntityPool pool) : pool_(std::move(pool)) {}

std::string AdapterSession::handle(const std::string& line) {
  json msg;
  try {
    msg = json::parse(line);
  } catch (const json::exception& e) {
    return error_message(std::string("malformed message: ") + e.what());
  }
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string())
    return error_message("message needs a string 'type' field");
  const auto type = msg["type"].get<std::string>();
  try {
    if (type == "close") {
      closed_ = true;
      return json{{"type", "close"}}.dump();
    }
    if (type == "reset") {
      int cap = msg.value("step_cap", envcore::kDefaultStepCap);
      std::shared_ptr<envcore::WorldSpec> world;
      if (msg.contains("world")) {
        world = std::make_shared<envcore::WorldSpec>(envcore::load_world(msg["world"].dump()));
      } else {
        auto seed = msg.at("seed").get<std::uint64_t>();
        auto level = envcore::parse_level(msg.value("difficulty", std::string("easy")));
        world = std::make_shared<envcore::WorldSpec>(
            envcore::generate_world(seed, envcore::Difficulty::for_level(level, seed), pool_));
      }
      env_.emplace(world, cap);
      return observation_message(env_->reset());
    }
    if (type == "step") {
      if (!env_) return error_message("no active episode; send reset first");
      if (env_->state().done) return error_message("episode is over; send reset");
      return observation_message(env_->step(msg.at("action").get<std::string>()));
    }
  } catch (const std::exception& e) {
    return error_message(e.what());
  }
  return error_message("unknown message type '" + type + "'");
}

void serve_adapter(std::istream& in, std::ostream& out, envcore::EntityPool pool) {
  AdapterSession session(std::move(pool));
  std::string line;
  while (!session.closed() && std::getline(in, line)) {
    if (line.empty()) continue;
    out << session.handle(line) << '\n' << std::flush;
  }
}

// ---------------------------------------------------------------------------

ProcessTransport::ProcessTransport(const std::string& command) {
  int in_pipe[2], out_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0) throw std::runtime_error("pipe failed");
  pid_ = fork();
  if (pid_ < 0) throw std::runtime_error("fork failed");
  if (pid_ == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[1]);
    close(out_pipe[0]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  signal(SIGPIPE, SIG_IGN);
}

ProcessTransport::~ProcessTransport() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  if (pid_ > 0) waitpid(pid_, nullptr, 0);
}

std::string ProcessTransport::roundtrip(const std::string& line) {
  std::string msg = line + "\n";
  const char* p = msg.data();
  std::size_t left = msg.size();
  while (left > 0) {
    auto n = write(to_child_, p, left);
    if (n <= 0) throw std::runtime_error("adapter process closed its input");
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  while (true) {
    auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      auto out = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return out;
    }
    char chunk[4096];
    auto n = read(from_child_, chunk, sizeof chunk);
    if (n <= 0) throw std::runtime_error("adapter process closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

AdapterEnv::AdapterEnv(Transport transport, std::string reset_request, int max_score, std::string id)
    : transport_(std::move(transport)),
      reset_request_(std::move(reset_request)),
      max_score_(max_score),
      id_(std::move(id)) {}

envcore::Observation AdapterEnv::reset() {
  return parse_observation_message(transport_(reset_request_));
}

envcore::Observation AdapterEnv::step(const std::string& action) {
  return parse_observation_message(transport_(json{{"type", "step"}, {"action", action}}.dump()));
}

}  // namespace vistext::adapter
