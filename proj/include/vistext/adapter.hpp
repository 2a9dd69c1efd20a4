#pragma once

// Line-delimited JSON protocol that lets any engine (the built-in MiniHouse
// or an external TextWorld/Jericho wrapper) present the Observation surface.
//
// Requests, one JSON object per line:
//   {"type":"reset","seed":7,"difficulty":"easy"}   optional "step_cap", "world"
//   {"type":"step","action":"take apple from floor"}
//   {"type":"close"}
// Responses, one line per request, keys sorted, compact:
//   {"admissible_actions":[...],"done":false,"reward":0.0,"score":0,"text":"...","type":"observation"}
//   {"detail":"...","type":"error"}
//   {"type":"close"}

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

#include "vistext/envcore.hpp"

namespace vistext::adapter {

std::string observation_message(const envcore::Observation& obs);
std::string error_message(const std::string& detail);
envcore::Observation parse_observation_message(const std::string& line);

class AdapterSession {
 public:
  explicit AdapterSession(envcore::EntityPool pool = envcore::EntityPool::minihouse());

  // One response line (without newline) per request line.
  std::string handle(const std::string& line);
  bool closed() const { return closed_; }

 private:
  envcore::EntityPool pool_;
  std::optional<envcore::MiniHouseEnv> env_;
  bool closed_ = false;
};

// Serves requests until EOF or a close message.
void serve_adapter(std::istream& in, std::ostream& out,
                   envcore::EntityPool pool = envcore::EntityPool::minihouse());

// Request line in, response line out.
using Transport = std::function<std::string(const std::string&)>;

// Spawns a command speaking the protocol on stdin/stdout.
class ProcessTransport {
 public:
  explicit ProcessTransport(const std::string& command);
  ~ProcessTransport();
  ProcessTransport(const ProcessTransport&) = delete;
  ProcessTransport& operator=(const ProcessTransport&) = delete;

  std::string roundtrip(const std::string& line);

 private:
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

// Environment whose episodes live behind a transport.
class AdapterEnv : public envcore::Environment {
 public:
  AdapterEnv(Transport transport, std::string reset_request, int max_score, std::string id);
  envcore::Observation reset() override;
  envcore::Observation step(const std::string& action) override;
  int max_score() const override { return max_score_; }
  std::string id() const override { return id_; }

 private:
  Transport transport_;
  std::string reset_request_;
  int max_score_;
  std::string id_;
};

}  // namespace vistext::adapter
