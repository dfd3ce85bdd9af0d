#pragma once

#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "fedsim/session.hpp"

namespace fedsim {

inline constexpr const char* kProtocolVersion = "fedsim/1";

// Serial command dispatcher over one or more sessions. Every command yields
// exactly one event; failures map to error events with an E_* code.
class SessionManager {
 public:
  nlohmann::json handle(const nlohmann::json& command);

  Session* find(const std::string& id);
  std::size_t session_count() const { return sessions_.size(); }

 private:
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  int next_id_ = 1;
};

// Length-delimited framing: "<decimal byte length>\n<payload>\n".
void write_frame(std::ostream& out, const nlohmann::json& message);
std::optional<nlohmann::json> read_frame(std::istream& in);

// Serve the protocol over a stream pair until EOF.
void serve(std::istream& in, std::ostream& out);

}  // namespace fedsim
