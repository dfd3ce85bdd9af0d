#include "fedsim/protocol.hpp"

#include "fedsim/errors.hpp"

namespace fedsim {

using nlohmann::json;

namespace {

json error_event(const std::string& code, const std::string& message) {
  return {{"v", kProtocolVersion},
          {"event", "error"},
          {"code", code},
          {"message", message}};
}

json created_event(const std::string& id, const Session& session) {
  json layout = json::array();
  for (auto [fo, fi] : session.network_spec().layer_shapes())
    layout.push_back({fo, fi});
  return {{"v", kProtocolVersion},
          {"event", "created"},
          {"id", id},
          {"P", session.param_count()},
          {"layout", layout}};
}

}  // namespace

Session* SessionManager::find(const std::string& id) {
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second.get();
}

json SessionManager::handle(const json& command) {
  try {
    if (!command.is_object() || !command.contains("cmd"))
      return error_event("E_BAD_COMMAND", "message is not a command object");
    if (command.contains("v") &&
        command.at("v").get<std::string>() != kProtocolVersion)
      return error_event("E_BAD_COMMAND", "unsupported protocol version");

    const std::string cmd = command.at("cmd").get<std::string>();

    if (cmd == "create") {
      SessionConfig cfg = session_config_from_json(command.value("config", json::object()));
      auto session = std::make_unique<Session>(cfg);
      std::string id = "s" + std::to_string(next_id_++);
      json ev = created_event(id, *session);
      sessions_[id] = std::move(session);
      return ev;
    }

    const std::string id = command.value("id", "");
    Session* session = find(id);
    if (!session)
      return error_event("E_BAD_COMMAND", "unknown session id '" + id + "'");

    if (cmd == "step") {
      int count = command.value("count", 1);
      json reports = json::array();
      for (const RoundReport& r : session->step(count))
        reports.push_back(report_to_json(r));
      return {{"v", kProtocolVersion},
              {"event", "round_reports"},
              {"id", id},
              {"reports", reports}};
    }
    if (cmd == "set_param") {
      const std::string key = command.at("key").get<std::string>();
      session->set_param(key, command.at("value"));
      return {{"v", kProtocolVersion},
              {"event", "param_ack"},
              {"id", id},
              {"key", key},
              {"value", command.at("value")}};
    }
    if (cmd == "train_local") {
      int client_id = command.at("client_id").get<int>();
      int epochs = command.at("epochs").get<int>();
      return {{"v", kProtocolVersion},
              {"event", "local_losses"},
              {"id", id},
              {"client_id", client_id},
              {"epoch_losses", session->train_local(client_id, epochs)}};
    }
    if (cmd == "snapshot") {
      std::vector<std::string> kinds =
          command.at("kinds").get<std::vector<std::string>>();
      return {{"v", kProtocolVersion},
              {"event", "snapshot"},
              {"id", id},
              {"payloads", session->snapshot(kinds)}};
    }
    if (cmd == "reset") {
      std::optional<std::uint64_t> seed;
      if (command.contains("seed") && !command.at("seed").is_null())
        seed = command.at("seed").get<std::uint64_t>();
      session->reset(seed);
      return created_event(id, *session);
    }
    if (cmd == "destroy") {
      sessions_.erase(id);
      return {{"v", kProtocolVersion}, {"event", "destroyed"}, {"id", id}};
    }
    return error_event("E_BAD_COMMAND", "unknown command '" + cmd + "'");
  } catch (const ValidationError& e) {
    json ev = error_event("E_VALIDATION", e.what());
    ev["key"] = e.key();
    return ev;
  } catch (const ColdParamError& e) {
    json ev = error_event("E_COLD_PARAM", e.what());
    ev["key"] = e.key();
    return ev;
  } catch (const RangeError& e) {
    json ev = error_event("E_RANGE", e.what());
    ev["key"] = e.key();
    return ev;
  } catch (const UnknownClientError& e) {
    return error_event("E_UNKNOWN_CLIENT", e.what());
  } catch (const json::exception& e) {
    return error_event("E_BAD_COMMAND", e.what());
  } catch (const std::exception& e) {
    return error_event("E_BAD_COMMAND", e.what());
  }
}

void write_frame(std::ostream& out, const json& message) {
  std::string payload = message.dump();
  out << payload.size() << '\n' << payload << '\n';
  out.flush();
}

std::optional<json> read_frame(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) return std::nullopt;
  std::size_t len = 0;
  try {
    len = std::stoul(header);
  } catch (...) {
    return std::nullopt;
  }
  std::string payload(len, '\0');
  in.read(payload.data(), static_cast<std::streamsize>(len));
  if (!in) return std::nullopt;
  in.ignore(1);  // trailing newline
  try {
    return json::parse(payload);
  } catch (...) {
    return json{{"cmd", nullptr}};  // malformed, handler rejects it
  }
}

void serve(std::istream& in, std::ostream& out) {
  SessionManager manager;
  while (auto cmd = read_frame(in)) write_frame(out, manager.handle(*cmd));
}

}  // namespace fedsim
