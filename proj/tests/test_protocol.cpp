#include <sstream>

#include <doctest.h>
#include <json.hpp>

#include "fedsim/protocol.hpp"

using namespace fedsim;
using nlohmann::json;

namespace {

json create_cmd(std::uint64_t seed = 1) {
  return {{"v", kProtocolVersion},
          {"cmd", "create"},
          {"config",
           {{"seed", seed},
            {"data", {{"n", 80}}},
            {"network", {{"hidden_layers", {3}}}},
            {"fl", {{"n_clients", 4}}}}}};
}

}  // namespace

TEST_CASE("create returns ids and model shape") {
  SessionManager mgr;
  json ev = mgr.handle(create_cmd());
  CHECK(ev["event"] == "created");
  CHECK(ev["v"] == kProtocolVersion);
  CHECK(ev["id"] == "s1");
  CHECK(ev["P"].get<int>() > 0);
  CHECK(ev["layout"].is_array());

  json ev2 = mgr.handle(create_cmd(2));
  CHECK(ev2["id"] == "s2");
  CHECK(mgr.session_count() == 2);
}

TEST_CASE("step returns one round_reports event per command") {
  SessionManager mgr;
  std::string id = mgr.handle(create_cmd())["id"];
  json ev = mgr.handle({{"cmd", "step"}, {"id", id}, {"count", 3}});
  CHECK(ev["event"] == "round_reports");
  REQUIRE(ev["reports"].size() == 3);
  CHECK(ev["reports"][0]["round"] == 1);
  CHECK(ev["reports"][2]["round"] == 3);
  json ev2 = mgr.handle({{"cmd", "step"}, {"id", id}});  // default count 1
  CHECK(ev2["reports"].size() == 1);
  CHECK(ev2["reports"][0]["round"] == 4);
}

TEST_CASE("set_param acks and applies") {
  SessionManager mgr;
  std::string id = mgr.handle(create_cmd())["id"];
  json ev = mgr.handle(
      {{"cmd", "set_param"}, {"id", id}, {"key", "dropout_prob"}, {"value", 1.0}});
  CHECK(ev["event"] == "param_ack");
  CHECK(ev["key"] == "dropout_prob");
  json step = mgr.handle({{"cmd", "step"}, {"id", id}});
  CHECK(step["reports"][0]["participants"].empty());
}

TEST_CASE("error codes map to exception kinds") {
  SessionManager mgr;
  std::string id = mgr.handle(create_cmd())["id"];

  json bad_cfg = mgr.handle(
      {{"cmd", "create"}, {"config", {{"data", {{"noise", 0.9}}}}}});
  CHECK(bad_cfg["event"] == "error");
  CHECK(bad_cfg["code"] == "E_VALIDATION");
  CHECK(bad_cfg["key"] == "noise");

  json cold = mgr.handle(
      {{"cmd", "set_param"}, {"id", id}, {"key", "n_clients"}, {"value", 9}});
  CHECK(cold["code"] == "E_COLD_PARAM");
  CHECK(cold["key"] == "n_clients");

  json range = mgr.handle(
      {{"cmd", "set_param"}, {"id", id}, {"key", "client_lr"}, {"value", -1.0}});
  CHECK(range["code"] == "E_RANGE");
  CHECK(range["key"] == "client_lr");

  json unknown_client = mgr.handle(
      {{"cmd", "train_local"}, {"id", id}, {"client_id", 99}, {"epochs", 1}});
  CHECK(unknown_client["code"] == "E_UNKNOWN_CLIENT");

  json bad_cmd = mgr.handle({{"cmd", "launch"}, {"id", id}});
  CHECK(bad_cmd["code"] == "E_BAD_COMMAND");

  json no_session = mgr.handle({{"cmd", "step"}, {"id", "s99"}});
  CHECK(no_session["code"] == "E_BAD_COMMAND");

  json not_object = mgr.handle(json::array({1, 2}));
  CHECK(not_object["code"] == "E_BAD_COMMAND");

  json bad_version = mgr.handle({{"v", "fedsim/9"}, {"cmd", "step"}});
  CHECK(bad_version["code"] == "E_BAD_COMMAND");
}

TEST_CASE("errors leave the session usable") {
  SessionManager mgr;
  std::string id = mgr.handle(create_cmd())["id"];
  mgr.handle({{"cmd", "set_param"}, {"id", id}, {"key", "client_lr"}, {"value", -1.0}});
  json ev = mgr.handle({{"cmd", "step"}, {"id", id}});
  CHECK(ev["event"] == "round_reports");
}

TEST_CASE("train_local returns per-epoch losses") {
  SessionManager mgr;
  std::string id = mgr.handle(create_cmd())["id"];
  json ev = mgr.handle(
      {{"cmd", "train_local"}, {"id", id}, {"client_id", 0}, {"epochs", 3}});
  CHECK(ev["event"] == "local_losses");
  CHECK(ev["client_id"] == 0);
  CHECK(ev["epoch_losses"].size() == 3);
}

TEST_CASE("snapshot event wraps the payloads") {
  SessionManager mgr;
  std::string id = mgr.handle(create_cmd())["id"];
  mgr.handle({{"cmd", "step"}, {"id", id}, {"count", 2}});
  json ev = mgr.handle(
      {{"cmd", "snapshot"}, {"id", id}, {"kinds", {"metrics", "boundary_global"}}});
  CHECK(ev["event"] == "snapshot");
  CHECK(ev["payloads"]["metrics"].size() == 2);
  CHECK(ev["payloads"]["boundary_global"].size() == 2500);
}

TEST_CASE("reset re-announces the session and replays identically") {
  SessionManager mgr;
  std::string id = mgr.handle(create_cmd(7))["id"];
  json first = mgr.handle({{"cmd", "step"}, {"id", id}, {"count", 5}});
  json ev = mgr.handle({{"cmd", "reset"}, {"id", id}});
  CHECK(ev["event"] == "created");
  CHECK(ev["id"] == id);
  json second = mgr.handle({{"cmd", "step"}, {"id", id}, {"count", 5}});
  CHECK(first["reports"] == second["reports"]);
}

TEST_CASE("destroy removes the session") {
  SessionManager mgr;
  std::string id = mgr.handle(create_cmd())["id"];
  json ev = mgr.handle({{"cmd", "destroy"}, {"id", id}});
  CHECK(ev["event"] == "destroyed");
  CHECK(mgr.session_count() == 0);
  json gone = mgr.handle({{"cmd", "step"}, {"id", id}});
  CHECK(gone["code"] == "E_BAD_COMMAND");
}

TEST_CASE("frames round-trip through a stream") {
  std::stringstream buf;
  json a = {{"cmd", "step"}, {"id", "s1"}, {"count", 2}};
  json b = {{"event", "destroyed"}};
  write_frame(buf, a);
  write_frame(buf, b);
  auto ra = read_frame(buf);
  auto rb = read_frame(buf);
  auto rc = read_frame(buf);
  REQUIRE(ra.has_value());
  REQUIRE(rb.has_value());
  CHECK(*ra == a);
  CHECK(*rb == b);
  CHECK(!rc.has_value());
}

TEST_CASE("frame format is length newline payload newline") {
  std::stringstream buf;
  write_frame(buf, json{{"x", 1}});
  std::string payload = json{{"x", 1}}.dump();
  CHECK(buf.str() == std::to_string(payload.size()) + "\n" + payload + "\n");
}

TEST_CASE("read_frame rejects garbage headers") {
  std::stringstream buf("not-a-number\n{}\n");
  CHECK(!read_frame(buf).has_value());
}

TEST_CASE("serve answers every frame with exactly one event") {
  std::stringstream in, out;
  write_frame(in, create_cmd(3));
  write_frame(in, {{"cmd", "step"}, {"id", "s1"}, {"count", 2}});
  write_frame(in, {{"cmd", "bogus"}, {"id", "s1"}});
  write_frame(in, {{"cmd", "destroy"}, {"id", "s1"}});
  serve(in, out);
  std::vector<json> events;
  while (auto ev = read_frame(out)) events.push_back(*ev);
  REQUIRE(events.size() == 4);
  CHECK(events[0]["event"] == "created");
  CHECK(events[1]["event"] == "round_reports");
  CHECK(events[2]["event"] == "error");
  CHECK(events[3]["event"] == "destroyed");
  for (const auto& ev : events) CHECK(ev["v"] == kProtocolVersion);
}
