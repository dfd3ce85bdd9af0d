#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>
#include <json.hpp>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kCli = FEDSIM_CLI_PATH;

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cmd(const std::string& args) {
  std::string cmd = kCli + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, n);
  int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path temp_dir() {
  static fs::path dir = [] {
    fs::path p = fs::temp_directory_path() /
                 ("fedsim_cli_test_" + std::to_string(getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

const std::string kBaseArgsNoSeed =
    "run --dataset gauss --n 80 --clients 4 --rounds 10 --hidden 3";
const std::string kBaseArgs = kBaseArgsNoSeed + " --seed 5";

}  // namespace

TEST_CASE("run prints a csv to stdout by default") {
  RunResult r = run_cmd(kBaseArgs);
  CHECK(r.exit_code == 0);
  auto lines = lines_of(r.output);
  REQUIRE(lines.size() == 11);
  CHECK(lines[0] ==
        "round,participants,comms_bytes,loss_min,loss_mean,loss_max,"
        "global_train_loss,global_test_loss");
  CHECK(csv_fields(lines[1])[0] == "1");
  CHECK(csv_fields(lines[10])[0] == "10");
}

TEST_CASE("identical invocations produce byte-identical csv files") {
  fs::path a = temp_dir() / "det_a.csv";
  fs::path b = temp_dir() / "det_b.csv";
  CHECK(run_cmd(kBaseArgs + " --out " + a.string()).exit_code == 0);
  CHECK(run_cmd(kBaseArgs + " --out " + b.string()).exit_code == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a) == run_cmd(kBaseArgs).output);
}

TEST_CASE("different seeds change the output") {
  RunResult a = run_cmd(kBaseArgs);
  RunResult b = run_cmd(kBaseArgsNoSeed + " --seed 6");
  CHECK(a.exit_code == 0);
  CHECK(b.exit_code == 0);
  CHECK(a.output != b.output);
}

TEST_CASE("records format emits one json object per round") {
  RunResult r = run_cmd(kBaseArgs + " --format records");
  CHECK(r.exit_code == 0);
  auto lines = lines_of(r.output);
  REQUIRE(lines.size() == 10);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    json row = json::parse(lines[i]);
    CHECK(row["round"] == static_cast<int>(i + 1));
    CHECK(row.contains("participants"));
    CHECK(row.contains("comms_bytes"));
    CHECK(row.contains("global_test_loss"));
  }
}

TEST_CASE("schedule flips a hot parameter mid-run") {
  RunResult r = run_cmd(kBaseArgs + " --schedule 6:dropout_prob=1.0");
  CHECK(r.exit_code == 0);
  auto lines = lines_of(r.output);
  for (int round = 1; round <= 10; ++round) {
    auto fields = csv_fields(lines[round]);
    if (round < 6) {
      CHECK(fields[1] == "4");
    } else {
      CHECK(fields[1] == "0");
      CHECK(fields[3].empty());  // no loss distribution
    }
  }
}

TEST_CASE("schedule validation catches cold keys and bad rounds") {
  CHECK(run_cmd(kBaseArgs + " --schedule 3:batch_size=5").exit_code == 2);
  CHECK(run_cmd(kBaseArgs + " --schedule 99:dropout_prob=0.5").exit_code == 2);
}

TEST_CASE("centralized runs report zero comms") {
  RunResult r = run_cmd(kBaseArgs + " --centralized");
  CHECK(r.exit_code == 0);
  auto lines = lines_of(r.output);
  for (std::size_t i = 1; i < lines.size(); ++i)
    CHECK(csv_fields(lines[i])[2] == "0");
}

TEST_CASE("manifest replay reproduces the csv byte for byte") {
  fs::path out = temp_dir() / "replay.csv";
  CHECK(run_cmd(kBaseArgs + " --algorithm fedadam --out " + out.string())
            .exit_code == 0);
  std::string original = slurp(out);
  fs::path manifest = out;
  manifest += ".manifest.json";
  json m = json::parse(slurp(manifest));
  CHECK(m["v"] == "fedsim/1");
  CHECK(m["scenario"]["rounds"] == 10);

  RunResult replay = run_cmd("run --config " + manifest.string());
  CHECK(replay.exit_code == 0);
  CHECK(replay.output == original);
}

TEST_CASE("command-line flags override the config file") {
  fs::path out = temp_dir() / "override.csv";
  CHECK(run_cmd(kBaseArgs + " --out " + out.string()).exit_code == 0);
  fs::path manifest = out;
  manifest += ".manifest.json";
  RunResult r = run_cmd("run --config " + manifest.string() + " --rounds 3");
  CHECK(r.exit_code == 0);
  CHECK(lines_of(r.output).size() == 4);

  RunResult r2 = run_cmd("run --config " + manifest.string() + " --seed 99");
  CHECK(r2.output != run_cmd("run --config " + manifest.string()).output);
}

TEST_CASE("invalid parameter values exit with code 2") {
  CHECK(run_cmd("run --noise 0.9").exit_code == 2);
  CHECK(run_cmd("run --fraction 0").exit_code == 2);
  CHECK(run_cmd("run --dataset hexagon").exit_code == 2);
  CHECK(run_cmd("run --config /nonexistent.json").exit_code == 2);
  CHECK(run_cmd("plot").exit_code == 2);
}

TEST_CASE("dump-data writes the dataset and exact partition") {
  fs::path dump = temp_dir() / "data.json";
  CHECK(run_cmd(kBaseArgs + " --dump-data " + dump.string()).exit_code == 0);
  json d = json::parse(slurp(dump));
  CHECK(d["dataset"]["points"].size() == 80);
  auto assigns = d["partition"]["assignments"];
  REQUIRE(assigns.size() == 4);
  std::size_t total = 0;
  for (const auto& a : assigns) total += a.size();
  CHECK(total == d["dataset"]["train_indices"].size());
}

TEST_CASE("compare ranks runs sharing data and seed") {
  std::vector<std::string> algos = {"fedavg", "fedprox", "fedadam", "scaffold"};
  std::vector<std::string> manifests;
  for (const std::string& a : algos) {
    fs::path out = temp_dir() / ("cmp_" + a + ".csv");
    std::string extra = a == "fedprox" ? " --mu 0.1" : "";
    CHECK(run_cmd(kBaseArgs + " --algorithm " + a + extra + " --out " +
                  out.string())
              .exit_code == 0);
    manifests.push_back(out.string() + ".manifest.json");
  }
  std::string args = "compare";
  for (const std::string& m : manifests) args += " " + m;
  RunResult r = run_cmd(args);
  CHECK(r.exit_code == 0);
  auto lines = lines_of(r.output);
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "run,algorithm,final_test_loss,total_comms_bytes");
  double prev = -1.0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto fields = csv_fields(lines[i]);
    double loss = std::stod(fields[2]);
    CHECK(loss >= prev);
    prev = loss;
  }
}

TEST_CASE("compare refuses mismatched data configs") {
  fs::path a = temp_dir() / "mm_a.csv";
  fs::path b = temp_dir() / "mm_b.csv";
  CHECK(run_cmd(kBaseArgs + " --out " + a.string()).exit_code == 0);
  CHECK(run_cmd(kBaseArgsNoSeed + " --seed 6 --out " + b.string()).exit_code ==
        0);
  RunResult r = run_cmd("compare " + a.string() + ".manifest.json " +
                        b.string() + ".manifest.json");
  CHECK(r.exit_code == 2);
  CHECK(run_cmd("compare " + a.string() + ".manifest.json").exit_code == 2);
}

TEST_CASE("serve speaks the framed protocol over stdio") {
  fs::path script = temp_dir() / "serve_input.txt";
  {
    std::ofstream f(script, std::ios::binary);
    auto frame = [&f](const json& j) {
      std::string p = j.dump();
      f << p.size() << '\n' << p << '\n';
    };
    frame({{"cmd", "create"},
           {"config",
            {{"seed", 3},
             {"data", {{"n", 60}}},
             {"network", {{"hidden_layers", {3}}}},
             {"fl", {{"n_clients", 3}}}}}});
    frame({{"cmd", "step"}, {"id", "s1"}, {"count", 2}});
    frame({{"cmd", "destroy"}, {"id", "s1"}});
  }
  RunResult r = run_cmd("serve < " + script.string());
  CHECK(r.exit_code == 0);
  std::istringstream out(r.output);
  std::vector<json> events;
  std::string header;
  while (std::getline(out, header)) {
    std::size_t len = std::stoul(header);
    std::string payload(len, '\0');
    out.read(payload.data(), static_cast<std::streamsize>(len));
    out.ignore(1);
    events.push_back(json::parse(payload));
  }
  REQUIRE(events.size() == 3);
  CHECK(events[0]["event"] == "created");
  CHECK(events[0]["id"] == "s1");
  CHECK(events[1]["event"] == "round_reports");
  CHECK(events[1]["reports"].size() == 2);
  CHECK(events[2]["event"] == "destroyed");
}
