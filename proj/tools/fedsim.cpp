// Headless scenario runner and protocol server for the FL simulator.
//
//   fedsim run --dataset gauss --clients 5 --rounds 100 --out run.csv
//   fedsim compare a.manifest.json b.manifest.json
//   fedsim serve

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedsim/errors.hpp"
#include "fedsim/protocol.hpp"
#include "fedsim/session.hpp"

using nlohmann::json;

namespace {

struct ScheduleEntry {
  int round = 0;
  std::string key;
  json value;
};

struct Scenario {
  fedsim::SessionConfig config;
  int rounds = 100;
  std::vector<ScheduleEntry> schedule;
  std::string format = "csv";  // csv | records
};

json scenario_to_json(const Scenario& s) {
  json sched = json::array();
  for (const ScheduleEntry& e : s.schedule)
    sched.push_back({{"round", e.round}, {"key", e.key}, {"value", e.value}});
  return {{"v", fedsim::kProtocolVersion},
          {"scenario",
           {{"rounds", s.rounds},
            {"format", s.format},
            {"schedule", sched},
            {"config", fedsim::to_json(s.config)}}}};
}

Scenario scenario_from_json(const json& j) {
  Scenario s;
  const json& sc = j.contains("scenario") ? j.at("scenario") : j;
  if (sc.contains("rounds")) s.rounds = sc.at("rounds").get<int>();
  if (sc.contains("format")) s.format = sc.at("format").get<std::string>();
  if (sc.contains("schedule")) {
    for (const auto& e : sc.at("schedule")) {
      ScheduleEntry entry;
      entry.round = e.at("round").get<int>();
      entry.key = e.at("key").get<std::string>();
      entry.value = e.at("value");
      s.schedule.push_back(std::move(entry));
    }
  }
  if (sc.contains("config"))
    s.config = fedsim::session_config_from_json(sc.at("config"));
  return s;
}

void validate_scenario(const Scenario& s) {
  if (s.rounds < 1)
    throw fedsim::ValidationError("rounds", "rounds must be >= 1");
  if (s.format != "csv" && s.format != "records")
    throw fedsim::ValidationError("format", "format must be csv or records");
  for (const ScheduleEntry& e : s.schedule) {
    if (e.round < 1 || e.round > s.rounds)
      throw fedsim::ValidationError(
          "schedule", "schedule round " + std::to_string(e.round) +
                          " outside [1, rounds]");
    if (!fedsim::is_hot_param(e.key))
      throw fedsim::ValidationError(
          "schedule", "schedule key '" + e.key + "' is not a hot parameter");
  }
  s.config.validate();
}

// Runs the scenario to completion; returns the populated session.
fedsim::Session run_scenario_session(const Scenario& s) {
  fedsim::Session session(s.config);
  for (int r = 1; r <= s.rounds; ++r) {
    for (const ScheduleEntry& e : s.schedule)
      if (e.round == r) session.set_param(e.key, e.value);
    session.step(1);
  }
  return session;
}

std::string records_output(const fedsim::Session& session) {
  std::string out;
  for (const fedsim::RoundReport& r : session.series().reports()) {
    out += fedsim::report_to_json(r).dump();
    out += '\n';
  }
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw fedsim::ArgumentError("cannot open output file " + path);
  f << content;
}

json parse_schedule_value(const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (...) {
  }
  return text;
}

std::vector<ScheduleEntry> parse_schedule(const std::string& spec) {
  std::vector<ScheduleEntry> entries;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    auto colon = item.find(':');
    auto eq = item.find('=');
    if (colon == std::string::npos || eq == std::string::npos || eq < colon)
      throw fedsim::ValidationError(
          "schedule", "schedule entry must be round:key=value, got '" + item + "'");
    ScheduleEntry e;
    e.round = std::stoi(item.substr(0, colon));
    e.key = item.substr(colon + 1, eq - colon - 1);
    e.value = parse_schedule_value(item.substr(eq + 1));
    entries.push_back(std::move(e));
  }
  return entries;
}

std::vector<int> parse_hidden(const std::string& spec) {
  std::vector<int> layers;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) layers.push_back(std::stoi(item));
  return layers;
}

int run_command(const Scenario& scenario, const std::string& out_path,
                const std::string& dump_data_path) {
  validate_scenario(scenario);
  fedsim::Session session = run_scenario_session(scenario);

  std::string output = scenario.format == "csv"
                           ? fedsim::to_csv(session.series())
                           : records_output(session);
  if (out_path.empty() || out_path == "-") {
    std::cout << output;
  } else {
    write_file(out_path, output);
    write_file(out_path + ".manifest.json", scenario_to_json(scenario).dump(2) + "\n");
  }
  if (!dump_data_path.empty()) {
    json data = {{"v", fedsim::kProtocolVersion},
                 {"dataset", fedsim::dataset_to_json(session.dataset())},
                 {"partition",
                  fedsim::partition_to_json(
                      fedsim::Partition{{}, session.config().data.partition,
                                        session.config().data.alpha_label,
                                        session.config().data.alpha_size})}};
    // store the actual client assignments
    json assigns = json::array();
    for (const auto& c : session.clients()) assigns.push_back(c.data_indices);
    data["partition"]["assignments"] = assigns;
    write_file(dump_data_path, data.dump() + "\n");
  }
  return 0;
}

int compare_command(const std::vector<std::string>& manifest_paths) {
  if (manifest_paths.size() < 2)
    throw fedsim::ValidationError("manifests", "compare needs >= 2 manifests");

  struct Row {
    std::string path;
    std::string algorithm;
    double final_test_loss = 0.0;
    std::int64_t total_comms = 0;
  };

  std::vector<Scenario> scenarios;
  for (const std::string& path : manifest_paths) {
    std::ifstream f(path);
    if (!f) throw fedsim::ValidationError("manifests", "cannot read " + path);
    scenarios.push_back(scenario_from_json(json::parse(f)));
  }
  const json base_data = fedsim::to_json(scenarios[0].config)["data"];
  for (const Scenario& s : scenarios) {
    if (fedsim::to_json(s.config)["data"] != base_data ||
        s.config.seed != scenarios[0].config.seed)
      throw fedsim::ValidationError(
          "manifests", "compare requires identical dataset config and seed");
  }

  std::vector<Row> rows;
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    validate_scenario(scenarios[i]);
    fedsim::Session session = run_scenario_session(scenarios[i]);
    Row row;
    row.path = manifest_paths[i];
    row.algorithm = fedsim::to_string(scenarios[i].config.fl.algorithm);
    const auto& reports = session.series().reports();
    row.final_test_loss = reports.back().global_test_loss;
    for (const auto& r : reports) row.total_comms += r.comms_bytes;
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.final_test_loss < b.final_test_loss;
  });

  std::cout << "run,algorithm,final_test_loss,total_comms_bytes\n";
  for (const Row& r : rows)
    std::cout << r.path << ',' << r.algorithm << ','
              << fedsim::format_double(r.final_test_loss) << ',' << r.total_comms
              << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run a scenario and export metrics");
  std::string config_path, out_path, dump_data_path, schedule_spec, hidden_spec;
  std::string dataset_s, partition_s, algorithm_s, activation_s, metric_s, format_s;
  Scenario scenario;
  bool centralized = false;
  run->add_option("--config", config_path, "Scenario/manifest JSON file");
  run->add_option("--dataset", dataset_s, "circle|xor|gauss|spiral");
  run->add_option("--n", scenario.config.data.n, "Number of points");
  run->add_option("--noise", scenario.config.data.noise, "Noise in [0,0.5]");
  run->add_option("--train-ratio", scenario.config.data.train_ratio, "");
  run->add_option("--clients", scenario.config.fl.n_clients, "");
  run->add_option("--fraction", scenario.config.fl.client_fraction, "");
  run->add_option("--dropout", scenario.config.fl.dropout_prob, "");
  run->add_option("--alpha", scenario.config.data.alpha_label, "");
  run->add_option("--size-alpha", scenario.config.data.alpha_size, "");
  run->add_option("--partition", partition_s, "iid|dirichlet|skewed");
  run->add_option("--algorithm", algorithm_s, "fedavg|fedprox|fedadam|scaffold");
  run->add_option("--mu", scenario.config.fl.mu, "");
  run->add_option("--server-lr", scenario.config.fl.server_lr, "");
  run->add_option("--beta1", scenario.config.fl.beta1, "");
  run->add_option("--beta2", scenario.config.fl.beta2, "");
  run->add_option("--tau", scenario.config.fl.tau, "");
  run->add_option("--dp-clip", scenario.config.fl.dp_clip, "");
  run->add_option("--dp-sigma", scenario.config.fl.dp_sigma, "");
  run->add_option("--clusters", scenario.config.fl.cluster_k, "");
  run->add_option("--cluster-metric", metric_s, "l2|cosine");
  run->add_option("--cluster-warmup", scenario.config.fl.cluster_warmup, "");
  run->add_option("--cluster-period", scenario.config.fl.cluster_period, "");
  run->add_option("--local-epochs", scenario.config.fl.local_epochs, "");
  run->add_option("--batch", scenario.config.fl.batch_size, "");
  run->add_option("--lr", scenario.config.fl.client_lr, "");
  run->add_option("--hidden", hidden_spec, "Hidden layer widths, e.g. 4,2");
  run->add_option("--activation", activation_s, "tanh|relu|sigmoid|linear");
  run->add_option("--rounds", scenario.rounds, "");
  run->add_option("--seed", scenario.config.seed, "");
  run->add_option("--schedule", schedule_spec, "round:key=value[,...]");
  run->add_flag("--centralized", centralized, "Disable federated mode");
  run->add_option("--out", out_path, "Output file (default stdout)");
  run->add_option("--format", format_s, "csv|records");
  run->add_option("--dump-data", dump_data_path, "Dump dataset+partition JSON");

  // compare
  auto* compare = app.add_subcommand("compare", "Compare finished runs");
  std::vector<std::string> manifest_paths;
  compare->add_option("manifests", manifest_paths, "Run manifest files");

  // serve
  auto* serve_cmd =
      app.add_subcommand("serve", "Speak the session protocol on stdin/stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw fedsim::ValidationError("config", "cannot read " + config_path);
        Scenario flags = scenario;
        scenario = scenario_from_json(json::parse(f));
        // flags given on the command line override the file
        if (run->count("--rounds")) scenario.rounds = flags.rounds;
        if (run->count("--seed")) scenario.config.seed = flags.config.seed;
        if (run->count("--n")) scenario.config.data.n = flags.config.data.n;
        if (run->count("--noise")) scenario.config.data.noise = flags.config.data.noise;
        if (run->count("--train-ratio"))
          scenario.config.data.train_ratio = flags.config.data.train_ratio;
        if (run->count("--alpha"))
          scenario.config.data.alpha_label = flags.config.data.alpha_label;
        if (run->count("--size-alpha"))
          scenario.config.data.alpha_size = flags.config.data.alpha_size;
        if (run->count("--clients"))
          scenario.config.fl.n_clients = flags.config.fl.n_clients;
        if (run->count("--fraction"))
          scenario.config.fl.client_fraction = flags.config.fl.client_fraction;
        if (run->count("--dropout"))
          scenario.config.fl.dropout_prob = flags.config.fl.dropout_prob;
        if (run->count("--mu")) scenario.config.fl.mu = flags.config.fl.mu;
        if (run->count("--server-lr"))
          scenario.config.fl.server_lr = flags.config.fl.server_lr;
        if (run->count("--beta1")) scenario.config.fl.beta1 = flags.config.fl.beta1;
        if (run->count("--beta2")) scenario.config.fl.beta2 = flags.config.fl.beta2;
        if (run->count("--tau")) scenario.config.fl.tau = flags.config.fl.tau;
        if (run->count("--dp-clip"))
          scenario.config.fl.dp_clip = flags.config.fl.dp_clip;
        if (run->count("--dp-sigma"))
          scenario.config.fl.dp_sigma = flags.config.fl.dp_sigma;
        if (run->count("--clusters"))
          scenario.config.fl.cluster_k = flags.config.fl.cluster_k;
        if (run->count("--cluster-warmup"))
          scenario.config.fl.cluster_warmup = flags.config.fl.cluster_warmup;
        if (run->count("--cluster-period"))
          scenario.config.fl.cluster_period = flags.config.fl.cluster_period;
        if (run->count("--local-epochs"))
          scenario.config.fl.local_epochs = flags.config.fl.local_epochs;
        if (run->count("--batch"))
          scenario.config.fl.batch_size = flags.config.fl.batch_size;
        if (run->count("--lr"))
          scenario.config.fl.client_lr = flags.config.fl.client_lr;
      }
      if (!dataset_s.empty())
        scenario.config.data.kind = fedsim::dataset_kind_from_string(dataset_s);
      if (!partition_s.empty())
        scenario.config.data.partition =
            fedsim::partition_mode_from_string(partition_s);
      if (!algorithm_s.empty())
        scenario.config.fl.algorithm = fedsim::algorithm_from_string(algorithm_s);
      if (!metric_s.empty())
        scenario.config.fl.cluster_metric =
            fedsim::cluster_metric_from_string(metric_s);
      if (!activation_s.empty())
        scenario.config.network.hidden_activation =
            fedsim::activation_from_string(activation_s);
      if (!hidden_spec.empty())
        scenario.config.network.hidden_layers = parse_hidden(hidden_spec);
      if (!schedule_spec.empty()) scenario.schedule = parse_schedule(schedule_spec);
      if (!format_s.empty()) scenario.format = format_s;
      if (centralized) scenario.config.fl.federated_enabled = false;
      return run_command(scenario, out_path, dump_data_path);
    }
    if (compare->parsed()) return compare_command(manifest_paths);
    if (serve_cmd->parsed()) {
      fedsim::serve(std::cin, std::cout);
      return 0;
    }
  } catch (const fedsim::ValidationError& e) {
    std::cerr << "error: E_VALIDATION (" << e.key() << "): " << e.what() << '\n';
    return 2;
  } catch (const fedsim::ColdParamError& e) {
    std::cerr << "error: E_COLD_PARAM (" << e.key() << "): " << e.what() << '\n';
    return 2;
  } catch (const fedsim::RangeError& e) {
    std::cerr << "error: E_RANGE (" << e.key() << "): " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: bad config file: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
