#pragma once

// Command-line front end: train, benchmark, episode, inspect-bias.
//
// Configuration is a flat JSON object; every key can also be given as a flag
// with underscores replaced by dashes (conflict_model <-> --conflict-model).
// Flags win over the file. List-valued keys accept JSON arrays in the file
// and comma-separated strings on the command line.
//
// Exit codes: 0 ok, 1 runtime/I-O failure, 2 configuration error,
// 3 invariant breach during simulation.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bpr/bias.hpp"
#include "bpr/gnn.hpp"
#include "bpr/simulator.hpp"
#include "bpr/topology.hpp"
#include "bpr/training.hpp"

namespace bpr::cli {

inline constexpr const char* kToolName = "bprsim";
inline constexpr const char* kVersion = "0.1.0";

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Keys understood by the tool, with their flag descriptions.
inline const std::vector<std::pair<std::string, std::string>>& config_keys() {
  static const std::vector<std::pair<std::string, std::string>> keys = {
      {"seed", "global seed"},
      {"jobs", "worker threads for benchmark episodes"},
      {"policy", "routing policies, e.g. BP,SP-Hop,EDR-10,SP-10r/r,SP-1/x,SP-r/(xr)"},
      {"nodes", "network sizes |V|"},
      {"conflict_model", "interface | unitdisk"},
      {"interference_range", "unit-disk interference distance"},
      {"slots", "simulation horizon T"},
      {"checkpoint", "GNN checkpoint path (written by train, read otherwise)"},
      {"out", "primary output path"},
      {"networks", "random networks per size"},
      {"instances", "test instances (flows/arrivals/rates) per network"},
      {"arrival_rates", "fixed per-flow arrival rates for a load sweep"},
      {"scheduler", "greedy | local_greedy | exact"},
      {"require_backlog", "only commodities queued at the sender compete (true/false)"},
      {"episodes", "training episodes"},
      {"train_nodes", "network sizes drawn during training"},
      {"train_conflict_model", "interface | unitdisk | mixed"},
      {"learning_rate", "Adam learning rate"},
      {"batch_size", "replay batch size"},
      {"buffer_capacity", "replay memory capacity"},
      {"steps_per_episode", "Adam steps per training episode"},
      {"layers", "GNN layers L"},
      {"hidden_width", "GNN hidden width"},
      {"network", "network index (episode, inspect-bias)"},
      {"instance", "instance index (episode)"},
      {"trace", "per-slot transmission CSV (episode)"},
      {"bias_out", "bias table CSV (inspect-bias)"},
      {"load_instance", "instance JSON to use instead of generating one"},
      {"load_episode", "episode JSON to use instead of sampling one"},
      {"save_instance", "write the instance JSON here"},
      {"save_episode", "write the episode JSON here"},
  };
  return keys;
}

inline std::string flag_for(const std::string& key) {
  std::string f = "--" + key;
  for (auto& ch : f)
    if (ch == '_') ch = '-';
  return f;
}

// Typed view over the merged configuration document.
class Settings {
 public:
  explicit Settings(nlohmann::json doc) : doc_(std::move(doc)) {}

  const nlohmann::json& document() const { return doc_; }
  bool has(const std::string& key) const { return doc_.contains(key) && !doc_[key].is_null(); }

  std::string str(const std::string& key, const std::string& def = "") const {
    if (!has(key)) return def;
    const auto& v = doc_[key];
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
  }

  long long integer(const std::string& key, long long def) const {
    if (!has(key)) return def;
    const auto& v = doc_[key];
    try {
      if (v.is_number_integer()) return v.get<long long>();
      if (v.is_string()) {
        std::size_t used = 0;
        const long long x = std::stoll(v.get<std::string>(), &used);
        if (used == v.get<std::string>().size()) return x;
      }
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "' must be an integer");
  }

  std::uint64_t seed(const std::string& key, std::uint64_t def) const {
    if (!has(key)) return def;
    const auto& v = doc_[key];
    try {
      if (v.is_number_unsigned()) return v.get<std::uint64_t>();
      if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
      if (v.is_string()) {
        std::size_t used = 0;
        const auto x = std::stoull(v.get<std::string>(), &used);
        if (used == v.get<std::string>().size()) return x;
      }
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  }

  double real(const std::string& key, double def) const {
    if (!has(key)) return def;
    const auto& v = doc_[key];
    try {
      if (v.is_number()) return v.get<double>();
      if (v.is_string()) {
        std::size_t used = 0;
        const double x = std::stod(v.get<std::string>(), &used);
        if (used == v.get<std::string>().size()) return x;
      }
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "' must be a number");
  }

  bool boolean(const std::string& key, bool def) const {
    if (!has(key)) return def;
    const auto& v = doc_[key];
    if (v.is_boolean()) return v.get<bool>();
    const std::string s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("config key '" + key + "' must be a boolean");
  }

  std::vector<std::string> list(const std::string& key, std::vector<std::string> def = {}) const {
    if (!has(key)) return def;
    const auto& v = doc_[key];
    std::vector<std::string> out;
    if (v.is_array()) {
      for (const auto& x : v) out.push_back(x.is_string() ? x.get<std::string>() : x.dump());
      return out;
    }
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ','))
      if (!item.empty()) out.push_back(item);
    return out;
  }

  std::vector<int> int_list(const std::string& key, std::vector<int> def) const {
    if (!has(key)) return def;
    std::vector<int> out;
    for (const auto& s : list(key)) {
      try {
        std::size_t used = 0;
        out.push_back(std::stoi(s, &used));
        if (used != s.size()) throw std::invalid_argument(s);
      } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' must be a list of integers");
      }
    }
    return out;
  }

  std::vector<double> real_list(const std::string& key) const {
    std::vector<double> out;
    for (const auto& s : list(key)) {
      try {
        std::size_t used = 0;
        out.push_back(std::stod(s, &used));
        if (used != s.size()) throw std::invalid_argument(s);
      } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' must be a list of numbers");
      }
    }
    return out;
  }

 private:
  nlohmann::json doc_;
};

inline std::string config_hash(const Settings& s) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(s.document().dump())));
  return buf;
}

inline void write_metadata(std::ostream& os, const Settings& s, const std::string& command) {
  os << "# " << kToolName << ' ' << kVersion << " command=" << command << " seed=" << s.seed("seed", 1)
     << " config_hash=" << config_hash(s) << '\n';
}

inline std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream os(path, mode);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  return os;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline GnnParams read_checkpoint_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("checkpoint not found: " + path);
  return load_checkpoint(is);
}

inline void write_checkpoint_file(const std::string& path, const GnnParams& p) {
  auto os = open_out(path, std::ios::binary);
  save_checkpoint(os, p);
}

inline std::vector<DistancePolicy> policies_of(const Settings& s, std::vector<std::string> def) {
  std::vector<DistancePolicy> out;
  for (const auto& name : s.list("policy", std::move(def))) {
    try {
      out.push_back(parse_policy(name));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (out.empty()) throw ConfigError("empty policy list");
  return out;
}

inline ConflictModel conflict_model_of(const Settings& s, const std::string& key = "conflict_model") {
  try {
    return parse_conflict_model(s.str(key, "unitdisk"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

inline SchedulerKind scheduler_of(const Settings& s) {
  try {
    return parse_scheduler(s.str("scheduler", "greedy"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

inline Slot positive_slots(const Settings& s) {
  const auto T = s.integer("slots", 1000);
  if (T < 1) throw ConfigError("slots must be >= 1");
  return static_cast<Slot>(T);
}

inline TrainConfig train_config_of(const Settings& s) {
  TrainConfig tc;
  tc.seed = s.seed("seed", 1);
  tc.episodes = static_cast<int>(s.integer("episodes", 100));
  if (tc.episodes < 1) throw ConfigError("episodes must be >= 1");
  tc.node_counts = s.int_list("train_nodes", tc.node_counts);
  for (int n : tc.node_counts)
    if (n < 2) throw ConfigError("train_nodes entries must be >= 2");
  const std::string model = s.str("train_conflict_model", "mixed");
  if (model != "mixed") {
    try {
      tc.conflict_model = parse_conflict_model(model);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  tc.interference_range = s.real("interference_range", tc.interference_range);
  tc.horizon = positive_slots(s);
  tc.scheduler = scheduler_of(s);
  tc.routing.require_backlog = s.boolean("require_backlog", true);
  tc.adam.learning_rate = s.real("learning_rate", tc.adam.learning_rate);
  tc.batch_size = static_cast<std::size_t>(s.integer("batch_size", 8));
  tc.buffer_capacity = static_cast<std::size_t>(s.integer("buffer_capacity", 64));
  tc.steps_per_episode = static_cast<int>(s.integer("steps_per_episode", 1));
  const int layers = static_cast<int>(s.integer("layers", 5));
  const int width = static_cast<int>(s.integer("hidden_width", 32));
  if (layers < 1 || width < 1) throw ConfigError("layers and hidden_width must be >= 1");
  if (tc.batch_size < 1 || tc.buffer_capacity < 1 || tc.steps_per_episode < 1)
    throw ConfigError("batch_size, buffer_capacity and steps_per_episode must be >= 1");
  tc.arch.widths.assign(1, 1);
  for (int l = 1; l < layers; ++l) tc.arch.widths.push_back(width);
  tc.arch.widths.push_back(2);
  return tc;
}

inline int cmd_train(const Settings& s, std::ostream& log) {
  const std::string ckpt = s.str("checkpoint");
  if (ckpt.empty()) throw ConfigError("train: --checkpoint is required");
  const std::string curve_path = s.str("out", ckpt + ".curve.csv");
  const TrainConfig tc = train_config_of(s);
  const auto res = train(tc, std::nullopt, [&](const TrainingLogEntry& e) {
    if ((e.episode + 1) % 10 == 0)
      log << "episode " << e.episode + 1 << "/" << tc.episodes << " loss " << e.instance_loss << '\n';
  });
  write_checkpoint_file(ckpt, res.params);
  auto os = open_out(curve_path);
  write_metadata(os, s, "train");
  write_training_curve_csv(os, res.curve);
  log << "wrote " << ckpt << " and " << curve_path << '\n';
  return 0;
}

inline BenchmarkConfig benchmark_config_of(const Settings& s) {
  BenchmarkConfig bc;
  bc.seed = s.seed("seed", 1);
  bc.jobs = static_cast<int>(s.integer("jobs", 1));
  bc.policies = policies_of(s, {"BP", "SP-Hop", "EDR-10", "SP-10r/r"});
  bc.node_counts = s.int_list("nodes", {20, 40, 60});
  if (bc.node_counts.empty()) throw ConfigError("empty node list");
  for (int n : bc.node_counts)
    if (n < 2) throw ConfigError("nodes entries must be >= 2");
  bc.conflict_model = conflict_model_of(s);
  bc.interference_range = s.real("interference_range", bc.interference_range);
  if (!(bc.interference_range > 0)) throw ConfigError("interference_range must be > 0");
  bc.horizon = positive_slots(s);
  bc.networks_per_size = static_cast<int>(s.integer("networks", 10));
  bc.instances_per_network = static_cast<int>(s.integer("instances", 10));
  if (bc.networks_per_size < 1 || bc.instances_per_network < 1)
    throw ConfigError("networks and instances must be >= 1");
  bc.arrival_rates = s.real_list("arrival_rates");
  for (double r : bc.arrival_rates)
    if (r < 0) throw ConfigError("arrival_rates must be >= 0");
  bc.scheduler = scheduler_of(s);
  bc.routing.require_backlog = s.boolean("require_backlog", true);
  return bc;
}

inline std::optional<GnnParams> checkpoint_for(const Settings& s, const std::vector<DistancePolicy>& policies) {
  bool need = false;
  for (const auto& p : policies) need = need || p.needs_duty();
  if (!need) return std::nullopt;
  const std::string path = s.str("checkpoint");
  if (path.empty()) throw ConfigError("duty-cycle policies need --checkpoint");
  return read_checkpoint_file(path);
}

inline int cmd_benchmark(const Settings& s, std::ostream& log) {
  const BenchmarkConfig bc = benchmark_config_of(s);
  const auto gnn = checkpoint_for(s, bc.policies);
  const std::string out = s.str("out", "benchmark.csv");
  const auto rows = run_benchmark(bc, gnn ? &*gnn : nullptr);
  const auto sums = summarize(rows);
  {
    auto os = open_out(out);
    write_metadata(os, s, "benchmark");
    write_benchmark_csv(os, rows);
  }
  const std::string summary_path = out + ".summary.csv";
  auto os = open_out(summary_path);
  write_metadata(os, s, "benchmark");
  write_summary_csv(os, sums);
  log << "wrote " << rows.size() << " episode rows to " << out << " and " << sums.size() << " summary rows to "
      << summary_path << '\n';
  return 0;
}

// Instance for episode / inspect-bias: loaded, or the benchmark network with
// the given index.
inline NetworkInstance instance_of(const Settings& s) {
  if (s.has("load_instance")) return instance_from_json(read_json_file(s.str("load_instance")));
  BenchmarkConfig bc = benchmark_config_of(s);
  const int net = static_cast<int>(s.integer("network", 0));
  if (net < 0) throw ConfigError("network index must be >= 0");
  return benchmark_network(bc, bc.node_counts.front(), net);
}

inline void save_if_requested(const Settings& s, const NetworkInstance& net, const Episode* ep) {
  if (s.has("save_instance")) {
    auto os = open_out(s.str("save_instance"));
    os << to_json(net).dump() << '\n';
  }
  if (ep && s.has("save_episode")) {
    auto os = open_out(s.str("save_episode"));
    os << to_json(*ep).dump() << '\n';
  }
}

inline int cmd_episode(const Settings& s, std::ostream& log) {
  const BenchmarkConfig bc = benchmark_config_of(s);
  if (bc.policies.size() != 1) throw ConfigError("episode: give exactly one --policy");
  const auto& policy = bc.policies.front();
  const auto gnn = checkpoint_for(s, bc.policies);
  const NetworkInstance net = instance_of(s);
  Episode ep;
  if (s.has("load_episode")) {
    ep = episode_from_json(read_json_file(s.str("load_episode")));
  } else {
    TrafficConfig traffic = bc.traffic;
    if (!bc.arrival_rates.empty()) traffic.fixed_arrival_rate = bc.arrival_rates.front();
    const int inst = static_cast<int>(s.integer("instance", 0));
    if (inst < 0) throw ConfigError("instance index must be >= 0");
    ep = sample_episode(net.num_nodes(), net.num_links(), bc.horizon, traffic, episode_seed(net.seed, inst));
  }
  save_if_requested(s, net, &ep);

  EpisodeOptions opt;
  opt.horizon = std::min(bc.horizon, ep.horizon());
  opt.scheduler = bc.scheduler;
  opt.routing = bc.routing;
  opt.record_slots = s.has("trace");
  std::vector<double> duty;
  if (gnn) duty = predict_duty(*gnn, net);
  const auto r = run_policy(net, ep, policy, duty, opt);

  nlohmann::json m;
  m["policy"] = to_string(policy);
  m["num_nodes"] = net.num_nodes();
  m["num_links"] = net.num_links();
  m["flows"] = ep.flows.size();
  m["slots"] = opt.horizon;
  m["arrived"] = r.metrics.arrived;
  m["delivered"] = r.metrics.delivered;
  m["mean_delay"] = r.metrics.mean_delay;
  m["delivery_rate"] = r.metrics.delivery_rate;
  m["final_backlog"] = r.metrics.backlog.empty() ? 0 : r.metrics.backlog.back();
  if (s.has("out")) {
    auto os = open_out(s.str("out"));
    os << m.dump(2) << '\n';
  } else {
    log << m.dump(2) << '\n';
  }
  if (s.has("trace")) {
    auto os = open_out(s.str("trace"));
    write_metadata(os, s, "episode");
    write_trace_csv(os, r.trace);
  }
  return 0;
}

inline int cmd_inspect_bias(const Settings& s, std::ostream& log) {
  const BenchmarkConfig bc = benchmark_config_of(s);
  if (bc.policies.size() != 1) throw ConfigError("inspect-bias: give exactly one --policy");
  const auto& policy = bc.policies.front();
  const auto gnn = checkpoint_for(s, bc.policies);
  const NetworkInstance net = instance_of(s);
  const Episode ep = sample_episode(net.num_nodes(), net.num_links(), bc.horizon, bc.traffic,
                                    episode_seed(net.seed, static_cast<int>(s.integer("instance", 0))));
  save_if_requested(s, net, nullptr);

  std::vector<double> duty;
  if (gnn) duty = predict_duty(*gnn, net);
  std::optional<std::span<const double>> d;
  if (!duty.empty()) d = std::span<const double>(duty);
  const auto delta = link_distances(policy, net.num_links(), d, &ep.rates);
  const auto bias = policy_bias(policy, net.graph, d, &ep.rates);

  const std::string out = s.str("out", "links.csv");
  {
    auto os = open_out(out);
    write_metadata(os, s, "inspect-bias");
    os << "link,node_a,node_b,conflict_degree,duty,delta\n";
    char buf[96];
    for (LinkId e = 0; e < net.num_links(); ++e) {
      const auto& ed = net.graph.edge(e);
      std::snprintf(buf, sizeof buf, "%.17g,%.17g", duty.empty() ? -1.0 : duty[e], delta[e]);
      os << e << ',' << ed.a << ',' << ed.b << ',' << net.conflicts.degree(e) << ',' << buf << '\n';
    }
  }
  const std::string bias_path = s.str("bias_out", out + ".bias.csv");
  auto os = open_out(bias_path);
  write_metadata(os, s, "inspect-bias");
  write_bias_csv(os, bias ? *bias : BiasTable(net.num_nodes()));
  log << "wrote " << out << " and " << bias_path << '\n';
  return 0;
}

// Runs a command body and maps exceptions to exit codes.
template <typename Body>
int guarded(Body&& body, std::ostream& err) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const InvariantError& e) {
    err << "invariant breach: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

// Parses argv, merges the config file and dispatches. Errors are reported on
// err and mapped to exit codes.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Biased backpressure routing simulator with GNN-predicted link duty cycles", kToolName};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::string config_path;
  std::map<std::string, std::string> flags;
  std::vector<std::pair<std::string, CLI::Option*>> given;
  std::vector<CLI::App*> subs;
  const std::pair<const char*, const char*> commands[] = {
      {"train", "train the duty-cycle GNN and write a checkpoint"},
      {"benchmark", "run the policy x size grid and write per-episode and summary CSVs"},
      {"episode", "simulate one episode and print its metrics as JSON"},
      {"inspect-bias", "write per-link duty cycles, distances and the bias table"}};
  for (const auto& [name, about] : commands) {
    auto* sub = app.add_subcommand(name, about);
    sub->add_option("--config", config_path, "flat JSON config file");
    for (const auto& [key, help] : config_keys())
      given.emplace_back(key, sub->add_option(flag_for(key), flags[key], help));
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  return guarded(
      [&] {
        nlohmann::json doc = nlohmann::json::object();
        if (!config_path.empty()) {
          doc = read_json_file(config_path);
          if (!doc.is_object()) throw ConfigError("config file must hold a flat JSON object");
        }
        for (const auto& [key, opt] : given)
          if (opt->count() > 0) doc[key] = flags[key];
        const Settings settings(std::move(doc));
        for (auto* sub : subs) {
          if (!sub->parsed()) continue;
          const std::string name = sub->get_name();
          if (name == "train") return cmd_train(settings, out);
          if (name == "benchmark") return cmd_benchmark(settings, out);
          if (name == "episode") return cmd_episode(settings, out);
          return cmd_inspect_bias(settings, out);
        }
        return 2;
      },
      err);
}

}  // namespace bpr::cli
