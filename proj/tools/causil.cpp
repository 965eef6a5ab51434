// causil: generate synthetic telemetry, discover metric graphs, evaluate them.
//
// Exit codes: 0 ok, 2 configuration/input error, 3 runtime failure,
// 4 node-set mismatch during evaluation.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "causil/datagen.hpp"
#include "causil/error.hpp"
#include "causil/eval.hpp"
#include "causil/graph_io.hpp"
#include "causil/panel.hpp"
#include "causil/pipeline.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace causil;

namespace {

constexpr const char* kToolVersion = "1.0.0";

enum Exit { kOk = 0, kConfig = 2, kRuntime = 3, kMismatch = 4 };

// Errors that map onto the configuration exit code.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Object keys are kept sorted by nlohmann::json, so dump() is canonical.
std::string config_hash(const json& doc) { return "fnv1a64:" + fnv1a(doc.dump()); }

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return "fnv1a64:" + fnv1a(ss.str());
}

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("CAUSIL_SEED");
  if (!raw || !*raw) return std::nullopt;
  char* end = nullptr;
  const auto v = std::strtoull(raw, &end, 10);
  if (*end != '\0') throw ConfigError(std::string("CAUSIL_SEED is not an unsigned integer: ") + raw);
  return v;
}

json manifest(const std::string& command, const json& config, const json& seed) {
  return {{"tool", "causil"}, {"version", kToolVersion}, {"command", command},
          {"config_hash", config_hash(config)}, {"seed", seed}};
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir + ": " + ec.message());
}

json load_json(const std::string& path) {
  try {
    return read_json_file(path);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

ServiceCallGraph load_call_graph(const std::string& path) {
  try {
    return call_graph_from_json(load_json(path));
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

MetricPanel load_panel(const std::string& path) {
  try {
    return read_panel_csv(path);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

Dag load_dag(const std::string& path) {
  try {
    return dag_from_json(load_json(path));
  } catch (const ParseError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::string config;
  std::string out;
  std::string learn_panel;
  std::string learn_truth;
};

SimConfig load_sim_config(const json& doc) {
  try {
    auto cfg = sim_config_from_json(doc);
    if (auto seed = env_seed()) cfg.seed = *seed;
    return cfg;
  } catch (const InvalidConfig& e) {
    throw ConfigError(e.what());
  }
}

struct Generated {
  SyntheticData data;
  json manifest;
};

Generated generate_into(const SimConfig& cfg, const std::string& out, const LearnedFunctions* learned) {
  const auto t0 = Clock::now();
  Generated g{generate_synthetic(cfg, learned), {}};
  const double gen_seconds = seconds_since(t0);
  const auto t1 = Clock::now();
  ensure_dir(out);
  write_panel_csv(g.data.panel, (fs::path(out) / "panel.csv").string());
  write_json_file((fs::path(out) / "truth.json").string(), to_json(g.data.truth.metric_dag));
  write_json_file((fs::path(out) / "callgraph.json").string(), to_json(g.data.truth.call_graph));
  json beta = json::array();
  for (const auto& [edge, b] : g.data.truth.beta) beta.push_back({edge.first, edge.second, b});
  auto functions = to_json(g.data.truth.functions);
  functions["beta"] = beta;
  write_json_file((fs::path(out) / "functions.json").string(), functions, 1);
  const json resolved = to_json(cfg);
  write_json_file((fs::path(out) / "config.json").string(), resolved, 2);

  g.manifest = manifest("generate", resolved, cfg.seed);
  g.manifest["mode"] = learned ? "semi-synthetic" : "synthetic";
  g.manifest["panel_records"] = g.data.panel.record_count();
  g.manifest["truth_hash"] = file_hash((fs::path(out) / "truth.json").string());
  g.manifest["wall_seconds"] = {{"generate", gen_seconds}, {"write", seconds_since(t1)}};
  write_json_file((fs::path(out) / "manifest.json").string(), g.manifest, 2);
  return g;
}

int cmd_generate(const GenerateArgs& args) {
  const auto cfg = load_sim_config(load_json(args.config));
  std::optional<LearnedFunctions> learned;
  if (!args.learn_panel.empty() || !args.learn_truth.empty()) {
    if (args.learn_panel.empty() || args.learn_truth.empty()) {
      throw ConfigError("--learn-panel and --learn-truth must be given together");
    }
    learned = fit_semi_synthetic_functions(load_panel(args.learn_panel), load_dag(args.learn_truth));
  }
  const auto g = generate_into(cfg, args.out, learned ? &*learned : nullptr);
  std::cout << "wrote " << g.data.panel.record_count() << " records to " << args.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// discover

struct DiscoverArgs {
  std::string panel;
  std::string callgraph;
  std::string out;
  std::vector<std::string> methods{"causil"};
  std::vector<std::string> estimators{"poly2"};
  std::string agg = "mean";
  bool no_dk = false;
  bool global = false;
  int jobs = 1;
  double rho = 2.0;
  int max_parents = 0;
  int rounds = 1;
  bool interactions = false;
  bool trace = false;
};

std::vector<DiscoveryConfig> discovery_configs(const DiscoverArgs& args) {
  std::vector<DiscoveryConfig> out;
  try {
    for (const auto& m : args.methods) {
      for (const auto& e : args.estimators) {
        DiscoveryConfig cfg;
        if (m == "causil") {
          cfg.method = DiscoveryMethod::CausIL;
        } else if (m == "agg-fges" || m == "aggregated") {
          cfg.method = DiscoveryMethod::Aggregated;
          cfg.agg_fn = parse_agg(args.agg);
          cfg.global = args.global;
        } else {
          throw ConfigError("unknown method '" + m + "' (causil, agg-fges)");
        }
        cfg.estimator = parse_estimator(e);
        cfg.use_domain_knowledge = !args.no_dk;
        cfg.score.rho = args.rho;
        cfg.score.interactions = args.interactions;
        if (args.max_parents > 0) cfg.max_parents = args.max_parents;
        cfg.rounds = args.rounds;
        cfg.jobs = args.jobs;
        out.push_back(cfg);
      }
    }
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  if (args.rho <= 0) throw ConfigError("--rho must be positive");
  if (args.rounds < 1) throw ConfigError("--rounds must be >= 1");
  return out;
}

std::size_t knowledge_violations(const Dag& g, const Knowledge& k) {
  std::size_t v = 0;
  for (const auto& [a, b] : g.edges()) v += k.is_forbidden(g.node(a), g.node(b));
  return v;
}

json discover_into(const MetricPanel& panel, const ServiceCallGraph& cg, const DiscoveryConfig& cfg,
                   const std::string& out, const json& inputs, bool trace) {
  const auto label = method_label(cfg) + (cfg.use_domain_knowledge ? "" : "-nodk");
  const auto result = discover(panel, cg, cfg);
  ensure_dir(out);
  write_json_file((fs::path(out) / (label + ".json")).string(), to_json(result.graph));
  write_text_file((fs::path(out) / (label + ".dot")).string(), to_dot(result.graph));

  json config = to_json(cfg);
  config["inputs"] = inputs;
  auto m = manifest("discover", config, env_seed() ? json(*env_seed()) : json(nullptr));
  m["label"] = label;
  m["discovery"] = to_json(cfg);
  m["inputs"] = inputs;
  json services = json::array();
  for (const auto& run : result.services) services.push_back(to_json(run, trace));
  m["services"] = services;
  m["wall_seconds"] = {{"total", result.seconds}};
  m["edges"] = result.graph.edge_count();
  m["merge_conflicts"] = result.merge_conflicts;
  m["dropped_edges"] = result.dropped_edges;
  m["dk_violations"] = knowledge_violations(result.graph, generate_domain_knowledge(cg));
  write_json_file((fs::path(out) / (label + ".manifest.json")).string(), m, 2);
  std::cout << label << ": " << result.graph.edge_count() << " edges in " << result.seconds << " s\n";
  return m;
}

int cmd_discover(const DiscoverArgs& args) {
  const auto configs = discovery_configs(args);
  const auto cg = load_call_graph(args.callgraph);
  const auto panel = load_panel(args.panel);
  const json inputs{{"panel", file_hash(args.panel)}, {"callgraph", file_hash(args.callgraph)}};
  for (const auto& cfg : configs) discover_into(panel, cg, cfg, args.out, inputs, args.trace);
  return kOk;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string est;
  std::string truth;
  std::string batch;
  std::string out;
  std::string csv;
  std::string model;
  bool reversal_two = false;
};

bool is_graph_file(const fs::path& p) {
  const auto name = p.filename().string();
  auto ends_with = [&](std::string_view suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return ends_with(".json") && !ends_with(".manifest.json") && !ends_with(".report.json");
}

int cmd_evaluate(const EvaluateArgs& args) {
  const auto truth = load_dag(args.truth);
  const auto truth_hash = file_hash(args.truth);
  if (!args.batch.empty()) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(args.batch)) {
      if (entry.is_regular_file() && is_graph_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::ostringstream table;
    table << kEvalCsvHeader << "\n";
    for (const auto& f : files) {
      const auto model = f.stem().string();
      const auto report = evaluate(load_dag(f.string()), truth, args.reversal_two);
      table << csv_row(model, report) << "\n";
      auto doc = to_json(report);
      doc["model"] = model;
      doc["truth_hash"] = truth_hash;
      write_json_file((fs::path(args.batch) / (model + ".report.json")).string(), doc);
    }
    const auto csv_path = args.csv.empty() ? (fs::path(args.batch) / "table.csv").string() : args.csv;
    write_text_file(csv_path, table.str());
    std::cout << table.str();
    return kOk;
  }
  if (args.est.empty()) throw ConfigError("evaluate needs --est or --batch");
  const auto report = evaluate(load_dag(args.est), truth, args.reversal_two);
  const auto model = args.model.empty() ? fs::path(args.est).stem().string() : args.model;
  auto doc = to_json(report);
  doc["model"] = model;
  doc["truth_hash"] = truth_hash;
  if (!args.out.empty()) write_json_file(args.out, doc);
  if (!args.csv.empty()) write_text_file(args.csv, std::string(kEvalCsvHeader) + "\n" + csv_row(model, report) + "\n");
  std::cout << doc.dump() << "\n" << kEvalCsvHeader << "\n" << csv_row(model, report) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// knowledge

int cmd_knowledge(const std::string& callgraph, const std::string& out, bool text) {
  const auto k = generate_domain_knowledge(load_call_graph(callgraph));
  std::string body;
  if (text) {
    for (const auto& [a, b] : k.forbidden()) body += to_string(a) + " -> " + to_string(b) + "\n";
  } else {
    body = to_json(k).dump(1) + "\n";
  }
  if (out.empty()) {
    std::cout << body;
  } else {
    write_text_file(out, body);
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// report

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out) {
  struct Acc {
    std::size_t n = 0;
    std::array<double, 7> sum{};
  };
  std::map<std::string, Acc> rows;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != kEvalCsvHeader) throw ConfigError(path + ": not an evaluation table");
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto cells = split_csv(line);
      if (cells.size() != 8) throw ConfigError(path + ": malformed row '" + line + "'");
      auto& acc = rows[cells[0]];
      ++acc.n;
      for (std::size_t i = 0; i < 7; ++i) {
        try {
          acc.sum[i] += std::stod(cells[i + 1]);
        } catch (const std::exception&) {
          throw ConfigError(path + ": bad number '" + cells[i + 1] + "'");
        }
      }
    }
  }
  std::ostringstream table;
  table << "model,n,SHD,AdjP,AdjR,AdjF,AHP,AHR,AHF\n";
  for (const auto& [model, acc] : rows) {
    table << model << "," << acc.n;
    char buf[32];
    for (double s : acc.sum) {
      std::snprintf(buf, sizeof(buf), ",%.4f", s / static_cast<double>(acc.n));
      table << buf;
    }
    table << "\n";
  }
  if (out.empty()) {
    std::cout << table.str();
  } else {
    write_text_file(out, table.str());
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// run: generate -> discover -> evaluate from one experiment file
//
// {"seed": 7, "dataset": {<simulation config>}, "out": "runs/exp1",
//  "methods": [{"method": "causil", "estimator": "poly2", "dk": true},
//              {"method": "agg-fges", "agg": "mean", "estimator": "poly2"}]}

int cmd_run(const std::string& path, const std::string& out_override) {
  const auto doc = load_json(path);
  if (!doc.is_object() || !doc.contains("dataset") || !doc.contains("methods")) {
    throw ConfigError("experiment config needs 'dataset' and 'methods'");
  }
  json dataset = doc.at("dataset");
  if (doc.contains("seed")) dataset["seed"] = doc.at("seed");
  const auto sim = load_sim_config(dataset);
  const std::string out = !out_override.empty() ? out_override : doc.value("out", std::string("causil-run"));
  if (out.empty()) throw ConfigError("experiment needs an output directory");

  std::vector<DiscoveryConfig> configs;
  for (const auto& m : doc.at("methods")) {
    DiscoverArgs a;
    try {
      a.methods = {m.value("method", std::string("causil"))};
      a.estimators = {m.value("estimator", std::string("poly2"))};
      a.agg = m.value("agg", std::string("mean"));
      a.no_dk = !m.value("dk", true);
      a.global = m.value("global", false);
      a.rho = m.value("rho", 2.0);
      a.rounds = m.value("rounds", 1);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad method entry: ") + e.what());
    }
    for (auto& c : discovery_configs(a)) configs.push_back(c);
  }

  const auto g = generate_into(sim, (fs::path(out) / "data").string(), nullptr);
  const json inputs{{"panel", file_hash((fs::path(out) / "data" / "panel.csv").string())},
                    {"callgraph", file_hash((fs::path(out) / "data" / "callgraph.json").string())}};
  std::ostringstream table;
  table << kEvalCsvHeader << "\n";
  const auto graphs = (fs::path(out) / "graphs").string();
  const auto truth_hash = g.manifest.at("truth_hash");
  for (const auto& cfg : configs) {
    const auto m = discover_into(g.data.panel, g.data.truth.call_graph, cfg, graphs, inputs, false);
    const auto label = m.at("label").get<std::string>();
    const auto est = load_dag((fs::path(graphs) / (label + ".json")).string());
    const auto report = evaluate(est, g.data.truth.metric_dag);
    auto rdoc = to_json(report);
    rdoc["model"] = label;
    rdoc["truth_hash"] = truth_hash;
    write_json_file((fs::path(graphs) / (label + ".report.json")).string(), rdoc);
    table << csv_row(label, report) << "\n";
  }
  write_text_file((fs::path(out) / "table.csv").string(), table.str());
  std::cout << table.str();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metric-level causal discovery for microservice telemetry"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Generate a synthetic or semi-synthetic panel");
  generate->add_option("--config", gen.config, "Simulation config JSON")->required();
  generate->add_option("--out", gen.out, "Output directory")->required();
  generate->add_option("--learn-panel", gen.learn_panel, "Real panel CSV for semi-synthetic mode");
  generate->add_option("--learn-truth", gen.learn_truth, "Metric graph JSON of the real panel");

  DiscoverArgs disc;
  auto* discover_cmd = app.add_subcommand("discover", "Discover a metric-level graph from a panel");
  discover_cmd->add_option("--panel", disc.panel, "Panel CSV")->required();
  discover_cmd->add_option("--callgraph", disc.callgraph, "Call graph JSON")->required();
  discover_cmd->add_option("--out", disc.out, "Output directory")->required();
  discover_cmd->add_option("--method", disc.methods, "causil and/or agg-fges (repeatable)");
  discover_cmd->add_option("--estimator", disc.estimators, "lin, poly2, poly3 (repeatable)");
  discover_cmd->add_option("--agg", disc.agg, "Aggregation for agg-fges: mean, max, min, sum");
  discover_cmd->add_flag("--dk,!--no-dk", [&](std::int64_t count) { disc.no_dk = count < 0; },
                         "Use generated domain knowledge (default on)");
  discover_cmd->add_flag("--global", disc.global, "agg-fges: one joint search over all services");
  discover_cmd->add_option("--jobs", disc.jobs, "Services searched in parallel")->check(CLI::PositiveNumber);
  discover_cmd->add_option("--rho", disc.rho, "BIC penalty multiplier");
  discover_cmd->add_option("--max-parents", disc.max_parents, "Parent-set cap (0 = none)");
  discover_cmd->add_option("--rounds", disc.rounds, "Forward/backward rounds");
  discover_cmd->add_flag("--interactions", disc.interactions, "Add cross terms to polynomial bases");
  discover_cmd->add_flag("--trace", disc.trace, "Store score trajectories in the manifest");

  EvaluateArgs ev;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Compare estimated graphs with the truth");
  evaluate_cmd->add_option("--truth", ev.truth, "True metric graph JSON")->required();
  auto* est_opt = evaluate_cmd->add_option("--est", ev.est, "Estimated graph JSON");
  evaluate_cmd->add_option("--batch", ev.batch, "Directory of estimated graphs")->excludes(est_opt);
  evaluate_cmd->add_option("--out", ev.out, "Report JSON path");
  evaluate_cmd->add_option("--csv", ev.csv, "Table CSV path");
  evaluate_cmd->add_option("--model", ev.model, "Model name for the table row");
  evaluate_cmd->add_flag("--reversal-two", ev.reversal_two, "Count a reversed edge as two edits");

  std::string k_callgraph, k_out;
  bool k_text = false;
  auto* knowledge_cmd = app.add_subcommand("knowledge", "Print the prohibited-edge list for a call graph");
  knowledge_cmd->add_option("--callgraph", k_callgraph, "Call graph JSON")->required();
  knowledge_cmd->add_option("--out", k_out, "Output path (stdout if omitted)");
  knowledge_cmd->add_flag("--text", k_text, "One 'from -> to' line per edge");

  std::vector<std::string> r_inputs;
  std::string r_out;
  auto* report_cmd = app.add_subcommand("report", "Average evaluation tables per model");
  report_cmd->add_option("inputs", r_inputs, "Evaluation CSV files")->required();
  report_cmd->add_option("--out", r_out, "Output CSV (stdout if omitted)");

  std::string run_config, run_out;
  auto* run_cmd = app.add_subcommand("run", "Generate, discover and evaluate from an experiment file");
  run_cmd->add_option("--config", run_config, "Experiment JSON")->required();
  run_cmd->add_option("--out", run_out, "Output directory (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*generate) return cmd_generate(gen);
    if (*discover_cmd) return cmd_discover(disc);
    if (*evaluate_cmd) return cmd_evaluate(ev);
    if (*knowledge_cmd) return cmd_knowledge(k_callgraph, k_out, k_text);
    if (*report_cmd) return cmd_report(r_inputs, r_out);
    if (*run_cmd) return cmd_run(run_config, run_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const InvalidConfig& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const NodeSetMismatch& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMismatch;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}
