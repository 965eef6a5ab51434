#include "causil/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <queue>
#include <set>

#include "causil/error.hpp"
#include "causil/graph_io.hpp"

namespace causil {

std::vector<CategoryEdge> default_template() {
  using C = MetricCategory;
  return {{C::Workload, C::CpuUtil}, {C::Workload, C::MemUtil}, {C::CpuUtil, C::Latency}, {C::MemUtil, C::Latency},
          {C::CpuUtil, C::Error},    {C::MemUtil, C::Error},    {C::Error, C::Latency}};
}

// ---------------------------------------------------------------------------
// Configuration

void validate(const SimConfig& cfg) {
  auto fail = [](const std::string& msg) { throw InvalidConfig(msg); };
  if (cfg.n_services < 1) fail("n_services must be >= 1");
  if (cfg.T < 1) fail("T must be >= 1");
  if (!(cfg.instance_capacity > 0)) fail("instance_capacity must be positive");
  if (cfg.min_instances < 1 || cfg.max_instances < cfg.min_instances) {
    fail("need 1 <= min_instances <= max_instances");
  }
  if (cfg.noise_fraction < 0) fail("noise_fraction must be >= 0");
  for (const Range* r : {&cfg.intercept, &cfg.linear, &cfg.quadratic}) {
    if (r->lo < 0 || r->hi < r->lo) fail("coefficient ranges must satisfy 0 <= lo <= hi");
  }
  if (cfg.beta.lo < 0 || cfg.beta.hi > 1 || cfg.beta.hi < cfg.beta.lo) fail("beta range must lie in [0, 1]");
  if (cfg.call_graph) {
    if (cfg.call_graph->n_services() != cfg.n_services) fail("call_graph.n_services differs from n_services");
  } else {
    const long long n = cfg.n_services;
    if (cfg.n_call_edges < n - 1 || cfg.n_call_edges > n * (n - 1) / 2) {
      fail("n_call_edges must lie in [n_services - 1, n_services (n_services - 1) / 2]");
    }
  }
  const auto& w = cfg.workload;
  if (w.base < 0 || w.amplitude < 0 || w.noise < 0 || !(w.period > 0)) fail("invalid workload parameters");
  if (w.scale_min < 0 || w.scale_max < w.scale_min) fail("invalid workload scale range");
  if (w.kind == WorkloadKind::Replay) {
    if (w.series.empty()) fail("replay workload needs at least one series");
    for (const auto& s : w.series) {
      if (static_cast<int>(s.size()) < cfg.T) fail("replay series shorter than T");
      for (double v : s) {
        if (!(v >= 0) || !std::isfinite(v)) fail("replay workload must be finite and >= 0");
      }
    }
  }
}

namespace {

std::string_view workload_kind_name(WorkloadKind k) {
  switch (k) {
    case WorkloadKind::Sinusoid: return "sinusoid";
    case WorkloadKind::Constant: return "constant";
    case WorkloadKind::Replay: return "replay";
  }
  return "sinusoid";
}

nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

Range range_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw InvalidConfig("ranges are [lo, hi] arrays");
  return {j.at(0).get<double>(), j.at(1).get<double>()};
}

}  // namespace

nlohmann::json to_json(const SimConfig& cfg) {
  nlohmann::json tmpl = nlohmann::json::array();
  for (const auto& [a, b] : cfg.template_edges) tmpl.push_back({category_name(a), category_name(b)});
  nlohmann::json j{{"seed", cfg.seed},
                   {"n_services", cfg.n_services},
                   {"n_call_edges", cfg.n_call_edges},
                   {"T", cfg.T},
                   {"instance_capacity", cfg.instance_capacity},
                   {"min_instances", cfg.min_instances},
                   {"max_instances", cfg.max_instances},
                   {"noise_fraction", cfg.noise_fraction},
                   {"coefficients",
                    {{"intercept", range_json(cfg.intercept)},
                     {"linear", range_json(cfg.linear)},
                     {"quadratic", range_json(cfg.quadratic)}}},
                   {"beta", range_json(cfg.beta)},
                   {"template", tmpl},
                   {"workload",
                    {{"kind", workload_kind_name(cfg.workload.kind)},
                     {"base", cfg.workload.base},
                     {"amplitude", cfg.workload.amplitude},
                     {"period", cfg.workload.period},
                     {"noise", cfg.workload.noise},
                     {"scale", {cfg.workload.scale_min, cfg.workload.scale_max}}}}};
  if (!cfg.workload.series.empty()) j["workload"]["series"] = cfg.workload.series;
  if (cfg.call_graph) j["call_graph"] = to_json(*cfg.call_graph);
  return j;
}

SimConfig sim_config_from_json(const nlohmann::json& doc) {
  SimConfig cfg;
  try {
    if (!doc.is_object()) throw InvalidConfig("simulation config must be a JSON object");
    static const std::set<std::string> known{"seed",           "n_services", "n_call_edges", "T",
                                             "instance_capacity", "min_instances", "max_instances",
                                             "noise_fraction", "coefficients", "beta",
                                             "template",       "workload",    "call_graph"};
    for (const auto& [key, _] : doc.items()) {
      if (!known.count(key)) throw InvalidConfig("unknown config key '" + key + "'");
    }
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.n_services = doc.value("n_services", cfg.n_services);
    cfg.n_call_edges = doc.value("n_call_edges", cfg.n_call_edges);
    cfg.T = doc.value("T", cfg.T);
    cfg.instance_capacity = doc.value("instance_capacity", cfg.instance_capacity);
    cfg.min_instances = doc.value("min_instances", cfg.min_instances);
    cfg.max_instances = doc.value("max_instances", cfg.max_instances);
    cfg.noise_fraction = doc.value("noise_fraction", cfg.noise_fraction);
    if (doc.contains("coefficients")) {
      const auto& c = doc.at("coefficients");
      if (c.contains("intercept")) cfg.intercept = range_from(c.at("intercept"));
      if (c.contains("linear")) cfg.linear = range_from(c.at("linear"));
      if (c.contains("quadratic")) cfg.quadratic = range_from(c.at("quadratic"));
    }
    if (doc.contains("beta")) cfg.beta = range_from(doc.at("beta"));
    if (doc.contains("template")) {
      cfg.template_edges.clear();
      for (const auto& e : doc.at("template")) {
        if (!e.is_array() || e.size() != 2) throw InvalidConfig("template edges are [from, to] pairs");
        cfg.template_edges.emplace_back(parse_category(e.at(0).get<std::string>()),
                                        parse_category(e.at(1).get<std::string>()));
      }
    }
    if (doc.contains("workload")) {
      const auto& w = doc.at("workload");
      auto& out = cfg.workload;
      const auto kind = w.value("kind", std::string(workload_kind_name(out.kind)));
      if (kind == "sinusoid") {
        out.kind = WorkloadKind::Sinusoid;
      } else if (kind == "constant") {
        out.kind = WorkloadKind::Constant;
      } else if (kind == "replay") {
        out.kind = WorkloadKind::Replay;
      } else {
        throw InvalidConfig("unknown workload kind '" + kind + "'");
      }
      out.base = w.value("base", out.base);
      out.amplitude = w.value("amplitude", out.amplitude);
      out.period = w.value("period", out.period);
      out.noise = w.value("noise", out.noise);
      if (w.contains("scale")) {
        const auto r = range_from(w.at("scale"));
        out.scale_min = r.lo;
        out.scale_max = r.hi;
      }
      if (w.contains("series")) out.series = w.at("series").get<std::vector<std::vector<double>>>();
    }
    if (doc.contains("call_graph")) {
      cfg.call_graph = call_graph_from_json(doc.at("call_graph"));
      if (!doc.contains("n_services")) cfg.n_services = cfg.call_graph->n_services();
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("bad simulation config: ") + e.what());
  } catch (const ParseError& e) {
    throw InvalidConfig(e.what());
  }
  validate(cfg);
  return cfg;
}

// ---------------------------------------------------------------------------
// Graphs

ServiceCallGraph generate_random_call_graph(int n_nodes, int n_edges, std::uint64_t seed) {
  const long long n = n_nodes;
  if (n_nodes < 1) throw InvalidConfig("need at least one service");
  if (n_edges < n - 1 || n_edges > n * (n - 1) / 2) {
    throw InvalidConfig("n_edges must lie in [n - 1, n (n - 1) / 2]");
  }
  Rng rng(seed);
  std::set<std::pair<int, int>> edges;
  for (int i = 1; i < n_nodes; ++i) edges.emplace(i, static_cast<int>(rng.uniform_int(0, i - 1)));
  for (int k = n_nodes; k <= n_edges; ++k) {
    const int i = static_cast<int>(rng.uniform_int(1, n_nodes - 1));
    const int j = static_cast<int>(rng.uniform_int(0, i - 1));
    edges.emplace(i, j);
  }
  return ServiceCallGraph(n_nodes, {edges.begin(), edges.end()});
}

namespace {

// Template categories in dependency order, ties by enum order.
std::vector<MetricCategory> template_order(const std::vector<CategoryEdge>& template_edges) {
  std::array<int, kNumCategories> indegree{};
  for (const auto& [a, b] : template_edges) {
    if (a == b) throw CyclicTemplate("template self-loop on " + std::string(category_name(a)));
    ++indegree[category_index(b)];
  }
  std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> ready;
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    if (indegree[c] == 0) ready.push(c);
  }
  std::vector<MetricCategory> order;
  while (!ready.empty()) {
    const auto c = ready.top();
    ready.pop();
    order.push_back(kAllCategories[c]);
    for (const auto& [a, b] : template_edges) {
      if (category_index(a) == c && --indegree[category_index(b)] == 0) ready.push(category_index(b));
    }
  }
  if (order.size() != kNumCategories) throw CyclicTemplate("intra-service template contains a cycle");
  return order;
}

}  // namespace

Dag build_ground_truth_metric_graph(const ServiceCallGraph& cg, const std::vector<CategoryEdge>& template_edges) {
  template_order(template_edges);
  for (const auto& e : template_edges) {
    if (e.second == MetricCategory::Workload) {
      throw InvalidConfig("template edges into Workload are not allowed; workload is driven by callers only");
    }
  }
  Dag dag(metric_nodes_for(cg.n_services()));
  for (int s = 0; s < cg.n_services(); ++s) {
    for (const auto& [a, b] : template_edges) dag.add_edge(MetricNode{s, a}, MetricNode{s, b});
  }
  using C = MetricCategory;
  for (const auto& [a, b] : cg.edges()) {
    dag.add_edge(MetricNode{a, C::Workload}, MetricNode{b, C::Workload});
    dag.add_edge(MetricNode{b, C::Latency}, MetricNode{a, C::Latency});
    dag.add_edge(MetricNode{b, C::Error}, MetricNode{a, C::Error});
  }
  return dag;
}

// ---------------------------------------------------------------------------
// Load balancer and autoscaler

int Autoscaler::operator()(double w_agg) const {
  int r;
  if (steps.empty()) {
    const double raw = std::ceil(std::max(w_agg, 0.0) / capacity);
    r = raw >= static_cast<double>(max_instances) ? max_instances : static_cast<int>(raw);
  } else {
    auto it = std::lower_bound(steps.begin(), steps.end(), w_agg,
                               [](const std::pair<double, int>& s, double w) { return s.first < w; });
    r = it == steps.end() ? steps.back().second : it->second;
  }
  return std::clamp(r, min_instances, max_instances);
}

int autoscale(double w_agg, const SimConfig& cfg) {
  return Autoscaler{cfg.instance_capacity, cfg.min_instances, cfg.max_instances, {}}(w_agg);
}

std::vector<double> distribute_load(double w_agg, int r, Rng& rng) {
  if (r < 1) throw std::invalid_argument("need at least one instance");
  const double mu = std::max(w_agg, 0.0) / r;
  std::vector<double> out(static_cast<std::size_t>(r));
  for (auto& w : out) w = std::max(0.0, rng.normal(mu, mu / 10.0));
  return out;
}

// ---------------------------------------------------------------------------
// Mechanisms

double Mechanism::evaluate(std::span<const double> values) const {
  if (values.size() != inputs.size()) throw std::invalid_argument("mechanism input count mismatch");
  double poly = intercept;
  std::vector<double> forest_row;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& in = inputs[i];
    if (forest && !in.aggregate) {
      forest_row.push_back(values[i]);
      continue;
    }
    const double x = values[i] / in.scale;
    poly += in.linear * x + in.quadratic * x * x;
  }
  if (!forest) return output_scale * poly;
  return forest->predict(forest_row) + output_scale * poly;
}

const Mechanism* FunctionSet::find(const MetricNode& target) const {
  auto it = std::lower_bound(mechanisms.begin(), mechanisms.end(), target,
                             [](const Mechanism& m, const MetricNode& t) { return m.target < t; });
  return it != mechanisms.end() && it->target == target ? &*it : nullptr;
}

nlohmann::json to_json(const FunctionSet& functions) {
  nlohmann::json mechs = nlohmann::json::array();
  for (const auto& m : functions.mechanisms) {
    nlohmann::json inputs = nlohmann::json::array();
    for (const auto& in : m.inputs) {
      inputs.push_back({{"node", to_json(in.node)},
                        {"aggregate", in.aggregate},
                        {"scale", in.scale},
                        {"linear", in.linear},
                        {"quadratic", in.quadratic}});
    }
    mechs.push_back({{"target", to_json(m.target)},
                     {"kind", m.forest ? "forest" : "quadratic"},
                     {"output_scale", m.output_scale},
                     {"intercept", m.intercept},
                     {"noise_sd", m.noise_sd},
                     {"inputs", inputs}});
  }
  nlohmann::json scaler{{"capacity", functions.autoscaler.capacity},
                        {"min_instances", functions.autoscaler.min_instances},
                        {"max_instances", functions.autoscaler.max_instances}};
  if (!functions.autoscaler.steps.empty()) scaler["steps"] = functions.autoscaler.steps;
  return {{"mechanisms", mechs}, {"autoscaler", scaler}};
}

// ---------------------------------------------------------------------------
// Panel generation

namespace {

// Output level per category before dividing by the number of inputs.
double category_output_scale(MetricCategory c) {
  switch (c) {
    case MetricCategory::CpuUtil:
    case MetricCategory::MemUtil: return 35.0;
    case MetricCategory::Latency: return 100.0;
    case MetricCategory::Error: return 10.0;
    case MetricCategory::Workload: break;
  }
  return 1.0;
}

bool is_utilization(MetricCategory c) { return c == MetricCategory::CpuUtil || c == MetricCategory::MemUtil; }

double clamp_metric(MetricCategory c, double v) {
  v = std::max(v, 0.0);
  return is_utilization(c) ? std::min(v, 100.0) : v;
}

double population_sd(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

// Instance-level values of one service: rows grouped by t.
struct ServiceRows {
  std::vector<std::size_t> offset;  // size T + 1
  std::vector<int> ids;
  std::vector<std::array<double, kNumCategories>> values;

  std::size_t size() const { return values.size(); }
};

double exogenous_workload(const WorkloadSpec& w, int t, double level, double phase, int exo_index, Rng& rng) {
  double v = 0.0;
  switch (w.kind) {
    case WorkloadKind::Constant: v = level; break;
    case WorkloadKind::Sinusoid:
      v = level * (1.0 + w.amplitude * std::sin(2.0 * std::numbers::pi * t / w.period + phase)) +
          rng.normal(0.0, w.noise * level);
      break;
    case WorkloadKind::Replay:
      v = w.series[static_cast<std::size_t>(exo_index) % w.series.size()][static_cast<std::size_t>(t)];
      break;
  }
  return std::max(v, 0.0);
}

}  // namespace

SyntheticData generate_synthetic(const SimConfig& cfg, const LearnedFunctions* learned) {
  validate(cfg);
  Rng root(cfg.seed);
  Rng graph_rng = root.split();
  Rng coef_rng = root.split();
  Rng load_rng = root.split();
  Rng noise_rng = root.split();

  SyntheticData out;
  auto& truth = out.truth;
  truth.call_graph = cfg.call_graph ? *cfg.call_graph
                                    : generate_random_call_graph(cfg.n_services, cfg.n_call_edges, graph_rng.next_u64());
  const auto& cg = truth.call_graph;
  const int n = cg.n_services();
  const int T = cfg.T;
  truth.metric_dag = build_ground_truth_metric_graph(cg, cfg.template_edges);
  const auto cat_order = template_order(cfg.template_edges);
  for (const auto& e : cg.edges()) truth.beta[e] = coef_rng.uniform(cfg.beta.lo, cfg.beta.hi);

  truth.functions.autoscaler = learned ? learned->autoscaler
                                       : Autoscaler{cfg.instance_capacity, cfg.min_instances, cfg.max_instances, {}};
  const Autoscaler& scaler = truth.functions.autoscaler;

  if (learned) {
    if (learned->exogenous_workload.empty()) throw InvalidConfig("learned functions carry no workload series");
    for (const auto& s : learned->exogenous_workload) {
      if (static_cast<int>(s.size()) < T) throw InvalidConfig("learned workload series shorter than T");
    }
    for (auto c : kAllCategories) {
      if (c == MetricCategory::Workload) continue;
      std::vector<MetricCategory> intra;
      for (const auto& [a, b] : cfg.template_edges) {
        if (b == c) intra.push_back(a);
      }
      std::sort(intra.begin(), intra.end());
      if (!learned->forests[category_index(c)] || learned->forest_inputs[category_index(c)] != intra) {
        throw InvalidConfig("learned functions do not match the template parents of " +
                            std::string(category_name(c)));
      }
    }
  }

  // Workload aggregates, callers first.
  truth.workload_agg.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(T), 0.0));
  std::vector<double> level(static_cast<std::size_t>(n), 0.0);
  std::vector<double> phase(static_cast<std::size_t>(n), 0.0);
  std::vector<int> exo_index(static_cast<std::size_t>(n), -1);
  int n_exo = 0;
  for (int s = 0; s < n; ++s) {
    if (!cg.callers(s).empty()) continue;
    exo_index[static_cast<std::size_t>(s)] = n_exo++;
    level[static_cast<std::size_t>(s)] =
        cfg.workload.base * coef_rng.uniform(cfg.workload.scale_min, cfg.workload.scale_max);
    phase[static_cast<std::size_t>(s)] = coef_rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  const auto order = cg.topological_order();
  for (int t = 0; t < T; ++t) {
    for (int s : order) {
      double w = 0.0;
      if (exo_index[static_cast<std::size_t>(s)] >= 0) {
        if (learned) {
          const auto& series = learned->exogenous_workload[static_cast<std::size_t>(exo_index[static_cast<std::size_t>(s)]) %
                                                           learned->exogenous_workload.size()];
          w = series[static_cast<std::size_t>(t)];
        } else {
          w = exogenous_workload(cfg.workload, t, level[static_cast<std::size_t>(s)],
                                 phase[static_cast<std::size_t>(s)], exo_index[static_cast<std::size_t>(s)], load_rng);
        }
      } else {
        for (int caller : cg.callers(s)) {
          w += truth.beta.at({caller, s}) * truth.workload_agg[static_cast<std::size_t>(caller)][static_cast<std::size_t>(t)];
        }
      }
      truth.workload_agg[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)] = w;
    }
  }

  // Instance sets and per-instance workload.
  std::vector<ServiceRows> rows(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    auto& sr = rows[static_cast<std::size_t>(s)];
    std::vector<int> active;
    int next_id = 0;
    sr.offset.push_back(0);
    for (int t = 0; t < T; ++t) {
      const double w_agg = truth.workload_agg[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)];
      const int r = scaler(w_agg);
      while (static_cast<int>(active.size()) < r) active.push_back(next_id++);
      while (static_cast<int>(active.size()) > r) active.pop_back();
      const auto loads = distribute_load(w_agg, r, load_rng);
      for (int j = 0; j < r; ++j) {
        std::array<double, kNumCategories> v;
        v.fill(0.0);
        v[category_index(MetricCategory::Workload)] = loads[static_cast<std::size_t>(j)];
        sr.ids.push_back(active[static_cast<std::size_t>(j)]);
        sr.values.push_back(v);
      }
      sr.offset.push_back(sr.values.size());
    }
  }

  auto callee_mean = [&](int service, MetricCategory c, int t) {
    const auto& sr = rows[static_cast<std::size_t>(service)];
    const auto b = sr.offset[static_cast<std::size_t>(t)];
    const auto e = sr.offset[static_cast<std::size_t>(t) + 1];
    double sum = 0.0;
    for (auto i = b; i < e; ++i) sum += sr.values[i][category_index(c)];
    return sum / static_cast<double>(e - b);
  };

  // Remaining categories, callees first, template order within a service.
  std::vector<Mechanism> mechanisms;
  std::vector<int> reverse_order(order.rbegin(), order.rend());
  for (int s : reverse_order) {
    auto& sr = rows[static_cast<std::size_t>(s)];
    for (auto c : cat_order) {
      if (c == MetricCategory::Workload) continue;
      const MetricNode target{s, c};
      const int target_idx = *truth.metric_dag.index_of(target);
      Mechanism mech;
      mech.target = target;
      if (learned) mech.forest = learned->forests[category_index(c)];
      for (int p : truth.metric_dag.parents(target_idx)) {
        MechanismInput in;
        in.node = truth.metric_dag.node(p);
        in.aggregate = in.node.service != s;
        mech.inputs.push_back(in);
      }
      // Parent values per row.
      const std::size_t n_rows = sr.size();
      const std::size_t m = mech.inputs.size();
      std::vector<double> parent_values(n_rows * m);
      for (int t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < m; ++k) {
          const auto& in = mech.inputs[k];
          const double agg = in.aggregate ? callee_mean(in.node.service, in.node.category, t) : 0.0;
          for (auto i = sr.offset[static_cast<std::size_t>(t)]; i < sr.offset[static_cast<std::size_t>(t) + 1]; ++i) {
            parent_values[i * m + k] = in.aggregate ? agg : sr.values[i][category_index(in.node.category)];
          }
        }
      }
      // Input scales: capacity for workload, 100 for utilization, the
      // calibration mean otherwise.
      for (std::size_t k = 0; k < m; ++k) {
        auto& in = mech.inputs[k];
        if (in.node.category == MetricCategory::Workload) {
          in.scale = cfg.instance_capacity;
        } else if (is_utilization(in.node.category)) {
          in.scale = 100.0;
        } else {
          double sum = 0.0;
          for (std::size_t i = 0; i < n_rows; ++i) sum += parent_values[i * m + k];
          const double mean = n_rows ? sum / static_cast<double>(n_rows) : 0.0;
          in.scale = mean > 0 ? mean : 1.0;
        }
      }
      std::size_t n_poly = 0;
      for (const auto& in : mech.inputs) n_poly += !(mech.forest && !in.aggregate);
      if (!mech.forest) mech.intercept = coef_rng.uniform(cfg.intercept.lo, cfg.intercept.hi);
      for (auto& in : mech.inputs) {
        if (mech.forest && !in.aggregate) continue;
        in.linear = coef_rng.uniform(cfg.linear.lo, cfg.linear.hi);
        in.quadratic = coef_rng.uniform(cfg.quadratic.lo, cfg.quadratic.hi);
      }
      mech.output_scale = category_output_scale(c) / static_cast<double>(std::max<std::size_t>(1, n_poly));

      std::vector<double> noiseless(n_rows);
      for (std::size_t i = 0; i < n_rows; ++i) {
        noiseless[i] = mech.evaluate(std::span<const double>(parent_values.data() + i * m, m));
      }
      if (mech.forest) {
        mech.noise_sd = learned->noise_sd[category_index(c)];
      } else {
        mech.noise_sd = cfg.noise_fraction * population_sd(noiseless);
      }
      for (std::size_t i = 0; i < n_rows; ++i) {
        sr.values[i][category_index(c)] = clamp_metric(c, noiseless[i] + noise_rng.normal(0.0, mech.noise_sd));
      }
      mechanisms.push_back(std::move(mech));
    }
  }
  std::sort(mechanisms.begin(), mechanisms.end(),
            [](const Mechanism& a, const Mechanism& b) { return a.target < b.target; });
  truth.functions.mechanisms = std::move(mechanisms);

  out.panel = MetricPanel(n, T);
  for (int s = 0; s < n; ++s) {
    const auto& sr = rows[static_cast<std::size_t>(s)];
    for (int t = 0; t < T; ++t) {
      for (auto i = sr.offset[static_cast<std::size_t>(t)]; i < sr.offset[static_cast<std::size_t>(t) + 1]; ++i) {
        out.panel.add(s, t, InstanceObservation{sr.ids[i], sr.values[i]});
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Semi-synthetic fitting

namespace {

// Pool-adjacent-violators fit of y on x (x ascending), as increasing steps.
std::vector<std::pair<double, double>> isotonic_steps(std::vector<std::pair<double, double>> points) {
  std::sort(points.begin(), points.end());
  struct Block {
    double sum;
    double count;
    double x_max;
  };
  std::vector<Block> blocks;
  for (const auto& [x, y] : points) {
    blocks.push_back({y, 1.0, x});
    while (blocks.size() > 1) {
      auto& b = blocks[blocks.size() - 1];
      auto& a = blocks[blocks.size() - 2];
      if (a.sum / a.count <= b.sum / b.count) break;
      a.sum += b.sum;
      a.count += b.count;
      a.x_max = b.x_max;
      blocks.pop_back();
    }
  }
  std::vector<std::pair<double, double>> steps;
  for (const auto& b : blocks) steps.emplace_back(b.x_max, b.sum / b.count);
  return steps;
}

}  // namespace

LearnedFunctions fit_semi_synthetic_functions(const MetricPanel& real_panel, const Dag& truth,
                                              const SemiSyntheticOptions& options) {
  LearnedFunctions out;
  const int n = real_panel.n_services();
  auto index_of = [&](const MetricNode& node) -> std::optional<int> { return truth.index_of(node); };
  auto present = [&](int s, MetricCategory c) { return s < n && real_panel.has_category(s, c) && index_of({s, c}); };

  for (auto c : kAllCategories) {
    if (c == MetricCategory::Workload) continue;
    // Parent categories come from the lowest service that has the target.
    std::optional<std::vector<MetricCategory>> inputs;
    std::vector<int> services;
    for (int s = 0; s < n; ++s) {
      const auto idx = index_of({s, c});
      if (!idx) continue;
      std::vector<MetricCategory> intra;
      for (int p : truth.parents(*idx)) {
        if (truth.node(p).service == s) intra.push_back(truth.node(p).category);
      }
      std::sort(intra.begin(), intra.end());
      bool complete = present(s, c);
      for (auto pc : intra) complete = complete && present(s, pc);
      if (!inputs) {
        if (!complete) {
          throw InsufficientData("service " + std::to_string(s) + " lacks data for " +
                                 std::string(category_name(c)) + " or one of its parents");
        }
        inputs = intra;
      }
      if (complete && intra == *inputs) services.push_back(s);
    }
    if (!inputs) throw InsufficientData("no service carries " + std::string(category_name(c)));

    std::size_t total = 0;
    for (int s : services) total += real_panel.row_count(s);
    if (total < options.min_rows) {
      throw InsufficientData(std::to_string(total) + " rows for " + std::string(category_name(c)) + ", need " +
                             std::to_string(options.min_rows));
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(inputs->size()));
    Eigen::VectorXd y(static_cast<Eigen::Index>(total));
    Eigen::Index row = 0;
    for (int s : services) {
      for (int t = 0; t < real_panel.n_timestamps(); ++t) {
        for (const auto& obs : real_panel.at(s, t)) {
          for (std::size_t k = 0; k < inputs->size(); ++k) {
            x(row, static_cast<Eigen::Index>(k)) = obs.values[category_index((*inputs)[k])];
          }
          y(row) = obs.values[category_index(c)];
          ++row;
        }
      }
    }
    ForestParams params = options.forest;
    params.seed = options.forest.seed + category_index(c);
    auto forest = std::make_shared<RegressionForest>(RegressionForest::fit(x, y, params));
    const Eigen::VectorXd residual = y - forest->predict(x);
    out.noise_sd[category_index(c)] = std::sqrt(residual.squaredNorm() / static_cast<double>(total));
    out.forests[category_index(c)] = std::move(forest);
    out.forest_inputs[category_index(c)] = *inputs;
  }

  std::vector<std::pair<double, double>> load_points;
  for (int s = 0; s < n; ++s) {
    if (!present(s, MetricCategory::Workload)) continue;
    std::vector<double> series;
    for (int t = 0; t < real_panel.n_timestamps(); ++t) {
      const auto slice = real_panel.at(s, t);
      double w = 0.0;
      for (const auto& obs : slice) w += obs.values[category_index(MetricCategory::Workload)];
      series.push_back(w);
      if (!slice.empty()) load_points.emplace_back(w, static_cast<double>(slice.size()));
    }
    const int w_idx = *index_of({s, MetricCategory::Workload});
    if (truth.parents(w_idx).empty()) out.exogenous_workload.push_back(std::move(series));
  }
  if (load_points.empty() || out.exogenous_workload.empty()) {
    throw InsufficientData("real panel has no workload data for the autoscaler or exogenous services");
  }
  out.autoscaler.min_instances = options.min_instances;
  out.autoscaler.max_instances = options.max_instances;
  for (const auto& [bound, r] : isotonic_steps(std::move(load_points))) {
    out.autoscaler.steps.emplace_back(bound, static_cast<int>(std::lround(r)));
  }
  return out;
}

}  // namespace causil
