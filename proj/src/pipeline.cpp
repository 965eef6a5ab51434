#include "causil/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <map>

#include "causil/error.hpp"
#include "causil/parallel.hpp"

namespace causil {

std::string_view agg_name(AggFn fn) {
  switch (fn) {
    case AggFn::Mean: return "mean";
    case AggFn::Max: return "max";
    case AggFn::Min: return "min";
    case AggFn::Sum: return "sum";
  }
  return "mean";
}

AggFn parse_agg(std::string_view text) {
  if (text == "mean" || text == "avg") return AggFn::Mean;
  if (text == "max") return AggFn::Max;
  if (text == "min") return AggFn::Min;
  if (text == "sum") return AggFn::Sum;
  throw ParseError("unknown aggregation '" + std::string(text) + "'");
}

std::string method_label(const DiscoveryConfig& cfg) {
  std::string prefix;
  if (cfg.method == DiscoveryMethod::CausIL) {
    prefix = "causil";
  } else {
    prefix = cfg.agg_fn == AggFn::Mean ? "avg" : std::string(agg_name(cfg.agg_fn));
    prefix += cfg.global ? "-fges-global" : "-fges";
  }
  return prefix + "-" + std::string(estimator_name(cfg.estimator));
}

// ---------------------------------------------------------------------------
// Domain knowledge

Knowledge generate_domain_knowledge(const ServiceCallGraph& cg) {
  using C = MetricCategory;
  Knowledge k;
  const int n = cg.n_services();
  for (int s = 0; s < n; ++s) {
    for (auto c : kAllCategories) {
      if (c != C::Workload) k.forbid({s, c}, {s, C::Workload});
    }
    k.forbid({s, C::Latency}, {s, C::CpuUtil});
    k.forbid({s, C::Latency}, {s, C::MemUtil});
  }
  auto allowed = [&](const MetricNode& from, const MetricNode& to) {
    if (cg.calls(from.service, to.service)) return from.category == C::Workload && to.category == C::Workload;
    if (cg.calls(to.service, from.service)) {
      return from.category == to.category && (from.category == C::Latency || from.category == C::Error);
    }
    return false;
  };
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (a == b) continue;
      for (auto ca : kAllCategories) {
        for (auto cb : kAllCategories) {
          const MetricNode from{a, ca};
          const MetricNode to{b, cb};
          if (!allowed(from, to)) k.forbid(from, to);
        }
      }
    }
  }
  return k;
}

// ---------------------------------------------------------------------------
// Datasets

namespace {

double aggregate(std::span<const InstanceObservation> slice, MetricCategory c, AggFn fn) {
  const auto idx = category_index(c);
  double acc = fn == AggFn::Max ? -std::numeric_limits<double>::infinity()
               : fn == AggFn::Min ? std::numeric_limits<double>::infinity()
                                  : 0.0;
  for (const auto& obs : slice) {
    const double v = obs.values[idx];
    switch (fn) {
      case AggFn::Mean:
      case AggFn::Sum: acc += v; break;
      case AggFn::Max: acc = std::max(acc, v); break;
      case AggFn::Min: acc = std::min(acc, v); break;
    }
  }
  return fn == AggFn::Mean ? acc / static_cast<double>(slice.size()) : acc;
}

void require_category(const MetricPanel& panel, int service, MetricCategory c) {
  if (service < 0 || service >= panel.n_services()) {
    throw MissingData("panel has no service " + std::to_string(service));
  }
  if (!panel.has_category(service, c)) {
    throw MissingData(to_string(MetricNode{service, c}) + " is not present in the panel");
  }
}

int global_index(const MetricNode& node) {
  return node.service * static_cast<int>(kNumCategories) + static_cast<int>(category_index(node.category));
}

}  // namespace

std::vector<double> aggregate_instances(const MetricPanel& panel, int service, MetricCategory category, AggFn fn) {
  require_category(panel, service, category);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(panel.n_timestamps()));
  for (int t = 0; t < panel.n_timestamps(); ++t) {
    const auto slice = panel.at(service, t);
    if (slice.empty()) {
      throw MissingData("service " + std::to_string(service) + " has no instances at t=" + std::to_string(t));
    }
    out.push_back(aggregate(slice, category, fn));
  }
  return out;
}

ServiceDataset build_service_dataset(const MetricPanel& panel, int service, const ServiceCallGraph& cg,
                                     const DiscoveryConfig& cfg) {
  using C = MetricCategory;
  ServiceDataset out;
  out.service = service;
  for (auto c : kAllCategories) {
    require_category(panel, service, c);
    out.nodes.push_back({service, c});
  }
  struct Adjacent {
    MetricNode node;
    AggFn fn;
  };
  std::vector<Adjacent> adjacent;
  for (int caller : cg.callers(service)) adjacent.push_back({{caller, C::Workload}, cfg.caller_workload_agg});
  for (int callee : cg.callees(service)) {
    adjacent.push_back({{callee, C::Latency}, cfg.callee_agg});
    adjacent.push_back({{callee, C::Error}, cfg.callee_agg});
  }
  for (const auto& a : adjacent) {
    require_category(panel, a.node.service, a.node.category);
    out.nodes.push_back(a.node);
  }

  const bool stacked = cfg.method == DiscoveryMethod::CausIL;
  std::vector<int> kept;
  std::size_t n_rows = 0;
  for (int t = 0; t < panel.n_timestamps(); ++t) {
    bool ok = panel.active_count(service, t) > 0;
    for (const auto& a : adjacent) ok = ok && panel.active_count(a.node.service, t) > 0;
    if (!ok) {
      out.dropped_timestamps.push_back(t);
      continue;
    }
    kept.push_back(t);
    n_rows += stacked ? static_cast<std::size_t>(panel.active_count(service, t)) : 1;
  }
  if (kept.empty()) throw MissingData("service " + std::to_string(service) + " has no usable timestamps");

  const auto n_cols = static_cast<Eigen::Index>(out.nodes.size());
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(n_rows), n_cols);
  Eigen::Index r = 0;
  std::vector<double> adj_values(adjacent.size());
  for (int t : kept) {
    for (std::size_t k = 0; k < adjacent.size(); ++k) {
      adj_values[k] = aggregate(panel.at(adjacent[k].node.service, t), adjacent[k].node.category, adjacent[k].fn);
    }
    const auto slice = panel.at(service, t);
    auto fill_adjacent = [&](Eigen::Index row) {
      for (std::size_t k = 0; k < adjacent.size(); ++k) {
        rows(row, static_cast<Eigen::Index>(kNumCategories + k)) = adj_values[k];
      }
    };
    if (stacked) {
      for (const auto& obs : slice) {
        for (std::size_t c = 0; c < kNumCategories; ++c) rows(r, static_cast<Eigen::Index>(c)) = obs.values[c];
        fill_adjacent(r);
        ++r;
      }
    } else {
      for (std::size_t c = 0; c < kNumCategories; ++c) {
        rows(r, static_cast<Eigen::Index>(c)) = aggregate(slice, kAllCategories[c], cfg.agg_fn);
      }
      fill_adjacent(r);
      ++r;
    }
  }
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < out.nodes.size(); ++i) {
    auto label = to_string(out.nodes[i]);
    if (i >= kNumCategories) label += "@" + std::string(agg_name(adjacent[i - kNumCategories].fn));
    labels.push_back(std::move(label));
  }
  out.data = StackedDataset(std::move(labels), std::move(rows));
  return out;
}

// ---------------------------------------------------------------------------
// Merge and post-processing

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

GesConfig search_config(const DiscoveryConfig& cfg, const Knowledge* knowledge, const std::vector<MetricNode>& nodes) {
  GesConfig g;
  g.estimator = cfg.estimator;
  g.score = cfg.score;
  if (knowledge) g.knowledge = knowledge->restricted_to(nodes);
  g.max_parents = cfg.max_parents;
  g.rounds = cfg.rounds;
  return g;
}

ServiceRun summarize(int service, const ServiceDataset& ds, const GesResult& r, double seconds) {
  ServiceRun run;
  run.service = service;
  run.rows = ds.data.n();
  run.columns = ds.data.n_columns();
  run.seconds = seconds;
  run.dropped_timestamps = ds.dropped_timestamps;
  run.trace = r.trace;
  run.candidates_scored = r.candidates_scored;
  run.score_evaluations = r.score_evaluations;
  run.knowledge_violations_scored = r.knowledge_violations_scored;
  run.floored_scores = r.floored_scores;
  return run;
}

// Edge proposals keyed by (min, max) global index.
struct Proposal {
  bool forward = false;   // min -> max seen
  bool backward = false;  // max -> min seen
  bool undirected = false;
};

void propose(std::map<std::pair<int, int>, Proposal>& proposals, const Pdag& local, int n_own_service) {
  auto owned = [&](int i) { return local.node(i).service == n_own_service; };
  for (const auto& [a, b] : local.directed_edges()) {
    if (!owned(a) && !owned(b)) continue;
    const int ga = global_index(local.node(a));
    const int gb = global_index(local.node(b));
    auto& p = proposals[{std::min(ga, gb), std::max(ga, gb)}];
    (ga < gb ? p.forward : p.backward) = true;
  }
  for (const auto& [a, b] : local.undirected_edges()) {
    if (!owned(a) && !owned(b)) continue;
    const int ga = global_index(local.node(a));
    const int gb = global_index(local.node(b));
    proposals[{std::min(ga, gb), std::max(ga, gb)}].undirected = true;
  }
}

Pdag merge(const std::map<std::pair<int, int>, Proposal>& proposals, const ServiceCallGraph& cg,
           std::size_t& conflicts) {
  using C = MetricCategory;
  Pdag merged(metric_nodes_for(cg.n_services()));
  for (const auto& [a, b] : cg.edges()) {
    merged.add_directed(global_index({a, C::Workload}), global_index({b, C::Workload}));
    merged.add_directed(global_index({b, C::Latency}), global_index({a, C::Latency}));
    merged.add_directed(global_index({b, C::Error}), global_index({a, C::Error}));
  }
  for (const auto& [pair, p] : proposals) {
    const auto [lo, hi] = pair;
    if (merged.adjacent(lo, hi)) continue;
    if (p.forward && p.backward) {
      ++conflicts;
      merged.add_undirected(lo, hi);
    } else if (p.forward || p.backward) {
      const int from = p.forward ? lo : hi;
      const int to = p.forward ? hi : lo;
      if (merged.directed_path(to, from)) {
        ++conflicts;
        merged.add_undirected(lo, hi);
      } else {
        merged.add_directed(from, to);
      }
    } else {
      merged.add_undirected(lo, hi);
    }
  }
  return merged;
}

Dag orient(Pdag pattern, const Knowledge* knowledge, std::size_t& dropped) {
  std::optional<KnowledgeMask> mask;
  if (knowledge) mask.emplace(*knowledge, pattern.nodes());
  try {
    pattern = mask ? apply_meek_rules(pattern, *mask) : apply_meek_rules(pattern);
  } catch (const InconsistentPattern&) {
    // Merged fragments can imply a cycle; leave the remaining edges to the
    // topological orientation below.
  }
  if (mask) {
    for (const auto& [a, b] : pattern.undirected_edges()) {
      const bool ab = mask->forbidden(a, b);
      const bool ba = mask->forbidden(b, a);
      if (!ab && !ba) continue;
      if (ab && ba) {
        pattern.remove_edge(a, b);
        ++dropped;
        continue;
      }
      const int from = ab ? b : a;
      const int to = ab ? a : b;
      if (pattern.directed_path(to, from)) {
        pattern.remove_edge(a, b);
        ++dropped;
      } else {
        pattern.add_directed(from, to);
      }
    }
  }
  return cpdag_to_dag(pattern);
}

DiscoveryResult per_service(const MetricPanel& panel, const ServiceCallGraph& cg, const DiscoveryConfig& cfg) {
  if (panel.n_services() != cg.n_services()) {
    throw InvalidConfig("panel has " + std::to_string(panel.n_services()) + " services, call graph has " +
                        std::to_string(cg.n_services()));
  }
  const auto start = Clock::now();
  std::optional<Knowledge> knowledge;
  if (cfg.use_domain_knowledge) knowledge = generate_domain_knowledge(cg);
  const int n = cg.n_services();
  std::vector<ServiceRun> runs(static_cast<std::size_t>(n));
  std::vector<Pdag> locals(static_cast<std::size_t>(n));
  parallel_for(n, cfg.jobs, [&](int s) {
    const auto t0 = Clock::now();
    try {
      auto ds = build_service_dataset(panel, s, cg, cfg);
      auto result = run_fges(ds.data, ds.nodes, search_config(cfg, knowledge ? &*knowledge : nullptr, ds.nodes));
      runs[static_cast<std::size_t>(s)] = summarize(s, ds, result, seconds_since(t0));
      locals[static_cast<std::size_t>(s)] = std::move(result.graph);
    } catch (const Error& e) {
      throw std::runtime_error("service " + std::to_string(s) + ": " + e.what());
    }
  });

  DiscoveryResult out;
  std::map<std::pair<int, int>, Proposal> proposals;
  for (int s = 0; s < n; ++s) propose(proposals, locals[static_cast<std::size_t>(s)], s);
  out.merged = merge(proposals, cg, out.merge_conflicts);
  out.graph = orient(out.merged, knowledge ? &*knowledge : nullptr, out.dropped_edges);
  out.services = std::move(runs);
  out.seconds = seconds_since(start);
  return out;
}

DiscoveryResult global_aggregated(const MetricPanel& panel, const ServiceCallGraph& cg, const DiscoveryConfig& cfg) {
  if (panel.n_services() != cg.n_services()) throw InvalidConfig("panel and call graph disagree on service count");
  const auto start = Clock::now();
  const int n = cg.n_services();
  const auto nodes = metric_nodes_for(n);
  for (const auto& node : nodes) require_category(panel, node.service, node.category);
  std::vector<int> kept;
  std::vector<int> dropped;
  for (int t = 0; t < panel.n_timestamps(); ++t) {
    bool ok = true;
    for (int s = 0; s < n; ++s) ok = ok && panel.active_count(s, t) > 0;
    (ok ? kept : dropped).push_back(t);
  }
  if (kept.empty()) throw MissingData("no timestamp has instances for every service");
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(nodes.size()));
  for (std::size_t r = 0; r < kept.size(); ++r) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) =
          aggregate(panel.at(nodes[i].service, kept[r]), nodes[i].category, cfg.agg_fn);
    }
  }
  std::vector<std::string> labels;
  for (const auto& node : nodes) labels.push_back(to_string(node));
  ServiceDataset ds;
  ds.service = -1;
  ds.data = StackedDataset(std::move(labels), std::move(rows));
  ds.nodes = nodes;
  ds.dropped_timestamps = dropped;

  std::optional<Knowledge> knowledge;
  if (cfg.use_domain_knowledge) knowledge = generate_domain_knowledge(cg);
  GesConfig g = search_config(cfg, knowledge ? &*knowledge : nullptr, nodes);
  g.jobs = cfg.jobs;
  const auto t0 = Clock::now();
  auto result = run_fges(ds.data, nodes, g);

  DiscoveryResult out;
  out.services.push_back(summarize(-1, ds, result, seconds_since(t0)));
  std::map<std::pair<int, int>, Proposal> proposals;
  for (const auto& [a, b] : result.graph.directed_edges()) {
    auto& p = proposals[{std::min(a, b), std::max(a, b)}];
    (a < b ? p.forward : p.backward) = true;
  }
  for (const auto& [a, b] : result.graph.undirected_edges()) proposals[{a, b}].undirected = true;
  out.merged = merge(proposals, cg, out.merge_conflicts);
  out.graph = orient(out.merged, knowledge ? &*knowledge : nullptr, out.dropped_edges);
  out.seconds = seconds_since(start);
  return out;
}

}  // namespace

DiscoveryResult discover_causil(const MetricPanel& panel, const ServiceCallGraph& cg, const DiscoveryConfig& cfg) {
  if (cfg.method != DiscoveryMethod::CausIL) throw InvalidConfig("discover_causil needs method CausIL");
  return per_service(panel, cg, cfg);
}

DiscoveryResult discover_aggregated(const MetricPanel& panel, const ServiceCallGraph& cg, const DiscoveryConfig& cfg) {
  if (cfg.method != DiscoveryMethod::Aggregated) throw InvalidConfig("discover_aggregated needs method Aggregated");
  return cfg.global ? global_aggregated(panel, cg, cfg) : per_service(panel, cg, cfg);
}

DiscoveryResult discover(const MetricPanel& panel, const ServiceCallGraph& cg, const DiscoveryConfig& cfg) {
  return cfg.method == DiscoveryMethod::CausIL ? discover_causil(panel, cg, cfg) : discover_aggregated(panel, cg, cfg);
}

nlohmann::json to_json(const DiscoveryConfig& cfg) {
  nlohmann::json j{{"method", cfg.method == DiscoveryMethod::CausIL ? "causil" : "aggregated"},
                   {"label", method_label(cfg)},
                   {"estimator", estimator_name(cfg.estimator)},
                   {"domain_knowledge", cfg.use_domain_knowledge},
                   {"rho", cfg.score.rho},
                   {"interactions", cfg.score.interactions},
                   {"caller_workload_agg", agg_name(cfg.caller_workload_agg)},
                   {"callee_agg", agg_name(cfg.callee_agg)},
                   {"rounds", cfg.rounds}};
  if (cfg.method == DiscoveryMethod::Aggregated) {
    j["agg"] = agg_name(cfg.agg_fn);
    j["global"] = cfg.global;
  }
  if (cfg.score.ridge_eps) j["ridge_eps"] = *cfg.score.ridge_eps;
  if (cfg.max_parents) j["max_parents"] = *cfg.max_parents;
  return j;
}

nlohmann::json to_json(const ServiceRun& run, bool with_trace) {
  nlohmann::json j{{"service", run.service},
                   {"rows", run.rows},
                   {"columns", run.columns},
                   {"seconds", run.seconds},
                   {"dropped_timestamps", run.dropped_timestamps},
                   {"candidates_scored", run.candidates_scored},
                   {"score_evaluations", run.score_evaluations},
                   {"knowledge_violations_scored", run.knowledge_violations_scored},
                   {"floored_scores", run.floored_scores}};
  if (with_trace) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : run.trace) steps.push_back(to_json(s));
    j["trajectory"] = std::move(steps);
  }
  return j;
}

}  // namespace causil
