#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "causil/ges.hpp"
#include "causil/graph.hpp"
#include "causil/panel.hpp"
#include "causil/score.hpp"
#include "json.hpp"

namespace causil {

enum class DiscoveryMethod { CausIL, Aggregated };
enum class AggFn { Mean, Max, Min, Sum };

std::string_view agg_name(AggFn fn);
/// "mean", "avg", "max", "min", "sum". Throws ParseError.
AggFn parse_agg(std::string_view text);

struct DiscoveryConfig {
  DiscoveryMethod method = DiscoveryMethod::CausIL;
  /// Aggregation of a service's own metrics (Aggregated method only).
  AggFn agg_fn = AggFn::Mean;
  EstimatorKind estimator = EstimatorKind::Poly2;
  bool use_domain_knowledge = true;
  ScoreParams score;
  /// Aggregation of caller workload and of callee latency/error columns.
  AggFn caller_workload_agg = AggFn::Sum;
  AggFn callee_agg = AggFn::Mean;
  /// Aggregated method only: one joint search over every metric node.
  bool global = false;
  std::optional<int> max_parents;
  int rounds = 1;
  /// Services searched concurrently.
  int jobs = 1;
};

/// "causil-poly2", "avg-fges-lin", "max-fges-poly3", ...
std::string method_label(const DiscoveryConfig& cfg);

/// Prohibited edges: any intra-service edge into W, L→Uc, L→Um; every edge
/// between services that do not call each other; between A→B every edge
/// except W^A→W^B, L^B→L^A and E^B→E^A.
Knowledge generate_domain_knowledge(const ServiceCallGraph& cg);

/// fn over the active instances at every t. Throws MissingData when the
/// service lacks the category or has no instances at some t.
std::vector<double> aggregate_instances(const MetricPanel& panel, int service, MetricCategory category, AggFn fn);

struct ServiceDataset {
  int service = 0;
  StackedDataset data;
  /// Column i holds node i: the 5 own metrics, then caller workloads, then
  /// callee latency and error.
  std::vector<MetricNode> nodes;
  std::size_t n_own = kNumCategories;
  /// Timestamps skipped because the service or a neighbour had no instances.
  std::vector<int> dropped_timestamps;
};

/// Instance-level rows (one per active instance and t) for CausIL, or one
/// aggregated row per t when cfg.method is Aggregated. Adjacent columns carry
/// the neighbour aggregate at t on every row of that t. Throws MissingData
/// if a required category is absent or no timestamp survives.
ServiceDataset build_service_dataset(const MetricPanel& panel, int service, const ServiceCallGraph& cg,
                                     const DiscoveryConfig& cfg = {});

struct ServiceRun {
  int service = 0;
  std::size_t rows = 0;
  std::size_t columns = 0;
  double seconds = 0.0;
  std::vector<int> dropped_timestamps;
  std::vector<TraceStep> trace;
  std::size_t candidates_scored = 0;
  std::size_t score_evaluations = 0;
  std::size_t knowledge_violations_scored = 0;
  std::size_t floored_scores = 0;
};

struct DiscoveryResult {
  Dag graph;
  /// Merged pattern before undirected edges were oriented.
  Pdag merged;
  std::vector<ServiceRun> services;
  double seconds = 0.0;
  /// Edges removed because knowledge forbade every orientation left to them.
  std::size_t dropped_edges = 0;
  /// Merge conflicts: opposite directions or cycle-closing directions that
  /// were kept undirected.
  std::size_t merge_conflicts = 0;
};

/// Per-service search on instance-level data, merged with the inter-service
/// edges of the call graph and oriented into a DAG.
DiscoveryResult discover_causil(const MetricPanel& panel, const ServiceCallGraph& cg, const DiscoveryConfig& cfg);

/// Same loop on per-t aggregates of each service's own metrics, or one joint
/// search when cfg.global is set.
DiscoveryResult discover_aggregated(const MetricPanel& panel, const ServiceCallGraph& cg, const DiscoveryConfig& cfg);

/// Dispatches on cfg.method.
DiscoveryResult discover(const MetricPanel& panel, const ServiceCallGraph& cg, const DiscoveryConfig& cfg);

nlohmann::json to_json(const DiscoveryConfig& cfg);
nlohmann::json to_json(const ServiceRun& run, bool with_trace);

}  // namespace causil
