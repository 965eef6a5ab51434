#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "causil/forest.hpp"
#include "causil/graph.hpp"
#include "causil/panel.hpp"
#include "causil/random.hpp"
#include "json.hpp"

namespace causil {

using CategoryEdge = std::pair<MetricCategory, MetricCategory>;

/// W→Uc, W→Um, Uc→L, Um→L, Uc→E, Um→E, E→L.
std::vector<CategoryEdge> default_template();

enum class WorkloadKind { Sinusoid, Constant, Replay };

/// Exogenous workload W^agg for services without callers.
struct WorkloadSpec {
  WorkloadKind kind = WorkloadKind::Sinusoid;
  double base = 2000.0;
  /// Sinusoid amplitude as a fraction of the service's level.
  double amplitude = 0.5;
  double period = 288.0;
  /// Standard deviation of the additive noise as a fraction of the level.
  double noise = 0.1;
  /// Each exogenous service scales `base` by a factor drawn from this range.
  double scale_min = 0.6;
  double scale_max = 1.4;
  /// Replay series; exogenous service k (in id order) uses series[k % size].
  std::vector<std::vector<double>> series;
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct SimConfig {
  std::uint64_t seed = 1;
  int n_services = 10;
  int n_call_edges = 12;
  int T = 2000;
  double instance_capacity = 100.0;
  int min_instances = 1;
  int max_instances = 50;
  WorkloadSpec workload;
  /// Mechanism noise sd as a fraction of the noiseless output's std.
  double noise_fraction = 0.05;
  Range intercept{0.0, 0.5};
  Range linear{0.05, 1.0};
  Range quadratic{0.05, 1.0};
  Range beta{0.5, 1.0};
  std::vector<CategoryEdge> template_edges = default_template();
  /// Fixed call graph; drawn at random from n_services/n_call_edges if unset.
  std::optional<ServiceCallGraph> call_graph;
};

/// Throws InvalidConfig.
void validate(const SimConfig& cfg);
nlohmann::json to_json(const SimConfig& cfg);
/// Missing keys keep their defaults. Throws InvalidConfig.
SimConfig sim_config_from_json(const nlohmann::json& doc);

/// Random DAG on services 0..n-1: every node i >= 1 first calls one uniformly
/// drawn j < i, then (n_edges - n + 1) further draws (i, j), j < i, are added
/// unless already present. Duplicate draws are skipped, so the result can
/// hold fewer than n_edges edges. Throws InvalidConfig.
ServiceCallGraph generate_random_call_graph(int n_nodes, int n_edges, std::uint64_t seed);

/// Template edges for every service plus W^A→W^B, L^B→L^A and E^B→E^A for
/// each call A→B. Throws CyclicTemplate, or InvalidConfig for template edges
/// into Workload.
Dag build_ground_truth_metric_graph(const ServiceCallGraph& cg, const std::vector<CategoryEdge>& template_edges);

/// Instance count as a function of aggregate workload: the clamp(ceil(W/cap))
/// rule, or a learned monotone step function when `steps` is non-empty.
struct Autoscaler {
  double capacity = 100.0;
  int min_instances = 1;
  int max_instances = 50;
  /// (upper workload bound, instance count), bounds increasing.
  std::vector<std::pair<double, int>> steps;

  int operator()(double w_agg) const;
};

int autoscale(double w_agg, const SimConfig& cfg);

/// r draws from Normal(w_agg / r, w_agg / (10 r)) truncated below at 0.
std::vector<double> distribute_load(double w_agg, int r, Rng& rng);

struct MechanismInput {
  MetricNode node;
  /// Callee mean at t rather than the same instance's value.
  bool aggregate = false;
  double scale = 1.0;
  double linear = 0.0;
  double quadratic = 0.0;
};

/// Per-instance mechanism for one metric node:
///   output_scale * (intercept + Σ linear·x + Σ quadratic·x²),  x = value / scale,
/// or, when `forest` is set, the forest prediction over the instance-level
/// inputs plus the quadratic terms of the aggregate inputs.
struct Mechanism {
  MetricNode target;
  double output_scale = 1.0;
  double intercept = 0.0;
  std::vector<MechanismInput> inputs;
  std::shared_ptr<const RegressionForest> forest;
  double noise_sd = 0.0;

  /// `values` follows the order of `inputs`.
  double evaluate(std::span<const double> values) const;
};

struct FunctionSet {
  /// One entry per non-workload metric node, sorted by target.
  std::vector<Mechanism> mechanisms;
  Autoscaler autoscaler;

  const Mechanism* find(const MetricNode& target) const;
};

nlohmann::json to_json(const FunctionSet& functions);

struct GroundTruthBundle {
  ServiceCallGraph call_graph;
  Dag metric_dag;
  FunctionSet functions;
  std::map<std::pair<int, int>, double> beta;
  /// W^agg[service][t].
  std::vector<std::vector<double>> workload_agg;
};

struct SyntheticData {
  MetricPanel panel;
  GroundTruthBundle truth;
};

/// Category-level functions learned from a real panel for semi-synthetic
/// generation.
struct LearnedFunctions {
  std::array<std::shared_ptr<const RegressionForest>, kNumCategories> forests;
  std::array<std::vector<MetricCategory>, kNumCategories> forest_inputs;
  std::array<double, kNumCategories> noise_sd{};
  Autoscaler autoscaler;
  /// W^agg series of the real exogenous services, replayed in order.
  std::vector<std::vector<double>> exogenous_workload;
};

struct SemiSyntheticOptions {
  ForestParams forest;
  std::size_t min_rows = 50;
  int min_instances = 1;
  int max_instances = 50;
};

/// Fits one bagged-tree regressor per category from its intra-service
/// ground-truth parents (pooled over services and instances), records the
/// residual std as noise, fits the instance-count steps by isotonic
/// regression of R on W^agg, and keeps the exogenous workload series.
/// Throws InsufficientData.
LearnedFunctions fit_semi_synthetic_functions(const MetricPanel& real_panel, const Dag& truth,
                                              const SemiSyntheticOptions& options = {});

/// Draws a panel following the load-balancer/auto-scaler simulation. With
/// `learned`, mechanisms, autoscaler and exogenous workload come from it.
/// Deterministic in cfg (including seed). Throws InvalidConfig.
SyntheticData generate_synthetic(const SimConfig& cfg, const LearnedFunctions* learned = nullptr);

}  // namespace causil
