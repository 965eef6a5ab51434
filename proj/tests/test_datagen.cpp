#include "doctest.h"

#include <sstream>

#include "causil/datagen.hpp"
#include "causil/error.hpp"
#include "oracles.hpp"

using namespace causil;
using C = MetricCategory;

namespace {

bool weakly_connected_by_search(const ServiceCallGraph& cg) {
  const int n = cg.n_services();
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  std::vector<int> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (const auto& [a, b] : cg.edges()) {
      for (int w : {a == v ? b : -1, b == v ? a : -1}) {
        if (w >= 0 && !seen[w]) {
          seen[w] = true;
          stack.push_back(w);
        }
      }
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](bool s) { return s; });
}

SimConfig small_config(std::uint64_t seed) {
  SimConfig cfg;
  cfg.seed = seed;
  cfg.n_services = 4;
  cfg.n_call_edges = 4;
  cfg.T = 300;
  return cfg;
}

double sum_workload(std::span<const InstanceObservation> slice) {
  double w = 0;
  for (const auto& o : slice) w += o.values[category_index(C::Workload)];
  return w;
}

}  // namespace

TEST_SUITE("datagen") {
  TEST_CASE("random call graph examples") {
    const auto two = generate_random_call_graph(2, 1, 3);
    CHECK(two.edges() == std::vector<std::pair<int, int>>{{1, 0}});

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto tree = generate_random_call_graph(5, 4, seed);
      REQUIRE(tree.edges().size() == 4);
      for (int i = 1; i < 5; ++i) {
        const auto out = tree.callees(i);
        REQUIRE(out.size() == 1);
        CHECK(out[0] < i);
      }
      CHECK(tree.callees(0).empty());
    }

    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const auto g = generate_random_call_graph(8, 12, seed);
      oracle::EdgeSet edges(g.edges().begin(), g.edges().end());
      CHECK(oracle::acyclic(8, edges));
      CHECK(weakly_connected_by_search(g));
      CHECK(g.edges().size() <= 12);
      CHECK(g == generate_random_call_graph(8, 12, seed));
    }
    CHECK_THROWS_AS(generate_random_call_graph(5, 3, 1), InvalidConfig);
    CHECK_THROWS_AS(generate_random_call_graph(3, 4, 1), InvalidConfig);
  }

  TEST_CASE("ground truth metric graph") {
    const auto one = build_ground_truth_metric_graph(ServiceCallGraph(1, {}), default_template());
    CHECK(one.edge_count() == 7);
    const ServiceCallGraph ab(2, {{0, 1}});
    CHECK(build_ground_truth_metric_graph(ab, default_template()).edge_count() == 17);
    const auto bare = build_ground_truth_metric_graph(ab, {});
    CHECK(bare.edge_count() == 3);
    CHECK(bare.has_edge({0, C::Workload}, {1, C::Workload}));
    CHECK(bare.has_edge({1, C::Latency}, {0, C::Latency}));
    CHECK(bare.has_edge({1, C::Error}, {0, C::Error}));

    CHECK_THROWS_AS(build_ground_truth_metric_graph(ab, {{C::Latency, C::Error}, {C::Error, C::Latency}}),
                    CyclicTemplate);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto cg = generate_random_call_graph(6, 8, seed);
      const auto dag = build_ground_truth_metric_graph(cg, default_template());
      CHECK_NOTHROW(topological_sort(dag));
      for (const auto& [a, b] : dag.edges()) {
        const auto& u = dag.node(a);
        const auto& v = dag.node(b);
        if (u.service == v.service) continue;
        const bool w = u.category == C::Workload && v.category == C::Workload && cg.calls(u.service, v.service);
        const bool l = u.category == C::Latency && v.category == C::Latency && cg.calls(v.service, u.service);
        const bool e = u.category == C::Error && v.category == C::Error && cg.calls(v.service, u.service);
        CHECK((w || l || e));
      }
    }
  }

  TEST_CASE("autoscale examples") {
    SimConfig cfg;
    CHECK(autoscale(0.0, cfg) == cfg.min_instances);
    CHECK(autoscale(1000.0, cfg) == 10);
    CHECK(autoscale(1e9, cfg) == 50);
  }

  TEST_CASE("distribute_load examples") {
    Rng rng(1);
    for (double w : distribute_load(0.0, 3, rng)) CHECK(w == 0.0);

    double total = 0;
    std::size_t count = 0;
    for (int rep = 0; rep < 10000; ++rep) {
      for (double w : distribute_load(1000.0, 4, rng)) {
        CHECK(w >= 0.0);
        total += w;
        ++count;
      }
    }
    CHECK(total / static_cast<double>(count) == doctest::Approx(250.0).epsilon(0.01));

    Rng a(5), b(5);
    CHECK(distribute_load(500.0, 7, a) == distribute_load(500.0, 7, b));
  }

  TEST_CASE("single service with constant workload") {
    SimConfig cfg;
    cfg.call_graph = ServiceCallGraph(1, {});
    cfg.n_services = 1;
    cfg.n_call_edges = 0;
    cfg.T = 1;
    cfg.workload.kind = WorkloadKind::Constant;
    cfg.workload.base = 100.0;
    cfg.workload.scale_min = cfg.workload.scale_max = 1.0;
    const auto data = generate_synthetic(cfg);
    REQUIRE(data.panel.active_count(0, 0) == 1);
    CHECK(data.truth.workload_agg[0][0] == 100.0);
    const double w = data.panel.at(0, 0)[0].values[category_index(C::Workload)];
    // One Normal(100, 10) draw.
    CHECK(std::fabs(w - 100.0) < 60.0);
    CHECK(w != 100.0);
  }

  TEST_CASE("zero beta starves the callee") {
    SimConfig cfg;
    cfg.call_graph = ServiceCallGraph(2, {{1, 0}});
    cfg.n_services = 2;
    cfg.n_call_edges = 1;
    cfg.T = 50;
    cfg.beta = {0.0, 0.0};
    const auto data = generate_synthetic(cfg);
    for (int t = 0; t < cfg.T; ++t) {
      CHECK(data.truth.workload_agg[0][static_cast<std::size_t>(t)] == 0.0);
      CHECK(data.truth.workload_agg[1][static_cast<std::size_t>(t)] > 0.0);
    }
  }

  TEST_CASE("panel invariants") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto cfg = small_config(seed);
      const auto data = generate_synthetic(cfg);
      const auto& p = data.panel;
      for (int s = 0; s < p.n_services(); ++s) {
        for (int t = 0; t < p.n_timestamps(); ++t) {
          const double w_agg = data.truth.workload_agg[static_cast<std::size_t>(s)][static_cast<std::size_t>(t)];
          const auto slice = p.at(s, t);
          CHECK(static_cast<int>(slice.size()) == data.truth.functions.autoscaler(w_agg));
          std::set<int> ids;
          for (const auto& o : slice) {
            ids.insert(o.instance);
            for (auto c : {C::CpuUtil, C::MemUtil}) {
              CHECK(o.values[category_index(c)] >= 0.0);
              CHECK(o.values[category_index(c)] <= 100.0);
            }
            for (double v : o.values) CHECK(v >= 0.0);
          }
          CHECK(ids.size() == slice.size());
          const double mu = w_agg / static_cast<double>(slice.size());
          CHECK(std::fabs(sum_workload(slice) - w_agg) <= 5.0 * (mu / 10.0) * std::sqrt(slice.size()) + 1e-9);
        }
      }
    }
  }

  TEST_CASE("generation is deterministic") {
    const auto cfg = small_config(9);
    std::ostringstream a, b;
    write_panel_csv(generate_synthetic(cfg).panel, a);
    write_panel_csv(generate_synthetic(cfg).panel, b);
    CHECK(a.str() == b.str());
    auto other = cfg;
    other.seed = 10;
    std::ostringstream c;
    write_panel_csv(generate_synthetic(other).panel, c);
    CHECK(a.str() != c.str());
  }

  TEST_CASE("workload propagates with beta") {
    SimConfig cfg;
    cfg.call_graph = ServiceCallGraph(2, {{1, 0}});
    cfg.n_services = 2;
    cfg.n_call_edges = 1;
    cfg.T = 500;
    const auto data = generate_synthetic(cfg);
    const double beta = data.truth.beta.at({1, 0});
    std::vector<double> ratio;
    for (int t = 0; t < cfg.T; ++t) {
      ratio.push_back(data.truth.workload_agg[0][static_cast<std::size_t>(t)] /
                      data.truth.workload_agg[1][static_cast<std::size_t>(t)]);
    }
    const double mean = std::accumulate(ratio.begin(), ratio.end(), 0.0) / static_cast<double>(ratio.size());
    double ss = 0;
    for (double r : ratio) ss += (r - mean) * (r - mean);
    const double se = std::sqrt(ss / static_cast<double>(ratio.size() - 1)) / std::sqrt(ratio.size());
    CHECK(std::fabs(mean - beta) <= std::max(3 * se, 1e-12));
  }

  TEST_CASE("config JSON round trip and validation") {
    auto cfg = small_config(4);
    cfg.call_graph = ServiceCallGraph(4, {{1, 0}, {2, 0}, {3, 1}});
    const auto back = sim_config_from_json(to_json(cfg));
    CHECK(to_json(back) == to_json(cfg));
    CHECK_THROWS_AS(sim_config_from_json({{"unknown", 1}}), InvalidConfig);
    CHECK_THROWS_AS(sim_config_from_json({{"T", 0}}), InvalidConfig);
    CHECK_THROWS_AS(sim_config_from_json({{"n_services", 4}, {"n_call_edges", 2}}), InvalidConfig);
  }

  TEST_CASE("semi-synthetic fit reproduces a deterministic mapping") {
    // One service; every non-workload metric equals its first template parent.
    MetricPanel real(1, 400);
    Rng rng(2);
    int id = 0;
    for (int t = 0; t < 400; ++t) {
      const int r = 1 + static_cast<int>(rng.uniform_int(0, 2));
      for (int j = 0; j < r; ++j) {
        const double w = rng.uniform(10, 100);
        const double u = w;
        const double e = u;
        InstanceObservation o{id++, {w, u, u, u + e, e}};
        real.add(0, t, o);
      }
    }
    const auto truth = build_ground_truth_metric_graph(ServiceCallGraph(1, {}), default_template());
    const auto learned = fit_semi_synthetic_functions(real, truth);

    const auto& forest = learned.forests[category_index(C::CpuUtil)];
    REQUIRE(forest);
    CHECK(learned.forest_inputs[category_index(C::CpuUtil)] == std::vector<C>{C::Workload});
    Eigen::MatrixXd x(static_cast<Eigen::Index>(real.row_count(0)), 1);
    Eigen::VectorXd y(x.rows());
    Eigen::Index row = 0;
    for (int t = 0; t < 400; ++t) {
      for (const auto& o : real.at(0, t)) {
        x(row, 0) = o.values[0];
        y(row++) = o.values[1];
      }
    }
    const double rmse = std::sqrt((forest->predict(x) - y).squaredNorm() / static_cast<double>(y.size()));
    const double sd = std::sqrt((y.array() - y.mean()).square().sum() / static_cast<double>(y.size()));
    CHECK(rmse <= 0.01 * sd);
    CHECK(learned.exogenous_workload.size() == 1);
    CHECK_FALSE(learned.autoscaler.steps.empty());

    SimConfig cfg;
    cfg.call_graph = ServiceCallGraph(3, {{1, 0}, {2, 0}});
    cfg.n_services = 3;
    cfg.n_call_edges = 2;
    cfg.T = 200;
    const auto semi = generate_synthetic(cfg, &learned);
    CHECK(semi.panel.n_timestamps() == 200);
    CHECK(semi.truth.functions.find({0, C::CpuUtil})->forest);
  }

  TEST_CASE("semi-synthetic constant child and missing data") {
    MetricPanel real(1, 200);
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
      const double w = rng.uniform(10, 100);
      real.add(0, t, {0, {w, 42.0, w, w, w}});
    }
    const auto truth = build_ground_truth_metric_graph(ServiceCallGraph(1, {}), default_template());
    const auto learned = fit_semi_synthetic_functions(real, truth);
    Eigen::MatrixXd probe(3, 1);
    probe << 5.0, 50.0, 500.0;
    const auto pred = learned.forests[category_index(C::CpuUtil)]->predict(probe);
    for (int i = 0; i < 3; ++i) CHECK(pred(i) == doctest::Approx(42.0));
    CHECK(learned.noise_sd[category_index(C::CpuUtil)] == doctest::Approx(0.0));

    MetricPanel missing = real;
    missing.set_category_present(0, C::MemUtil, false);
    CHECK_THROWS_AS(fit_semi_synthetic_functions(missing, truth), InsufficientData);

    SemiSyntheticOptions strict;
    strict.min_rows = 1000;
    CHECK_THROWS_AS(fit_semi_synthetic_functions(real, truth, strict), InsufficientData);
  }

  TEST_CASE("forest fits a step function") {
    Eigen::MatrixXd x(200, 2);
    Eigen::VectorXd y(200);
    Rng rng(6);
    for (int r = 0; r < 200; ++r) {
      x(r, 0) = rng.uniform(0, 1);
      x(r, 1) = rng.uniform(0, 1);
      y(r) = x(r, 1) > 0.5 ? 10.0 : -10.0;
    }
    const auto f = RegressionForest::fit(x, y, {});
    CHECK(f.n_trees() == 25);
    const std::vector<double> hi{0.3, 0.9}, lo{0.3, 0.1};
    CHECK(f.predict(hi) > 9.0);
    CHECK(f.predict(lo) < -9.0);
  }
}
