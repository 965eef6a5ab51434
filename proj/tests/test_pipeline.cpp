#include "doctest.h"

#include "causil/datagen.hpp"
#include "causil/error.hpp"
#include "causil/eval.hpp"
#include "causil/pipeline.hpp"
#include "oracles.hpp"

using namespace causil;
using C = MetricCategory;

namespace {

SimConfig fixed(const ServiceCallGraph& cg, int T, std::uint64_t seed) {
  SimConfig cfg;
  cfg.seed = seed;
  cfg.call_graph = cg;
  cfg.n_services = cg.n_services();
  cfg.n_call_edges = static_cast<int>(cg.edges().size());
  cfg.T = T;
  return cfg;
}

std::size_t count_inter(const Knowledge& k) {
  std::size_t n = 0;
  for (const auto& [a, b] : k.forbidden()) n += a.service != b.service;
  return n;
}

MetricPanel hand_panel() {
  // Service 0 calls service 1. T=3; service 0 has no instances at t=2.
  MetricPanel p(2, 3);
  p.add(0, 0, {0, {2, 10, 20, 30, 1}});
  p.add(0, 0, {1, {4, 12, 22, 34, 3}});
  p.add(0, 1, {0, {1, 11, 21, 31, 2}});
  p.add(0, 1, {1, {3, 13, 23, 33, 4}});
  p.add(0, 1, {2, {5, 15, 25, 35, 6}});
  for (int t = 0; t < 3; ++t) {
    p.add(1, t, {0, {1.0 + t, 5, 6, 7.0 + t, 8}});
    p.add(1, t, {1, {3.0 + t, 5, 6, 9.0 + t, 10}});
  }
  return p;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("domain knowledge for one service") {
    const auto k = generate_domain_knowledge(ServiceCallGraph(1, {}));
    const std::set<NodePair> expected{{{0, C::CpuUtil}, {0, C::Workload}}, {{0, C::MemUtil}, {0, C::Workload}},
                                      {{0, C::Latency}, {0, C::Workload}}, {{0, C::Error}, {0, C::Workload}},
                                      {{0, C::Latency}, {0, C::CpuUtil}},  {{0, C::Latency}, {0, C::MemUtil}}};
    CHECK(k.forbidden() == expected);
  }

  TEST_CASE("domain knowledge between services") {
    CHECK(count_inter(generate_domain_knowledge(ServiceCallGraph(2, {}))) == 50);

    const auto k = generate_domain_knowledge(ServiceCallGraph(2, {{0, 1}}));
    std::set<NodePair> allowed;
    for (auto a : kAllCategories) {
      for (auto b : kAllCategories) {
        for (auto [sa, sb] : {std::pair{0, 1}, std::pair{1, 0}}) {
          const MetricNode from{sa, a}, to{sb, b};
          if (!k.is_forbidden(from, to)) allowed.insert({from, to});
        }
      }
    }
    const std::set<NodePair> expected{{{0, C::Workload}, {1, C::Workload}},
                                      {{1, C::Latency}, {0, C::Latency}},
                                      {{1, C::Error}, {0, C::Error}}};
    CHECK(allowed == expected);
  }

  TEST_CASE("aggregate_instances") {
    MetricPanel pair(1, 1);
    pair.add(0, 0, {0, {2, 0, 0, 0, 0}});
    pair.add(0, 0, {1, {4, 0, 0, 0, 0}});
    CHECK(aggregate_instances(pair, 0, C::Workload, AggFn::Mean)[0] == 3.0);
    CHECK(aggregate_instances(pair, 0, C::Workload, AggFn::Max)[0] == 4.0);
    CHECK(aggregate_instances(pair, 0, C::Workload, AggFn::Min)[0] == 2.0);
    CHECK(aggregate_instances(pair, 0, C::Workload, AggFn::Sum)[0] == 6.0);
    CHECK_THROWS_AS(aggregate_instances(hand_panel(), 0, C::Workload, AggFn::Mean), MissingData);

    MetricPanel single(1, 4);
    for (int t = 0; t < 4; ++t) single.add(0, t, {0, {1.0 * t, 2.0 * t, 3, 4, 5}});
    for (auto fn : {AggFn::Mean, AggFn::Max, AggFn::Min, AggFn::Sum}) {
      const auto s = aggregate_instances(single, 0, C::CpuUtil, fn);
      for (int t = 0; t < 4; ++t) CHECK(s[static_cast<std::size_t>(t)] == 2.0 * t);
    }

    const auto data = generate_synthetic(fixed(ServiceCallGraph(2, {{1, 0}}), 50, 3));
    const auto mean = aggregate_instances(data.panel, 1, C::Latency, AggFn::Mean);
    for (int t = 0; t < 50; ++t) {
      double sum = 0;
      int count = 0;
      for (const auto& o : data.panel.at(1, t)) {
        sum += o.values[category_index(C::Latency)];
        ++count;
      }
      CHECK(mean[static_cast<std::size_t>(t)] == doctest::Approx(sum / count).epsilon(1e-14));
    }
  }

  TEST_CASE("service dataset shape and contents") {
    MetricPanel p(1, 2);
    p.add(0, 0, {0, {1, 2, 3, 4, 5}});
    p.add(0, 0, {1, {2, 3, 4, 5, 6}});
    for (int j = 0; j < 3; ++j) p.add(0, 1, {j, {3.0 + j, 2, 3, 4, 5}});
    const auto ds = build_service_dataset(p, 0, ServiceCallGraph(1, {}));
    CHECK(ds.data.n() == 5);
    CHECK(ds.data.n_columns() == 5);
    CHECK(ds.data.labels()[0] == "s0.workload");

    // Service 1 is the callee; its dataset carries s0's summed workload.
    const auto hp = hand_panel();
    const ServiceCallGraph cg(2, {{0, 1}});
    const auto callee = build_service_dataset(hp, 1, cg);
    CHECK(callee.dropped_timestamps == std::vector<int>{2});
    CHECK(callee.data.n() == 4);
    CHECK(callee.data.labels().back() == "s0.workload@sum");
    CHECK(callee.data.rows()(0, 5) == 6.0);
    CHECK(callee.data.rows()(2, 5) == 9.0);

    const auto caller = build_service_dataset(hp, 0, cg);
    CHECK(caller.data.labels() ==
          std::vector<std::string>{"s0.workload", "s0.cpu", "s0.mem", "s0.latency", "s0.error", "s1.latency@mean",
                                   "s1.error@mean"});
    CHECK(caller.data.n() == 5);

    DiscoveryConfig agg;
    agg.method = DiscoveryMethod::Aggregated;
    CHECK(build_service_dataset(hp, 0, cg, agg).data.n() == 2);
  }

  TEST_CASE("adjacent columns are constant within each timestamp") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      SimConfig cfg;
      cfg.seed = seed;
      cfg.n_services = 4;
      cfg.n_call_edges = 4;
      cfg.T = 100;
      const auto data = generate_synthetic(cfg);
      for (int s = 0; s < 4; ++s) {
        const auto ds = build_service_dataset(data.panel, s, data.truth.call_graph);
        Eigen::Index row = 0;
        for (int t = 0; t < cfg.T; ++t) {
          const auto r = data.panel.active_count(s, t);
          for (Eigen::Index c = 5; c < static_cast<Eigen::Index>(ds.data.n_columns()); ++c) {
            for (int j = 1; j < r; ++j) CHECK(ds.data.rows()(row + j, c) == ds.data.rows()(row, c));
          }
          row += r;
        }
        CHECK(static_cast<std::size_t>(row) == data.panel.row_count(s));
      }
    }
  }

  TEST_CASE("single-service discovery recovers the template") {
    int good = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto data = generate_synthetic(fixed(ServiceCallGraph(1, {}), 2000, seed));
      const auto out = discover_causil(data.panel, data.truth.call_graph, {});
      good += shd(out.graph, data.truth.metric_dag) <= 2;
    }
    CHECK(good >= 4);
  }

  TEST_CASE("inter-service wiring, knowledge and reproducibility") {
    const ServiceCallGraph cg(3, {{1, 0}, {2, 0}, {2, 1}});
    const auto data = generate_synthetic(fixed(cg, 300, 4));
    const auto k = generate_domain_knowledge(cg);
    for (auto method : {DiscoveryMethod::CausIL, DiscoveryMethod::Aggregated}) {
      DiscoveryConfig cfg;
      cfg.method = method;
      const auto out = discover(data.panel, cg, cfg);
      CHECK_NOTHROW(topological_sort(out.graph));
      CHECK(out.graph.nodes() == metric_nodes_for(3));
      for (const auto& [a, b] : cg.edges()) {
        CHECK(out.graph.has_edge({a, C::Workload}, {b, C::Workload}));
        CHECK(out.graph.has_edge({b, C::Latency}, {a, C::Latency}));
        CHECK(out.graph.has_edge({b, C::Error}, {a, C::Error}));
      }
      for (const auto& [a, b] : out.graph.edges()) CHECK_FALSE(k.is_forbidden(out.graph.node(a), out.graph.node(b)));

      auto parallel = cfg;
      parallel.jobs = 3;
      CHECK(discover(data.panel, cg, parallel).graph == out.graph);
      CHECK(discover(data.panel, cg, cfg).graph == out.graph);
    }

    DiscoveryConfig global;
    global.method = DiscoveryMethod::Aggregated;
    global.global = true;
    const auto g = discover(data.panel, cg, global);
    for (const auto& [a, b] : g.graph.edges()) CHECK_FALSE(k.is_forbidden(g.graph.node(a), g.graph.node(b)));
    CHECK(method_label(global) == "avg-fges-global-poly2");
  }

  TEST_CASE("without knowledge, inter-service edges stay within the permitted patterns only by luck") {
    const ServiceCallGraph cg(2, {{1, 0}});
    const auto data = generate_synthetic(fixed(cg, 300, 2));
    DiscoveryConfig cfg;
    cfg.use_domain_knowledge = false;
    const auto out = discover_causil(data.panel, cg, cfg);
    CHECK_NOTHROW(topological_sort(out.graph));
    CHECK(out.graph.has_edge({1, C::Workload}, {0, C::Workload}));
  }

  TEST_CASE("single instance everywhere: aggregated and stacked datasets coincide") {
    auto cfg = fixed(ServiceCallGraph(2, {{1, 0}}), 100, 6);
    cfg.max_instances = 1;
    const auto data = generate_synthetic(cfg);
    DiscoveryConfig agg;
    agg.method = DiscoveryMethod::Aggregated;
    for (int s = 0; s < 2; ++s) {
      const auto a = build_service_dataset(data.panel, s, data.truth.call_graph, agg);
      const auto b = build_service_dataset(data.panel, s, data.truth.call_graph, {});
      CHECK(a.data.rows() == b.data.rows());
    }
  }

  TEST_CASE("sum and mean agree when the instance count is constant") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      auto cfg = fixed(ServiceCallGraph(2, {{1, 0}}), 400, seed);
      cfg.min_instances = cfg.max_instances = 3;
      const auto data = generate_synthetic(cfg);
      DiscoveryConfig mean;
      mean.method = DiscoveryMethod::Aggregated;
      mean.estimator = EstimatorKind::Linear;
      auto sum = mean;
      sum.agg_fn = AggFn::Sum;
      CHECK(discover(data.panel, data.truth.call_graph, mean).graph ==
            discover(data.panel, data.truth.call_graph, sum).graph);
    }
  }

  TEST_CASE("column scaling leaves the linear search unchanged") {
    const auto data = generate_synthetic(fixed(ServiceCallGraph(2, {{1, 0}}), 300, 8));
    const auto ds = build_service_dataset(data.panel, 0, data.truth.call_graph);
    Eigen::MatrixXd scaled = ds.data.rows();
    scaled.col(1) *= 37.0;
    scaled.col(3) *= 0.01;
    GesConfig g;
    const auto a = run_fges(ds.data, ds.nodes, g);
    const auto b = run_fges(StackedDataset(ds.data.labels(), scaled), ds.nodes, g);
    CHECK(a.graph == b.graph);
  }

  TEST_CASE("max aggregation is no better than CausIL in most seeds") {
    int ok = 0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      SimConfig cfg;
      cfg.seed = seed;
      cfg.n_services = 5;
      cfg.n_call_edges = 6;
      cfg.T = 1000;
      const auto data = generate_synthetic(cfg);
      DiscoveryConfig max;
      max.method = DiscoveryMethod::Aggregated;
      max.agg_fn = AggFn::Max;
      const auto a = shd(discover(data.panel, data.truth.call_graph, max).graph, data.truth.metric_dag);
      const auto c = shd(discover(data.panel, data.truth.call_graph, {}).graph, data.truth.metric_dag);
      ok += a >= c;
    }
    CHECK(ok >= 2);
  }

  TEST_CASE("labels and parsing") {
    DiscoveryConfig cfg;
    CHECK(method_label(cfg) == "causil-poly2");
    cfg.method = DiscoveryMethod::Aggregated;
    cfg.agg_fn = AggFn::Max;
    cfg.estimator = EstimatorKind::Linear;
    CHECK(method_label(cfg) == "max-fges-lin");
    CHECK(parse_agg("avg") == AggFn::Mean);
    CHECK_THROWS_AS(parse_agg("median"), ParseError);
  }

  TEST_CASE("mismatched panel is rejected") {
    const auto data = generate_synthetic(fixed(ServiceCallGraph(2, {{1, 0}}), 50, 1));
    CHECK_THROWS(discover(data.panel, ServiceCallGraph(3, {{1, 0}}), {}));
  }
}
