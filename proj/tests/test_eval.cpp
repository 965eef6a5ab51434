#include "doctest.h"

#include "causil/error.hpp"
#include "causil/eval.hpp"
#include "oracles.hpp"

using namespace causil;

namespace {

Dag make(int n, const oracle::EdgeSet& edges) { return oracle::to_dag(n, edges); }

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("shd examples") {
    const int a = 0, b = 1, c = 2, d = 3;
    const auto truth = make(4, {{b, a}, {c, d}, {a, c}});
    CHECK(shd(truth, truth) == 0);
    CHECK(shd(make(4, {}), truth) == 3);
    CHECK(shd(make(4, {{a, b}, {c, d}}), truth) == 2);
    CHECK(shd(make(4, {{a, b}, {c, d}}), truth, true) == 3);
  }

  TEST_CASE("adjacency examples") {
    const auto truth = make(4, {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
    const auto full = adjacency_prf(truth, truth);
    CHECK(full.precision == 1.0);
    CHECK(full.recall == 1.0);
    CHECK(full.f1 == 1.0);
    const auto half = adjacency_prf(make(4, {{1, 0}, {2, 3}}), truth);
    CHECK(half.precision == 1.0);
    CHECK(half.recall == 0.5);
    CHECK(half.f1 == doctest::Approx(2.0 / 3.0));
    const auto empty = adjacency_prf(make(4, {}), truth);
    CHECK(empty.precision == 1.0);
    CHECK(empty.recall == 0.0);
    CHECK(empty.f1 == 0.0);
  }

  TEST_CASE("arrowhead examples") {
    const auto truth = make(6, {{0, 1}, {2, 3}, {3, 4}});
    const auto same = arrowhead_prf(truth, truth);
    CHECK(same.precision == 1.0);
    CHECK(same.recall == 1.0);
    const auto reversed = arrowhead_prf(make(6, {{1, 0}, {3, 2}, {4, 3}}), truth);
    CHECK(reversed.precision == 0.0);
    CHECK(reversed.recall == 0.0);
    CHECK(reversed.f1 == 0.0);
    // est {a→b, c→d}, truth {a→b, d→c, e→f}.
    const auto mixed = arrowhead_prf(make(6, {{0, 1}, {2, 3}}), make(6, {{0, 1}, {3, 2}, {4, 5}}));
    CHECK(mixed.precision == 0.5);
    CHECK(mixed.recall == 0.5);
    CHECK(mixed.f1 == 0.5);
  }

  TEST_CASE("metrics equal the edge-set oracle on random pairs") {
    Rng rng(123);
    for (int rep = 0; rep < 200; ++rep) {
      const int n = 1 + static_cast<int>(rng.uniform_int(0, 5));
      const auto e = oracle::random_dag(n, rng.uniform(0, 1), rng);
      const auto t = oracle::random_dag(n, rng.uniform(0, 1), rng);
      const auto ref = oracle::metrics(e, t);
      const auto got = evaluate(make(n, e), make(n, t));
      CHECK(got.shd == ref.shd);
      CHECK(got.adjacency.precision == ref.adj_p);
      CHECK(got.adjacency.recall == ref.adj_r);
      CHECK(got.adjacency.f1 == ref.adj_f);
      CHECK(got.arrowhead.precision == ref.ah_p);
      CHECK(got.arrowhead.recall == ref.ah_r);
      CHECK(got.arrowhead.f1 == ref.ah_f);
    }
  }

  TEST_CASE("metric properties") {
    Rng rng(5);
    for (int rep = 0; rep < 200; ++rep) {
      const int n = 2 + static_cast<int>(rng.uniform_int(0, 4));
      const auto e = make(n, oracle::random_dag(n, 0.5, rng));
      const auto t = make(n, oracle::random_dag(n, 0.5, rng));
      CHECK(shd(e, e) == 0);
      CHECK(shd(e, t) == shd(t, e));
      const auto r = evaluate(e, t);
      for (double v : {r.adjacency.precision, r.adjacency.recall, r.adjacency.f1, r.arrowhead.precision,
                       r.arrowhead.recall, r.arrowhead.f1}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      CHECK(r.adjacency.f1 == doctest::Approx(oracle::harmonic(r.adjacency.precision, r.adjacency.recall)));

      // Reversing every edge of an acyclic graph keeps it acyclic.
      oracle::EdgeSet flipped;
      for (const auto& [a, b] : e.edges()) flipped.insert({b, a});
      const auto fr = adjacency_prf(make(n, flipped), t);
      CHECK(fr.precision == r.adjacency.precision);
      CHECK(fr.recall == r.adjacency.recall);
    }
  }

  TEST_CASE("node-set mismatch") {
    CHECK_THROWS_AS(shd(make(3, {}), make(4, {})), NodeSetMismatch);
    CHECK_THROWS_AS(evaluate(make(3, {}), make(4, {})), NodeSetMismatch);
  }

  TEST_CASE("serialization") {
    const auto r = evaluate(make(3, {{0, 1}}), make(3, {{0, 1}, {1, 2}}));
    const auto j = to_json(r);
    for (const char* key : {"shd", "adj_p", "adj_r", "adj_f", "ahp", "ahr", "ahf"}) CHECK(j.contains(key));
    CHECK(csv_row("m", r) == "m,1,1.0000,0.5000,0.6667,1.0000,1.0000,1.0000");
    CHECK(std::string(kEvalCsvHeader) == "model,SHD,AdjP,AdjR,AdjF,AHP,AHR,AHF");
  }
}
