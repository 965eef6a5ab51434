#include "causil/eval.hpp"

#include <cstdio>

#include "causil/error.hpp"

namespace causil {

namespace {

void require_same_nodes(const Dag& est, const Dag& truth) {
  if (est.nodes() != truth.nodes()) throw NodeSetMismatch("estimated and true graphs have different node lists");
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
}

Prf make_prf(double p, double r) {
  return {p, r, p + r > 0 ? 2.0 * p * r / (p + r) : 0.0};
}

}  // namespace

std::size_t shd(const Dag& est, const Dag& truth, bool reversal_as_two) {
  require_same_nodes(est, truth);
  const int n = static_cast<int>(est.size());
  std::size_t d = 0;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const bool ea = est.adjacent(a, b);
      const bool ta = truth.adjacent(a, b);
      if (ea != ta) {
        ++d;
      } else if (ea && est.has_edge(a, b) != truth.has_edge(a, b)) {
        d += reversal_as_two ? 2 : 1;
      }
    }
  }
  return d;
}

Prf adjacency_prf(const Dag& est, const Dag& truth) {
  require_same_nodes(est, truth);
  const auto se = skeleton(est);
  const auto st = skeleton(truth);
  std::size_t shared = 0;
  for (const auto& e : se) shared += st.count(e);
  return make_prf(ratio(shared, se.size()), ratio(shared, st.size()));
}

Prf arrowhead_prf(const Dag& est, const Dag& truth) {
  require_same_nodes(est, truth);
  std::size_t shared = 0;
  std::size_t correct = 0;
  for (const auto& [a, b] : est.edges()) {
    if (!truth.adjacent(a, b)) continue;
    ++shared;
    correct += truth.has_edge(a, b);
  }
  // Both graphs are DAGs, so the shared adjacencies carry exactly one
  // directed edge in each and the two denominators coincide.
  const double p = ratio(correct, shared);
  return make_prf(p, p);
}

EvalReport evaluate(const Dag& est, const Dag& truth, bool reversal_as_two) {
  return {shd(est, truth, reversal_as_two), adjacency_prf(est, truth), arrowhead_prf(est, truth)};
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"shd", r.shd},
          {"adj_p", r.adjacency.precision},
          {"adj_r", r.adjacency.recall},
          {"adj_f", r.adjacency.f1},
          {"ahp", r.arrowhead.precision},
          {"ahr", r.arrowhead.recall},
          {"ahf", r.arrowhead.f1}};
}

std::string csv_row(const std::string& model, const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f", r.shd, r.adjacency.precision,
                r.adjacency.recall, r.adjacency.f1, r.arrowhead.precision, r.arrowhead.recall, r.arrowhead.f1);
  return model + "," + buf;
}

}  // namespace causil
