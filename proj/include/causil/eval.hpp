#pragma once

#include <string>

#include "causil/graph.hpp"
#include "json.hpp"

namespace causil {

struct Prf {
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
};

struct EvalReport {
  std::size_t shd = 0;
  Prf adjacency;
  Prf arrowhead;
};

/// Edit distance: missing or extra adjacency costs 1, a reversed edge costs 1
/// (2 with `reversal_as_two`). Throws NodeSetMismatch.
std::size_t shd(const Dag& est, const Dag& truth, bool reversal_as_two = false);

/// Skeleton precision/recall/F1. Precision is 1 for an empty estimate,
/// recall is 1 for an empty truth.
Prf adjacency_prf(const Dag& est, const Dag& truth);

/// Orientation precision/recall/F1 over the adjacencies both graphs share.
Prf arrowhead_prf(const Dag& est, const Dag& truth);

EvalReport evaluate(const Dag& est, const Dag& truth, bool reversal_as_two = false);

/// {"shd":..,"adj_p":..,"adj_r":..,"adj_f":..,"ahp":..,"ahr":..,"ahf":..}
nlohmann::json to_json(const EvalReport& report);

inline constexpr const char* kEvalCsvHeader = "model,SHD,AdjP,AdjR,AdjF,AHP,AHR,AHF";
/// One table row, numbers with 4 decimals.
std::string csv_row(const std::string& model, const EvalReport& report);

}  // namespace causil
