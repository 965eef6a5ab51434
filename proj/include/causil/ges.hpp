#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "causil/graph.hpp"
#include "causil/score.hpp"
#include "json.hpp"

namespace causil {

struct GesConfig {
  EstimatorKind estimator = EstimatorKind::Linear;
  ScoreParams score;
  Knowledge knowledge;
  /// Upper bound on |Pa(y)| after an insert.
  std::optional<int> max_parents;
  /// Worker threads used to score forward-phase candidates.
  int jobs = 1;
  /// Restrict inserts to pairs with a positive single-edge score gain.
  bool heuristic_first_pass = false;
  /// Forward/backward rounds; later rounds run only while the graph changes.
  int rounds = 1;
  /// Also record the score of a consistent extension after each operator.
  bool verify_scores = false;
};

struct InsertCandidate {
  int x = -1;
  int y = -1;
  std::vector<int> t_set;
  double delta = 0.0;
};

struct DeleteCandidate {
  int x = -1;
  int y = -1;
  std::vector<int> h_set;
  double delta = 0.0;
};

enum class SearchPhase { Forward, Backward };

struct TraceStep {
  SearchPhase phase = SearchPhase::Forward;
  int x = -1;
  int y = -1;
  std::vector<int> set;
  double delta = 0.0;
  /// Empty-graph score plus all deltas applied so far.
  double total_score = 0.0;
  /// Score of a consistent extension, when GesConfig::verify_scores is on.
  std::optional<double> extension_score;
};

struct GesResult {
  Pdag graph;
  std::vector<TraceStep> trace;
  /// Orientations implied by the pattern but forbidden by knowledge; the
  /// edges were left undirected.
  std::vector<std::pair<int, int>> flagged;
  /// Candidates that violated knowledge and still reached the scorer.
  std::size_t knowledge_violations_scored = 0;
  std::size_t candidates_scored = 0;
  std::size_t score_evaluations = 0;
  std::size_t score_cache_hits = 0;
  std::size_t floored_scores = 0;
  double initial_score = 0.0;
  double final_score = 0.0;
};

/// Undirected neighbours of y that are adjacent to x.
std::vector<int> na_yx(const Pdag& pdag, int x, int y);

bool is_clique(const Pdag& pdag, std::span<const int> nodes);

/// Insert(x, y, T) validity: x, y non-adjacent, x->y and every t->y allowed by
/// `knowledge`, NaYX ∪ T a clique, and every semi-directed path from y to x
/// blocked by NaYX ∪ T.
bool valid_insert(int x, int y, std::span<const int> t_set, const Pdag& pdag,
                  const KnowledgeMask& knowledge);

/// Delete(x, y, H) validity: x adjacent to y and NaYX \ H a clique.
bool valid_delete(int x, int y, std::span<const int> h_set, const Pdag& pdag);

double insert_delta(const Scorer& scorer, int x, int y, std::span<const int> t_set, const Pdag& pdag);
double delete_delta(const Scorer& scorer, int x, int y, std::span<const int> h_set, const Pdag& pdag);

/// Dor-Tarsi extension of a pattern, lowest-index sink first. Empty if the
/// pattern admits no extension.
std::optional<Dag> consistent_extension(const Pdag& pdag);

/// Equivalence-class pattern of a DAG: v-structure edges kept directed, the
/// rest undirected, then closed under Meek's rules. With `knowledge`, an
/// undirected edge with exactly one forbidden direction is oriented the other
/// way before closing, and forbidden orientations are left undirected.
Pdag dag_to_cpdag(const Dag& dag, const KnowledgeMask* knowledge = nullptr,
                  std::vector<std::pair<int, int>>* flagged = nullptr);

/// Pattern of a partially directed graph after an operator: directed edges
/// that form unshielded colliders stay directed, every other edge becomes
/// undirected, then knowledge orientation and Meek closure as in
/// dag_to_cpdag. For a graph with a consistent extension this equals the
/// pattern of that extension.
Pdag complete_pattern(const Pdag& graph, const KnowledgeMask* knowledge = nullptr,
                      std::vector<std::pair<int, int>>* flagged = nullptr);

/// Greedy equivalence search from the empty graph over the dataset columns.
/// `nodes[i]` is the metric node for column i.
GesResult run_fges(const StackedDataset& ds, const std::vector<MetricNode>& nodes, const GesConfig& cfg);

/// JSON-lines trace record for one step.
nlohmann::json to_json(const TraceStep& step);

}  // namespace causil
