#include "causil/ges.hpp"

#include <algorithm>
#include <atomic>
#include <tuple>

#include "causil/error.hpp"
#include "causil/parallel.hpp"

namespace causil {

namespace {

std::vector<int> sorted_union(std::vector<int> a, std::span<const int> b) {
  a.insert(a.end(), b.begin(), b.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  return a;
}

bool contains(std::span<const int> set, int v) { return std::find(set.begin(), set.end(), v) != set.end(); }

// True when some path y ~> x made of y->w or y—w steps avoids `blocked`.
bool unblocked_semi_directed_path(const Pdag& g, int from, int to, const std::vector<char>& blocked) {
  const int n = static_cast<int>(g.size());
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<int> stack{from};
  seen[static_cast<std::size_t>(from)] = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int w = 0; w < n; ++w) {
      if (seen[static_cast<std::size_t>(w)]) continue;
      if (!g.has_directed(v, w) && !g.has_undirected(v, w)) continue;
      if (w == to) return true;
      if (blocked[static_cast<std::size_t>(w)]) continue;
      seen[static_cast<std::size_t>(w)] = 1;
      stack.push_back(w);
    }
  }
  return false;
}

template <typename Candidate>
bool better(const Candidate& a, const Candidate& b, const std::vector<int>& a_set,
            const std::vector<int>& b_set) {
  if (a.delta != b.delta) return a.delta > b.delta;
  return std::tie(a.x, a.y, a_set) < std::tie(b.x, b.y, b_set);
}

bool better_insert(const InsertCandidate& a, const InsertCandidate& b) { return better(a, b, a.t_set, b.t_set); }
bool better_delete(const DeleteCandidate& a, const DeleteCandidate& b) { return better(a, b, a.h_set, b.h_set); }

// All T ⊆ candidates (ascending) such that base ∪ T is a clique, each T sorted.
void clique_extensions(const Pdag& g, const std::vector<int>& candidates, std::size_t start,
                       std::vector<int>& current, const std::vector<int>& base, std::size_t max_size,
                       std::vector<std::vector<int>>& out) {
  out.push_back(current);
  if (current.size() >= max_size) return;
  for (std::size_t i = start; i < candidates.size(); ++i) {
    const int c = candidates[i];
    bool ok = true;
    for (int b : base) ok = ok && g.adjacent(b, c);
    for (int t : current) ok = ok && g.adjacent(t, c);
    if (!ok) continue;
    current.push_back(c);
    clique_extensions(g, candidates, i + 1, current, base, max_size, out);
    current.pop_back();
  }
}

struct Counters {
  std::atomic<std::size_t> scored{0};
  std::atomic<std::size_t> violations{0};
};

std::optional<InsertCandidate> best_insert_into(int y, const Pdag& g, const Scorer& scorer,
                                                const KnowledgeMask& km, const GesConfig& cfg,
                                                const std::vector<char>& allowed, Counters& counters) {
  const int n = static_cast<int>(g.size());
  const auto parents_y = g.parents(y);
  const auto neighbors_y = g.neighbors(y);
  std::optional<InsertCandidate> best;
  for (int x = 0; x < n; ++x) {
    if (x == y || g.adjacent(x, y) || km.forbidden(x, y)) continue;
    if (!allowed.empty() && !allowed[static_cast<std::size_t>(x) * static_cast<std::size_t>(n) + y]) continue;
    const auto na = na_yx(g, x, y);
    if (!is_clique(g, na)) continue;
    std::vector<int> t0;
    for (int t : neighbors_y) {
      if (!g.adjacent(t, x) && !km.forbidden(t, y)) t0.push_back(t);
    }
    std::size_t max_t = t0.size();
    if (cfg.max_parents) {
      const auto base = parents_y.size() + na.size() + 1;
      if (base > static_cast<std::size_t>(*cfg.max_parents)) continue;
      max_t = std::min(max_t, static_cast<std::size_t>(*cfg.max_parents) - base);
    }
    std::vector<std::vector<int>> subsets;
    std::vector<int> current;
    clique_extensions(g, t0, 0, current, na, max_t, subsets);
    for (const auto& t_set : subsets) {
      if (!valid_insert(x, y, t_set, g, km)) continue;
      bool violates = km.forbidden(x, y);
      for (int t : t_set) violates = violates || km.forbidden(t, y);
      if (violates) ++counters.violations;
      ++counters.scored;
      InsertCandidate cand{x, y, t_set, insert_delta(scorer, x, y, t_set, g)};
      if (!best || better_insert(cand, *best)) best = std::move(cand);
    }
  }
  return best;
}

std::optional<DeleteCandidate> best_delete_into(int y, const Pdag& g, const Scorer& scorer, Counters& counters) {
  const int n = static_cast<int>(g.size());
  std::optional<DeleteCandidate> best;
  for (int x = 0; x < n; ++x) {
    if (x == y) continue;
    if (!g.has_directed(x, y) && !g.has_undirected(x, y)) continue;
    const auto na = na_yx(g, x, y);
    const std::size_t subsets = std::size_t{1} << na.size();
    for (std::size_t mask = 0; mask < subsets; ++mask) {
      std::vector<int> h_set;
      for (std::size_t i = 0; i < na.size(); ++i) {
        if (mask & (std::size_t{1} << i)) h_set.push_back(na[i]);
      }
      if (!valid_delete(x, y, h_set, g)) continue;
      ++counters.scored;
      DeleteCandidate cand{x, y, h_set, delete_delta(scorer, x, y, h_set, g)};
      if (!best || better_delete(cand, *best)) best = std::move(cand);
    }
  }
  return best;
}

template <typename Candidate, typename PerNode>
std::optional<Candidate> best_over_nodes(int n, int jobs, PerNode&& per_node,
                                         bool (*is_better)(const Candidate&, const Candidate&)) {
  std::vector<std::optional<Candidate>> per_y(static_cast<std::size_t>(n));
  parallel_for(n, jobs, [&](int y) { per_y[static_cast<std::size_t>(y)] = per_node(y); });
  std::optional<Candidate> best;
  for (auto& c : per_y) {
    if (c && (!best || is_better(*c, *best))) best = std::move(c);
  }
  return best;
}

}  // namespace

std::vector<int> na_yx(const Pdag& pdag, int x, int y) {
  std::vector<int> out;
  for (int z : pdag.neighbors(y)) {
    if (z != x && pdag.adjacent(z, x)) out.push_back(z);
  }
  return out;
}

bool is_clique(const Pdag& pdag, std::span<const int> nodes) {
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = i + 1; j < nodes.size(); ++j) {
      if (!pdag.adjacent(nodes[i], nodes[j])) return false;
    }
  }
  return true;
}

bool valid_insert(int x, int y, std::span<const int> t_set, const Pdag& pdag, const KnowledgeMask& knowledge) {
  if (x == y || pdag.adjacent(x, y) || knowledge.forbidden(x, y)) return false;
  for (int t : t_set) {
    if (knowledge.forbidden(t, y) || !pdag.has_undirected(t, y) || pdag.adjacent(t, x)) return false;
  }
  const auto clique = sorted_union(na_yx(pdag, x, y), t_set);
  if (!is_clique(pdag, clique)) return false;
  std::vector<char> blocked(pdag.size(), 0);
  for (int v : clique) blocked[static_cast<std::size_t>(v)] = 1;
  return !unblocked_semi_directed_path(pdag, y, x, blocked);
}

bool valid_delete(int x, int y, std::span<const int> h_set, const Pdag& pdag) {
  if (!pdag.adjacent(x, y) || pdag.has_directed(y, x)) return false;
  std::vector<int> rest;
  for (int v : na_yx(pdag, x, y)) {
    if (!contains(h_set, v)) rest.push_back(v);
  }
  return is_clique(pdag, rest);
}

double insert_delta(const Scorer& scorer, int x, int y, std::span<const int> t_set, const Pdag& pdag) {
  auto base = sorted_union(sorted_union(pdag.parents(y), na_yx(pdag, x, y)), t_set);
  auto with_x = sorted_union(base, std::span<const int>(&x, 1));
  return scorer.score(y, with_x) - scorer.score(y, base);
}

double delete_delta(const Scorer& scorer, int x, int y, std::span<const int> h_set, const Pdag& pdag) {
  std::vector<int> kept;
  for (int v : na_yx(pdag, x, y)) {
    if (!contains(h_set, v)) kept.push_back(v);
  }
  auto with_x = sorted_union(sorted_union(kept, pdag.parents(y)), std::span<const int>(&x, 1));
  std::vector<int> without_x;
  for (int v : with_x) {
    if (v != x) without_x.push_back(v);
  }
  return scorer.score(y, without_x) - scorer.score(y, with_x);
}

std::optional<Dag> consistent_extension(const Pdag& pdag) {
  const int n = static_cast<int>(pdag.size());
  Pdag work = pdag;
  Dag out(pdag.nodes());
  for (const auto& [a, b] : pdag.directed_edges()) out.add_edge(a, b);
  std::vector<char> removed(static_cast<std::size_t>(n), 0);
  for (int remaining = n; remaining > 0; --remaining) {
    int chosen = -1;
    for (int v = 0; v < n && chosen < 0; ++v) {
      if (removed[static_cast<std::size_t>(v)] || !work.children(v).empty()) continue;
      const auto adj = work.adjacents(v);
      bool ok = true;
      for (int u : work.neighbors(v)) {
        for (int w : adj) {
          if (w != u && !work.adjacent(u, w)) {
            ok = false;
            break;
          }
        }
        if (!ok) break;
      }
      if (ok) chosen = v;
    }
    if (chosen < 0) return std::nullopt;
    for (int u : work.neighbors(chosen)) out.add_edge(u, chosen);
    for (int u : work.adjacents(chosen)) work.remove_edge(u, chosen);
    removed[static_cast<std::size_t>(chosen)] = 1;
  }
  return out;
}

Pdag dag_to_cpdag(const Dag& dag, const KnowledgeMask* knowledge, std::vector<std::pair<int, int>>* flagged) {
  return complete_pattern(dag.as_pdag(), knowledge, flagged);
}

Pdag complete_pattern(const Pdag& graph, const KnowledgeMask* knowledge, std::vector<std::pair<int, int>>* flagged) {
  Pdag pattern(graph.nodes());
  for (const auto& [a, b] : graph.undirected_edges()) pattern.add_undirected(a, b);
  for (const auto& [a, b] : graph.directed_edges()) {
    bool collider = false;
    for (int c : graph.parents(b)) {
      if (c != a && !graph.adjacent(c, a)) {
        collider = true;
        break;
      }
    }
    if (collider) {
      pattern.add_directed(a, b);
    } else {
      pattern.add_undirected(a, b);
    }
  }
  if (!knowledge) return apply_meek_rules(pattern);

  std::vector<std::pair<int, int>> local_flags;
  Pdag oriented = pattern;
  for (const auto& [a, b] : pattern.undirected_edges()) {
    const bool ab = knowledge->forbidden(a, b);
    const bool ba = knowledge->forbidden(b, a);
    if (ab == ba) {
      if (ab) local_flags.emplace_back(a, b);
      continue;
    }
    const auto [from, to] = ab ? std::pair{b, a} : std::pair{a, b};
    if (oriented.directed_path(to, from)) {
      local_flags.emplace_back(to, from);
    } else {
      oriented.add_directed(from, to);
    }
  }
  try {
    auto closed = apply_meek_rules(oriented, *knowledge, &local_flags);
    if (flagged) flagged->insert(flagged->end(), local_flags.begin(), local_flags.end());
    return closed;
  } catch (const InconsistentPattern&) {
    std::vector<std::pair<int, int>> fallback_flags;
    auto closed = apply_meek_rules(pattern, *knowledge, &fallback_flags);
    if (flagged) flagged->insert(flagged->end(), fallback_flags.begin(), fallback_flags.end());
    return closed;
  }
}

GesResult run_fges(const StackedDataset& ds, const std::vector<MetricNode>& nodes, const GesConfig& cfg) {
  if (nodes.size() != ds.n_columns()) throw std::invalid_argument("every column needs exactly one node");
  if (cfg.max_parents && *cfg.max_parents < 1) throw std::invalid_argument("max_parents must be >= 1");

  const int n = static_cast<int>(nodes.size());
  const Scorer scorer(ds, cfg.estimator, cfg.score);
  const KnowledgeMask km(cfg.knowledge, nodes);
  const KnowledgeMask* km_ptr = cfg.knowledge.empty() ? nullptr : &km;
  Counters counters;

  GesResult result;
  result.graph = Pdag(nodes);
  for (int y = 0; y < n; ++y) result.initial_score += scorer.score(y, std::vector<int>{});
  double total = result.initial_score;

  std::vector<char> allowed;
  if (cfg.heuristic_first_pass) {
    allowed.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0);
    for (int x = 0; x < n; ++x) {
      for (int y = 0; y < n; ++y) {
        if (x == y) continue;
        const double gain = scorer.score(y, std::vector<int>{x}) - scorer.score(y, std::vector<int>{});
        if (gain > 0) {
          allowed[static_cast<std::size_t>(x) * static_cast<std::size_t>(n) + y] = 1;
          allowed[static_cast<std::size_t>(y) * static_cast<std::size_t>(n) + x] = 1;
        }
      }
    }
  }

  auto record = [&](SearchPhase phase, int x, int y, const std::vector<int>& set, double delta) {
    total += delta;
    TraceStep step{phase, x, y, set, delta, total, std::nullopt};
    if (cfg.verify_scores) {
      if (auto ext = consistent_extension(result.graph)) step.extension_score = graph_score(scorer, *ext);
    }
    result.trace.push_back(std::move(step));
  };

  for (int round = 0; round < std::max(1, cfg.rounds); ++round) {
    bool changed = false;
    while (true) {
      auto best = best_over_nodes<InsertCandidate>(
          n, cfg.jobs,
          [&](int y) { return best_insert_into(y, result.graph, scorer, km, cfg, allowed, counters); },
          &better_insert);
      if (!best || !(best->delta > 0)) break;
      Pdag next = result.graph;
      next.add_directed(best->x, best->y);
      for (int t : best->t_set) next.add_directed(t, best->y);
      result.flagged.clear();
      result.graph = complete_pattern(next, km_ptr, &result.flagged);
      record(SearchPhase::Forward, best->x, best->y, best->t_set, best->delta);
      changed = true;
    }
    while (true) {
      auto best = best_over_nodes<DeleteCandidate>(
          n, cfg.jobs, [&](int y) { return best_delete_into(y, result.graph, scorer, counters); },
          &better_delete);
      if (!best || !(best->delta > 0)) break;
      Pdag next = result.graph;
      next.remove_edge(best->x, best->y);
      for (int h : best->h_set) {
        if (next.has_undirected(best->y, h)) next.add_directed(best->y, h);
        if (next.has_undirected(best->x, h)) next.add_directed(best->x, h);
      }
      result.flagged.clear();
      result.graph = complete_pattern(next, km_ptr, &result.flagged);
      record(SearchPhase::Backward, best->x, best->y, best->h_set, best->delta);
      changed = true;
    }
    if (!changed) break;
  }

  result.final_score = total;
  result.knowledge_violations_scored = counters.violations.load();
  result.candidates_scored = counters.scored.load();
  result.score_evaluations = scorer.evaluations();
  result.score_cache_hits = scorer.cache_hits();
  result.floored_scores = scorer.floored();
  return result;
}

nlohmann::json to_json(const TraceStep& step) {
  nlohmann::json j{{"phase", step.phase == SearchPhase::Forward ? "insert" : "delete"},
                   {"x", step.x},
                   {"y", step.y},
                   {"set", step.set},
                   {"delta", step.delta},
                   {"total_score", step.total_score}};
  if (step.extension_score) j["extension_score"] = *step.extension_score;
  return j;
}

}  // namespace causil
