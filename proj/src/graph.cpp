#include "causil/graph.hpp"

#include <algorithm>
#include <functional>
#include <queue>
#include <stdexcept>

#include "causil/error.hpp"

namespace causil {

namespace {

constexpr std::array<std::string_view, kNumCategories> kLongNames = {
    "Workload", "CpuUtil", "MemUtil", "Latency", "Error"};
constexpr std::array<std::string_view, kNumCategories> kShortNames = {
    "workload", "cpu", "mem", "latency", "error"};

}  // namespace

std::string_view category_name(MetricCategory c) { return kLongNames[category_index(c)]; }

std::string_view category_short_name(MetricCategory c) { return kShortNames[category_index(c)]; }

MetricCategory parse_category(std::string_view text) {
  for (std::size_t i = 0; i < kNumCategories; ++i) {
    if (text == kLongNames[i] || text == kShortNames[i]) return kAllCategories[i];
  }
  throw ParseError("unknown metric category '" + std::string(text) + "'");
}

std::string to_string(const MetricNode& node) {
  return "s" + std::to_string(node.service) + "." + std::string(category_short_name(node.category));
}

std::vector<MetricNode> metric_nodes_for(int n_services) {
  std::vector<MetricNode> nodes;
  nodes.reserve(static_cast<std::size_t>(n_services) * kNumCategories);
  for (int s = 0; s < n_services; ++s) {
    for (auto c : kAllCategories) nodes.push_back({s, c});
  }
  return nodes;
}

// ---------------------------------------------------------------------------
// ServiceCallGraph

ServiceCallGraph::ServiceCallGraph(int n_services, std::vector<std::pair<int, int>> edges)
    : n_services_(n_services), edges_(std::move(edges)) {
  if (n_services_ < 0) throw InvalidConfig("negative service count");
  for (const auto& [a, b] : edges_) {
    if (a < 0 || b < 0 || a >= n_services_ || b >= n_services_) {
      throw InvalidConfig("call edge " + std::to_string(a) + "->" + std::to_string(b) +
                          " references an unknown service");
    }
    if (a == b) throw InvalidConfig("self-loop on service " + std::to_string(a));
  }
  std::sort(edges_.begin(), edges_.end());
  if (std::adjacent_find(edges_.begin(), edges_.end()) != edges_.end()) {
    throw InvalidConfig("duplicate call edge");
  }
  if (static_cast<int>(topological_order().size()) != n_services_) {
    throw InvalidConfig("call graph contains a cycle");
  }
}

bool ServiceCallGraph::calls(int caller, int callee) const {
  return std::binary_search(edges_.begin(), edges_.end(), std::make_pair(caller, callee));
}

std::vector<int> ServiceCallGraph::callers(int service) const {
  std::vector<int> out;
  for (const auto& [a, b] : edges_) {
    if (b == service) out.push_back(a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> ServiceCallGraph::callees(int service) const {
  std::vector<int> out;
  for (const auto& [a, b] : edges_) {
    if (a == service) out.push_back(b);
  }
  return out;
}

std::vector<int> ServiceCallGraph::topological_order() const {
  std::vector<int> indegree(static_cast<std::size_t>(n_services_), 0);
  for (const auto& e : edges_) ++indegree[static_cast<std::size_t>(e.second)];
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (int s = 0; s < n_services_; ++s) {
    if (indegree[static_cast<std::size_t>(s)] == 0) ready.push(s);
  }
  std::vector<int> order;
  while (!ready.empty()) {
    int s = ready.top();
    ready.pop();
    order.push_back(s);
    for (int c : callees(s)) {
      if (--indegree[static_cast<std::size_t>(c)] == 0) ready.push(c);
    }
  }
  return order;  // shorter than n_services_ iff cyclic
}

bool ServiceCallGraph::weakly_connected() const {
  if (n_services_ <= 1) return true;
  std::vector<int> parent(static_cast<std::size_t>(n_services_));
  for (int s = 0; s < n_services_; ++s) parent[static_cast<std::size_t>(s)] = s;
  std::function<int(int)> find = [&](int x) {
    auto& p = parent[static_cast<std::size_t>(x)];
    return p == x ? x : (p = find(p));
  };
  int components = n_services_;
  for (const auto& [a, b] : edges_) {
    int ra = find(a), rb = find(b);
    if (ra != rb) {
      parent[static_cast<std::size_t>(ra)] = rb;
      --components;
    }
  }
  return components == 1;
}

// ---------------------------------------------------------------------------
// Pdag

Pdag::Pdag(std::vector<MetricNode> nodes) : nodes_(std::move(nodes)) {
  auto sorted = nodes_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("graph nodes must be unique");
  }
  marks_.assign(nodes_.size() * nodes_.size(), kNone);
}

std::optional<int> Pdag::index_of(const MetricNode& node) const {
  auto it = std::find(nodes_.begin(), nodes_.end(), node);
  if (it == nodes_.end()) return std::nullopt;
  return static_cast<int>(it - nodes_.begin());
}

void Pdag::check_pair(int a, int b) const {
  const int n = static_cast<int>(nodes_.size());
  if (a < 0 || b < 0 || a >= n || b >= n) throw std::out_of_range("node index out of range");
  if (a == b) throw std::invalid_argument("self-loops are not allowed");
}

void Pdag::add_directed(int from, int to) {
  check_pair(from, to);
  set(from, to, kArrow);
  set(to, from, kTail);
}

void Pdag::add_undirected(int a, int b) {
  check_pair(a, b);
  set(a, b, kLine);
  set(b, a, kLine);
}

void Pdag::remove_edge(int a, int b) {
  check_pair(a, b);
  set(a, b, kNone);
  set(b, a, kNone);
}

std::vector<int> Pdag::parents(int i) const {
  std::vector<int> out;
  for (int j = 0; j < static_cast<int>(size()); ++j) {
    if (at(i, j) == kTail) out.push_back(j);
  }
  return out;
}

std::vector<int> Pdag::children(int i) const {
  std::vector<int> out;
  for (int j = 0; j < static_cast<int>(size()); ++j) {
    if (at(i, j) == kArrow) out.push_back(j);
  }
  return out;
}

std::vector<int> Pdag::neighbors(int i) const {
  std::vector<int> out;
  for (int j = 0; j < static_cast<int>(size()); ++j) {
    if (at(i, j) == kLine) out.push_back(j);
  }
  return out;
}

std::vector<int> Pdag::adjacents(int i) const {
  std::vector<int> out;
  for (int j = 0; j < static_cast<int>(size()); ++j) {
    if (at(i, j) != kNone) out.push_back(j);
  }
  return out;
}

std::vector<std::pair<int, int>> Pdag::directed_edges() const {
  std::vector<std::pair<int, int>> out;
  const int n = static_cast<int>(size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (at(i, j) == kArrow) out.emplace_back(i, j);
    }
  }
  return out;
}

std::vector<std::pair<int, int>> Pdag::undirected_edges() const {
  std::vector<std::pair<int, int>> out;
  const int n = static_cast<int>(size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (at(i, j) == kLine) out.emplace_back(i, j);
    }
  }
  return out;
}

std::size_t Pdag::edge_count() const {
  std::size_t count = 0;
  for (auto m : marks_) count += (m != kNone);
  return count / 2;
}

bool Pdag::directed_path(int from, int to) const {
  std::vector<char> seen(size(), 0);
  std::vector<int> stack{from};
  seen[static_cast<std::size_t>(from)] = 1;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    if (v == to) return true;
    for (int w : children(v)) {
      if (!seen[static_cast<std::size_t>(w)]) {
        seen[static_cast<std::size_t>(w)] = 1;
        stack.push_back(w);
      }
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Dag / Knowledge

void Dag::add_edge(const MetricNode& from, const MetricNode& to) {
  auto a = index_of(from);
  auto b = index_of(to);
  if (!a || !b) throw std::out_of_range("edge endpoint " + to_string(a ? to : from) + " not in graph");
  add_edge(*a, *b);
}

bool Dag::has_edge(const MetricNode& from, const MetricNode& to) const {
  auto a = index_of(from);
  auto b = index_of(to);
  return a && b && has_edge(*a, *b);
}

Knowledge Knowledge::restricted_to(const std::vector<MetricNode>& nodes) const {
  std::set<MetricNode> keep(nodes.begin(), nodes.end());
  Knowledge out;
  for (const auto& [a, b] : forbidden_) {
    if (keep.count(a) && keep.count(b)) out.forbid(a, b);
  }
  return out;
}

KnowledgeMask::KnowledgeMask(const Knowledge& knowledge, const std::vector<MetricNode>& nodes)
    : n_(nodes.size()) {
  if (knowledge.empty()) return;
  bits_.assign(n_ * n_, false);
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) {
      if (i != j && knowledge.is_forbidden(nodes[i], nodes[j])) bits_[i * n_ + j] = true;
    }
  }
}

// ---------------------------------------------------------------------------
// Operations

std::vector<int> topological_order(const Pdag& graph) {
  const int n = static_cast<int>(graph.size());
  std::vector<int> indegree(static_cast<std::size_t>(n), 0);
  for (const auto& e : graph.directed_edges()) ++indegree[static_cast<std::size_t>(e.second)];
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (int i = 0; i < n; ++i) {
    if (indegree[static_cast<std::size_t>(i)] == 0) ready.push(i);
  }
  std::vector<int> order;
  order.reserve(static_cast<std::size_t>(n));
  while (!ready.empty()) {
    int v = ready.top();
    ready.pop();
    order.push_back(v);
    for (int w : graph.children(v)) {
      if (--indegree[static_cast<std::size_t>(w)] == 0) ready.push(w);
    }
  }
  if (static_cast<int>(order.size()) != n) throw CycleDetected("directed edges contain a cycle");
  return order;
}

std::vector<MetricNode> topological_sort(const Dag& dag) {
  std::vector<MetricNode> out;
  for (int i : topological_order(dag.as_pdag())) out.push_back(dag.node(i));
  return out;
}

namespace {

// Whether the undirected edge a—b is forced to a->b by one of Meek's rules.
bool meek_implies(const Pdag& g, int a, int b) {
  const int n = static_cast<int>(g.size());
  // R1: c -> a, c not adjacent to b.
  for (int c : g.parents(a)) {
    if (c != b && !g.adjacent(c, b)) return true;
  }
  // R2: a -> c -> b.
  for (int c : g.children(a)) {
    if (g.has_directed(c, b)) return true;
  }
  // R3: a—c, a—d, c -> b, d -> b, c and d not adjacent.
  std::vector<int> kite;
  for (int c : g.neighbors(a)) {
    if (c != b && g.has_directed(c, b)) kite.push_back(c);
  }
  for (std::size_t i = 0; i < kite.size(); ++i) {
    for (std::size_t j = i + 1; j < kite.size(); ++j) {
      if (!g.adjacent(kite[i], kite[j])) return true;
    }
  }
  // R4: a—c, c -> d, d -> b, c not adjacent to b, a adjacent to d.
  for (int d = 0; d < n; ++d) {
    if (d == a || d == b || !g.has_directed(d, b) || !g.adjacent(a, d)) continue;
    for (int c : g.parents(d)) {
      if (c != a && c != b && g.has_undirected(a, c) && !g.adjacent(c, b)) return true;
    }
  }
  return false;
}

Pdag meek_closure(const Pdag& input, const KnowledgeMask* knowledge,
                  std::vector<std::pair<int, int>>* flagged) {
  try {
    topological_order(input);
  } catch (const CycleDetected&) {
    throw InconsistentPattern("pattern has a directed cycle");
  }
  Pdag g = input;
  std::set<std::pair<int, int>> skipped;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& [u, v] : g.undirected_edges()) {
      for (auto [a, b] : {std::pair{u, v}, std::pair{v, u}}) {
        if (!g.has_undirected(a, b) || !meek_implies(g, a, b)) continue;
        if (knowledge && knowledge->forbidden(a, b)) {
          skipped.emplace(a, b);
          continue;
        }
        if (g.directed_path(b, a)) {
          throw InconsistentPattern("orienting " + to_string(g.node(a)) + "->" +
                                    to_string(g.node(b)) + " would close a cycle");
        }
        g.add_directed(a, b);
        changed = true;
      }
    }
  }
  if (flagged) {
    for (const auto& e : skipped) {
      if (g.has_undirected(e.first, e.second)) flagged->push_back(e);
    }
  }
  return g;
}

}  // namespace

Pdag apply_meek_rules(const Pdag& pdag) { return meek_closure(pdag, nullptr, nullptr); }

Pdag apply_meek_rules(const Pdag& pdag, const KnowledgeMask& knowledge,
                      std::vector<std::pair<int, int>>* flagged) {
  return meek_closure(pdag, &knowledge, flagged);
}

Dag cpdag_to_dag(const Pdag& pdag) {
  Pdag directed_part(pdag.nodes());
  for (const auto& [a, b] : pdag.directed_edges()) directed_part.add_directed(a, b);
  const auto order = topological_order(directed_part);
  std::vector<int> rank(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) rank[static_cast<std::size_t>(order[i])] = static_cast<int>(i);

  Dag dag(pdag.nodes());
  for (const auto& [a, b] : pdag.directed_edges()) dag.add_edge(a, b);
  for (const auto& [a, b] : pdag.undirected_edges()) {
    if (rank[static_cast<std::size_t>(a)] < rank[static_cast<std::size_t>(b)]) {
      dag.add_edge(a, b);
    } else {
      dag.add_edge(b, a);
    }
  }
  return dag;
}

std::set<NodePair> skeleton(const Pdag& graph) {
  std::set<NodePair> out;
  auto add = [&](int a, int b) {
    const auto& x = graph.node(a);
    const auto& y = graph.node(b);
    out.emplace(std::min(x, y), std::max(x, y));
  };
  for (const auto& [a, b] : graph.directed_edges()) add(a, b);
  for (const auto& [a, b] : graph.undirected_edges()) add(a, b);
  return out;
}

std::set<NodePair> skeleton(const Dag& graph) { return skeleton(graph.as_pdag()); }

}  // namespace causil
