#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace causil {

/// The five golden-signal categories monitored for every service. The
/// enumerator order is the declaration order used for all tie-breaking.
enum class MetricCategory : std::uint8_t { Workload, CpuUtil, MemUtil, Latency, Error };

inline constexpr std::size_t kNumCategories = 5;

inline constexpr std::array<MetricCategory, kNumCategories> kAllCategories = {
    MetricCategory::Workload, MetricCategory::CpuUtil, MetricCategory::MemUtil,
    MetricCategory::Latency, MetricCategory::Error};

constexpr std::size_t category_index(MetricCategory c) { return static_cast<std::size_t>(c); }

/// "Workload", "CpuUtil", ... (graph JSON spelling).
std::string_view category_name(MetricCategory c);
/// "workload", "cpu", "mem", "latency", "error" (panel CSV spelling).
std::string_view category_short_name(MetricCategory c);
/// Accepts either spelling, case-sensitive. Throws ParseError.
MetricCategory parse_category(std::string_view text);

struct MetricNode {
  int service = 0;
  MetricCategory category = MetricCategory::Workload;

  friend auto operator<=>(const MetricNode&, const MetricNode&) = default;
};

/// "s3.cpu"
std::string to_string(const MetricNode& node);

/// All 5 * n_services metric nodes in declaration order.
std::vector<MetricNode> metric_nodes_for(int n_services);

using NodePair = std::pair<MetricNode, MetricNode>;

/// Directed acyclic graph of services; edge (a, b) means a calls b.
class ServiceCallGraph {
 public:
  ServiceCallGraph() = default;
  /// Throws InvalidConfig on out-of-range ids, self-loops, duplicates or cycles.
  ServiceCallGraph(int n_services, std::vector<std::pair<int, int>> edges);

  int n_services() const { return n_services_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }

  bool calls(int caller, int callee) const;
  bool connected(int a, int b) const { return calls(a, b) || calls(b, a); }
  std::vector<int> callers(int service) const;
  std::vector<int> callees(int service) const;
  /// Callers before callees; ties by service id.
  std::vector<int> topological_order() const;
  bool weakly_connected() const;

  friend bool operator==(const ServiceCallGraph&, const ServiceCallGraph&) = default;

 private:
  int n_services_ = 0;
  std::vector<std::pair<int, int>> edges_;
};

/// Partially directed graph over metric nodes. Each node pair carries at most
/// one edge, either directed or undirected. Nodes are addressed by position.
class Pdag {
 public:
  Pdag() = default;
  /// Throws std::invalid_argument when nodes repeat.
  explicit Pdag(std::vector<MetricNode> nodes);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<MetricNode>& nodes() const { return nodes_; }
  const MetricNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  std::optional<int> index_of(const MetricNode& node) const;

  bool has_directed(int from, int to) const { return at(from, to) == kArrow; }
  bool has_undirected(int a, int b) const { return at(a, b) == kLine; }
  bool adjacent(int a, int b) const { return at(a, b) != kNone; }

  /// Each setter replaces whatever edge the pair carried before.
  void add_directed(int from, int to);
  void add_undirected(int a, int b);
  void remove_edge(int a, int b);

  std::vector<int> parents(int i) const;
  std::vector<int> children(int i) const;
  /// Undirected neighbours.
  std::vector<int> neighbors(int i) const;
  std::vector<int> adjacents(int i) const;

  /// Sorted by (from, to).
  std::vector<std::pair<int, int>> directed_edges() const;
  /// Sorted, each pair reported once with first < second.
  std::vector<std::pair<int, int>> undirected_edges() const;
  std::size_t edge_count() const;

  /// True if `to` can be reached from `from` following directed edges only.
  bool directed_path(int from, int to) const;

  friend bool operator==(const Pdag&, const Pdag&) = default;

 private:
  // Mark stored at (i, j): kArrow means i -> j, kTail means j -> i.
  static constexpr std::uint8_t kNone = 0;
  static constexpr std::uint8_t kArrow = 1;
  static constexpr std::uint8_t kTail = 2;
  static constexpr std::uint8_t kLine = 3;

  std::uint8_t at(int i, int j) const {
    return marks_[static_cast<std::size_t>(i) * nodes_.size() + static_cast<std::size_t>(j)];
  }
  void set(int i, int j, std::uint8_t m) {
    marks_[static_cast<std::size_t>(i) * nodes_.size() + static_cast<std::size_t>(j)] = m;
  }
  void check_pair(int a, int b) const;

  std::vector<MetricNode> nodes_;
  std::vector<std::uint8_t> marks_;
};

/// Fully directed graph. Acyclicity is checked by topological_sort rather than
/// on every insertion so that callers can build and validate in one step.
class Dag {
 public:
  Dag() = default;
  explicit Dag(std::vector<MetricNode> nodes) : graph_(std::move(nodes)) {}

  std::size_t size() const { return graph_.size(); }
  const std::vector<MetricNode>& nodes() const { return graph_.nodes(); }
  const MetricNode& node(int i) const { return graph_.node(i); }
  std::optional<int> index_of(const MetricNode& node) const { return graph_.index_of(node); }

  bool has_edge(int from, int to) const { return graph_.has_directed(from, to); }
  bool adjacent(int a, int b) const { return graph_.adjacent(a, b); }
  void add_edge(int from, int to) { graph_.add_directed(from, to); }
  void add_edge(const MetricNode& from, const MetricNode& to);
  void remove_edge(int a, int b) { graph_.remove_edge(a, b); }

  std::vector<int> parents(int i) const { return graph_.parents(i); }
  std::vector<int> children(int i) const { return graph_.children(i); }
  std::vector<std::pair<int, int>> edges() const { return graph_.directed_edges(); }
  std::size_t edge_count() const { return graph_.edge_count(); }
  bool has_edge(const MetricNode& from, const MetricNode& to) const;

  const Pdag& as_pdag() const { return graph_; }

  friend bool operator==(const Dag&, const Dag&) = default;

 private:
  Pdag graph_;
};

/// Prohibited directed edges. Forbidding a->b says nothing about b->a.
class Knowledge {
 public:
  void forbid(const MetricNode& from, const MetricNode& to) { forbidden_.emplace(from, to); }
  bool is_forbidden(const MetricNode& from, const MetricNode& to) const {
    return forbidden_.count({from, to}) != 0;
  }
  const std::set<NodePair>& forbidden() const { return forbidden_; }
  std::size_t size() const { return forbidden_.size(); }
  bool empty() const { return forbidden_.empty(); }

  /// Only the prohibitions whose endpoints are both in `nodes`.
  Knowledge restricted_to(const std::vector<MetricNode>& nodes) const;

  friend bool operator==(const Knowledge&, const Knowledge&) = default;

 private:
  std::set<NodePair> forbidden_;
};

/// Dense forbidden-edge lookup over the node positions of one graph.
class KnowledgeMask {
 public:
  KnowledgeMask() = default;
  KnowledgeMask(const Knowledge& knowledge, const std::vector<MetricNode>& nodes);

  bool forbidden(int from, int to) const {
    return !bits_.empty() && bits_[static_cast<std::size_t>(from) * n_ + static_cast<std::size_t>(to)];
  }

 private:
  std::size_t n_ = 0;
  std::vector<bool> bits_;
};

/// Kahn ordering of node positions; ties by position. Throws CycleDetected.
std::vector<int> topological_order(const Pdag& directed_part);
std::vector<MetricNode> topological_sort(const Dag& dag);

/// Closes the pattern under Meek's rules R1-R4. Throws InconsistentPattern if
/// the directed part is cyclic or an orientation would close a cycle.
Pdag apply_meek_rules(const Pdag& pdag);

/// Same closure, but orientations forbidden by `knowledge` are skipped and the
/// affected pairs (as the implied from/to positions) appended to `flagged`.
Pdag apply_meek_rules(const Pdag& pdag, const KnowledgeMask& knowledge,
                      std::vector<std::pair<int, int>>* flagged = nullptr);

/// Orients each undirected edge along the topological order of the directed
/// subgraph. Throws CycleDetected when that subgraph is cyclic.
Dag cpdag_to_dag(const Pdag& pdag);

/// Adjacencies with direction dropped; each pair stored as (min, max).
std::set<NodePair> skeleton(const Pdag& graph);
std::set<NodePair> skeleton(const Dag& graph);

}  // namespace causil
