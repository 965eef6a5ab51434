#include "causil/graph_io.hpp"

#include <fstream>
#include <sstream>

#include "causil/error.hpp"

namespace causil {

using nlohmann::json;

json to_json(const MetricNode& node) {
  return json{{"service", node.service}, {"category", std::string(category_name(node.category))}};
}

MetricNode node_from_json(const json& doc) {
  try {
    return MetricNode{doc.at("service").get<int>(),
                      parse_category(doc.at("category").get<std::string>())};
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad node entry: ") + e.what());
  }
}

json to_json(const Pdag& graph) {
  json nodes = json::array();
  for (const auto& n : graph.nodes()) nodes.push_back(to_json(n));
  json directed = json::array();
  for (const auto& [a, b] : graph.directed_edges()) directed.push_back({a, b});
  json undirected = json::array();
  for (const auto& [a, b] : graph.undirected_edges()) undirected.push_back({a, b});
  return json{{"nodes", nodes}, {"directed", directed}, {"undirected", undirected}};
}

json to_json(const Dag& graph) { return to_json(graph.as_pdag()); }

Pdag pdag_from_json(const json& doc) {
  try {
    std::vector<MetricNode> nodes;
    for (const auto& n : doc.at("nodes")) nodes.push_back(node_from_json(n));
    Pdag graph(std::move(nodes));
    const int n = static_cast<int>(graph.size());
    auto read_pair = [n](const json& e) {
      auto a = e.at(0).get<int>();
      auto b = e.at(1).get<int>();
      if (e.size() != 2 || a < 0 || b < 0 || a >= n || b >= n || a == b) {
        throw ParseError("bad edge entry " + e.dump());
      }
      return std::pair{a, b};
    };
    for (const auto& e : doc.at("directed")) {
      auto [a, b] = read_pair(e);
      if (graph.adjacent(a, b)) throw ParseError("pair listed twice: " + e.dump());
      graph.add_directed(a, b);
    }
    if (doc.contains("undirected")) {
      for (const auto& e : doc.at("undirected")) {
        auto [a, b] = read_pair(e);
        if (graph.adjacent(a, b)) throw ParseError("pair listed twice: " + e.dump());
        graph.add_undirected(a, b);
      }
    }
    return graph;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad graph document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
}

Dag dag_from_json(const json& doc) {
  Pdag pdag = pdag_from_json(doc);
  if (!pdag.undirected_edges().empty()) throw ParseError("DAG document has undirected edges");
  topological_order(pdag);
  Dag dag(pdag.nodes());
  for (const auto& [a, b] : pdag.directed_edges()) dag.add_edge(a, b);
  return dag;
}

std::string to_dot(const Pdag& graph) {
  std::ostringstream out;
  out << "digraph causal {\n";
  for (std::size_t i = 0; i < graph.size(); ++i) {
    out << "  n" << i << " [label=\"" << to_string(graph.nodes()[i]) << "\"];\n";
  }
  for (const auto& [a, b] : graph.directed_edges()) out << "  n" << a << " -> n" << b << ";\n";
  for (const auto& [a, b] : graph.undirected_edges()) {
    out << "  n" << a << " -> n" << b << " [dir=none];\n";
  }
  out << "}\n";
  return out.str();
}

std::string to_dot(const Dag& graph) { return to_dot(graph.as_pdag()); }

json to_json(const ServiceCallGraph& graph) {
  json edges = json::array();
  for (const auto& [a, b] : graph.edges()) edges.push_back({a, b});
  return json{{"n_services", graph.n_services()}, {"edges", edges}};
}

ServiceCallGraph call_graph_from_json(const json& doc) {
  try {
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : doc.at("edges")) {
      if (e.size() != 2) throw ParseError("bad call edge " + e.dump());
      edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    }
    return ServiceCallGraph(doc.at("n_services").get<int>(), std::move(edges));
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad call graph document: ") + e.what());
  } catch (const InvalidConfig& e) {
    throw ParseError(e.what());
  }
}

json to_json(const Knowledge& knowledge) {
  json forbidden = json::array();
  for (const auto& [a, b] : knowledge.forbidden()) forbidden.push_back({to_json(a), to_json(b)});
  return json{{"forbidden", forbidden}};
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("write failed for " + path);
}

void write_json_file(const std::string& path, const json& doc, int indent) {
  write_text_file(path, doc.dump(indent) + "\n");
}

}  // namespace causil
