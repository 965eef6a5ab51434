#pragma once

#include <string>

#include "causil/graph.hpp"
#include "json.hpp"

namespace causil {

// Graph JSON layout:
//   {"nodes":[{"service":0,"category":"Workload"},...],
//    "directed":[[i,j],...],"undirected":[[i,j],...]}
// with i, j indices into "nodes". Dags always carry an empty "undirected".

nlohmann::json to_json(const Pdag& graph);
nlohmann::json to_json(const Dag& graph);
/// Throws ParseError on schema violations.
Pdag pdag_from_json(const nlohmann::json& doc);
/// Throws ParseError if undirected edges are present, CycleDetected if cyclic.
Dag dag_from_json(const nlohmann::json& doc);

/// Graphviz digraph; undirected edges are rendered with dir=none.
std::string to_dot(const Pdag& graph);
std::string to_dot(const Dag& graph);

// Call graph JSON: {"n_services":N,"edges":[[caller,callee],...]}
nlohmann::json to_json(const ServiceCallGraph& graph);
ServiceCallGraph call_graph_from_json(const nlohmann::json& doc);

// {"forbidden":[[{"service":..,"category":..},{...}],...]}
nlohmann::json to_json(const Knowledge& knowledge);

nlohmann::json to_json(const MetricNode& node);
MetricNode node_from_json(const nlohmann::json& doc);

/// Reads and parses a whole JSON file. Throws ParseError.
nlohmann::json read_json_file(const std::string& path);
/// Compact dump followed by a newline.
void write_json_file(const std::string& path, const nlohmann::json& doc, int indent = -1);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace causil
