#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "sgg/error.hpp"
#include "sgg/graph.hpp"

namespace sgg {

using json = nlohmann::json;

inline json node_to_json(const NodeInstance& node) {
  json attrs = json::array();
  for (const auto& a : node.attributes) attrs.push_back({{"kind", to_string(a.kind)}, {"name", a.name}});
  return json{{"id", node.id}, {"classes", node.hierarchy.labels()}, {"attributes", attrs}};
}

inline json edge_to_json(const Edge& edge) {
  return json{{"subject", edge.subject}, {"object", edge.object}, {"predicates", edge.predicates}};
}

/// Line-structured graph document: one node or edge object per line, nodes
/// sorted by id and edges by (subject, object).
inline std::string serialize_graph(const SceneGraph& graph) {
  std::ostringstream out;
  out << "{\n\"scene_id\": " << json(graph.scene_id()).dump() << ",\n\"nodes\": [";
  bool first = true;
  for (const auto& [id, node] : graph.nodes()) {
    out << (first ? "\n" : ",\n") << node_to_json(node).dump();
    first = false;
  }
  out << (first ? "],\n" : "\n],\n") << "\"edges\": [";
  first = true;
  for (const auto& [key, edge] : graph.edges()) {
    out << (first ? "\n" : ",\n") << edge_to_json(edge).dump();
    first = false;
  }
  out << (first ? "]\n}\n" : "\n]\n}\n");
  return out.str();
}

inline SceneGraph graph_from_json(const json& doc) {
  try {
    SceneGraph graph(doc.at("scene_id").get<std::string>());
    for (const auto& n : doc.at("nodes")) {
      NodeInstance node;
      node.id = n.at("id").get<NodeId>();
      node.hierarchy = ClassHierarchy(n.at("classes").get<std::vector<std::string>>());
      if (n.contains("attributes")) {
        for (const auto& a : n.at("attributes"))
          node.attributes.insert({attribute_kind_from_string(a.at("kind").get<std::string>()), a.at("name").get<std::string>()});
      }
      graph.add_node(std::move(node));
    }
    for (const auto& e : doc.at("edges")) {
      const auto s = e.at("subject").get<NodeId>();
      const auto o = e.at("object").get<NodeId>();
      const auto& preds = e.at("predicates");
      if (preds.empty()) throw InvalidGraph("edge " + std::to_string(s) + "->" + std::to_string(o) + " has no predicates");
      for (const auto& p : preds) graph.merge_edge(s, o, p.get<std::string>());
    }
    return graph;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed graph document: ") + e.what());
  }
}

inline SceneGraph parse_graph(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("graph document is not valid JSON: ") + e.what());
  }
  return graph_from_json(doc);
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
  if (!out) throw DataError("failed writing " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void save_graph(const SceneGraph& graph, const std::string& path) { write_text_file(path, serialize_graph(graph)); }
inline SceneGraph load_graph(const std::string& path) { return parse_graph(read_text_file(path)); }

}  // namespace sgg
