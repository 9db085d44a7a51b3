#pragma once

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sgg/error.hpp"
#include "sgg/graph.hpp"

namespace sgg {

/// child -> parent
using HypernymMap = std::map<std::string, std::string>;

/// Follow the hypernym chain of `label` until a token without parent.
inline ClassHierarchy derive_hierarchy(const std::string& label, const HypernymMap& hypernyms) {
  std::vector<std::string> chain{label};
  std::set<std::string> seen{label};
  auto it = hypernyms.find(label);
  while (it != hypernyms.end()) {
    const std::string& parent = it->second;
    if (seen.count(parent) != 0) {
      std::string cycle;
      auto start = std::find(chain.begin(), chain.end(), parent);
      for (auto c = start; c != chain.end(); ++c) cycle += *c + " -> ";
      throw CyclicHierarchy("hypernym cycle: " + cycle + parent);
    }
    chain.push_back(parent);
    seen.insert(parent);
    it = hypernyms.find(parent);
  }
  return ClassHierarchy(std::move(chain));
}

/// Parse `child<TAB>parent` lines. Blank lines and lines starting with '#'
/// are skipped; a child listed twice with different parents is an error.
inline HypernymMap parse_hypernyms(std::istream& in) {
  HypernymMap map;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw ParseError("hypernyms line " + std::to_string(lineno) + ": expected two tab-separated tokens");
    std::string child = line.substr(0, tab);
    std::string parent = line.substr(tab + 1);
    if (child.empty() || parent.empty())
      throw ParseError("hypernyms line " + std::to_string(lineno) + ": empty token");
    auto [it, inserted] = map.emplace(child, parent);
    if (!inserted && it->second != parent)
      throw ParseError("hypernyms line " + std::to_string(lineno) + ": '" + child + "' has two parents");
  }
  return map;
}

inline HypernymMap load_hypernyms(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open hypernym file " + path);
  return parse_hypernyms(in);
}

inline std::string format_hypernyms(const HypernymMap& map) {
  std::ostringstream out;
  for (const auto& [child, parent] : map) out << child << '\t' << parent << '\n';
  return out.str();
}

}  // namespace sgg
