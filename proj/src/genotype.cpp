#include "voxnas/genotype.hpp"

#include <algorithm>
#include <cstdio>

#include "json.hpp"
#include "voxnas/errors.hpp"

namespace voxnas {

using json = nlohmann::json;

const std::vector<std::string>& op_catalog(HmKind kind) {
  static const std::vector<std::string> dhm{"d_conv",    "d_dil_conv", "d_dep_conv",
                                            "d_se_conv", "max_pool",   "avg_pool"};
  static const std::vector<std::string> uhm{"u_conv", "u_dil_conv", "u_dep_conv", "u_se_conv"};
  static const std::vector<std::string> nhm{"conv", "dil_conv", "dep_conv", "se_conv", "identity"};
  switch (kind) {
    case HmKind::kDHM: return dhm;
    case HmKind::kUHM: return uhm;
    default: return nhm;
  }
}

HmKind edge_hm_kind(CellKind cell, std::size_t source) {
  if (cell == CellKind::kDC) return source <= 1 ? HmKind::kDHM : HmKind::kNHM;
  return source == 1 ? HmKind::kUHM : HmKind::kNHM;
}

std::string source_name(std::size_t source) {
  if (source == 0) return "X0";
  if (source == 1) return "X1";
  return "node_" + std::to_string(source - 1);
}

std::size_t source_index(const std::string& name) {
  if (name == "X0") return 0;
  if (name == "X1") return 1;
  if (name.rfind("node_", 0) == 0) {
    const std::string num = name.substr(5);
    if (!num.empty() && num.find_first_not_of("0123456789") == std::string::npos) {
      const std::size_t k = std::stoul(num);
      if (k >= 1) return k + 1;
    }
  }
  throw DataError("genotype: unknown edge source '" + name + "'");
}

void validate_genotype(const CellGenotype& g) {
  if (g.nodes.empty()) throw DataError("genotype: no nodes");
  for (std::size_t k = 0; k < g.nodes.size(); ++k) {
    if (g.nodes[k][0].source == g.nodes[k][1].source) {
      throw DataError("genotype: node " + std::to_string(k + 1) + " lists one source twice");
    }
    if (g.nodes[k][0].source > g.nodes[k][1].source) {
      throw DataError("genotype: node " + std::to_string(k + 1) + " edges not in source order");
    }
    for (const GenotypeEdge& e : g.nodes[k]) {
      // node k+1 (1-based) may use X0, X1 and nodes 1..k
      if (e.source >= k + 2) {
        throw DataError("genotype: node " + std::to_string(k + 1) + " uses later source '" +
                        source_name(e.source) + "'");
      }
      const auto& catalog = op_catalog(edge_hm_kind(g.kind, e.source));
      if (std::find(catalog.begin(), catalog.end(), e.op) == catalog.end()) {
        throw DataError("genotype: op '" + e.op + "' not in the catalog for edge " +
                        source_name(e.source));
      }
    }
  }
}

void validate_genotype(const GenotypePair& g) {
  if (g.dc.kind != CellKind::kDC || g.uc.kind != CellKind::kUC) {
    throw DataError("genotype: pair must hold one DC and one UC genotype");
  }
  validate_genotype(g.dc);
  validate_genotype(g.uc);
  if (g.dc.nodes.size() != g.uc.nodes.size()) {
    throw DataError("genotype: DC and UC node counts differ");
  }
}

namespace {

json cell_to_json(const CellGenotype& g) {
  json nodes = json::array();
  for (const auto& node : g.nodes) {
    json pair = json::array();
    for (const GenotypeEdge& e : node) pair.push_back({source_name(e.source), e.op});
    nodes.push_back(pair);
  }
  return nodes;
}

CellGenotype cell_from_json(const json& nodes, CellKind kind) {
  CellGenotype g;
  g.kind = kind;
  if (!nodes.is_array() || nodes.empty()) throw DataError("genotype: node list must be an array");
  for (const json& node : nodes) {
    if (!node.is_array() || node.size() != 2) {
      throw DataError("genotype: each node must list exactly 2 edges");
    }
    std::array<GenotypeEdge, 2> pair;
    for (int i = 0; i < 2; ++i) {
      if (!node[i].is_array() || node[i].size() != 2) {
        throw DataError("genotype: each edge must be a [source, op] pair");
      }
      pair[i].source = source_index(node[i][0].get<std::string>());
      pair[i].op = node[i][1].get<std::string>();
    }
    g.nodes.push_back(pair);
  }
  return g;
}

}  // namespace

std::string genotype_to_json(const GenotypePair& g) {
  validate_genotype(g);
  json out{{"version", 1}, {"dc", cell_to_json(g.dc)}, {"uc", cell_to_json(g.uc)}};
  return out.dump();
}

GenotypePair genotype_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("genotype: malformed JSON: ") + e.what());
  }
  try {
    if (j.at("version").get<int>() != 1) throw DataError("genotype: unsupported version");
    GenotypePair g;
    g.dc = cell_from_json(j.at("dc"), CellKind::kDC);
    g.uc = cell_from_json(j.at("uc"), CellKind::kUC);
    validate_genotype(g);
    return g;
  } catch (const json::exception& e) {
    throw DataError(std::string("genotype: malformed JSON: ") + e.what());
  }
}

std::string genotype_hash(const GenotypePair& g) {
  const std::string s = genotype_to_json(g);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace voxnas
