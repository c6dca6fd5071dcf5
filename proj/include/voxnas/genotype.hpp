#ifndef VOXNAS_GENOTYPE_HPP
#define VOXNAS_GENOTYPE_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace voxnas {

enum class CellKind { kDC, kUC };
enum class HmKind { kDHM, kUHM, kNHM };

/// Candidate operation names for each hybrid-module kind, in catalog order
/// (the order is the tie-break for genotype derivation).
const std::vector<std::string>& op_catalog(HmKind kind);

/// Which candidate set an edge draws from, given the cell kind and the edge's
/// source (0 = X0, 1 = X1, >= 2 = earlier nodes). DC compresses its inputs, so
/// both input edges are DHMs; in a UC only X1 carries the low-resolution map
/// that needs upsampling, so only its edges are UHMs.
HmKind edge_hm_kind(CellKind cell, std::size_t source);

/// "X0", "X1", "node_1", ... for source indices 0, 1, 2, ...
std::string source_name(std::size_t source);
std::size_t source_index(const std::string& name);  // inverse; throws DataError

struct GenotypeEdge {
  std::size_t source = 0;
  std::string op;

  bool operator==(const GenotypeEdge&) const = default;
};

/// Discrete architecture of one cell: per node, the two retained edges in
/// source order.
struct CellGenotype {
  CellKind kind = CellKind::kDC;
  std::vector<std::array<GenotypeEdge, 2>> nodes;

  bool operator==(const CellGenotype&) const = default;
};

struct GenotypePair {
  CellGenotype dc;
  CellGenotype uc;

  bool operator==(const GenotypePair&) const = default;
};

/// Throws DataError unless every op belongs to its edge's catalog, sources are
/// distinct, in range, and listed in ascending order.
void validate_genotype(const CellGenotype& g);
void validate_genotype(const GenotypePair& g);

/// Canonical single-line JSON {"version":1,"dc":[...],"uc":[...]} with each
/// node as [[source,op],[source,op]] in source order. Equal genotypes always
/// serialize to equal strings, which is what the search counter keys on.
std::string genotype_to_json(const GenotypePair& g);
GenotypePair genotype_from_json(const std::string& text);

/// FNV-1a over the canonical serialization, as fixed-width hex.
std::string genotype_hash(const GenotypePair& g);

}  // namespace voxnas

#endif  // VOXNAS_GENOTYPE_HPP
