// Shared test fixtures: small hierarchies and random batch builders.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hiercl/contrastive.hpp"
#include "hiercl/embedding.hpp"
#include "hiercl/hierarchy.hpp"
#include "hiercl/matrix.hpp"
#include "hiercl/prototypes.hpp"
#include "hiercl/random.hpp"

namespace fixtures {

using hiercl::EmbeddingBatch;
using hiercl::LabelTree;
using hiercl::Matrix;
using hiercl::NodeSpec;
using hiercl::Rng;

/// Ship-style 3-level tree:
///   Ship -> {Warship, Merchant}
///   Warship -> {Aircraft Carrier, Destroyer}, Merchant -> {Cargo, Tanker}
///   Aircraft Carrier -> {Nimitz, Enterprise, Midway}, Destroyer -> {Atago, Arleigh Burke}
///   Cargo -> {Container Ship, Barge}, Tanker -> {Oil Tanker}
/// plus "Other Aircraft Carrier" (Other* leaf under Aircraft Carrier) and
/// "Other Ship" (Other* leaf hanging directly off the root).
inline std::vector<NodeSpec> ship_toy_nodes(bool with_other = true) {
  std::vector<NodeSpec> n{
      {"Ship", std::nullopt, false},
      {"Warship", "Ship", false},
      {"Merchant", "Ship", false},
      {"Aircraft Carrier", "Warship", false},
      {"Destroyer", "Warship", false},
      {"Cargo", "Merchant", false},
      {"Tanker", "Merchant", false},
      {"Nimitz", "Aircraft Carrier", false},
      {"Enterprise", "Aircraft Carrier", false},
      {"Midway", "Aircraft Carrier", false},
      {"Atago", "Destroyer", false},
      {"Arleigh Burke", "Destroyer", false},
      {"Container Ship", "Cargo", false},
      {"Barge", "Cargo", false},
      {"Oil Tanker", "Tanker", false},
  };
  if (with_other) {
    n.push_back({"Other Aircraft Carrier", "Aircraft Carrier", true});
    n.push_back({"Other Ship", "Ship", true});
  }
  return n;
}

/// Two-level hierarchy with 5 coarse and 34 fine categories (plus three
/// Other* leaves when requested).
inline std::vector<NodeSpec> fair1m_nodes(bool with_other = false) {
  std::vector<NodeSpec> n{{"scene", std::nullopt, false},
                          {"Airplane", "scene", false},
                          {"Ship", "scene", false},
                          {"Vehicle", "scene", false},
                          {"Court", "scene", false},
                          {"Road", "scene", false}};
  const std::vector<std::string> airplane{"B737", "B777", "B747", "B787", "A321",
                                          "A220", "A330", "A350", "C919", "ARJ21"};
  const std::vector<std::string> ship{"PS", "MB", "FB", "TB", "ES", "LCS", "DCS", "WS"};
  const std::vector<std::string> vehicle{"SC", "BUS", "CT", "DT", "VAN",
                                         "TRI", "TRC", "TT", "EX"};
  const std::vector<std::string> court{"BF", "BC", "FF", "TC"};
  const std::vector<std::string> road{"RA", "IS", "BR"};
  for (const auto& x : airplane) n.push_back({x, "Airplane", false});
  for (const auto& x : ship) n.push_back({x, "Ship", false});
  for (const auto& x : vehicle) n.push_back({x, "Vehicle", false});
  for (const auto& x : court) n.push_back({x, "Court", false});
  for (const auto& x : road) n.push_back({x, "Road", false});
  if (with_other) {
    n.push_back({"Other Airplane", "Airplane", true});
    n.push_back({"Other Ship", "Ship", true});
    n.push_back({"Other Vehicle", "Vehicle", true});
  }
  return n;
}

inline Matrix random_unit_rows(Rng& rng, std::size_t rows, std::size_t dim) {
  Matrix m(rows, dim);
  for (std::size_t i = 0; i < rows; ++i) {
    auto row = m.row(i);
    for (double& x : row) x = rng.gaussian();
    const double n = hiercl::norm(row);
    for (double& x : row) x /= n;
  }
  return m;
}

/// Random batch over a tree: unit rows labeled at uniformly chosen
/// non-root nodes (so shortened label paths are exercised too).
inline EmbeddingBatch random_batch(Rng& rng, const LabelTree& tree, std::size_t rows,
                                   std::size_t dim, bool leaves_only = false) {
  EmbeddingBatch b;
  b.vectors = random_unit_rows(rng, rows, dim);
  std::vector<int> pool;
  for (int id = 1; id <= tree.category_count(); ++id) {
    if (tree.node(id).is_other) continue;
    if (leaves_only && !tree.is_leaf(id)) continue;
    pool.push_back(id);
  }
  for (std::size_t i = 0; i < rows; ++i) {
    const int node = pool[rng.below(pool.size())];
    b.labels.push_back({tree.path_of(node)});
  }
  return b;
}

}  // namespace fixtures
