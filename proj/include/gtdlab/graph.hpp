#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "gtdlab/kernels.hpp"
#include "gtdlab/matrix.hpp"

namespace gtdlab {

/// Undirected 0/1 adjacency in CSR form. Both directions of every edge are
/// stored; no self-loops; column indices strictly increasing within a row.
struct Graph {
  int num_nodes = 0;
  int64_t num_edges = 0;  // undirected edge count (half the stored entries)
  std::vector<int64_t> row_ptr;
  std::vector<int> col;

  kernels::CsrView view() const { return {num_nodes, row_ptr.data(), col.data(), nullptr}; }
  int degree(int i) const { return static_cast<int>(row_ptr[i + 1] - row_ptr[i]); }
};

/// Disjoint train/test node partition; both lists sorted ascending.
struct SplitMask {
  std::vector<int> train_ids;
  std::vector<int> test_ids;
};

struct Dataset {
  Graph graph;
  Matrix features;          // n x d
  std::vector<int> labels;  // n, values in [0, C)
  int num_classes = 0;
  SplitMask split;

  int num_nodes() const { return graph.num_nodes; }
};

/// Symmetrically normalized adjacency with self-loops:
/// entry (i, j) = 1 / sqrt((deg_i + 1) (deg_j + 1)) for j adjacent to i or j == i.
struct NormAdj {
  int num_nodes = 0;
  std::vector<int64_t> row_ptr;
  std::vector<int> col;
  std::vector<float> val;

  kernels::CsrView view() const { return {num_nodes, row_ptr.data(), col.data(), val.data()}; }
};

/// Build a Graph from an arbitrary edge list: symmetrizes, deduplicates and
/// drops self-loops. Throws on endpoints outside [0, n).
Graph build_graph(int num_nodes, std::span<const std::pair<int, int>> edges);

/// Load the on-disk dataset directory format:
///   meta.json, features.tsv, labels.tsv, edges.tsv, split.tsv
Dataset load_dataset(const std::filesystem::path& dir);

/// Write a dataset in the same directory format (creates the directory).
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);

NormAdj normalize_adjacency(const Graph& g);

/// k successive sparse-dense products: adj^k * features. k = 0 returns the input.
Matrix sgc_propagate(const NormAdj& adj, const Matrix& features, int k);

/// Uniform random partition with round-half-up train size; deterministic per seed.
SplitMask split_nodes(int n, double train_fraction, uint64_t seed);

}  // namespace gtdlab
