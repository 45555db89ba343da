#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "uil/mat.hpp"

namespace uil {

// Undirected simple graph. Adjacency is dense 0/1 with zero diagonal;
// graphs here stay small (a few hundred nodes at most).
struct Graph {
  int id = 0;
  int num_nodes = 0;
  Mat adjacency;      // num_nodes x num_nodes
  Mat node_features;  // num_nodes x d_x
  int label = 0;
  std::optional<int> env;  // ground-truth environment tag, if known
  int inferred_env = -1;   // set by environment inference; -1 means unset

  // Ground-truth annotations from the generator. Empty when unknown.
  // stable_edge_flags is 0/1 and supported only on existing edges.
  Mat stable_edge_flags;
  std::vector<int> stable_node_flags;

  bool has_stable_flags() const { return !stable_edge_flags.empty(); }
};

// Soft masks over one graph's nodes and edges, strictly inside (0,1).
// edge_mask is symmetric and zero off the edge support.
struct StableMasks {
  std::vector<double> node_mask;
  Mat edge_mask;
};

// A graph after elementwise masking: adjacency entries in [0,1].
struct MaskedGraph {
  Mat soft_adjacency;
  Mat soft_features;
};

struct Dataset {
  std::vector<Graph> graphs;
};

// Checks all Graph invariants; throws std::runtime_error naming the first
// offending index. num_classes < 0 skips the upper label bound.
const Graph& validate_graph(const Graph& g, int num_classes = -1);

// Splits g into the stable part {A o M^a, X o M^x} and the environmental
// complement {A o (1-M^a), X o (1-M^x)}. The node mask scales feature rows.
std::pair<MaskedGraph, MaskedGraph> apply_masks(const Graph& g, const StableMasks& m);

// score_j = (1/2) (sum_i mask[i][j] + sum_i mask[j][i]). Unsorted.
std::vector<double> alignment_scores(const Graph& g, const Mat& edge_mask);
std::vector<double> mask_alignment_scores(const Mat& edge_mask);

// Node order for graphon alignment: score descending, ties broken by the
// original index so the order is reproducible.
std::vector<int> argsort_desc(const std::vector<double>& scores);

// Edges (i,j) with i<j in lexicographic order, the canonical listing used
// by the JSONL format and by everything that hashes or diffs datasets.
std::vector<std::pair<int, int>> edge_list(const Mat& adjacency);

void write_jsonl(const Dataset& ds, const std::string& path);
Dataset read_jsonl(const std::string& path);

}  // namespace uil
