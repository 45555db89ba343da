#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "uil/graph.hpp"
#include "uil/mat.hpp"

namespace uil {

// Piecewise-constant graphon over an equitable partition of [0,1] into
// `resolution` blocks: values is symmetric with entries in [0,1].
struct StepFunction {
  int resolution = 0;
  Mat values;

  StepFunction() = default;
  StepFunction(int n, double fill = 0.0) : resolution(n), values(n, n, fill) {}
};

// Reorders nodes by `order`, partitions them into N contiguous maximally
// equal blocks (larger blocks first), and averages adjacency entries over
// each block pair. Diagonal adjacency cells are excluded from within-block
// means: self-loops are structurally zero and would bias small blocks.
StepFunction step_function_of_graph(const Mat& adjacency, const std::vector<int>& order, int N);

// Aligns every graph by its mask scores (descending), converts each to a
// step function, and averages elementwise.
StepFunction estimate_group_graphon(const std::vector<Mat>& soft_adjacencies,
                                    const std::vector<Mat>& edge_masks, int N);

// Cut norm of an N x N kernel: (1/N^2) sup_{S,T} |sum_{S x T} D|. The
// exact version enumerates S with a Gray code and picks the optimal T in
// closed form per S; cost 2^N * N, N <= 20.
double cut_norm_exact(const Mat& d);

// Literal enumeration over all (S, T) pairs; the oracle for
// cut_norm_exact. Cost 4^N * N, N <= 10.
double cut_norm_naive(const Mat& d);

enum class CutDistanceMode { exact, anneal };

// Cut distance with measure-preserving maps restricted to block
// permutations. exact: minimum over all N! permutations (N <= 8).
// anneal: simulated annealing seeded by descending-row-sum alignment;
// an upper bound on the exact value.
double cut_distance(const StepFunction& w1, const StepFunction& w2, CutDistanceMode mode);

// Measure-normalized L2 distance sqrt((1/N^2) sum (W1-W2)^2). Dominates
// the cut distance, so it serves as the tractable training surrogate.
double graphon_l2(const StepFunction& w1, const StepFunction& w2);

// Graphon of a Bernoulli(p) confounder OR-ed over graphs drawn from w_st:
// off-diagonal entries become w + p(1-w), the diagonal stays.
StepFunction bernoulli_or_mixture(const StepFunction& w_st, double p);

// Block-averages a resolution-M step function down to N blocks (N | M).
StepFunction coarsen(const StepFunction& w, int N);

// gap = cut norm of (W - its N-block coarsening expanded back to M);
// bound = (2 / sqrt(ln N)) * ||W||_2. Weak regularity says gap <= bound.
std::pair<double, double> weak_regularity_gap(const StepFunction& w, int N);

// Random graph with edge probabilities w[block(i)][block(j)]. With
// equitable_blocks, node i sits in block floor(i*N/n) so the identity
// order aligns the sample with w; otherwise blocks are drawn uniformly.
Graph sample_step_function_graph(const StepFunction& w, int num_nodes, uint64_t seed,
                                 bool equitable_blocks);

}  // namespace uil
