#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "uil/mat.hpp"

namespace uil {

// Reverse-mode autodiff over matrix-valued operations. A Tape owns every
// intermediate value of one forward computation; construction order is the
// topological order, so backward() is a single reverse sweep. Ops are
// matrix-granular (one node per matrix, not per scalar) to keep tape
// overhead negligible next to the arithmetic.
enum class Op : uint8_t {
  input,
  matmul,
  add,
  add_row,
  affine,
  smul,
  mul,
  bcast_mul,
  relu,
  sigmoid,
  concat_cols,
  concat_rows,
  gather_rows,
  edges_to_adj,
  mean_rows,
  sum_all,
  pair_sum_rows,
  ce_row_mean,
  abs_val,
  frob_diff,
  block_mean,
  weighted_sum,
};

using NodeId = int;

struct TapeNode {
  Op op;
  bool requires_grad = false;
  Mat value;
  Mat grad;  // allocated lazily by backward()
  std::vector<NodeId> inputs;
  std::vector<int> ints;      // op-specific index data (labels, edge pairs, order)
  std::vector<double> reals;  // op-specific coefficients
};

class Tape {
 public:
  // Leaf holding a value; requires_grad marks trainable parameters.
  NodeId input(Mat value, bool requires_grad);
  NodeId constant(Mat value) { return input(std::move(value), false); }

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  // a (n x d) + row (1 x d) broadcast over rows.
  NodeId add_row(NodeId a, NodeId row);
  // s * a + t, elementwise with constant coefficients.
  NodeId affine(NodeId a, double s, double t);
  // a * s where s is a 1x1 node (broadcast scalar).
  NodeId smul(NodeId a, NodeId s);
  NodeId mul(NodeId a, NodeId b);  // elementwise
  // x (n x d) scaled per row by col (n x 1).
  NodeId bcast_mul(NodeId x, NodeId col);
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId concat_rows(const std::vector<NodeId>& parts);
  NodeId gather_rows(NodeId a, std::vector<int> idx);
  // Scatter per-pair values (E x 1) onto an n x n matrix, zeros elsewhere.
  NodeId edges_to_adj(NodeId vals, const std::vector<std::pair<int, int>>& pairs, int n);
  NodeId mean_rows(NodeId a);
  NodeId sum_all(NodeId a);
  // out[i*B + j] = a[i] + b[j] over all row pairs of two B x d inputs.
  NodeId pair_sum_rows(NodeId a, NodeId b);
  // Mean cross-entropy of logit rows against integer labels.
  NodeId ce_row_mean(NodeId logits, std::vector<int> labels);
  NodeId abs_val(NodeId a);
  // Frobenius norm of (a - b) as a 1x1 node.
  NodeId frob_diff(NodeId a, NodeId b);
  // Step function of an adjacency node: nodes reordered by `order`, then
  // averaged over contiguous maximally equal block pairs, diagonal cells
  // excluded within blocks. The order itself carries no gradient.
  NodeId block_mean(NodeId adj, const std::vector<int>& order, int num_blocks);
  // sum_i w_i * x_i over same-shaped inputs.
  NodeId weighted_sum(const std::vector<NodeId>& xs, const std::vector<double>& ws);

  const Mat& value(NodeId id) const { return nodes_[id].value; }
  const Mat& grad(NodeId id) const;
  // nullptr when the node never received gradient (e.g. unused parameter).
  const Mat* maybe_grad(NodeId id) const;
  double scalar(NodeId id) const;
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }

  // Reverse sweep from a 1x1 loss node. Grads accumulate; call once per tape.
  void backward(NodeId loss);

  size_t size() const { return nodes_.size(); }

 private:
  NodeId push(TapeNode n);
  std::vector<TapeNode> nodes_;
};

}  // namespace uil
