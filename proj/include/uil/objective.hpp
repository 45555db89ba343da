#pragma once

#include <vector>

#include "uil/graphon.hpp"
#include "uil/model.hpp"

namespace uil {

// Mask values above this count as selected for the (gradient-stopped)
// ratio indicator.
inline constexpr double kMaskThreshold = 0.5;

struct LossWeights {
  double alpha = 0.5;  // structural-invariance strength
  double beta = 0.5;   // semantic-invariance strength
};

// Per-(class, inferred environment) EMA of the stable group graphon.
// Cells start empty and are reset whenever environments are re-assigned:
// cluster ids are not stable across re-inference, so stale cells would
// compare graphons of unrelated groups.
struct GraphonBufferState {
  int classes = 0;
  int envs = 0;
  int resolution = 0;
  double decay = 0.9;
  std::vector<Mat> cells;  // classes * envs entries; empty Mat = untouched

  GraphonBufferState() = default;
  GraphonBufferState(int num_classes, int num_envs, int n, double gamma = 0.9);

  Mat& cell(int label, int env) { return cells[label * envs + env]; }
  const Mat& cell(int label, int env) const { return cells[label * envs + env]; }
  bool populated(int label, int env) const { return !cell(label, env).empty(); }
  void reset();
};

// --- Loss terms as plain functions (reference semantics for tests) ---

// Mean cross-entropy of the stable-readout logits over the batch.
double loss_stable(const std::vector<const Graph*>& batch, const ModelParams& params);

// r(M, k) = |sum(M)/k - rho| + |#{M > threshold}/k - rho| for the node
// mask (k = |V|) plus the edge mask (k = edge count); the counting term
// sees rho only, mask values reach it without gradient.
double loss_reg_term(const StableMasks& masks, const Graph& g, double rho);
double loss_reg(const std::vector<const Graph*>& graphs, const std::vector<StableMasks>& masks,
                double rho);

// Every stable representation crossed with every environmental one:
// (1/B^2) sum_ij ce(classifier(h_st_i + h_en_j), y_i).
double loss_sem(const std::vector<Mat>& h_st, const std::vector<Mat>& h_en,
                const std::vector<int>& labels, const ModelParams& params);

// Estimates the group graphon of each (label, inferred env) present in
// the batch from the soft stable adjacencies and folds it into the EMA.
void update_graphon_buffers(GraphonBufferState& buffers,
                            const std::vector<const Graph*>& graphs,
                            const std::vector<StableMasks>& masks);

// Sum over classes of pairwise Frobenius distances between that class's
// populated environment cells.
double loss_str(const GraphonBufferState& buffers);

struct LossBreakdown {
  double sta = 0.0, reg = 0.0, sem = 0.0, str = 0.0, total = 0.0, rho = 0.0;
};

// Full objective (L_sta + L_reg) + alpha * L_str + beta * L_sem. Updates
// the buffers in place (pass nullptr to skip the structural term).
LossBreakdown total_loss(const std::vector<const Graph*>& batch, const ModelParams& params,
                         GraphonBufferState* buffers, const LossWeights& weights);

// --- Differentiable batch loss on a tape ---

struct LossOptions {
  double alpha = 0.5;
  double beta = 0.5;
  bool use_masks = true;  // false: plain-GIN cross-entropy path
  bool reg_on = true;
  bool sem_on = true;
  bool str_on = true;
  int graphon_resolution = 12;
};

// A buffer cell value computed on the tape this step. Committing from the
// recorded tape values (rather than re-estimating after the optimizer
// step) keeps the loss and the stored EMA consistent.
struct PendingBufferUpdate {
  int label = 0;
  int env = 0;
  NodeId blended = -1;
};

struct BatchLossNodes {
  NodeId total = -1, sta = -1, reg = -1, sem = -1, str = -1;
  std::vector<ForwardNodes> forwards;  // one per batch graph
  std::vector<PendingBufferUpdate> pending;
};

// Builds the forward passes and every active loss term for one batch on
// one tape. Buffers are read, never written; the pending list carries the
// EMA blends to commit afterwards.
BatchLossNodes batch_loss_tape(Tape& tape, const std::vector<const Graph*>& batch,
                               const ParamNodes& params, const GraphonBufferState* buffers,
                               const LossOptions& options);

void commit_buffer_updates(GraphonBufferState& buffers, const Tape& tape,
                           const std::vector<PendingBufferUpdate>& pending);

}  // namespace uil
