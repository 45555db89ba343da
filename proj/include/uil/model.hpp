#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "uil/autodiff.hpp"
#include "uil/graph.hpp"

namespace uil {

struct ModelConfig {
  int layers = 3;       // GIN depth per stack
  int hidden = 32;      // width d of all hidden layers
  int feature_dim = 1;  // d_x
  int classes = 4;      // C
  double rho_init = 0.7;
};

// One GIN layer: learnable epsilon plus an MLP with two hidden layers.
struct GinLayer {
  Mat eps;  // 1x1
  Mat w1, b1, w2, b2, w3, b3;
};

// Two-layer perceptron head used by the mask networks.
struct Mlp {
  Mat w1, b1, w2, b2;
};

// The extractor owns its own GIN stack; the shared encoder embeds masked
// graphs. mask_node scores each node representation, mask_edge scores each
// ordered pair of endpoint representations.
struct ModelParams {
  ModelConfig config;
  std::vector<GinLayer> extractor;
  std::vector<GinLayer> encoder;
  Mlp mask_node;
  Mlp mask_edge;
  Mat classifier_w, classifier_b;
  Mat rho_raw;  // 1x1; stable ratio = sigmoid(rho_raw)

  double rho() const;
};

ModelParams init_params(const ModelConfig& config, uint64_t seed);

// Stable enumeration of all trainable tensors; the single source of
// ordering truth for checkpoints, staging, and gradient readback.
std::vector<std::pair<std::string, Mat*>> named_tensors(ModelParams& p);
std::vector<std::pair<std::string, const Mat*>> named_tensors(const ModelParams& p);
long param_count(const ModelParams& p);

// --- Tape-side forward pass ---

struct GinLayerNodes {
  NodeId eps, w1, b1, w2, b2, w3, b3;
};
struct MlpNodes {
  NodeId w1, b1, w2, b2;
};
struct ParamNodes {
  std::vector<GinLayerNodes> extractor, encoder;
  MlpNodes mask_node, mask_edge;
  NodeId classifier_w = -1, classifier_b = -1, rho_raw = -1;
  std::vector<NodeId> flat;  // aligned with named_tensors order
};

ParamNodes stage_params(Tape& tape, const ModelParams& params, bool requires_grad = true);

struct EncodeNodes {
  NodeId z;  // |V| x d node representations
  NodeId h;  // 1 x d mean readout
};

EncodeNodes gin_encode_tape(Tape& tape, const std::vector<GinLayerNodes>& stack, NodeId features,
                            NodeId edge_weights);

struct MaskNodes {
  NodeId node_mask = -1;  // |V| x 1 in (0,1)
  NodeId edge_mask = -1;  // |V| x |V|, symmetric, zero off support
  NodeId node_comp = -1;  // 1 - node_mask
  NodeId edge_comp = -1;  // 1 - edge_mask (only meaningful on support)
};

MaskNodes extract_masks_tape(Tape& tape, NodeId z, const Graph& g, const ParamNodes& p);

struct ForwardNodes {
  NodeId adjacency = -1, features = -1;
  bool clamped = false;
  MaskNodes masks;
  NodeId stable_adj = -1, stable_feat = -1, env_adj = -1, env_feat = -1;
  NodeId h_st = -1, h_en = -1, logits = -1;
};

// Full pass: encode the unmasked graph, derive masks, re-encode the stable
// part and the environmental complement, classify the stable readout. With
// clamp_masks the mask networks are skipped entirely and the stable part
// is the graph itself (the plain-GIN training path). need_env_rep=false
// skips the environmental re-encode when nothing downstream consumes it.
ForwardNodes forward_tape(Tape& tape, const Graph& g, const ParamNodes& p, bool clamp_masks,
                          bool need_env_rep = true);

// --- Plain (non-tape) views of the same computations ---

struct Representations {
  Mat z;
  Mat h;  // 1 x d
};

Representations gin_encode(const Graph& g, const Mat& edge_weights,
                           const std::vector<GinLayer>& stack);

StableMasks extract_masks(const Mat& z, const Graph& g, const ModelParams& params);

struct ForwardResult {
  StableMasks masks;
  Mat h_st, h_en, logits;
};

ForwardResult forward(const Graph& g, const ModelParams& params, bool clamp_masks = false);

// --- Gradient verification ---

struct GradCheckReport {
  int num_checked = 0;
  double max_rel_error = 0.0;
  std::string worst_tensor;
  int worst_index = -1;
};

using LossFn = std::function<double(const ModelParams&)>;
// Returns (loss, per-tensor gradients in named_tensors order).
using GradFn = std::function<std::pair<double, std::vector<Mat>>(const ModelParams&)>;

// Central finite differences on randomly sampled scalar parameters,
// compared against the analytic gradients. Throws on non-finite loss.
GradCheckReport grad_check(const LossFn& loss_fn, const GradFn& grad_fn, ModelParams params,
                           int num_samples, double step, uint64_t seed);

// --- Persistence ---

// JSON header (architecture, seed, epoch, tensor table) followed by the
// raw tensor data as little-endian doubles in header order.
void save_checkpoint(const ModelParams& params, const std::string& path, uint64_t seed, int epoch);

struct Checkpoint {
  ModelParams params;
  uint64_t seed = 0;
  int epoch = 0;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace uil
