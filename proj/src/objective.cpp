#include "uil/objective.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace uil {

GraphonBufferState::GraphonBufferState(int num_classes, int num_envs, int n, double gamma)
    : classes(num_classes), envs(num_envs), resolution(n), decay(gamma) {
  if (num_classes < 1 || num_envs < 1 || n < 1) throw std::runtime_error("buffer shape invalid");
  if (gamma < 0.0 || gamma >= 1.0) throw std::runtime_error("EMA decay must be in [0,1)");
  cells.resize(static_cast<size_t>(classes) * envs);
}

void GraphonBufferState::reset() {
  for (Mat& c : cells) c = Mat();
}

namespace {

double row_ce(const Mat& logits, int label) {
  double m = logits(0, 0);
  for (int c = 1; c < logits.cols; ++c) m = std::max(m, logits(0, c));
  double lse = 0.0;
  for (int c = 0; c < logits.cols; ++c) lse += std::exp(logits(0, c) - m);
  return m + std::log(lse) - logits(0, label);
}

double frobenius_distance(const Mat& a, const Mat& b) {
  double sum = 0.0;
  for (size_t k = 0; k < a.size(); ++k) {
    double d = a.a[k] - b.a[k];
    sum += d * d;
  }
  return std::sqrt(sum);
}

int undirected_edge_count(const Graph& g) {
  int m = 0;
  for (int i = 0; i < g.num_nodes; ++i)
    for (int j = i + 1; j < g.num_nodes; ++j)
      if (g.adjacency(i, j) != 0.0) ++m;
  return m;
}

}  // namespace

double loss_stable(const std::vector<const Graph*>& batch, const ModelParams& params) {
  if (batch.empty()) throw std::runtime_error("loss_stable needs a nonempty batch");
  double total = 0.0;
  for (const Graph* g : batch) total += row_ce(forward(*g, params).logits, g->label);
  return total / static_cast<double>(batch.size());
}

double loss_reg_term(const StableMasks& masks, const Graph& g, double rho) {
  const int k = g.num_nodes;
  double mean = 0.0;
  int over = 0;
  for (double v : masks.node_mask) {
    mean += v;
    if (v > kMaskThreshold) ++over;
  }
  mean /= k;
  double r = std::abs(mean - rho) + std::abs(static_cast<double>(over) / k - rho);

  int m = undirected_edge_count(g);
  if (m > 0) {
    double esum = mat_sum(masks.edge_mask);
    int eover = 0;
    for (int i = 0; i < g.num_nodes; ++i)
      for (int j = i + 1; j < g.num_nodes; ++j)
        if (g.adjacency(i, j) != 0.0 && masks.edge_mask(i, j) > kMaskThreshold) ++eover;
    r += std::abs(esum / (2.0 * m) - rho) + std::abs(static_cast<double>(eover) / m - rho);
  }
  return r;
}

double loss_reg(const std::vector<const Graph*>& graphs, const std::vector<StableMasks>& masks,
                double rho) {
  if (graphs.empty() || graphs.size() != masks.size())
    throw std::runtime_error("loss_reg needs matching nonempty graph/mask lists");
  double total = 0.0;
  for (size_t i = 0; i < graphs.size(); ++i) total += loss_reg_term(masks[i], *graphs[i], rho);
  return total / static_cast<double>(graphs.size());
}

double loss_sem(const std::vector<Mat>& h_st, const std::vector<Mat>& h_en,
                const std::vector<int>& labels, const ModelParams& params) {
  const size_t b = h_st.size();
  if (b == 0 || h_en.size() != b || labels.size() != b)
    throw std::runtime_error("loss_sem needs matching nonempty lists");
  double total = 0.0;
  Mat logits(1, params.config.classes);
  for (size_t i = 0; i < b; ++i)
    for (size_t j = 0; j < b; ++j) {
      for (int c = 0; c < logits.cols; ++c) {
        double z = params.classifier_b(0, c);
        for (int d = 0; d < params.classifier_w.rows; ++d)
          z += (h_st[i](0, d) + h_en[j](0, d)) * params.classifier_w(d, c);
        logits(0, c) = z;
      }
      total += row_ce(logits, labels[i]);
    }
  return total / (static_cast<double>(b) * b);
}

void update_graphon_buffers(GraphonBufferState& buffers,
                            const std::vector<const Graph*>& graphs,
                            const std::vector<StableMasks>& masks) {
  if (graphs.size() != masks.size())
    throw std::runtime_error("update_graphon_buffers needs matching graph/mask lists");
  std::map<std::pair<int, int>, std::vector<size_t>> groups;
  for (size_t i = 0; i < graphs.size(); ++i) {
    const Graph& g = *graphs[i];
    if (g.label < 0 || g.label >= buffers.classes)
      throw std::runtime_error("graph label outside buffer range");
    if (g.inferred_env < 0 || g.inferred_env >= buffers.envs)
      throw std::runtime_error("graph lacks an inferred environment in buffer range");
    groups[{g.label, g.inferred_env}].push_back(i);
  }
  for (auto& [key, members] : groups) {
    std::vector<Mat> adjs, ems;
    adjs.reserve(members.size());
    ems.reserve(members.size());
    for (size_t i : members) {
      adjs.push_back(apply_masks(*graphs[i], masks[i]).first.soft_adjacency);
      ems.push_back(masks[i].edge_mask);
    }
    StepFunction estimate = estimate_group_graphon(adjs, ems, buffers.resolution);
    Mat& cell = buffers.cell(key.first, key.second);
    if (cell.empty()) {
      cell = estimate.values;
    } else {
      for (size_t k = 0; k < cell.size(); ++k)
        cell.a[k] = buffers.decay * cell.a[k] + (1.0 - buffers.decay) * estimate.values.a[k];
    }
  }
}

double loss_str(const GraphonBufferState& buffers) {
  double total = 0.0;
  for (int y = 0; y < buffers.classes; ++y)
    for (int e1 = 0; e1 < buffers.envs; ++e1) {
      if (!buffers.populated(y, e1)) continue;
      for (int e2 = e1 + 1; e2 < buffers.envs; ++e2) {
        if (!buffers.populated(y, e2)) continue;
        total += frobenius_distance(buffers.cell(y, e1), buffers.cell(y, e2));
      }
    }
  return total;
}

LossBreakdown total_loss(const std::vector<const Graph*>& batch, const ModelParams& params,
                         GraphonBufferState* buffers, const LossWeights& weights) {
  if (batch.empty()) throw std::runtime_error("total_loss needs a nonempty batch");
  LossBreakdown out;
  out.rho = params.rho();
  std::vector<StableMasks> masks;
  std::vector<Mat> h_st, h_en;
  std::vector<int> labels;
  double ce = 0.0;
  for (const Graph* g : batch) {
    ForwardResult f = forward(*g, params);
    ce += row_ce(f.logits, g->label);
    masks.push_back(std::move(f.masks));
    h_st.push_back(std::move(f.h_st));
    h_en.push_back(std::move(f.h_en));
    labels.push_back(g->label);
  }
  out.sta = ce / static_cast<double>(batch.size());
  out.reg = loss_reg(batch, masks, out.rho);
  out.sem = loss_sem(h_st, h_en, labels, params);
  if (buffers) {
    update_graphon_buffers(*buffers, batch, masks);
    out.str = loss_str(*buffers);
  }
  out.total = out.sta + out.reg + weights.alpha * out.str + weights.beta * out.sem;
  return out;
}

BatchLossNodes batch_loss_tape(Tape& tape, const std::vector<const Graph*>& batch,
                               const ParamNodes& params, const GraphonBufferState* buffers,
                               const LossOptions& options) {
  if (batch.empty()) throw std::runtime_error("batch_loss_tape needs a nonempty batch");
  const int b = static_cast<int>(batch.size());
  const bool masked = options.use_masks;
  BatchLossNodes out;

  std::vector<NodeId> logits_list, hst_list, hen_list;
  std::vector<int> labels;
  for (const Graph* g : batch) {
    ForwardNodes f =
        forward_tape(tape, *g, params, !masked, masked && options.sem_on);
    logits_list.push_back(f.logits);
    hst_list.push_back(f.h_st);
    if (f.h_en >= 0) hen_list.push_back(f.h_en);
    labels.push_back(g->label);
    out.forwards.push_back(f);
  }

  std::vector<NodeId> terms;
  std::vector<double> term_weights;

  out.sta = tape.ce_row_mean(tape.concat_rows(logits_list), labels);
  terms.push_back(out.sta);
  term_weights.push_back(1.0);

  if (masked && options.reg_on) {
    NodeId rho = tape.sigmoid(params.rho_raw);
    NodeId neg_rho = tape.affine(rho, -1.0, 0.0);
    std::vector<NodeId> per_graph;
    for (int i = 0; i < b; ++i) {
      const Graph& g = *batch[i];
      const MaskNodes& m = out.forwards[i].masks;
      const Mat& nm = tape.value(m.node_mask);
      int over = 0;
      for (double v : nm.a)
        if (v > kMaskThreshold) ++over;
      NodeId mean_n = tape.affine(tape.sum_all(m.node_mask), 1.0 / g.num_nodes, 0.0);
      NodeId r = tape.add(
          tape.abs_val(tape.add(mean_n, neg_rho)),
          tape.abs_val(tape.affine(rho, -1.0, static_cast<double>(over) / g.num_nodes)));
      int edges = undirected_edge_count(g);
      if (edges > 0) {
        const Mat& em = tape.value(m.edge_mask);
        int eover = 0;
        for (int p = 0; p < g.num_nodes; ++p)
          for (int q = p + 1; q < g.num_nodes; ++q)
            if (g.adjacency(p, q) != 0.0 && em(p, q) > kMaskThreshold) ++eover;
        NodeId mean_e = tape.affine(tape.sum_all(m.edge_mask), 1.0 / (2.0 * edges), 0.0);
        NodeId re = tape.add(
            tape.abs_val(tape.add(mean_e, neg_rho)),
            tape.abs_val(tape.affine(rho, -1.0, static_cast<double>(eover) / edges)));
        r = tape.add(r, re);
      }
      per_graph.push_back(r);
    }
    out.reg = tape.weighted_sum(per_graph, std::vector<double>(b, 1.0 / b));
    terms.push_back(out.reg);
    term_weights.push_back(1.0);
  }

  if (masked && options.sem_on) {
    NodeId pairs = tape.pair_sum_rows(tape.concat_rows(hst_list), tape.concat_rows(hen_list));
    NodeId plogits = tape.add_row(tape.matmul(pairs, params.classifier_w), params.classifier_b);
    std::vector<int> plabels(static_cast<size_t>(b) * b);
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < b; ++j) plabels[static_cast<size_t>(i) * b + j] = labels[i];
    out.sem = tape.ce_row_mean(plogits, std::move(plabels));
    terms.push_back(out.sem);
    term_weights.push_back(options.beta);
  }

  if (masked && options.str_on) {
    if (!buffers) throw std::runtime_error("structural loss requested without buffer state");
    std::map<std::pair<int, int>, std::vector<int>> groups;
    for (int i = 0; i < b; ++i) {
      const Graph& g = *batch[i];
      if (g.label < 0 || g.label >= buffers->classes)
        throw std::runtime_error("graph label outside buffer range");
      if (g.inferred_env < 0 || g.inferred_env >= buffers->envs)
        throw std::runtime_error("structural loss needs inferred environments in range");
      groups[{g.label, g.inferred_env}].push_back(i);
    }
    std::map<std::pair<int, int>, NodeId> cell_nodes;
    for (auto& [key, members] : groups) {
      std::vector<NodeId> parts;
      for (int i : members) {
        const ForwardNodes& f = out.forwards[i];
        auto order = argsort_desc(mask_alignment_scores(tape.value(f.masks.edge_mask)));
        parts.push_back(
            tape.block_mean(f.stable_adj, order, options.graphon_resolution));
      }
      NodeId estimate =
          tape.weighted_sum(parts, std::vector<double>(parts.size(), 1.0 / parts.size()));
      NodeId blended = estimate;
      if (buffers->populated(key.first, key.second)) {
        NodeId prev = tape.constant(buffers->cell(key.first, key.second));
        blended = tape.weighted_sum({prev, estimate}, {buffers->decay, 1.0 - buffers->decay});
      }
      cell_nodes[key] = blended;
      out.pending.push_back({key.first, key.second, blended});
    }
    std::vector<NodeId> pair_terms;
    for (int y = 0; y < buffers->classes; ++y)
      for (int e1 = 0; e1 < buffers->envs; ++e1)
        for (int e2 = e1 + 1; e2 < buffers->envs; ++e2) {
          auto node_of = [&](int e) -> NodeId {
            auto it = cell_nodes.find({y, e});
            if (it != cell_nodes.end()) return it->second;
            if (buffers->populated(y, e)) return tape.constant(buffers->cell(y, e));
            return -1;
          };
          NodeId n1 = node_of(e1), n2 = node_of(e2);
          if (n1 >= 0 && n2 >= 0) pair_terms.push_back(tape.frob_diff(n1, n2));
        }
    out.str = pair_terms.empty()
                  ? tape.constant(Mat(1, 1))
                  : tape.weighted_sum(pair_terms, std::vector<double>(pair_terms.size(), 1.0));
    terms.push_back(out.str);
    term_weights.push_back(options.alpha);
  }

  out.total = tape.weighted_sum(terms, term_weights);
  return out;
}

void commit_buffer_updates(GraphonBufferState& buffers, const Tape& tape,
                           const std::vector<PendingBufferUpdate>& pending) {
  for (const PendingBufferUpdate& p : pending) buffers.cell(p.label, p.env) = tape.value(p.blended);
}

}  // namespace uil
