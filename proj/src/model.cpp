#include "uil/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "uil/rng.hpp"

namespace uil {

namespace {

// Single source of tensor naming/ordering; everything that walks the
// parameter set goes through here.
template <class Params, class F>
void visit_params(Params& p, F&& f) {
  auto visit_stack = [&](const char* prefix, auto& layers) {
    for (size_t l = 0; l < layers.size(); ++l) {
      std::string base = std::string(prefix) + "." + std::to_string(l) + ".";
      f(base + "eps", layers[l].eps);
      f(base + "w1", layers[l].w1);
      f(base + "b1", layers[l].b1);
      f(base + "w2", layers[l].w2);
      f(base + "b2", layers[l].b2);
      f(base + "w3", layers[l].w3);
      f(base + "b3", layers[l].b3);
    }
  };
  visit_stack("extractor", p.extractor);
  visit_stack("encoder", p.encoder);
  auto visit_mlp = [&](const char* prefix, auto& m) {
    std::string base = std::string(prefix) + ".";
    f(base + "w1", m.w1);
    f(base + "b1", m.b1);
    f(base + "w2", m.w2);
    f(base + "b2", m.b2);
  };
  visit_mlp("mask_node", p.mask_node);
  visit_mlp("mask_edge", p.mask_edge);
  f(std::string("classifier.w"), p.classifier_w);
  f(std::string("classifier.b"), p.classifier_b);
  f(std::string("rho_raw"), p.rho_raw);
}

Mat init_weight(int rows, int cols, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  Mat w(rows, cols);
  for (double& v : w.a) v = rng.uniform(-bound, bound);
  return w;
}

GinLayer init_gin_layer(int in_dim, int d, Rng& rng) {
  GinLayer l;
  l.eps = Mat(1, 1, 0.0);
  l.w1 = init_weight(in_dim, d, rng);
  l.b1 = Mat(1, d);
  l.w2 = init_weight(d, d, rng);
  l.b2 = Mat(1, d);
  l.w3 = init_weight(d, d, rng);
  l.b3 = Mat(1, d);
  return l;
}

Mlp init_mlp(int in_dim, int d, int out_dim, Rng& rng) {
  Mlp m;
  m.w1 = init_weight(in_dim, d, rng);
  m.b1 = Mat(1, d);
  m.w2 = init_weight(d, out_dim, rng);
  m.b2 = Mat(1, out_dim);
  return m;
}

}  // namespace

double ModelParams::rho() const { return 1.0 / (1.0 + std::exp(-rho_raw(0, 0))); }

ModelParams init_params(const ModelConfig& config, uint64_t seed) {
  if (config.layers < 1 || config.hidden < 1 || config.feature_dim < 1 || config.classes < 2)
    throw std::runtime_error("model config out of range");
  if (config.rho_init <= 0.0 || config.rho_init >= 1.0)
    throw std::runtime_error("rho_init must be strictly inside (0,1)");
  Rng rng(seed);
  ModelParams p;
  p.config = config;
  const int d = config.hidden;
  for (int l = 0; l < config.layers; ++l) {
    p.extractor.push_back(init_gin_layer(l == 0 ? config.feature_dim : d, d, rng));
  }
  for (int l = 0; l < config.layers; ++l) {
    p.encoder.push_back(init_gin_layer(l == 0 ? config.feature_dim : d, d, rng));
  }
  p.mask_node = init_mlp(d, d, 1, rng);
  p.mask_edge = init_mlp(2 * d, d, 1, rng);
  p.classifier_w = init_weight(d, config.classes, rng);
  p.classifier_b = Mat(1, config.classes);
  p.rho_raw = Mat(1, 1, std::log(config.rho_init / (1.0 - config.rho_init)));
  return p;
}

std::vector<std::pair<std::string, Mat*>> named_tensors(ModelParams& p) {
  std::vector<std::pair<std::string, Mat*>> out;
  visit_params(p, [&](std::string name, Mat& m) { out.emplace_back(std::move(name), &m); });
  return out;
}

std::vector<std::pair<std::string, const Mat*>> named_tensors(const ModelParams& p) {
  std::vector<std::pair<std::string, const Mat*>> out;
  visit_params(p, [&](std::string name, const Mat& m) { out.emplace_back(std::move(name), &m); });
  return out;
}

long param_count(const ModelParams& p) {
  long n = 0;
  visit_params(p, [&](const std::string&, const Mat& m) { n += static_cast<long>(m.size()); });
  return n;
}

ParamNodes stage_params(Tape& tape, const ModelParams& params, bool requires_grad) {
  ParamNodes nodes;
  nodes.extractor.resize(params.extractor.size());
  nodes.encoder.resize(params.encoder.size());
  // Stage leaves in visit order, then wire the structured views from the
  // flat list; both walks share visit_params, so they cannot drift.
  visit_params(params, [&](const std::string&, const Mat& m) {
    nodes.flat.push_back(tape.input(m, requires_grad));
  });
  size_t i = 0;
  auto next = [&]() { return nodes.flat[i++]; };
  for (auto& l : nodes.extractor) {
    l.eps = next(); l.w1 = next(); l.b1 = next(); l.w2 = next(); l.b2 = next(); l.w3 = next(); l.b3 = next();
  }
  for (auto& l : nodes.encoder) {
    l.eps = next(); l.w1 = next(); l.b1 = next(); l.w2 = next(); l.b2 = next(); l.w3 = next(); l.b3 = next();
  }
  nodes.mask_node = {next(), next(), next(), next()};
  nodes.mask_edge = {next(), next(), next(), next()};
  nodes.classifier_w = next();
  nodes.classifier_b = next();
  nodes.rho_raw = next();
  if (i != nodes.flat.size()) throw std::runtime_error("parameter staging walked out of sync");
  return nodes;
}

EncodeNodes gin_encode_tape(Tape& tape, const std::vector<GinLayerNodes>& stack, NodeId features,
                            NodeId edge_weights) {
  NodeId h = features;
  for (const GinLayerNodes& l : stack) {
    NodeId agg = tape.matmul(edge_weights, h);
    NodeId self = tape.smul(h, tape.affine(l.eps, 1.0, 1.0));
    NodeId comb = tape.add(self, agg);
    NodeId h1 = tape.relu(tape.add_row(tape.matmul(comb, l.w1), l.b1));
    NodeId h2 = tape.relu(tape.add_row(tape.matmul(h1, l.w2), l.b2));
    h = tape.add_row(tape.matmul(h2, l.w3), l.b3);
  }
  return {h, tape.mean_rows(h)};
}

namespace {

NodeId mlp_head(Tape& tape, const MlpNodes& m, NodeId x) {
  NodeId h = tape.relu(tape.add_row(tape.matmul(x, m.w1), m.b1));
  return tape.add_row(tape.matmul(h, m.w2), m.b2);
}

}  // namespace

MaskNodes extract_masks_tape(Tape& tape, NodeId z, const Graph& g, const ParamNodes& p) {
  MaskNodes out;
  out.node_mask = tape.sigmoid(mlp_head(tape, p.mask_node, z));
  out.node_comp = tape.affine(out.node_mask, -1.0, 1.0);

  std::vector<std::pair<int, int>> dir, rev;
  std::vector<int> src, dst;
  for (int i = 0; i < g.num_nodes; ++i)
    for (int j = 0; j < g.num_nodes; ++j)
      if (g.adjacency(i, j) != 0.0) {
        dir.emplace_back(i, j);
        rev.emplace_back(j, i);
        src.push_back(i);
        dst.push_back(j);
      }
  if (dir.empty()) {
    out.edge_mask = tape.constant(Mat(g.num_nodes, g.num_nodes));
  } else {
    NodeId zi = tape.gather_rows(z, src);
    NodeId zj = tape.gather_rows(z, dst);
    NodeId raw = tape.sigmoid(mlp_head(tape, p.mask_edge, tape.concat_cols(zi, zj)));
    // The pair score is not symmetric in (i,j); average both directions.
    NodeId fwd = tape.edges_to_adj(raw, dir, g.num_nodes);
    NodeId bwd = tape.edges_to_adj(raw, rev, g.num_nodes);
    out.edge_mask = tape.affine(tape.add(fwd, bwd), 0.5, 0.0);
  }
  out.edge_comp = tape.affine(out.edge_mask, -1.0, 1.0);
  return out;
}

ForwardNodes forward_tape(Tape& tape, const Graph& g, const ParamNodes& p, bool clamp_masks,
                          bool need_env_rep) {
  ForwardNodes f;
  f.adjacency = tape.constant(g.adjacency);
  f.features = tape.constant(g.node_features);
  f.clamped = clamp_masks;
  if (clamp_masks) {
    f.stable_adj = f.adjacency;
    f.stable_feat = f.features;
    f.h_st = gin_encode_tape(tape, p.encoder, f.stable_feat, f.stable_adj).h;
  } else {
    EncodeNodes ext = gin_encode_tape(tape, p.extractor, f.features, f.adjacency);
    f.masks = extract_masks_tape(tape, ext.z, g, p);
    f.stable_adj = tape.mul(f.adjacency, f.masks.edge_mask);
    f.stable_feat = tape.bcast_mul(f.features, f.masks.node_mask);
    f.h_st = gin_encode_tape(tape, p.encoder, f.stable_feat, f.stable_adj).h;
    if (need_env_rep) {
      f.env_adj = tape.mul(f.adjacency, f.masks.edge_comp);
      f.env_feat = tape.bcast_mul(f.features, f.masks.node_comp);
      f.h_en = gin_encode_tape(tape, p.encoder, f.env_feat, f.env_adj).h;
    }
  }
  f.logits = tape.add_row(tape.matmul(f.h_st, p.classifier_w), p.classifier_b);
  return f;
}

Representations gin_encode(const Graph& g, const Mat& edge_weights,
                           const std::vector<GinLayer>& stack) {
  if (!edge_weights.same_shape(g.adjacency))
    throw std::runtime_error("edge weights do not match graph");
  Tape tape;
  std::vector<GinLayerNodes> nodes;
  for (const GinLayer& l : stack)
    nodes.push_back({tape.constant(l.eps), tape.constant(l.w1), tape.constant(l.b1),
                     tape.constant(l.w2), tape.constant(l.b2), tape.constant(l.w3),
                     tape.constant(l.b3)});
  EncodeNodes enc = gin_encode_tape(tape, nodes, tape.constant(g.node_features),
                                    tape.constant(edge_weights));
  return {tape.value(enc.z), tape.value(enc.h)};
}

StableMasks extract_masks(const Mat& z, const Graph& g, const ModelParams& params) {
  Tape tape;
  ParamNodes p = stage_params(tape, params, false);
  MaskNodes m = extract_masks_tape(tape, tape.constant(z), g, p);
  StableMasks out;
  const Mat& nm = tape.value(m.node_mask);
  out.node_mask.assign(nm.a.begin(), nm.a.end());
  out.edge_mask = tape.value(m.edge_mask);
  return out;
}

ForwardResult forward(const Graph& g, const ModelParams& params, bool clamp_masks) {
  Tape tape;
  ParamNodes p = stage_params(tape, params, false);
  ForwardNodes f = forward_tape(tape, g, p, clamp_masks);
  ForwardResult out;
  if (!clamp_masks) {
    const Mat& nm = tape.value(f.masks.node_mask);
    out.masks.node_mask.assign(nm.a.begin(), nm.a.end());
    out.masks.edge_mask = tape.value(f.masks.edge_mask);
    out.h_en = tape.value(f.h_en);
  }
  out.h_st = tape.value(f.h_st);
  out.logits = tape.value(f.logits);
  return out;
}

GradCheckReport grad_check(const LossFn& loss_fn, const GradFn& grad_fn, ModelParams params,
                           int num_samples, double step, uint64_t seed) {
  auto [loss0, grads] = grad_fn(params);
  if (!std::isfinite(loss0)) throw std::runtime_error("grad_check: loss is not finite");
  auto tensors = named_tensors(params);
  if (grads.size() != tensors.size())
    throw std::runtime_error("grad_check: gradient list does not match tensor list");

  long total = param_count(params);
  Rng rng(seed);
  GradCheckReport report;
  for (int s = 0; s < num_samples; ++s) {
    long flat = static_cast<long>(rng.next_u64() % static_cast<uint64_t>(total));
    size_t t = 0;
    while (flat >= static_cast<long>(tensors[t].second->size())) {
      flat -= static_cast<long>(tensors[t].second->size());
      ++t;
    }
    Mat& tensor = *tensors[t].second;
    double saved = tensor.a[flat];
    tensor.a[flat] = saved + step;
    double up = loss_fn(params);
    tensor.a[flat] = saved - step;
    double down = loss_fn(params);
    tensor.a[flat] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw std::runtime_error("grad_check: perturbed loss is not finite");
    double numeric = (up - down) / (2.0 * step);
    double analytic = grads[t].a[flat];
    double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    double rel = std::abs(numeric - analytic) / denom;
    ++report.num_checked;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_tensor = tensors[t].first;
      report.worst_index = static_cast<int>(flat);
    }
  }
  return report;
}

void save_checkpoint(const ModelParams& params, const std::string& path, uint64_t seed, int epoch) {
  nlohmann::ordered_json header;
  header["schema_version"] = 1;
  header["arch"] = {{"layers", params.config.layers},
                    {"hidden", params.config.hidden},
                    {"feature_dim", params.config.feature_dim},
                    {"classes", params.config.classes},
                    {"rho_init", params.config.rho_init}};
  header["seed"] = seed;
  header["epoch"] = epoch;
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  auto tensors = named_tensors(params);
  for (auto& [name, m] : tensors)
    table.push_back({{"name", name}, {"rows", m->rows}, {"cols", m->cols}});
  header["tensors"] = std::move(table);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  std::string hs = header.dump();
  uint32_t len = static_cast<uint32_t>(hs.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (auto& [name, m] : tensors)
    out.write(reinterpret_cast<const char*>(m->a.data()),
              static_cast<std::streamsize>(m->size() * sizeof(double)));
  if (!out) throw std::runtime_error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string hs(len, '\0');
  in.read(hs.data(), len);
  if (!in) throw std::runtime_error("truncated checkpoint header in " + path);
  nlohmann::json header = nlohmann::json::parse(hs);
  if (header.at("schema_version").get<int>() != 1)
    throw std::runtime_error("unsupported checkpoint schema in " + path);

  ModelConfig config;
  config.layers = header.at("arch").at("layers").get<int>();
  config.hidden = header.at("arch").at("hidden").get<int>();
  config.feature_dim = header.at("arch").at("feature_dim").get<int>();
  config.classes = header.at("arch").at("classes").get<int>();
  config.rho_init = header.at("arch").at("rho_init").get<double>();

  Checkpoint ck;
  ck.params = init_params(config, 0);
  ck.seed = header.at("seed").get<uint64_t>();
  ck.epoch = header.at("epoch").get<int>();

  auto tensors = named_tensors(ck.params);
  const auto& table = header.at("tensors");
  if (table.size() != tensors.size())
    throw std::runtime_error("checkpoint tensor table does not match architecture");
  for (size_t t = 0; t < tensors.size(); ++t) {
    const auto& entry = table.at(t);
    Mat& m = *tensors[t].second;
    if (entry.at("name").get<std::string>() != tensors[t].first ||
        entry.at("rows").get<int>() != m.rows || entry.at("cols").get<int>() != m.cols)
      throw std::runtime_error("checkpoint tensor mismatch at " + tensors[t].first);
    in.read(reinterpret_cast<char*>(m.a.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!in) throw std::runtime_error("truncated checkpoint data in " + path);
  return ck;
}

}  // namespace uil
