#include "uil/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "uil/rng.hpp"

namespace uil {

namespace {

using nlohmann::ordered_json;

double now_seconds() {
  auto t = std::chrono::steady_clock::now().time_since_epoch();
  return std::chrono::duration<double>(t).count();
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string mode_name(RunMode m) {
  switch (m) {
    case RunMode::uil: return "uil";
    case RunMode::erm: return "erm";
    case RunMode::uil_no_gl: return "uil_no_gl";
    case RunMode::uil_no_sem: return "uil_no_sem";
  }
  throw std::runtime_error("unknown run mode");
}

RunMode parse_mode(const std::string& name) {
  if (name == "uil") return RunMode::uil;
  if (name == "erm") return RunMode::erm;
  if (name == "uil_no_gl") return RunMode::uil_no_gl;
  if (name == "uil_no_sem") return RunMode::uil_no_sem;
  throw std::runtime_error("unknown run mode '" + name + "'");
}

std::string feature_source_name(FeatureSource s) {
  switch (s) {
    case FeatureSource::full: return "full";
    case FeatureSource::gt_stable: return "gt_stable";
    case FeatureSource::gt_env: return "gt_env";
    case FeatureSource::learned_stable: return "learned_stable";
  }
  throw std::runtime_error("unknown feature source");
}

void validate_run_config(const RunConfig& c) {
  if (c.epochs < 0) throw std::runtime_error("epochs must be >= 0");
  if (c.batch_size != 32 && c.batch_size != 64 && c.batch_size != 128 && c.batch_size != 256)
    throw std::runtime_error("batch_size must be one of 32, 64, 128, 256");
  if (c.learning_rate != 1e-2 && c.learning_rate != 1e-3 && c.learning_rate != 1e-4)
    throw std::runtime_error("learning_rate must be one of 1e-2, 1e-3, 1e-4");
  if (c.alpha < 0.1 || c.alpha > 1.5) throw std::runtime_error("alpha must be in [0.1, 1.5]");
  if (c.beta < 0.1 || c.beta > 1.5) throw std::runtime_error("beta must be in [0.1, 1.5]");
  if (c.rho_init < 0.5 || c.rho_init > 1.0)
    throw std::runtime_error("rho_init must be in [0.5, 1.0]");
  if (c.rho_init == 1.0) throw std::runtime_error("rho_init must stay below 1 (logit diverges)");
  if (c.env_k < 2 || c.env_k > 6) throw std::runtime_error("env_k must be in [2, 6]");
  if (c.resolution < 2) throw std::runtime_error("resolution must be >= 2");
  if (c.layers < 1) throw std::runtime_error("layers must be >= 1");
  if (c.hidden < 1) throw std::runtime_error("hidden must be >= 1");
  if (c.warmup_epochs < 0) throw std::runtime_error("warmup_epochs must be >= 0");
}

namespace {

void apply_kv(RunConfig& c, const std::string& key, const std::string& value) {
  try {
    if (key == "train_data") c.train_data = value;
    else if (key == "test_data") c.test_data = value;
    else if (key == "seed") c.seed = std::stoull(value);
    else if (key == "epochs") c.epochs = std::stoi(value);
    else if (key == "batch_size") c.batch_size = std::stoi(value);
    else if (key == "learning_rate") c.learning_rate = std::stod(value);
    else if (key == "alpha") c.alpha = std::stod(value);
    else if (key == "beta") c.beta = std::stod(value);
    else if (key == "rho_init") c.rho_init = std::stod(value);
    else if (key == "env_k") c.env_k = std::stoi(value);
    else if (key == "resolution") c.resolution = std::stoi(value);
    else if (key == "mode") c.mode = parse_mode(value);
    else if (key == "layers") c.layers = std::stoi(value);
    else if (key == "hidden") c.hidden = std::stoi(value);
    else if (key == "warmup_epochs") c.warmup_epochs = std::stoi(value);
    else throw std::runtime_error("unknown config key '" + key + "'");
  } catch (const std::invalid_argument&) {
    throw std::runtime_error("bad value '" + value + "' for config key '" + key + "'");
  } catch (const std::out_of_range&) {
    throw std::runtime_error("bad value '" + value + "' for config key '" + key + "'");
  }
}

void apply_override(RunConfig& c, const std::string& item) {
  size_t eq = item.find('=');
  if (eq == std::string::npos)
    throw std::runtime_error("override '" + item + "' is not of the form key=value");
  apply_kv(c, trim(item.substr(0, eq)), trim(item.substr(eq + 1)));
}

}  // namespace

RunConfig parse_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  RunConfig c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    apply_kv(c, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  for (const std::string& o : overrides) apply_override(c, o);
  validate_run_config(c);
  return c;
}

RunConfig run_config_from_overrides(const std::vector<std::string>& overrides) {
  RunConfig c;
  for (const std::string& o : overrides) apply_override(c, o);
  validate_run_config(c);
  return c;
}

void Adam::step(ModelParams& params, const std::vector<Mat>& grads) {
  auto tensors = named_tensors(params);
  if (grads.size() != tensors.size())
    throw std::runtime_error("optimizer got a gradient list of the wrong length");
  if (m.empty()) {
    m.reserve(tensors.size());
    v.reserve(tensors.size());
    for (auto& [name, tensor] : tensors) {
      m.emplace_back(tensor->rows, tensor->cols);
      v.emplace_back(tensor->rows, tensor->cols);
    }
  }
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < tensors.size(); ++i) {
    Mat& p = *tensors[i].second;
    const Mat& g = grads[i];
    if (!p.same_shape(g))
      throw std::runtime_error("gradient shape mismatch for tensor " + tensors[i].first);
    for (size_t k = 0; k < p.size(); ++k) {
      m[i].a[k] = beta1 * m[i].a[k] + (1.0 - beta1) * g.a[k];
      v[i].a[k] = beta2 * v[i].a[k] + (1.0 - beta2) * g.a[k] * g.a[k];
      p.a[k] -= lr * (m[i].a[k] / c1) / (std::sqrt(v[i].a[k] / c2) + eps);
    }
  }
}

DatasetEval evaluate_dataset(const ModelParams& params, const Dataset& ds, bool clamp_masks,
                             bool want_env, bool want_masks) {
  if (clamp_masks && (want_env || want_masks))
    throw std::runtime_error("clamped evaluation has no masks or environmental branch");
  DatasetEval out;
  const int n = static_cast<int>(ds.graphs.size());
  if (want_env) out.h_en = Mat(n, params.config.hidden);
  if (want_masks) out.masks.reserve(ds.graphs.size());
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    const Graph& g = ds.graphs[i];
    Tape tape;
    ParamNodes p = stage_params(tape, params, false);
    ForwardNodes f = forward_tape(tape, g, p, clamp_masks, want_env);
    const Mat& logits = tape.value(f.logits);
    int pred = 0;
    for (int c = 1; c < logits.cols; ++c)
      if (logits(0, c) > logits(0, pred)) pred = c;
    if (pred == g.label) ++correct;
    if (want_env) {
      const Mat& h = tape.value(f.h_en);
      for (int d = 0; d < h.cols; ++d) out.h_en(i, d) = h(0, d);
    }
    if (want_masks) {
      StableMasks m;
      const Mat& nm = tape.value(f.masks.node_mask);
      m.node_mask.assign(nm.a.begin(), nm.a.end());
      m.edge_mask = tape.value(f.masks.edge_mask);
      out.masks.push_back(std::move(m));
    }
  }
  out.accuracy = n > 0 ? static_cast<double>(correct) / n : 0.0;
  return out;
}

double evaluate_accuracy(const ModelParams& params, const Dataset& ds, bool clamp_masks) {
  return evaluate_dataset(params, ds, clamp_masks, false, false).accuracy;
}

double auc_from_pool(std::vector<std::pair<double, int>> pool) {
  if (pool.empty()) throw std::runtime_error("mask_auc: empty score pool");
  long npos = 0;
  for (auto& [score, positive] : pool) npos += positive ? 1 : 0;
  long nneg = static_cast<long>(pool.size()) - npos;
  if (npos == 0 || nneg == 0)
    throw std::runtime_error("mask_auc: score pool holds a single class");
  std::sort(pool.begin(), pool.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double pos_rank_sum = 0.0;
  size_t i = 0;
  while (i < pool.size()) {
    size_t j = i;
    while (j < pool.size() && pool[j].first == pool[i].first) ++j;
    double shared_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (size_t k = i; k < j; ++k)
      if (pool[k].second) pos_rank_sum += shared_rank;
    i = j;
  }
  return (pos_rank_sum - static_cast<double>(npos) * (npos + 1) / 2.0) /
         (static_cast<double>(npos) * static_cast<double>(nneg));
}

namespace {

double mask_auc_from(const Dataset& ds, const std::vector<StableMasks>& masks) {
  std::vector<std::pair<double, int>> pool;
  for (size_t gi = 0; gi < ds.graphs.size(); ++gi) {
    const Graph& g = ds.graphs[gi];
    if (!g.has_stable_flags())
      throw std::runtime_error("mask_auc: graph " + std::to_string(g.id) +
                               " lacks stable-edge annotations");
    for (auto [i, j] : edge_list(g.adjacency))
      pool.emplace_back(masks[gi].edge_mask(i, j), g.stable_edge_flags(i, j) > 0.5 ? 1 : 0);
  }
  return auc_from_pool(std::move(pool));
}

}  // namespace

double mask_auc(const ModelParams& params, const Dataset& ds) {
  std::vector<StableMasks> masks;
  masks.reserve(ds.graphs.size());
  for (const Graph& g : ds.graphs) masks.push_back(forward(g, params).masks);
  return mask_auc_from(ds, masks);
}

namespace {

void write_env_csv(const std::string& out_dir, int epoch, const Dataset& ds) {
  if (out_dir.empty()) return;
  std::ofstream out(out_dir + "/envs-epoch" + std::to_string(epoch) + ".csv");
  out << "graph_id,inferred_env\n";
  std::vector<const Graph*> order;
  order.reserve(ds.graphs.size());
  for (const Graph& g : ds.graphs) order.push_back(&g);
  std::sort(order.begin(), order.end(),
            [](const Graph* a, const Graph* b) { return a->id < b->id; });
  for (const Graph* g : order) out << g->id << "," << g->inferred_env << "\n";
}

bool dataset_has_flags(const Dataset& ds) {
  if (ds.graphs.empty()) return false;
  for (const Graph& g : ds.graphs)
    if (!g.has_stable_flags()) return false;
  return true;
}

}  // namespace

TrainResult train(const RunConfig& config, Dataset train_ds, const Dataset& test_ds,
                  const std::string& out_dir) {
  validate_run_config(config);
  if (train_ds.graphs.empty()) throw std::runtime_error("train: empty training set");

  int classes = 0;
  const int feature_dim = train_ds.graphs[0].node_features.cols;
  for (const Dataset* ds : {static_cast<const Dataset*>(&train_ds), &test_ds})
    for (const Graph& g : ds->graphs) {
      validate_graph(g);
      if (g.node_features.cols != feature_dim)
        throw std::runtime_error("train: inconsistent feature dimension across graphs");
      classes = std::max(classes, g.label + 1);
    }

  ModelConfig mc;
  mc.layers = config.layers;
  mc.hidden = config.hidden;
  mc.feature_dim = feature_dim;
  mc.classes = classes;
  mc.rho_init = config.rho_init;

  const bool masked = config.mode != RunMode::erm;
  LossOptions opt;
  opt.alpha = config.alpha;
  opt.beta = config.beta;
  opt.use_masks = masked;
  opt.reg_on = masked;
  opt.sem_on = masked && config.mode != RunMode::uil_no_sem;
  opt.str_on = masked && config.mode != RunMode::uil_no_gl;
  opt.graphon_resolution = config.resolution;

  TrainResult result;
  result.params = init_params(mc, config.seed);
  if (opt.str_on)
    result.buffers = GraphonBufferState(classes, config.env_k, config.resolution);

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  std::ofstream losses_out, metrics_out;
  if (!out_dir.empty()) {
    losses_out.open(out_dir + "/losses.jsonl");
    metrics_out.open(out_dir + "/metrics.jsonl");
  }

  const bool test_flags = masked && dataset_has_flags(test_ds);
  Adam adam(config.learning_rate);
  Rng shuffle_rng = Rng(config.seed).fork(0x73687566);  // batch order stream
  Rng env_rng = Rng(config.seed).fork(0x656e7673);      // k-means seed stream

  auto infer_envs = [&](const Mat& h_en, int epoch) {
    assign_environments(train_ds, h_en, config.env_k, env_rng.next_u64());
    result.buffers.reset();
    write_env_csv(out_dir, epoch, train_ds);
  };
  // True once k-means takes over from the warmup's random assignment at the
  // start of the given epoch.
  auto inference_due = [&](int epoch) {
    return opt.str_on && epoch >= config.warmup_epochs && epoch < config.epochs;
  };

  // Warmup environments are uniform draws over the id-sorted graphs, so the
  // assignment does not depend on dataset file order.
  if (config.epochs > 0 && opt.str_on) {
    std::vector<Graph*> by_id;
    by_id.reserve(train_ds.graphs.size());
    for (Graph& g : train_ds.graphs) by_id.push_back(&g);
    std::sort(by_id.begin(), by_id.end(),
              [](const Graph* a, const Graph* b) { return a->id < b->id; });
    for (Graph* g : by_id) g->inferred_env = env_rng.uniform_int(config.env_k);
    write_env_csv(out_dir, 0, train_ds);
    if (inference_due(0))
      infer_envs(evaluate_dataset(result.params, train_ds, false, true, false).h_en, 0);
  }

  std::vector<int> order(train_ds.graphs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  long step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double t0 = now_seconds();
    shuffle_rng.shuffle(order);
    LossBreakdown sums;
    int steps_this_epoch = 0;

    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      size_t stop = std::min(order.size(), start + config.batch_size);
      std::vector<const Graph*> batch;
      batch.reserve(stop - start);
      for (size_t k = start; k < stop; ++k) batch.push_back(&train_ds.graphs[order[k]]);

      Tape tape;
      ParamNodes pn = stage_params(tape, result.params, true);
      BatchLossNodes bl =
          batch_loss_tape(tape, batch, pn, opt.str_on ? &result.buffers : nullptr, opt);
      auto term = [&](NodeId id) { return id >= 0 ? tape.scalar(id) : 0.0; };
      LossBreakdown loss;
      loss.sta = term(bl.sta);
      loss.reg = term(bl.reg);
      loss.sem = term(bl.sem);
      loss.str = term(bl.str);
      loss.total = tape.scalar(bl.total);
      loss.rho = result.params.rho();

      if (!std::isfinite(loss.total)) {
        if (losses_out)
          losses_out << ordered_json{{"step", step},
                                     {"epoch", epoch},
                                     {"error", "non-finite loss"},
                                     {"l_sta", loss.sta},
                                     {"l_reg", loss.reg},
                                     {"l_sem", loss.sem},
                                     {"l_str", loss.str}}
                            .dump()
                     << "\n";
        throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                 " (epoch " + std::to_string(epoch) + ")");
      }

      tape.backward(bl.total);
      auto tensors = named_tensors(result.params);
      std::vector<Mat> grads;
      grads.reserve(pn.flat.size());
      for (size_t i = 0; i < pn.flat.size(); ++i) {
        const Mat* g = tape.maybe_grad(pn.flat[i]);
        // A parameter outside the active computation (e.g. mask nets under
        // erm) never receives gradient; a zero matrix keeps Adam aligned.
        grads.push_back(g ? *g : Mat(tensors[i].second->rows, tensors[i].second->cols));
      }
      adam.step(result.params, grads);
      if (opt.str_on) commit_buffer_updates(result.buffers, tape, bl.pending);

      if (losses_out)
        losses_out << ordered_json{{"step", step},
                                   {"epoch", epoch},
                                   {"l_sta", loss.sta},
                                   {"l_reg", loss.reg},
                                   {"l_sem", loss.sem},
                                   {"l_str", loss.str},
                                   {"total", loss.total},
                                   {"rho", loss.rho}}
                          .dump()
                   << "\n";

      sums.sta += loss.sta;
      sums.reg += loss.reg;
      sums.sem += loss.sem;
      sums.str += loss.str;
      sums.total += loss.total;
      ++steps_this_epoch;
      ++step;
    }

    DatasetEval train_ev =
        evaluate_dataset(result.params, train_ds, !masked, inference_due(epoch + 1), false);
    if (inference_due(epoch + 1)) infer_envs(train_ev.h_en, epoch + 1);
    DatasetEval test_ev = evaluate_dataset(result.params, test_ds, !masked, false, test_flags);

    MetricRecord rec;
    rec.epoch = epoch;
    rec.train_acc = train_ev.accuracy;
    rec.test_acc = test_ev.accuracy;
    rec.mask_auc = test_flags ? mask_auc_from(test_ds, test_ev.masks) : 0.5;
    rec.losses.sta = sums.sta / steps_this_epoch;
    rec.losses.reg = sums.reg / steps_this_epoch;
    rec.losses.sem = sums.sem / steps_this_epoch;
    rec.losses.str = sums.str / steps_this_epoch;
    rec.losses.total = sums.total / steps_this_epoch;
    rec.losses.rho = result.params.rho();
    rec.rho = result.params.rho();
    rec.seconds = now_seconds() - t0;
    result.history.push_back(rec);

    if (metrics_out)
      metrics_out << ordered_json{{"epoch", rec.epoch},
                                  {"train_acc", rec.train_acc},
                                  {"test_acc", rec.test_acc},
                                  {"mask_auc", rec.mask_auc},
                                  {"l_sta", rec.losses.sta},
                                  {"l_reg", rec.losses.reg},
                                  {"l_sem", rec.losses.sem},
                                  {"l_str", rec.losses.str},
                                  {"total", rec.losses.total},
                                  {"rho", rec.rho},
                                  {"seconds", rec.seconds}}
                         .dump()
                  << "\n";
  }
  return result;
}

double DisTable::mean_offdiag() const {
  if (num_envs < 2) return 0.0;
  double sum = 0.0;
  for (int i = 0; i < num_envs; ++i)
    for (int j = 0; j < num_envs; ++j)
      if (i != j) sum += dis(i, j);
  return sum / (static_cast<double>(num_envs) * (num_envs - 1));
}

DisTable dis_table(const Dataset& ds, FeatureSource source, const ModelParams* params,
                   int resolution) {
  if (ds.graphs.empty()) throw std::runtime_error("dis_table: empty dataset");
  if (source == FeatureSource::learned_stable && params == nullptr)
    throw std::runtime_error("dis_table: learned source needs model parameters");

  std::vector<int> env_tags;
  for (const Graph& g : ds.graphs) {
    if (!g.env.has_value())
      throw std::runtime_error("dis_table: graph " + std::to_string(g.id) +
                               " lacks a ground-truth environment tag");
    env_tags.push_back(*g.env);
  }
  std::sort(env_tags.begin(), env_tags.end());
  env_tags.erase(std::unique(env_tags.begin(), env_tags.end()), env_tags.end());
  auto env_index = [&](int tag) {
    return static_cast<int>(std::lower_bound(env_tags.begin(), env_tags.end(), tag) -
                            env_tags.begin());
  };
  const int k = static_cast<int>(env_tags.size());

  int classes = 0;
  for (const Graph& g : ds.graphs) classes = std::max(classes, g.label + 1);

  // One (adjacency, alignment-mask) view per graph for the chosen source.
  auto view = [&](const Graph& g) -> std::pair<Mat, Mat> {
    switch (source) {
      case FeatureSource::full:
        return {g.adjacency, g.adjacency};
      case FeatureSource::gt_stable: {
        if (!g.has_stable_flags())
          throw std::runtime_error("dis_table: graph " + std::to_string(g.id) +
                                   " lacks stable-edge annotations");
        return {g.stable_edge_flags, g.stable_edge_flags};
      }
      case FeatureSource::gt_env: {
        if (!g.has_stable_flags())
          throw std::runtime_error("dis_table: graph " + std::to_string(g.id) +
                                   " lacks stable-edge annotations");
        Mat env_adj(g.num_nodes, g.num_nodes);
        for (size_t i = 0; i < env_adj.size(); ++i)
          env_adj.a[i] = g.adjacency.a[i] * (1.0 - g.stable_edge_flags.a[i]);
        return {env_adj, env_adj};
      }
      case FeatureSource::learned_stable: {
        ForwardResult r = forward(g, *params);
        Mat soft(g.num_nodes, g.num_nodes);
        for (size_t i = 0; i < soft.size(); ++i)
          soft.a[i] = g.adjacency.a[i] * r.masks.edge_mask.a[i];
        return {std::move(soft), std::move(r.masks.edge_mask)};
      }
    }
    throw std::runtime_error("unknown feature source");
  };

  std::map<std::pair<int, int>, std::pair<std::vector<Mat>, std::vector<Mat>>> groups;
  for (const Graph& g : ds.graphs) {
    auto [adj, mask] = view(g);
    auto& cell = groups[{g.label, env_index(*g.env)}];
    cell.first.push_back(std::move(adj));
    cell.second.push_back(std::move(mask));
  }

  std::map<std::pair<int, int>, StepFunction> graphons;
  for (auto& [key, cell] : groups)
    graphons[key] = estimate_group_graphon(cell.first, cell.second, resolution);

  const CutDistanceMode mode =
      resolution <= 6 ? CutDistanceMode::exact : CutDistanceMode::anneal;

  DisTable out;
  out.num_envs = k;
  out.dis = Mat(k, k);
  for (int e1 = 0; e1 < k; ++e1)
    for (int e2 = e1 + 1; e2 < k; ++e2) {
      double sum = 0.0;
      int used = 0;
      for (int y = 0; y < classes; ++y) {
        auto g1 = graphons.find({y, e1});
        auto g2 = graphons.find({y, e2});
        if (g1 == graphons.end() || g2 == graphons.end()) {
          out.skipped.push_back({e1, e2, y});
          continue;
        }
        sum += cut_distance(g1->second, g2->second, mode);
        ++used;
      }
      const double d = used > 0 ? sum / used : 0.0;
      out.dis(e1, e2) = d;
      out.dis(e2, e1) = d;
    }
  return out;
}

void run_experiment(const RunConfig& config, const std::string& out_dir) {
  validate_run_config(config);
  if (config.train_data.empty() || config.test_data.empty())
    throw std::runtime_error("run_experiment: config must name train_data and test_data");
  std::filesystem::create_directories(out_dir);

  Dataset train_ds = read_jsonl(config.train_data);
  Dataset test_ds = read_jsonl(config.test_data);

  const double t0 = now_seconds();
  TrainResult trained = train(config, train_ds, test_ds, out_dir);
  const double train_seconds = now_seconds() - t0;

  const bool masked = config.mode != RunMode::erm;
  const double train_acc = evaluate_accuracy(trained.params, train_ds, !masked);
  const double test_acc = evaluate_accuracy(trained.params, test_ds, !masked);

  ordered_json report;
  report["schema_version"] = 1;
  report["mode"] = mode_name(config.mode);
  report["seed"] = config.seed;
  report["config"] = ordered_json{{"train_data", config.train_data},
                                  {"test_data", config.test_data},
                                  {"epochs", config.epochs},
                                  {"batch_size", config.batch_size},
                                  {"learning_rate", config.learning_rate},
                                  {"alpha", config.alpha},
                                  {"beta", config.beta},
                                  {"rho_init", config.rho_init},
                                  {"env_k", config.env_k},
                                  {"resolution", config.resolution},
                                  {"layers", config.layers},
                                  {"hidden", config.hidden}};
  report["train_accuracy"] = train_acc;
  report["test_accuracy"] = test_acc;
  report["rho"] = trained.params.rho();

  if (masked && dataset_has_flags(test_ds)) report["mask_auc"] = mask_auc(trained.params, test_ds);

  // Distance tables over the test split (uniform environments there).
  const int dis_resolution = 6;
  bool have_env_tags = true;
  for (const Graph& g : test_ds.graphs)
    if (!g.env.has_value()) have_env_tags = false;
  if (have_env_tags && !test_ds.graphs.empty()) {
    ordered_json tables;
    std::vector<FeatureSource> sources{FeatureSource::full};
    if (dataset_has_flags(test_ds)) {
      sources.push_back(FeatureSource::gt_stable);
      sources.push_back(FeatureSource::gt_env);
    }
    if (masked) sources.push_back(FeatureSource::learned_stable);
    for (FeatureSource s : sources) {
      DisTable table = dis_table(test_ds, s, &trained.params, dis_resolution);
      ordered_json entry;
      entry["mean_offdiag"] = table.mean_offdiag();
      ordered_json rows = ordered_json::array();
      for (int i = 0; i < table.num_envs; ++i) {
        ordered_json row = ordered_json::array();
        for (int j = 0; j < table.num_envs; ++j) row.push_back(table.dis(i, j));
        rows.push_back(row);
      }
      entry["dis"] = rows;
      entry["skipped"] = ordered_json::array();
      for (auto& [e1, e2, y] : table.skipped)
        entry["skipped"].push_back(ordered_json{{"env_a", e1}, {"env_b", e2}, {"class", y}});
      tables[feature_source_name(s)] = entry;
    }
    report["dis_tables"] = tables;

    // Group graphons of the learned stable part, one CSV per (class, env).
    if (masked) {
      std::map<std::pair<int, int>, std::pair<std::vector<Mat>, std::vector<Mat>>> groups;
      for (const Graph& g : test_ds.graphs) {
        ForwardResult r = forward(g, trained.params);
        Mat soft(g.num_nodes, g.num_nodes);
        for (size_t i = 0; i < soft.size(); ++i)
          soft.a[i] = g.adjacency.a[i] * r.masks.edge_mask.a[i];
        groups[{g.label, *g.env}].first.push_back(std::move(soft));
        groups[{g.label, *g.env}].second.push_back(std::move(r.masks.edge_mask));
      }
      for (auto& [key, cell] : groups) {
        StepFunction w = estimate_group_graphon(cell.first, cell.second, dis_resolution);
        std::ofstream csv(out_dir + "/graphon_y" + std::to_string(key.first) + "_e" +
                          std::to_string(key.second) + ".csv");
        for (int i = 0; i < w.resolution; ++i) {
          for (int j = 0; j < w.resolution; ++j) csv << (j ? "," : "") << w.values(i, j);
          csv << "\n";
        }
      }
    }
  }

  if (!trained.history.empty()) {
    const MetricRecord& last = trained.history.back();
    report["final_epoch"] = ordered_json{{"epoch", last.epoch},
                                         {"train_acc", last.train_acc},
                                         {"test_acc", last.test_acc},
                                         {"mask_auc", last.mask_auc}};
  }
  // Timing lives in its own leaf so reports diff cleanly across reruns.
  report["timing"] = ordered_json{{"train_seconds", train_seconds}};

  save_checkpoint(trained.params, out_dir + "/model.ckpt", config.seed, config.epochs);
  std::ofstream rj(out_dir + "/report.json");
  rj << report.dump(2) << "\n";
}

}  // namespace uil
