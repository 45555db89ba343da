#include "uil/synthgen.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "uil/rng.hpp"

namespace uil {

std::string motif_name(MotifKind k) {
  switch (k) {
    case MotifKind::cycle: return "cycle";
    case MotifKind::house: return "house";
    case MotifKind::grid: return "grid";
    case MotifKind::diamond: return "diamond";
  }
  throw std::runtime_error("unknown motif kind");
}

std::string base_name(BaseKind k) {
  switch (k) {
    case BaseKind::tree: return "tree";
    case BaseKind::ladder: return "ladder";
    case BaseKind::wheel: return "wheel";
    case BaseKind::pa: return "pa";
  }
  throw std::runtime_error("unknown base kind");
}

BaseKind parse_base_kind(const std::string& name) {
  if (name == "tree") return BaseKind::tree;
  if (name == "ladder") return BaseKind::ladder;
  if (name == "wheel") return BaseKind::wheel;
  if (name == "pa") return BaseKind::pa;
  throw std::runtime_error("unknown base kind: " + name);
}

void validate_config(const GeneratorConfig& c) {
  if (c.num_train <= 0 || c.num_test <= 0) throw std::runtime_error("split sizes must be positive");
  if (c.num_classes < 1 || c.num_classes > 4)
    throw std::runtime_error("num_classes must be in [1,4] (one motif per class)");
  if (c.bias < 0.0 || c.bias > 1.0) throw std::runtime_error("bias must be in [0,1]");
  if (c.base_families.empty()) throw std::runtime_error("need at least one base family");
  if (c.base_size_min < 4 || c.base_size_max < c.base_size_min)
    throw std::runtime_error("base size range invalid (min >= 4 required)");
  if (c.bernoulli_p_train < 0.0 || c.bernoulli_p_train > 1.0 || c.bernoulli_p_test < 0.0 ||
      c.bernoulli_p_test > 1.0)
    throw std::runtime_error("noise probabilities must be in [0,1]");
  if (c.motifs_min < 1 || c.motifs_max < c.motifs_min)
    throw std::runtime_error("motif count range invalid");
  if (c.feature_dim < 1) throw std::runtime_error("feature_dim must be positive");
}

namespace {

Graph motif_graph(int n, const std::vector<std::pair<int, int>>& edges) {
  Graph g;
  g.num_nodes = n;
  g.adjacency = Mat(n, n);
  g.stable_edge_flags = Mat(n, n);
  for (auto [a, b] : edges) {
    g.adjacency(a, b) = g.adjacency(b, a) = 1.0;
    g.stable_edge_flags(a, b) = g.stable_edge_flags(b, a) = 1.0;
  }
  g.stable_node_flags.assign(n, 1);
  g.node_features = Mat(n, 1, 1.0);
  return g;
}

}  // namespace

Graph make_motif(MotifKind kind) {
  switch (kind) {
    case MotifKind::cycle:
      return motif_graph(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {0, 5}});
    case MotifKind::house:
      // Square 0-1-2-3 with a roof node 4 over the 0-1 edge.
      return motif_graph(5, {{0, 1}, {1, 2}, {2, 3}, {0, 3}, {0, 4}, {1, 4}});
    case MotifKind::grid: {
      // 3x3 lattice, node (r,c) -> 3r+c.
      std::vector<std::pair<int, int>> edges;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
          if (c + 1 < 3) edges.push_back({3 * r + c, 3 * r + c + 1});
          if (r + 1 < 3) edges.push_back({3 * r + c, 3 * (r + 1) + c});
        }
      return motif_graph(9, edges);
    }
    case MotifKind::diamond:
      // K4 minus the (0,3) edge.
      return motif_graph(4, {{0, 1}, {0, 2}, {1, 2}, {1, 3}, {2, 3}});
  }
  throw std::runtime_error("unknown motif kind");
}

Graph make_env_base(BaseKind kind, int size, uint64_t seed) {
  if (size < 4) throw std::runtime_error("base size must be >= 4");
  Rng rng(seed);
  Graph g;
  g.num_nodes = size;
  g.adjacency = Mat(size, size);
  auto add_edge = [&](int a, int b) { g.adjacency(a, b) = g.adjacency(b, a) = 1.0; };
  switch (kind) {
    case BaseKind::tree:
      for (int v = 1; v < size; ++v) add_edge(v, rng.uniform_int(v));
      break;
    case BaseKind::ladder: {
      // Two rails of sizes ceil(n/2) and floor(n/2), rungs pairing them up.
      int top = (size + 1) / 2;
      int bot = size - top;
      for (int i = 0; i + 1 < top; ++i) add_edge(i, i + 1);
      for (int i = 0; i + 1 < bot; ++i) add_edge(top + i, top + i + 1);
      for (int i = 0; i < bot; ++i) add_edge(i, top + i);
      break;
    }
    case BaseKind::wheel:
      for (int v = 1; v < size; ++v) {
        add_edge(0, v);
        add_edge(v, v == size - 1 ? 1 : v + 1);
      }
      break;
    case BaseKind::pa: {
      // Preferential attachment, 2 edges per new node, triangle seed.
      std::vector<int> endpoints;
      auto add_pa_edge = [&](int a, int b) {
        add_edge(a, b);
        endpoints.push_back(a);
        endpoints.push_back(b);
      };
      add_pa_edge(0, 1);
      add_pa_edge(1, 2);
      add_pa_edge(0, 2);
      for (int v = 3; v < size; ++v) {
        int first = endpoints[rng.uniform_int(static_cast<int>(endpoints.size()))];
        int second = first;
        while (second == first)
          second = endpoints[rng.uniform_int(static_cast<int>(endpoints.size()))];
        add_pa_edge(v, first);
        add_pa_edge(v, second);
      }
      break;
    }
  }
  g.stable_node_flags.assign(size, 0);
  g.node_features = Mat(size, 1, 1.0);
  return g;
}

Graph inject_bernoulli_noise(const Graph& g, double p, uint64_t seed) {
  if (p < 0.0 || p > 1.0) throw std::runtime_error("noise probability must be in [0,1]");
  Graph out = g;
  Rng rng(seed);
  for (int i = 0; i < g.num_nodes; ++i)
    for (int j = i + 1; j < g.num_nodes; ++j)
      if (rng.bernoulli(p)) out.adjacency(i, j) = out.adjacency(j, i) = 1.0;
  return out;
}

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t tag, uint64_t i) {
  Rng r(seed ^ (tag * 0x9e3779b97f4a7c15ull));
  r.state += i * 0xbf58476d1ce4e5b9ull;
  return r.next_u64();
}

Graph assemble_graph(const GeneratorConfig& cfg, bool train_split, int id, uint64_t graph_seed) {
  Rng rng(graph_seed);
  const int num_families = static_cast<int>(cfg.base_families.size());
  int label = rng.uniform_int(cfg.num_classes);
  int n_motifs = rng.uniform_int(cfg.motifs_min, cfg.motifs_max);

  int family;
  if (num_families == 1) {
    family = 0;
  } else if (train_split) {
    int assigned = label % num_families;
    if (rng.uniform() < cfg.bias) {
      family = assigned;
    } else {
      family = rng.uniform_int(num_families - 1);
      if (family >= assigned) ++family;
    }
  } else {
    family = rng.uniform_int(num_families);
  }

  int base_size = rng.uniform_int(cfg.base_size_min, cfg.base_size_max);
  Graph base = make_env_base(cfg.base_families[family], base_size, rng.next_u64());
  Graph motif = make_motif(static_cast<MotifKind>(label));

  int n = n_motifs * motif.num_nodes + base.num_nodes;
  Graph g;
  g.id = id;
  g.num_nodes = n;
  g.label = label;
  g.env = family;
  g.adjacency = Mat(n, n);
  g.stable_edge_flags = Mat(n, n);
  g.stable_node_flags.assign(n, 0);

  for (int c = 0; c < n_motifs; ++c) {
    int off = c * motif.num_nodes;
    for (int i = 0; i < motif.num_nodes; ++i) {
      g.stable_node_flags[off + i] = 1;
      for (int j = 0; j < motif.num_nodes; ++j) {
        g.adjacency(off + i, off + j) = motif.adjacency(i, j);
        g.stable_edge_flags(off + i, off + j) = motif.adjacency(i, j);
      }
    }
  }
  int base_off = n_motifs * motif.num_nodes;
  for (int i = 0; i < base.num_nodes; ++i)
    for (int j = 0; j < base.num_nodes; ++j)
      g.adjacency(base_off + i, base_off + j) = base.adjacency(i, j);

  // One bridge per motif copy; the bridge is not part of the stable feature.
  for (int c = 0; c < n_motifs; ++c) {
    int mnode = c * motif.num_nodes + rng.uniform_int(motif.num_nodes);
    int bnode = base_off + rng.uniform_int(base.num_nodes);
    g.adjacency(mnode, bnode) = g.adjacency(bnode, mnode) = 1.0;
  }

  double p = train_split ? cfg.bernoulli_p_train : cfg.bernoulli_p_test;
  g = inject_bernoulli_noise(g, p, rng.next_u64());
  g.node_features = Mat(n, cfg.feature_dim, 1.0);
  return g;
}

}  // namespace

std::pair<Dataset, Dataset> synthesize(const GeneratorConfig& config) {
  validate_config(config);
  Dataset train, test;
  train.graphs.reserve(config.num_train);
  test.graphs.reserve(config.num_test);
  for (int i = 0; i < config.num_train; ++i) {
    Graph g = assemble_graph(config, true, i, mix_seed(config.seed, 0x7472u, i));
    validate_graph(g, config.num_classes);
    train.graphs.push_back(std::move(g));
  }
  for (int i = 0; i < config.num_test; ++i) {
    Graph g = assemble_graph(config, false, i, mix_seed(config.seed, 0x7465u, i));
    validate_graph(g, config.num_classes);
    test.graphs.push_back(std::move(g));
  }
  return {std::move(train), std::move(test)};
}

void write_gen_manifest(const GeneratorConfig& config, const std::string& path) {
  nlohmann::ordered_json j;
  j["mode"] = config.motifs_max > 1 ? "syn5" : "synb";
  j["num_train"] = config.num_train;
  j["num_test"] = config.num_test;
  j["num_classes"] = config.num_classes;
  j["bias"] = config.bias;
  nlohmann::ordered_json fams = nlohmann::ordered_json::array();
  for (BaseKind k : config.base_families) fams.push_back(base_name(k));
  j["base_families"] = std::move(fams);
  j["base_size"] = {config.base_size_min, config.base_size_max};
  j["p_train"] = config.bernoulli_p_train;
  j["p_test"] = config.bernoulli_p_test;
  j["motifs_per_graph"] = {config.motifs_min, config.motifs_max};
  j["feature_dim"] = config.feature_dim;
  j["seed"] = config.seed;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

}  // namespace uil
