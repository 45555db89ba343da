#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "uil/graph.hpp"
#include "uil/synthgen.hpp"

using namespace uil;

namespace {

std::vector<int> degrees(const Mat& adjacency, const std::vector<int>& nodes) {
  std::vector<int> out;
  for (int i : nodes) {
    int d = 0;
    for (int j : nodes) d += adjacency(i, j) != 0.0 ? 1 : 0;
    out.push_back(d);
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool connected(const Mat& adjacency, const std::vector<int>& nodes) {
  if (nodes.empty()) return false;
  std::set<int> seen{nodes[0]};
  std::vector<int> stack{nodes[0]};
  std::set<int> allowed(nodes.begin(), nodes.end());
  while (!stack.empty()) {
    int u = stack.back();
    stack.pop_back();
    for (int v : nodes)
      if (v != u && adjacency(u, v) != 0.0 && allowed.count(v) && !seen.count(v)) {
        seen.insert(v);
        stack.push_back(v);
      }
  }
  return seen.size() == nodes.size();
}

// (node count, edge count, sorted degree sequence) of a connected graph.
// The four motif templates have pairwise distinct signatures, so matching
// the signature of the class template identifies the motif.
struct Signature {
  int n = 0, m = 0;
  std::vector<int> degs;
  bool operator==(const Signature& o) const { return n == o.n && m == o.m && degs == o.degs; }
};

Signature signature_of(const Mat& adjacency, const std::vector<int>& nodes) {
  Signature s;
  s.n = static_cast<int>(nodes.size());
  s.degs = degrees(adjacency, nodes);
  for (int d : s.degs) s.m += d;
  s.m /= 2;
  return s;
}

Signature motif_signature(MotifKind kind) {
  Graph g = make_motif(kind);
  std::vector<int> all(g.num_nodes);
  for (int i = 0; i < g.num_nodes; ++i) all[i] = i;
  return signature_of(g.adjacency, all);
}

// Connected components of the stable-flagged edge set.
std::vector<std::vector<int>> flagged_components(const Graph& g) {
  std::vector<int> comp(g.num_nodes, -1);
  int next = 0;
  for (int start = 0; start < g.num_nodes; ++start) {
    if (comp[start] != -1 || g.stable_node_flags[start] == 0) continue;
    comp[start] = next;
    std::vector<int> stack{start};
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int v = 0; v < g.num_nodes; ++v)
        if (comp[v] == -1 && g.stable_edge_flags(u, v) != 0.0) {
          comp[v] = next;
          stack.push_back(v);
        }
    }
    ++next;
  }
  std::vector<std::vector<int>> out(next);
  for (int i = 0; i < g.num_nodes; ++i)
    if (comp[i] != -1) out[comp[i]].push_back(i);
  return out;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int edge_count(const Graph& g) { return static_cast<int>(edge_list(g.adjacency).size()); }

}  // namespace

TEST_SUITE("synthgen") {
  TEST_CASE("motif templates match their definitions") {
    Graph cycle = make_motif(MotifKind::cycle);
    CHECK(cycle.num_nodes == 6);
    CHECK(edge_count(cycle) == 6);
    std::vector<int> all(6);
    for (int i = 0; i < 6; ++i) all[i] = i;
    for (int d : degrees(cycle.adjacency, all)) CHECK(d == 2);

    Graph house = make_motif(MotifKind::house);
    CHECK(house.num_nodes == 5);
    CHECK(edge_count(house) == 6);

    Graph grid = make_motif(MotifKind::grid);
    CHECK(grid.num_nodes == 9);
    CHECK(edge_count(grid) == 12);

    Graph diamond = make_motif(MotifKind::diamond);
    CHECK(diamond.num_nodes == 4);
    CHECK(edge_count(diamond) == 5);

    for (MotifKind k :
         {MotifKind::cycle, MotifKind::house, MotifKind::grid, MotifKind::diamond}) {
      Graph m = make_motif(k);
      CHECK(m.has_stable_flags());
      for (int flag : m.stable_node_flags) CHECK(flag == 1);
      for (auto [i, j] : edge_list(m.adjacency)) CHECK(m.stable_edge_flags(i, j) == 1.0);
    }
  }

  TEST_CASE("motif signatures are pairwise distinct") {
    std::vector<Signature> sigs;
    for (MotifKind k :
         {MotifKind::cycle, MotifKind::house, MotifKind::grid, MotifKind::diamond})
      sigs.push_back(motif_signature(k));
    for (size_t a = 0; a < sigs.size(); ++a)
      for (size_t b = a + 1; b < sigs.size(); ++b) CHECK_FALSE(sigs[a] == sigs[b]);
  }

  TEST_CASE("ladder of 10 has 13 edges") {
    Graph g = make_env_base(BaseKind::ladder, 10, 5);
    CHECK(g.num_nodes == 10);
    CHECK(edge_count(g) == 13);
  }

  TEST_CASE("wheel of 7 has a degree-6 hub and degree-3 rim") {
    Graph g = make_env_base(BaseKind::wheel, 7, 5);
    std::vector<int> all(7);
    for (int i = 0; i < 7; ++i) all[i] = i;
    std::vector<int> degs = degrees(g.adjacency, all);
    CHECK(degs.back() == 6);
    for (size_t i = 0; i + 1 < degs.size(); ++i) CHECK(degs[i] == 3);
  }

  TEST_CASE("tree of 20 has 19 edges and is connected") {
    Graph g = make_env_base(BaseKind::tree, 20, 11);
    CHECK(edge_count(g) == 19);
    std::vector<int> all(20);
    for (int i = 0; i < 20; ++i) all[i] = i;
    CHECK(connected(g.adjacency, all));
  }

  TEST_CASE("every base family is connected with no stable flags") {
    for (BaseKind k : {BaseKind::tree, BaseKind::ladder, BaseKind::wheel, BaseKind::pa}) {
      Graph g = make_env_base(k, 24, 3);
      CHECK(g.num_nodes == 24);
      std::vector<int> all(24);
      for (int i = 0; i < 24; ++i) all[i] = i;
      CHECK(connected(g.adjacency, all));
      for (int flag : g.stable_node_flags) CHECK(flag == 0);
      CHECK(mat_sum(g.stable_edge_flags) == 0.0);
      CHECK(edge_count(g) >= 23);  // connectivity floor
    }
  }

  TEST_CASE("base kind names round-trip") {
    for (BaseKind k : {BaseKind::tree, BaseKind::ladder, BaseKind::wheel, BaseKind::pa})
      CHECK(parse_base_kind(base_name(k)) == k);
    CHECK_THROWS_AS(parse_base_kind("torus"), std::runtime_error);
  }

  TEST_CASE("noise at p=0 changes nothing") {
    Graph g = make_env_base(BaseKind::ladder, 12, 7);
    Graph noisy = inject_bernoulli_noise(g, 0.0, 21);
    CHECK(noisy.adjacency.a == g.adjacency.a);
  }

  TEST_CASE("noise at p=1 completes the graph") {
    Graph g = make_env_base(BaseKind::tree, 8, 7);
    Graph noisy = inject_bernoulli_noise(g, 1.0, 21);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) CHECK(noisy.adjacency(i, j) == (i == j ? 0.0 : 1.0));
  }

  TEST_CASE("noise only ever adds edges and never flags them") {
    Graph g = make_motif(MotifKind::grid);
    Graph noisy = inject_bernoulli_noise(g, 0.4, 13);
    for (int i = 0; i < g.num_nodes; ++i)
      for (int j = 0; j < g.num_nodes; ++j) {
        if (g.adjacency(i, j) != 0.0) CHECK(noisy.adjacency(i, j) != 0.0);
        CHECK(noisy.stable_edge_flags(i, j) == g.stable_edge_flags(i, j));
      }
  }

  TEST_CASE("noise edge counts follow the binomial mean") {
    // 100 isolated nodes, p=0.05: expected count 0.05*C(100,2) = 247.5 with
    // sd ~15.3 per draw, so the mean of 50 seeds sits within 247.5 +- 6.5
    // unless the sampler is biased.
    Graph empt;
    empt.num_nodes = 100;
    empt.adjacency = Mat(100, 100);
    empt.node_features = Mat(100, 1, 1.0);
    empt.stable_edge_flags = Mat(100, 100);
    empt.stable_node_flags.assign(100, 0);
    double total = 0.0;
    for (uint64_t seed = 1; seed <= 50; ++seed) {
      Graph noisy = inject_bernoulli_noise(empt, 0.05, seed);
      total += static_cast<double>(edge_list(noisy.adjacency).size());
    }
    double mean = total / 50.0;
    CHECK(mean > 241.0);
    CHECK(mean < 254.0);
  }

  TEST_CASE("generated graphs validate and carry coherent annotations") {
    GeneratorConfig c;
    c.num_train = 120;
    c.num_test = 40;
    c.seed = 17;
    auto [train, test] = synthesize(c);
    REQUIRE(train.graphs.size() == 120);
    REQUIRE(test.graphs.size() == 40);
    for (const Dataset* ds : {&train, &test}) {
      std::set<int> ids;  // ids are unique within a split (one file each)
      for (const Graph& g : ds->graphs) {
        CHECK_NOTHROW(validate_graph(g, c.num_classes));
        CHECK(g.env.has_value());
        CHECK(*g.env >= 0);
        CHECK(*g.env < static_cast<int>(c.base_families.size()));
        CHECK(g.has_stable_flags());
        CHECK(ids.insert(g.id).second);
      }
    }
  }

  TEST_CASE("flagged subgraph is the class motif") {
    GeneratorConfig c;
    c.num_train = 60;
    c.num_test = 20;
    c.seed = 23;
    auto [train, test] = synthesize(c);
    for (const Dataset* ds : {&train, &test})
      for (const Graph& g : ds->graphs) {
        auto comps = flagged_components(g);
        REQUIRE(comps.size() == 1);
        Signature expect = motif_signature(static_cast<MotifKind>(g.label));
        Signature got;
        got.n = static_cast<int>(comps[0].size());
        // Count only flagged edges: noise may land inside the motif's node
        // set, and those extra edges are environmental by construction.
        got.degs.clear();
        for (int i : comps[0]) {
          int d = 0;
          for (int j : comps[0]) d += g.stable_edge_flags(i, j) != 0.0 ? 1 : 0;
          got.degs.push_back(d);
          got.m += d;
        }
        got.m /= 2;
        std::sort(got.degs.begin(), got.degs.end());
        CHECK(got == expect);
      }
  }

  TEST_CASE("multi-motif graphs carry one to five flagged copies") {
    GeneratorConfig c;
    c.num_train = 60;
    c.num_test = 20;
    c.motifs_min = 1;
    c.motifs_max = 5;
    c.seed = 29;
    auto [train, test] = synthesize(c);
    bool saw_multiple = false;
    for (const Graph& g : train.graphs) {
      auto comps = flagged_components(g);
      CHECK(comps.size() >= 1);
      CHECK(comps.size() <= 5);
      saw_multiple = saw_multiple || comps.size() > 1;
      Signature expect = motif_signature(static_cast<MotifKind>(g.label));
      for (const auto& nodes : comps) {
        Signature got;
        got.n = static_cast<int>(nodes.size());
        for (int i : nodes) {
          int d = 0;
          for (int j : nodes) d += g.stable_edge_flags(i, j) != 0.0 ? 1 : 0;
          got.degs.push_back(d);
          got.m += d;
        }
        got.m /= 2;
        std::sort(got.degs.begin(), got.degs.end());
        CHECK(got == expect);
      }
    }
    CHECK(saw_multiple);
  }

  TEST_CASE("training bias hits its target and the test split stays uniform") {
    GeneratorConfig c;  // defaults: 2000 train, 500 test, b=0.7
    c.seed = 31;
    auto [train, test] = synthesize(c);
    int families = static_cast<int>(c.base_families.size());
    int matched = 0;
    for (const Graph& g : train.graphs)
      matched += *g.env == g.label % families ? 1 : 0;
    double rate = static_cast<double>(matched) / static_cast<double>(train.graphs.size());
    CHECK(rate > 0.67);
    CHECK(rate < 0.73);

    std::map<int, int> env_counts;
    for (const Graph& g : test.graphs) env_counts[*g.env]++;
    for (auto [env, count] : env_counts) {
      double frac = static_cast<double>(count) / static_cast<double>(test.graphs.size());
      CHECK(frac > 1.0 / families - 0.08);
      CHECK(frac < 1.0 / families + 0.08);
    }
  }

  TEST_CASE("identical seeds produce byte-identical datasets") {
    GeneratorConfig c;
    c.num_train = 50;
    c.num_test = 10;
    c.seed = 41;
    auto [train1, test1] = synthesize(c);
    auto [train2, test2] = synthesize(c);
    write_jsonl(train1, "gen-det-a.jsonl");
    write_jsonl(train2, "gen-det-b.jsonl");
    CHECK(slurp("gen-det-a.jsonl") == slurp("gen-det-b.jsonl"));
    std::remove("gen-det-a.jsonl");
    std::remove("gen-det-b.jsonl");
  }

  TEST_CASE("config validation rejects out-of-range values") {
    GeneratorConfig c;
    c.bias = 1.4;
    CHECK_THROWS_AS(validate_config(c), std::runtime_error);
    c = GeneratorConfig{};
    c.bernoulli_p_train = -0.1;
    CHECK_THROWS_AS(validate_config(c), std::runtime_error);
    c = GeneratorConfig{};
    c.base_size_min = 50;
    c.base_size_max = 20;
    CHECK_THROWS_AS(validate_config(c), std::runtime_error);
  }
}
