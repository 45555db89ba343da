#include "uil/graph.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace uil {

const Graph& validate_graph(const Graph& g, int num_classes) {
  const int n = g.num_nodes;
  if (n <= 0) throw std::runtime_error("graph has no nodes");
  if (g.adjacency.rows != n || g.adjacency.cols != n)
    throw std::runtime_error("adjacency shape does not match num_nodes");
  if (g.node_features.rows != n)
    throw std::runtime_error("node_features rows do not match num_nodes");
  for (int i = 0; i < n; ++i) {
    if (g.adjacency(i, i) != 0.0)
      throw std::runtime_error("nonzero diagonal at " + std::to_string(i));
    for (int j = 0; j < n; ++j) {
      double a = g.adjacency(i, j);
      if (a != 0.0 && a != 1.0)
        throw std::runtime_error("adjacency not 0/1 at (" + std::to_string(i) + "," +
                                 std::to_string(j) + ")");
      if (a != g.adjacency(j, i))
        throw std::runtime_error("asymmetric at (" + std::to_string(i) + "," +
                                 std::to_string(j) + ")");
    }
  }
  if (g.label < 0 || (num_classes >= 0 && g.label >= num_classes))
    throw std::runtime_error("label " + std::to_string(g.label) + " out of range");
  if (g.has_stable_flags()) {
    if (!g.stable_edge_flags.same_shape(g.adjacency))
      throw std::runtime_error("stable_edge_flags shape does not match adjacency");
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double f = g.stable_edge_flags(i, j);
        if (f != 0.0 && f != 1.0)
          throw std::runtime_error("stable flag not 0/1 at (" + std::to_string(i) + "," +
                                   std::to_string(j) + ")");
        if (f == 1.0 && g.adjacency(i, j) == 0.0)
          throw std::runtime_error("stable flag on non-edge at (" + std::to_string(i) + "," +
                                   std::to_string(j) + ")");
        if (f != g.stable_edge_flags(j, i))
          throw std::runtime_error("stable flags asymmetric at (" + std::to_string(i) + "," +
                                   std::to_string(j) + ")");
      }
  }
  if (!g.stable_node_flags.empty() && static_cast<int>(g.stable_node_flags.size()) != n)
    throw std::runtime_error("stable_node_flags length does not match num_nodes");
  return g;
}

std::pair<MaskedGraph, MaskedGraph> apply_masks(const Graph& g, const StableMasks& m) {
  const int n = g.num_nodes;
  if (static_cast<int>(m.node_mask.size()) != n || !m.edge_mask.same_shape(g.adjacency))
    throw std::runtime_error("mask dimensions do not match graph");
  MaskedGraph st, en;
  st.soft_adjacency = Mat(n, n);
  en.soft_adjacency = Mat(n, n);
  st.soft_features = g.node_features;
  en.soft_features = g.node_features;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double a = g.adjacency(i, j);
      double mm = m.edge_mask(i, j);
      st.soft_adjacency(i, j) = a * mm;
      // For m in [0,1], m + (1-m) rounds to exactly 1 in binary floating
      // point, so the two soft adjacencies sum back to a without drift.
      en.soft_adjacency(i, j) = a * (1.0 - mm);
    }
    double nm = m.node_mask[i];
    for (int c = 0; c < g.node_features.cols; ++c) {
      st.soft_features(i, c) = g.node_features(i, c) * nm;
      en.soft_features(i, c) = g.node_features(i, c) * (1.0 - nm);
    }
  }
  return {st, en};
}

std::vector<double> mask_alignment_scores(const Mat& edge_mask) {
  const int n = edge_mask.rows;
  std::vector<double> score(n, 0.0);
  for (int j = 0; j < n; ++j) {
    double col = 0.0, row = 0.0;
    for (int i = 0; i < n; ++i) {
      col += edge_mask(i, j);
      row += edge_mask(j, i);
    }
    score[j] = 0.5 * (col + row);
  }
  return score;
}

std::vector<double> alignment_scores(const Graph& g, const Mat& edge_mask) {
  if (!edge_mask.same_shape(g.adjacency))
    throw std::runtime_error("edge mask dimensions do not match graph");
  return mask_alignment_scores(edge_mask);
}

std::vector<int> argsort_desc(const std::vector<double>& scores) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  return idx;
}

std::vector<std::pair<int, int>> edge_list(const Mat& adjacency) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < adjacency.rows; ++i)
    for (int j = i + 1; j < adjacency.cols; ++j)
      if (adjacency(i, j) != 0.0) edges.emplace_back(i, j);
  return edges;
}

void write_jsonl(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const Graph& g : ds.graphs) {
    nlohmann::ordered_json j;
    j["id"] = g.id;
    j["num_nodes"] = g.num_nodes;
    nlohmann::ordered_json edges = nlohmann::ordered_json::array();
    for (auto [a, b] : edge_list(g.adjacency)) edges.push_back({a, b});
    j["edges"] = std::move(edges);
    nlohmann::ordered_json feats = nlohmann::ordered_json::array();
    for (int i = 0; i < g.node_features.rows; ++i) {
      nlohmann::ordered_json row = nlohmann::ordered_json::array();
      for (int c = 0; c < g.node_features.cols; ++c) row.push_back(g.node_features(i, c));
      feats.push_back(std::move(row));
    }
    j["node_features"] = std::move(feats);
    j["label"] = g.label;
    if (g.env) j["env"] = *g.env;
    if (g.has_stable_flags()) {
      nlohmann::ordered_json se = nlohmann::ordered_json::array();
      for (auto [a, b] : edge_list(g.stable_edge_flags)) se.push_back({a, b});
      j["stable_edges"] = std::move(se);
    }
    if (!g.stable_node_flags.empty()) j["stable_nodes"] = g.stable_node_flags;
    out << j.dump() << "\n";
  }
}

Dataset read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  Dataset ds;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    Graph g;
    g.id = j.at("id").get<int>();
    g.num_nodes = j.at("num_nodes").get<int>();
    g.adjacency = Mat(g.num_nodes, g.num_nodes);
    for (const auto& e : j.at("edges")) {
      int a = e.at(0).get<int>(), b = e.at(1).get<int>();
      g.adjacency(a, b) = g.adjacency(b, a) = 1.0;
    }
    const auto& feats = j.at("node_features");
    int d_x = feats.empty() ? 0 : static_cast<int>(feats.at(0).size());
    g.node_features = Mat(g.num_nodes, d_x);
    for (int i = 0; i < g.num_nodes; ++i)
      for (int c = 0; c < d_x; ++c) g.node_features(i, c) = feats.at(i).at(c).get<double>();
    g.label = j.at("label").get<int>();
    if (j.contains("env")) g.env = j.at("env").get<int>();
    if (j.contains("stable_edges")) {
      g.stable_edge_flags = Mat(g.num_nodes, g.num_nodes);
      for (const auto& e : j.at("stable_edges")) {
        int a = e.at(0).get<int>(), b = e.at(1).get<int>();
        g.stable_edge_flags(a, b) = g.stable_edge_flags(b, a) = 1.0;
      }
    }
    if (j.contains("stable_nodes")) g.stable_node_flags = j.at("stable_nodes").get<std::vector<int>>();
    ds.graphs.push_back(std::move(g));
  }
  return ds;
}

}  // namespace uil
