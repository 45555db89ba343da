#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "uil/graph.hpp"

namespace uil {

// Class motifs. The label of a generated graph is the identity of its motif.
enum class MotifKind { cycle, house, grid, diamond };

// Environment base-graph families.
enum class BaseKind { tree, ladder, wheel, pa };

std::string motif_name(MotifKind k);
std::string base_name(BaseKind k);
BaseKind parse_base_kind(const std::string& name);

struct GeneratorConfig {
  int num_train = 2000;
  int num_test = 500;
  int num_classes = 4;
  // P(base family == the family assigned to the label) in the training
  // split; the remaining mass is uniform over the other families. Test
  // draws the family uniformly.
  double bias = 0.7;
  std::vector<BaseKind> base_families = {BaseKind::tree, BaseKind::ladder, BaseKind::wheel};
  int base_size_min = 20;
  int base_size_max = 40;
  double bernoulli_p_train = 0.005;
  double bernoulli_p_test = 0.015;
  // Motif copies per graph; {1,1} gives SYN-b style, {1,5} gives SYN5 style.
  int motifs_min = 1;
  int motifs_max = 1;
  int feature_dim = 1;
  uint64_t seed = 1;
};

void validate_config(const GeneratorConfig& c);

// Canonical motif template; every node and edge carries stable flag 1.
Graph make_motif(MotifKind kind);

// Connected environment base graph; all stable flags 0.
Graph make_env_base(BaseKind kind, int size, uint64_t seed);

// OR a symmetric Bernoulli(p) edge pattern into g. New edges carry stable
// flag 0; existing edges and flags are untouched.
Graph inject_bernoulli_noise(const Graph& g, double p, uint64_t seed);

std::pair<Dataset, Dataset> synthesize(const GeneratorConfig& config);

// Echo of the full generator config, written next to the dataset files.
void write_gen_manifest(const GeneratorConfig& config, const std::string& path);

}  // namespace uil
