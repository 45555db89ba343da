#pragma once

#include <cstdint>
#include <vector>

#include "uil/graph.hpp"
#include "uil/mat.hpp"

namespace uil {

struct EnvAssignment {
  std::vector<int> cluster;  // one id in [0, K) per point
  Mat centroids;             // K x d
  double inertia = 0.0;      // sum of squared distances to assigned centroids
  int iterations = 0;
};

// Lloyd's algorithm with kmeans++ seeding. Deterministic under the seed;
// a cluster that empties is re-seeded from the point farthest from its
// centroid. points is n x d, one row per point.
EnvAssignment kmeans(const Mat& points, int k, uint64_t seed, int max_iter = 100);

// Clusters the environmental representations (rows of h_en aligned with
// ds.graphs) and writes the cluster ids into inferred_env. The k-means
// draw sequence runs over graphs in id-sorted order, so the result does
// not depend on how the dataset happens to be ordered. Ground-truth env
// tags are untouched.
EnvAssignment assign_environments(Dataset& ds, const Mat& h_en, int k, uint64_t seed);

// Chance-corrected agreement between two labelings in [-1, 1]; 1 means
// identical partitions up to relabeling.
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

}  // namespace uil
