#include "uil/envinfer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "uil/rng.hpp"

namespace uil {

namespace {

double sq_dist(const Mat& points, int row, const Mat& centroids, int c) {
  double s = 0.0;
  const double* p = points.row(row);
  const double* q = centroids.row(c);
  for (int d = 0; d < points.cols; ++d) {
    double diff = p[d] - q[d];
    s += diff * diff;
  }
  return s;
}

Mat kmeanspp_init(const Mat& points, int k, Rng& rng) {
  const int n = points.rows, d = points.cols;
  Mat centroids(k, d);
  std::vector<double> best(n);
  int first = rng.uniform_int(n);
  for (int c = 0; c < d; ++c) centroids(0, c) = points(first, c);
  for (int i = 0; i < n; ++i) best[i] = sq_dist(points, i, centroids, 0);
  for (int cidx = 1; cidx < k; ++cidx) {
    double total = std::accumulate(best.begin(), best.end(), 0.0);
    int pick;
    if (total <= 0.0) {
      // All points coincide with chosen centroids; any point works.
      pick = rng.uniform_int(n);
    } else {
      double r = rng.uniform() * total;
      pick = n - 1;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += best[i];
        if (r < acc) {
          pick = i;
          break;
        }
      }
    }
    for (int c = 0; c < d; ++c) centroids(cidx, c) = points(pick, c);
    for (int i = 0; i < n; ++i) best[i] = std::min(best[i], sq_dist(points, i, centroids, cidx));
  }
  return centroids;
}

}  // namespace

EnvAssignment kmeans(const Mat& points, int k, uint64_t seed, int max_iter) {
  const int n = points.rows, d = points.cols;
  if (k < 1) throw std::runtime_error("cluster count must be positive");
  if (k > n) throw std::runtime_error("cluster count exceeds number of points");
  Rng rng(seed);
  EnvAssignment out;
  out.centroids = kmeanspp_init(points, k, rng);
  out.cluster.assign(n, 0);

  std::vector<double> dist(n);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best_c = 0;
      double best_d = sq_dist(points, i, out.centroids, 0);
      for (int c = 1; c < k; ++c) {
        double dd = sq_dist(points, i, out.centroids, c);
        if (dd < best_d) {
          best_d = dd;
          best_c = c;
        }
      }
      dist[i] = best_d;
      if (out.cluster[i] != best_c) {
        out.cluster[i] = best_c;
        changed = true;
      }
    }
    out.iterations = iter + 1;
    if (!changed && iter > 0) break;

    Mat sums(k, d);
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      ++counts[out.cluster[i]];
      for (int c = 0; c < d; ++c) sums(out.cluster[i], c) += points(i, c);
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Revive from the farthest point so no cluster stays empty.
        int far = static_cast<int>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        for (int col = 0; col < d; ++col) out.centroids(c, col) = points(far, col);
        dist[far] = 0.0;
      } else {
        for (int col = 0; col < d; ++col) out.centroids(c, col) = sums(c, col) / counts[c];
      }
    }
  }

  out.inertia = 0.0;
  for (int i = 0; i < n; ++i) {
    int best_c = 0;
    double best_d = sq_dist(points, i, out.centroids, 0);
    for (int c = 1; c < k; ++c) {
      double dd = sq_dist(points, i, out.centroids, c);
      if (dd < best_d) {
        best_d = dd;
        best_c = c;
      }
    }
    out.cluster[i] = best_c;
    out.inertia += best_d;
  }
  return out;
}

EnvAssignment assign_environments(Dataset& ds, const Mat& h_en, int k, uint64_t seed) {
  const int n = static_cast<int>(ds.graphs.size());
  if (h_en.rows != n) throw std::runtime_error("representation rows do not match dataset");
  std::vector<int> by_id(n);
  std::iota(by_id.begin(), by_id.end(), 0);
  std::stable_sort(by_id.begin(), by_id.end(),
                   [&](int a, int b) { return ds.graphs[a].id < ds.graphs[b].id; });
  Mat points(n, h_en.cols);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < h_en.cols; ++c) points(r, c) = h_en(by_id[r], c);
  EnvAssignment canonical = kmeans(points, k, seed);
  EnvAssignment out = canonical;
  for (int r = 0; r < n; ++r) {
    ds.graphs[by_id[r]].inferred_env = canonical.cluster[r];
    out.cluster[by_id[r]] = canonical.cluster[r];
  }
  return out;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::runtime_error("adjusted_rand_index needs two equal-length labelings");
  std::map<std::pair<int, int>, long> joint;
  std::map<int, long> ca, cb;
  for (size_t i = 0; i < a.size(); ++i) {
    ++joint[{a[i], b[i]}];
    ++ca[a[i]];
    ++cb[b[i]];
  }
  auto choose2 = [](long x) { return 0.5 * static_cast<double>(x) * (x - 1); };
  double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (auto& [k, v] : joint) sum_joint += choose2(v);
  for (auto& [k, v] : ca) sum_a += choose2(v);
  for (auto& [k, v] : cb) sum_b += choose2(v);
  double total = choose2(static_cast<long>(a.size()));
  double expected = sum_a * sum_b / total;
  double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both partitions trivial
  return (sum_joint - expected) / (max_index - expected);
}

}  // namespace uil
