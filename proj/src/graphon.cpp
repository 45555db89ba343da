#include "uil/graphon.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "uil/rng.hpp"

namespace uil {

namespace {

// Blocks are contiguous and maximally equal in size, larger blocks first.
std::vector<int> block_starts(int n, int num_blocks) {
  std::vector<int> starts(num_blocks + 1, 0);
  int base = n / num_blocks, extra = n % num_blocks;
  for (int k = 0; k < num_blocks; ++k) starts[k + 1] = starts[k] + base + (k < extra ? 1 : 0);
  return starts;
}

void require_square(const Mat& d) {
  if (d.rows != d.cols || d.rows < 1) throw std::runtime_error("matrix must be square");
}

}  // namespace

StepFunction step_function_of_graph(const Mat& adjacency, const std::vector<int>& order, int N) {
  require_square(adjacency);
  const int n = adjacency.rows;
  if (N < 1 || N > n) throw std::runtime_error("block count must be in [1, num_nodes]");
  if (static_cast<int>(order.size()) != n)
    throw std::runtime_error("order must be a permutation of the nodes");
  auto starts = block_starts(n, N);
  StepFunction w(N);
  for (int a = 0; a < N; ++a)
    for (int b = a; b < N; ++b) {
      double sum = 0.0;
      long count = 0;
      for (int i = starts[a]; i < starts[a + 1]; ++i)
        for (int j = starts[b]; j < starts[b + 1]; ++j) {
          if (a == b && i == j) continue;  // structural zero, not a sample
          sum += adjacency(order[i], order[j]);
          ++count;
        }
      double v = count > 0 ? sum / count : 0.0;
      w.values(a, b) = w.values(b, a) = v;
    }
  return w;
}

StepFunction estimate_group_graphon(const std::vector<Mat>& soft_adjacencies,
                                    const std::vector<Mat>& edge_masks, int N) {
  if (soft_adjacencies.empty()) throw std::runtime_error("cannot estimate graphon of empty group");
  if (soft_adjacencies.size() != edge_masks.size())
    throw std::runtime_error("adjacency/mask list length mismatch");
  StepFunction mean(N);
  for (size_t g = 0; g < soft_adjacencies.size(); ++g) {
    auto order = argsort_desc(mask_alignment_scores(edge_masks[g]));
    StepFunction w = step_function_of_graph(soft_adjacencies[g], order, N);
    for (size_t k = 0; k < mean.values.size(); ++k) mean.values.a[k] += w.values.a[k];
  }
  double inv = 1.0 / static_cast<double>(soft_adjacencies.size());
  for (double& v : mean.values.a) v *= inv;
  return mean;
}

double cut_norm_exact(const Mat& d) {
  require_square(d);
  const int n = d.rows;
  if (n > 20) throw std::runtime_error("cut_norm_exact limited to N <= 20");
  // Gray-code walk over row subsets S keeps the column sums c_j up to
  // date with one row flip per step; for fixed S the best T takes all
  // columns of one sign.
  std::vector<double> c(n, 0.0);
  double best = 0.0;
  const uint64_t total = 1ull << n;
  for (uint64_t s = 1; s < total; ++s) {
    int i = std::countr_zero(s);
    uint64_t gray = s ^ (s >> 1);
    double sign = ((gray >> i) & 1) ? 1.0 : -1.0;
    const double* row = d.row(i);
    for (int j = 0; j < n; ++j) c[j] += sign * row[j];
    double pos = 0.0, neg = 0.0;
    for (int j = 0; j < n; ++j) {
      if (c[j] > 0.0)
        pos += c[j];
      else
        neg -= c[j];
    }
    best = std::max({best, pos, neg});
  }
  return best / (static_cast<double>(n) * n);
}

double cut_norm_naive(const Mat& d) {
  require_square(d);
  const int n = d.rows;
  if (n > 10) throw std::runtime_error("cut_norm_naive limited to N <= 10");
  const uint32_t total = 1u << n;
  double best = 0.0;
  std::vector<double> c(n);
  for (uint32_t s = 0; s < total; ++s) {
    for (int j = 0; j < n; ++j) {
      double sum = 0.0;
      for (int i = 0; i < n; ++i)
        if ((s >> i) & 1) sum += d(i, j);
      c[j] = sum;
    }
    for (uint32_t t = 0; t < total; ++t) {
      double sum = 0.0;
      for (int j = 0; j < n; ++j)
        if ((t >> j) & 1) sum += c[j];
      best = std::max(best, std::abs(sum));
    }
  }
  return best / (static_cast<double>(n) * n);
}

namespace {

double cut_norm_of_permuted_diff(const StepFunction& w1, const StepFunction& w2,
                                 const std::vector<int>& p) {
  const int n = w1.resolution;
  Mat d(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) d(i, j) = w1.values(i, j) - w2.values(p[i], p[j]);
  return cut_norm_exact(d);
}

std::vector<int> row_sum_alignment(const StepFunction& w1, const StepFunction& w2) {
  const int n = w1.resolution;
  std::vector<double> r1(n), r2(n);
  for (int i = 0; i < n; ++i) {
    r1[i] = std::accumulate(w1.values.row(i), w1.values.row(i) + n, 0.0);
    r2[i] = std::accumulate(w2.values.row(i), w2.values.row(i) + n, 0.0);
  }
  auto o1 = argsort_desc(r1), o2 = argsort_desc(r2);
  std::vector<int> p(n);
  for (int k = 0; k < n; ++k) p[o1[k]] = o2[k];
  return p;
}

double cut_distance_exact(const StepFunction& w1, const StepFunction& w2) {
  const int n = w1.resolution;
  if (n > 8) throw std::runtime_error("exact cut distance limited to N <= 8");
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  double best = cut_norm_of_permuted_diff(w1, w2, p);
  while (std::next_permutation(p.begin(), p.end())) {
    best = std::min(best, cut_norm_of_permuted_diff(w1, w2, p));
    if (best == 0.0) break;
  }
  return best;
}

constexpr int kAnnealSteps = 2000;
constexpr int kAnnealRestarts = 5;
constexpr double kAnnealTempHi = 1.0;
constexpr double kAnnealTempLo = 1e-3;

double cut_distance_anneal(const StepFunction& w1, const StepFunction& w2) {
  const int n = w1.resolution;
  Rng rng(0x616e6e65616cull);
  double best = 0.0;
  bool have_best = false;
  const double decay = std::pow(kAnnealTempLo / kAnnealTempHi, 1.0 / (kAnnealSteps - 1));
  for (int restart = 0; restart < kAnnealRestarts; ++restart) {
    std::vector<int> p =
        restart == 0 ? row_sum_alignment(w1, w2) : rng.permutation(n);
    double cur = cut_norm_of_permuted_diff(w1, w2, p);
    if (!have_best || cur < best) best = cur, have_best = true;
    double temp = kAnnealTempHi;
    for (int step = 0; step < kAnnealSteps; ++step, temp *= decay) {
      int a = rng.uniform_int(n), b = rng.uniform_int(n);
      if (a == b) continue;
      std::swap(p[a], p[b]);
      double cand = cut_norm_of_permuted_diff(w1, w2, p);
      double delta = cand - cur;
      if (delta <= 0.0 || rng.uniform() < std::exp(-delta / temp)) {
        cur = cand;
        if (cur < best) best = cur;
      } else {
        std::swap(p[a], p[b]);
      }
    }
  }
  return best;
}

}  // namespace

double cut_distance(const StepFunction& w1, const StepFunction& w2, CutDistanceMode mode) {
  if (w1.resolution != w2.resolution) throw std::runtime_error("step function resolution mismatch");
  if (w1.resolution < 1) throw std::runtime_error("empty step function");
  if (w1.resolution == 1) {
    Mat d(1, 1, w1.values(0, 0) - w2.values(0, 0));
    return cut_norm_exact(d);
  }
  return mode == CutDistanceMode::exact ? cut_distance_exact(w1, w2)
                                        : cut_distance_anneal(w1, w2);
}

double graphon_l2(const StepFunction& w1, const StepFunction& w2) {
  if (w1.resolution != w2.resolution) throw std::runtime_error("step function resolution mismatch");
  double sum = 0.0;
  for (size_t k = 0; k < w1.values.size(); ++k) {
    double diff = w1.values.a[k] - w2.values.a[k];
    sum += diff * diff;
  }
  return std::sqrt(sum / (static_cast<double>(w1.resolution) * w1.resolution));
}

StepFunction bernoulli_or_mixture(const StepFunction& w_st, double p) {
  if (p < 0.0 || p > 1.0) throw std::runtime_error("mixture probability must be in [0,1]");
  StepFunction out = w_st;
  for (int i = 0; i < out.resolution; ++i)
    for (int j = 0; j < out.resolution; ++j)
      if (i != j) out.values(i, j) += p * (1.0 - out.values(i, j));
  return out;
}

StepFunction coarsen(const StepFunction& w, int N) {
  if (N < 1 || w.resolution % N != 0)
    throw std::runtime_error("coarse block count must divide the resolution");
  const int stride = w.resolution / N;
  StepFunction out(N);
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) {
      double sum = 0.0;
      for (int i = 0; i < stride; ++i)
        for (int j = 0; j < stride; ++j) sum += w.values(a * stride + i, b * stride + j);
      out.values(a, b) = sum / (static_cast<double>(stride) * stride);
    }
  return out;
}

std::pair<double, double> weak_regularity_gap(const StepFunction& w, int N) {
  if (w.resolution > 12) throw std::runtime_error("weak_regularity_gap limited to M <= 12");
  if (N < 2) throw std::runtime_error("coarse block count must be >= 2");
  StepFunction coarse = coarsen(w, N);
  const int m = w.resolution, stride = m / N;
  Mat diff(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) diff(i, j) = w.values(i, j) - coarse.values(i / stride, j / stride);
  double gap = cut_norm_exact(diff);
  double l2 = 0.0;
  for (double v : w.values.a) l2 += v * v;
  l2 = std::sqrt(l2 / (static_cast<double>(m) * m));
  double bound = 2.0 / std::sqrt(std::log(static_cast<double>(N))) * l2;
  return {gap, bound};
}

Graph sample_step_function_graph(const StepFunction& w, int num_nodes, uint64_t seed,
                                 bool equitable_blocks) {
  if (num_nodes < 1) throw std::runtime_error("need at least one node");
  Rng rng(seed);
  const int n = num_nodes, N = w.resolution;
  std::vector<int> block(n);
  for (int i = 0; i < n; ++i)
    block[i] = equitable_blocks ? static_cast<int>(static_cast<long>(i) * N / n)
                                : rng.uniform_int(N);
  Graph g;
  g.num_nodes = n;
  g.adjacency = Mat(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.bernoulli(w.values(block[i], block[j]))) g.adjacency(i, j) = g.adjacency(j, i) = 1.0;
  g.node_features = Mat(n, 1, 1.0);
  return g;
}

}  // namespace uil
