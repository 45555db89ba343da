#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "uil/envinfer.hpp"
#include "uil/graph.hpp"
#include "uil/objective.hpp"
#include "uil/rng.hpp"

using namespace uil;

namespace {

Mat blob_points(const std::vector<std::pair<double, double>>& centers, int per_blob, double spread,
                uint64_t seed, std::vector<int>* truth = nullptr) {
  Rng rng(seed);
  Mat pts(static_cast<int>(centers.size()) * per_blob, 2);
  int row = 0;
  for (size_t b = 0; b < centers.size(); ++b)
    for (int i = 0; i < per_blob; ++i, ++row) {
      // Box-Muller: the blob shape only needs rough isotropy.
      double u1 = rng.uniform(1e-12, 1.0);
      double u2 = rng.uniform();
      double r = spread * std::sqrt(-2.0 * std::log(u1));
      pts(row, 0) = centers[b].first + r * std::cos(6.283185307179586 * u2);
      pts(row, 1) = centers[b].second + r * std::sin(6.283185307179586 * u2);
      if (truth != nullptr) truth->push_back(static_cast<int>(b));
    }
  return pts;
}

}  // namespace

TEST_SUITE("envinfer") {
  TEST_CASE("single cluster sits at the mean") {
    Mat pts(4, 2);
    pts.a = {0, 0, 2, 0, 0, 2, 2, 2};
    EnvAssignment a = kmeans(pts, 1, 5);
    CHECK(a.centroids.rows == 1);
    CHECK(a.centroids(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(a.centroids(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
    // Every point is distance sqrt(2) from the center.
    CHECK(a.inertia == doctest::Approx(8.0).epsilon(1e-12));
    for (int c : a.cluster) CHECK(c == 0);
  }

  TEST_CASE("one cluster per distinct point reaches zero inertia") {
    Mat pts(3, 2);
    pts.a = {0, 0, 5, 0, 0, 5};
    EnvAssignment a = kmeans(pts, 3, 7);
    CHECK(a.inertia == doctest::Approx(0.0).epsilon(1e-12));
    std::vector<int> ids = a.cluster;
    std::sort(ids.begin(), ids.end());
    CHECK(ids == std::vector<int>{0, 1, 2});
  }

  TEST_CASE("k larger than the point count is rejected") {
    CHECK_THROWS_AS(kmeans(Mat(2, 2), 3, 1), std::runtime_error);
  }

  TEST_CASE("well separated blobs are recovered") {
    std::vector<int> truth;
    Mat pts = blob_points({{0, 0}, {10, 0}, {0, 10}}, 60, 1.0, 11, &truth);
    EnvAssignment a = kmeans(pts, 3, 13);
    // Blobs are 10 sigma apart; agreement must be essentially perfect.
    CHECK(adjusted_rand_index(a.cluster, truth) > 0.98);

    int agree = 0;
    // Count agreement under the best relabeling found greedily per blob.
    for (int b = 0; b < 3; ++b) {
      std::vector<int> count(3, 0);
      for (size_t i = 0; i < truth.size(); ++i)
        if (truth[i] == b) count[a.cluster[i]]++;
      agree += *std::max_element(count.begin(), count.end());
    }
    CHECK(static_cast<double>(agree) / static_cast<double>(truth.size()) >= 0.99);
  }

  TEST_CASE("inertia never increases with more clusters") {
    std::vector<int> truth;
    Mat pts = blob_points({{0, 0}, {6, 0}}, 40, 1.5, 17, &truth);
    double prev = kmeans(pts, 1, 3).inertia;
    for (int k = 2; k <= 4; ++k) {
      double cur = kmeans(pts, k, 3).inertia;
      CHECK(cur <= prev + 1e-9);
      prev = cur;
    }
  }

  TEST_CASE("fixed seeds reproduce the assignment bit for bit") {
    std::vector<int> truth;
    Mat pts = blob_points({{0, 0}, {4, 4}}, 30, 1.0, 19, &truth);
    EnvAssignment a = kmeans(pts, 2, 23);
    EnvAssignment b = kmeans(pts, 2, 23);
    CHECK(a.cluster == b.cluster);
    CHECK(a.centroids.a == b.centroids.a);
    CHECK(a.inertia == b.inertia);
  }

  TEST_CASE("assignment ignores dataset ordering") {
    std::vector<int> truth;
    Mat pts = blob_points({{0, 0}, {8, 0}}, 20, 1.0, 29, &truth);
    Dataset forward_order;
    for (int i = 0; i < pts.rows; ++i) {
      Graph g;
      g.id = i;
      g.num_nodes = 1;
      g.adjacency = Mat(1, 1);
      g.node_features = Mat(1, 1, 1.0);
      forward_order.graphs.push_back(g);
    }
    Dataset reverse_order = forward_order;
    std::reverse(reverse_order.graphs.begin(), reverse_order.graphs.end());
    Mat rev_pts(pts.rows, 2);
    for (int i = 0; i < pts.rows; ++i) {
      rev_pts(pts.rows - 1 - i, 0) = pts(i, 0);
      rev_pts(pts.rows - 1 - i, 1) = pts(i, 1);
    }
    assign_environments(forward_order, pts, 2, 31);
    assign_environments(reverse_order, rev_pts, 2, 31);
    for (int i = 0; i < pts.rows; ++i)
      CHECK(forward_order.graphs[i].inferred_env ==
            reverse_order.graphs[pts.rows - 1 - i].inferred_env);
  }

  TEST_CASE("assignment writes inferred tags and preserves ground truth") {
    Dataset ds;
    Mat pts(4, 1);
    pts.a = {0.0, 0.1, 9.0, 9.1};
    for (int i = 0; i < 4; ++i) {
      Graph g;
      g.id = i;
      g.num_nodes = 1;
      g.adjacency = Mat(1, 1);
      g.node_features = Mat(1, 1, 1.0);
      g.env = 7;  // sentinel ground truth
      ds.graphs.push_back(g);
    }
    assign_environments(ds, pts, 2, 37);
    CHECK(ds.graphs[0].inferred_env == ds.graphs[1].inferred_env);
    CHECK(ds.graphs[2].inferred_env == ds.graphs[3].inferred_env);
    CHECK(ds.graphs[0].inferred_env != ds.graphs[2].inferred_env);
    for (const Graph& g : ds.graphs) {
      CHECK(g.env.has_value());
      CHECK(*g.env == 7);
      CHECK(g.inferred_env >= 0);
      CHECK(g.inferred_env < 2);
    }
  }

  TEST_CASE("adjusted rand index endpoints") {
    std::vector<int> a{0, 0, 1, 1, 2, 2};
    CHECK(adjusted_rand_index(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    std::vector<int> relabeled{2, 2, 0, 0, 1, 1};
    CHECK(adjusted_rand_index(a, relabeled) == doctest::Approx(1.0).epsilon(1e-12));
    // Independent labelings over many points hover near zero.
    Rng rng(41);
    std::vector<int> x(600), y(600);
    for (size_t i = 0; i < x.size(); ++i) {
      x[i] = rng.uniform_int(3);
      y[i] = rng.uniform_int(3);
    }
    CHECK(std::abs(adjusted_rand_index(x, y)) < 0.05);
  }

  TEST_CASE("relabeled environment assignments leave the structural loss alone") {
    // The structural term sums over unordered environment pairs, so any
    // permutation of cluster ids is invisible to it.
    Rng rng(43);
    GraphonBufferState buf(3, 3, 2);
    GraphonBufferState relabeled(3, 3, 2);
    std::vector<int> perm{2, 0, 1};
    for (int y = 0; y < 3; ++y)
      for (int e = 0; e < 3; ++e) {
        Mat m(2, 2);
        for (double& v : m.a) v = rng.uniform(0, 1);
        buf.cell(y, e) = m;
        relabeled.cell(y, perm[static_cast<size_t>(e)]) = m;
      }
    CHECK(loss_str(buf) == doctest::Approx(loss_str(relabeled)).epsilon(1e-12));
  }
}
