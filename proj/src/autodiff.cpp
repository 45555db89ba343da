#include "uil/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace uil {

namespace {

std::vector<int> equitable_starts(int n, int num_blocks) {
  std::vector<int> starts(num_blocks + 1, 0);
  int base = n / num_blocks, extra = n % num_blocks;
  for (int k = 0; k < num_blocks; ++k) starts[k + 1] = starts[k] + base + (k < extra ? 1 : 0);
  return starts;
}

[[noreturn]] void shape_error(const char* op) {
  throw std::runtime_error(std::string("tape op ") + op + ": shape mismatch");
}

}  // namespace

NodeId Tape::push(TapeNode n) {
  for (NodeId in : n.inputs) n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::input(Mat value, bool requires_grad) {
  TapeNode n;
  n.op = Op::input;
  n.requires_grad = requires_grad;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Mat &va = nodes_[a].value, &vb = nodes_[b].value;
  if (va.cols != vb.rows) shape_error("matmul");
  TapeNode n;
  n.op = Op::matmul;
  n.inputs = {a, b};
  n.value = Mat(va.rows, vb.cols);
  mat_mul_acc(n.value, va, vb);
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Mat &va = nodes_[a].value, &vb = nodes_[b].value;
  if (!va.same_shape(vb)) shape_error("add");
  TapeNode n;
  n.op = Op::add;
  n.inputs = {a, b};
  n.value = va;
  for (size_t k = 0; k < vb.size(); ++k) n.value.a[k] += vb.a[k];
  return push(std::move(n));
}

NodeId Tape::add_row(NodeId a, NodeId row) {
  const Mat &va = nodes_[a].value, &vr = nodes_[row].value;
  if (vr.rows != 1 || vr.cols != va.cols) shape_error("add_row");
  TapeNode n;
  n.op = Op::add_row;
  n.inputs = {a, row};
  n.value = va;
  for (int i = 0; i < va.rows; ++i)
    for (int c = 0; c < va.cols; ++c) n.value(i, c) += vr(0, c);
  return push(std::move(n));
}

NodeId Tape::affine(NodeId a, double s, double t) {
  TapeNode n;
  n.op = Op::affine;
  n.inputs = {a};
  n.reals = {s, t};
  n.value = nodes_[a].value;
  for (double& v : n.value.a) v = s * v + t;
  return push(std::move(n));
}

NodeId Tape::smul(NodeId a, NodeId s) {
  const Mat& vs = nodes_[s].value;
  if (vs.rows != 1 || vs.cols != 1) shape_error("smul");
  TapeNode n;
  n.op = Op::smul;
  n.inputs = {a, s};
  n.value = nodes_[a].value;
  double c = vs(0, 0);
  for (double& v : n.value.a) v *= c;
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Mat &va = nodes_[a].value, &vb = nodes_[b].value;
  if (!va.same_shape(vb)) shape_error("mul");
  TapeNode n;
  n.op = Op::mul;
  n.inputs = {a, b};
  n.value = va;
  for (size_t k = 0; k < vb.size(); ++k) n.value.a[k] *= vb.a[k];
  return push(std::move(n));
}

NodeId Tape::bcast_mul(NodeId x, NodeId col) {
  const Mat &vx = nodes_[x].value, &vc = nodes_[col].value;
  if (vc.rows != vx.rows || vc.cols != 1) shape_error("bcast_mul");
  TapeNode n;
  n.op = Op::bcast_mul;
  n.inputs = {x, col};
  n.value = vx;
  for (int i = 0; i < vx.rows; ++i) {
    double m = vc(i, 0);
    for (int c = 0; c < vx.cols; ++c) n.value(i, c) *= m;
  }
  return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
  TapeNode n;
  n.op = Op::relu;
  n.inputs = {a};
  n.value = nodes_[a].value;
  for (double& v : n.value.a)
    if (v < 0.0) v = 0.0;
  return push(std::move(n));
}

NodeId Tape::sigmoid(NodeId a) {
  TapeNode n;
  n.op = Op::sigmoid;
  n.inputs = {a};
  n.value = nodes_[a].value;
  for (double& v : n.value.a) v = 1.0 / (1.0 + std::exp(-v));
  return push(std::move(n));
}

NodeId Tape::concat_cols(NodeId a, NodeId b) {
  const Mat &va = nodes_[a].value, &vb = nodes_[b].value;
  if (va.rows != vb.rows) shape_error("concat_cols");
  TapeNode n;
  n.op = Op::concat_cols;
  n.inputs = {a, b};
  n.value = Mat(va.rows, va.cols + vb.cols);
  for (int i = 0; i < va.rows; ++i) {
    for (int c = 0; c < va.cols; ++c) n.value(i, c) = va(i, c);
    for (int c = 0; c < vb.cols; ++c) n.value(i, va.cols + c) = vb(i, c);
  }
  return push(std::move(n));
}

NodeId Tape::concat_rows(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw std::runtime_error("tape op concat_rows: empty input list");
  int cols = nodes_[parts[0]].value.cols, rows = 0;
  for (NodeId p : parts) {
    if (nodes_[p].value.cols != cols) shape_error("concat_rows");
    rows += nodes_[p].value.rows;
  }
  TapeNode n;
  n.op = Op::concat_rows;
  n.inputs = parts;
  n.value = Mat(rows, cols);
  int at = 0;
  for (NodeId p : parts) {
    const Mat& vp = nodes_[p].value;
    for (int i = 0; i < vp.rows; ++i, ++at)
      for (int c = 0; c < cols; ++c) n.value(at, c) = vp(i, c);
  }
  return push(std::move(n));
}

NodeId Tape::gather_rows(NodeId a, std::vector<int> idx) {
  const Mat& va = nodes_[a].value;
  TapeNode n;
  n.op = Op::gather_rows;
  n.inputs = {a};
  n.value = Mat(static_cast<int>(idx.size()), va.cols);
  for (size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= va.rows) shape_error("gather_rows");
    for (int c = 0; c < va.cols; ++c) n.value(static_cast<int>(k), c) = va(idx[k], c);
  }
  n.ints.assign(idx.begin(), idx.end());
  return push(std::move(n));
}

NodeId Tape::edges_to_adj(NodeId vals, const std::vector<std::pair<int, int>>& pairs, int n_nodes) {
  const Mat& vv = nodes_[vals].value;
  if (vv.cols != 1 || vv.rows != static_cast<int>(pairs.size())) shape_error("edges_to_adj");
  TapeNode n;
  n.op = Op::edges_to_adj;
  n.inputs = {vals};
  n.value = Mat(n_nodes, n_nodes);
  n.ints.reserve(pairs.size() * 2);
  for (size_t e = 0; e < pairs.size(); ++e) {
    auto [i, j] = pairs[e];
    if (i < 0 || i >= n_nodes || j < 0 || j >= n_nodes) shape_error("edges_to_adj");
    n.value(i, j) = vv(static_cast<int>(e), 0);
    n.ints.push_back(i);
    n.ints.push_back(j);
  }
  return push(std::move(n));
}

NodeId Tape::mean_rows(NodeId a) {
  const Mat& va = nodes_[a].value;
  TapeNode n;
  n.op = Op::mean_rows;
  n.inputs = {a};
  n.value = Mat(1, va.cols);
  for (int i = 0; i < va.rows; ++i)
    for (int c = 0; c < va.cols; ++c) n.value(0, c) += va(i, c);
  for (double& v : n.value.a) v /= va.rows;
  return push(std::move(n));
}

NodeId Tape::sum_all(NodeId a) {
  TapeNode n;
  n.op = Op::sum_all;
  n.inputs = {a};
  n.value = Mat(1, 1, mat_sum(nodes_[a].value));
  return push(std::move(n));
}

NodeId Tape::pair_sum_rows(NodeId a, NodeId b) {
  const Mat &va = nodes_[a].value, &vb = nodes_[b].value;
  if (va.cols != vb.cols) shape_error("pair_sum_rows");
  TapeNode n;
  n.op = Op::pair_sum_rows;
  n.inputs = {a, b};
  n.value = Mat(va.rows * vb.rows, va.cols);
  int at = 0;
  for (int i = 0; i < va.rows; ++i)
    for (int j = 0; j < vb.rows; ++j, ++at)
      for (int c = 0; c < va.cols; ++c) n.value(at, c) = va(i, c) + vb(j, c);
  return push(std::move(n));
}

NodeId Tape::ce_row_mean(NodeId logits, std::vector<int> labels) {
  const Mat& vl = nodes_[logits].value;
  if (vl.rows != static_cast<int>(labels.size()))
    throw std::runtime_error("tape op ce_row_mean: one label per logit row required");
  double total = 0.0;
  for (int r = 0; r < vl.rows; ++r) {
    int y = labels[r];
    if (y < 0 || y >= vl.cols) throw std::runtime_error("tape op ce_row_mean: label out of range");
    double m = vl(r, 0);
    for (int c = 1; c < vl.cols; ++c) m = std::max(m, vl(r, c));
    double lse = 0.0;
    for (int c = 0; c < vl.cols; ++c) lse += std::exp(vl(r, c) - m);
    total += m + std::log(lse) - vl(r, y);
  }
  TapeNode n;
  n.op = Op::ce_row_mean;
  n.inputs = {logits};
  n.ints = std::move(labels);
  n.value = Mat(1, 1, total / vl.rows);
  return push(std::move(n));
}

NodeId Tape::abs_val(NodeId a) {
  TapeNode n;
  n.op = Op::abs_val;
  n.inputs = {a};
  n.value = nodes_[a].value;
  for (double& v : n.value.a) v = std::abs(v);
  return push(std::move(n));
}

NodeId Tape::frob_diff(NodeId a, NodeId b) {
  const Mat &va = nodes_[a].value, &vb = nodes_[b].value;
  if (!va.same_shape(vb)) shape_error("frob_diff");
  double sum = 0.0;
  for (size_t k = 0; k < va.size(); ++k) {
    double d = va.a[k] - vb.a[k];
    sum += d * d;
  }
  TapeNode n;
  n.op = Op::frob_diff;
  n.inputs = {a, b};
  n.value = Mat(1, 1, std::sqrt(sum));
  return push(std::move(n));
}

NodeId Tape::block_mean(NodeId adj, const std::vector<int>& order, int num_blocks) {
  const Mat& va = nodes_[adj].value;
  const int n = va.rows;
  if (va.cols != n || static_cast<int>(order.size()) != n) shape_error("block_mean");
  if (num_blocks < 1 || num_blocks > n)
    throw std::runtime_error("tape op block_mean: block count must be in [1, num_nodes]");
  auto starts = equitable_starts(n, num_blocks);
  TapeNode nd;
  nd.op = Op::block_mean;
  nd.inputs = {adj};
  nd.ints.push_back(num_blocks);
  nd.ints.insert(nd.ints.end(), order.begin(), order.end());
  nd.value = Mat(num_blocks, num_blocks);
  for (int a = 0; a < num_blocks; ++a)
    for (int b = a; b < num_blocks; ++b) {
      double sum = 0.0;
      long count = 0;
      for (int i = starts[a]; i < starts[a + 1]; ++i)
        for (int j = starts[b]; j < starts[b + 1]; ++j) {
          if (a == b && i == j) continue;
          sum += va(order[i], order[j]);
          ++count;
        }
      double v = count > 0 ? sum / count : 0.0;
      nd.value(a, b) = nd.value(b, a) = v;
    }
  return push(std::move(nd));
}

NodeId Tape::weighted_sum(const std::vector<NodeId>& xs, const std::vector<double>& ws) {
  if (xs.empty() || xs.size() != ws.size())
    throw std::runtime_error("tape op weighted_sum: need matching nonempty lists");
  const Mat& v0 = nodes_[xs[0]].value;
  TapeNode n;
  n.op = Op::weighted_sum;
  n.inputs = xs;
  n.reals = ws;
  n.value = Mat(v0.rows, v0.cols);
  for (size_t k = 0; k < xs.size(); ++k) {
    const Mat& v = nodes_[xs[k]].value;
    if (!v.same_shape(v0)) shape_error("weighted_sum");
    for (size_t t = 0; t < v.size(); ++t) n.value.a[t] += ws[k] * v.a[t];
  }
  return push(std::move(n));
}

const Mat& Tape::grad(NodeId id) const {
  if (nodes_[id].grad.empty())
    throw std::runtime_error("gradient not computed for this node (run backward first)");
  return nodes_[id].grad;
}

const Mat* Tape::maybe_grad(NodeId id) const {
  return nodes_[id].grad.empty() ? nullptr : &nodes_[id].grad;
}

double Tape::scalar(NodeId id) const {
  const Mat& v = nodes_[id].value;
  if (v.rows != 1 || v.cols != 1) throw std::runtime_error("node is not a scalar");
  return v(0, 0);
}

void Tape::backward(NodeId loss) {
  {
    const Mat& v = nodes_[loss].value;
    if (v.rows != 1 || v.cols != 1) throw std::runtime_error("backward needs a 1x1 loss node");
  }
  auto ensure_grad = [&](NodeId id) -> Mat& {
    TapeNode& n = nodes_[id];
    if (n.grad.empty()) n.grad = Mat(n.value.rows, n.value.cols);
    return n.grad;
  };
  ensure_grad(loss)(0, 0) = 1.0;

  for (NodeId id = loss; id >= 0; --id) {
    TapeNode& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    const Mat& g = n.grad;
    auto want = [&](size_t slot) { return nodes_[n.inputs[slot]].requires_grad; };
    switch (n.op) {
      case Op::input:
        break;
      case Op::matmul: {
        if (want(0)) mat_mul_nt_acc(ensure_grad(n.inputs[0]), g, nodes_[n.inputs[1]].value);
        if (want(1)) mat_mul_tn_acc(ensure_grad(n.inputs[1]), nodes_[n.inputs[0]].value, g);
        break;
      }
      case Op::add:
        for (int s = 0; s < 2; ++s)
          if (want(s)) {
            Mat& d = ensure_grad(n.inputs[s]);
            for (size_t k = 0; k < g.size(); ++k) d.a[k] += g.a[k];
          }
        break;
      case Op::add_row: {
        if (want(0)) {
          Mat& d = ensure_grad(n.inputs[0]);
          for (size_t k = 0; k < g.size(); ++k) d.a[k] += g.a[k];
        }
        if (want(1)) {
          Mat& d = ensure_grad(n.inputs[1]);
          for (int i = 0; i < g.rows; ++i)
            for (int c = 0; c < g.cols; ++c) d(0, c) += g(i, c);
        }
        break;
      }
      case Op::affine:
        if (want(0)) {
          Mat& d = ensure_grad(n.inputs[0]);
          double s = n.reals[0];
          for (size_t k = 0; k < g.size(); ++k) d.a[k] += s * g.a[k];
        }
        break;
      case Op::smul: {
        const Mat& va = nodes_[n.inputs[0]].value;
        double c = nodes_[n.inputs[1]].value(0, 0);
        if (want(0)) {
          Mat& d = ensure_grad(n.inputs[0]);
          for (size_t k = 0; k < g.size(); ++k) d.a[k] += c * g.a[k];
        }
        if (want(1)) {
          double acc = 0.0;
          for (size_t k = 0; k < g.size(); ++k) acc += va.a[k] * g.a[k];
          ensure_grad(n.inputs[1])(0, 0) += acc;
        }
        break;
      }
      case Op::mul: {
        const Mat& va = nodes_[n.inputs[0]].value;
        const Mat& vb = nodes_[n.inputs[1]].value;
        if (want(0)) {
          Mat& d = ensure_grad(n.inputs[0]);
          for (size_t k = 0; k < g.size(); ++k) d.a[k] += vb.a[k] * g.a[k];
        }
        if (want(1)) {
          Mat& d = ensure_grad(n.inputs[1]);
          for (size_t k = 0; k < g.size(); ++k) d.a[k] += va.a[k] * g.a[k];
        }
        break;
      }
      case Op::bcast_mul: {
        const Mat& vx = nodes_[n.inputs[0]].value;
        const Mat& vc = nodes_[n.inputs[1]].value;
        if (want(0)) {
          Mat& d = ensure_grad(n.inputs[0]);
          for (int i = 0; i < g.rows; ++i) {
            double m = vc(i, 0);
            for (int c = 0; c < g.cols; ++c) d(i, c) += m * g(i, c);
          }
        }
        if (want(1)) {
          Mat& d = ensure_grad(n.inputs[1]);
          for (int i = 0; i < g.rows; ++i) {
            double acc = 0.0;
            for (int c = 0; c < g.cols; ++c) acc += vx(i, c) * g(i, c);
            d(i, 0) += acc;
          }
        }
        break;
      }
      case Op::relu:
        if (want(0)) {
          Mat& d = ensure_grad(n.inputs[0]);
          for (size_t k = 0; k < g.size(); ++k)
            if (n.value.a[k] > 0.0) d.a[k] += g.a[k];
        }
        break;
      case Op::sigmoid:
        if (want(0)) {
          Mat& d = ensure_grad(n.inputs[0]);
          for (size_t k = 0; k < g.size(); ++k) {
            double s = n.value.a[k];
            d.a[k] += s * (1.0 - s) * g.a[k];
          }
        }
        break;
      case Op::concat_cols: {
        const int c0 = nodes_[n.inputs[0]].value.cols;
        if (want(0)) {
          Mat& d = ensure_grad(n.inputs[0]);
          for (int i = 0; i < g.rows; ++i)
            for (int c = 0; c < c0; ++c) d(i, c) += g(i, c);
        }
        if (want(1)) {
          Mat& d = ensure_grad(n.inputs[1]);
          for (int i = 0; i < g.rows; ++i)
            for (int c = 0; c < d.cols; ++c) d(i, c) += g(i, c0 + c);
        }
        break;
      }
      case Op::concat_rows: {
        int at = 0;
        for (size_t s = 0; s < n.inputs.size(); ++s) {
          int rows = nodes_[n.inputs[s]].value.rows;
          if (want(s)) {
            Mat& d = ensure_grad(n.inputs[s]);
            for (int i = 0; i < rows; ++i)
              for (int c = 0; c < g.cols; ++c) d(i, c) += g(at + i, c);
          }
          at += rows;
        }
        break;
      }
      case Op::gather_rows:
        if (want(0)) {
          Mat& d = ensure_grad(n.inputs[0]);
          for (size_t k = 0; k < n.ints.size(); ++k)
            for (int c = 0; c < g.cols; ++c) d(n.ints[k], c) += g(static_cast<int>(k), c);
        }
        break;
      case Op::edges_to_adj:
        if (want(0)) {
          Mat& d = ensure_grad(n.inputs[0]);
          for (size_t e = 0; e * 2 < n.ints.size(); ++e)
            d(static_cast<int>(e), 0) += g(n.ints[2 * e], n.ints[2 * e + 1]);
        }
        break;
      case Op::mean_rows:
        if (want(0)) {
          Mat& d = ensure_grad(n.inputs[0]);
          double inv = 1.0 / d.rows;
          for (int i = 0; i < d.rows; ++i)
            for (int c = 0; c < d.cols; ++c) d(i, c) += inv * g(0, c);
        }
        break;
      case Op::sum_all:
        if (want(0)) {
          Mat& d = ensure_grad(n.inputs[0]);
          double gv = g(0, 0);
          for (double& v : d.a) v += gv;
        }
        break;
      case Op::pair_sum_rows: {
        const int brows = nodes_[n.inputs[1]].value.rows;
        if (want(0)) {
          Mat& d = ensure_grad(n.inputs[0]);
          for (int i = 0; i < d.rows; ++i)
            for (int j = 0; j < brows; ++j)
              for (int c = 0; c < g.cols; ++c) d(i, c) += g(i * brows + j, c);
        }
        if (want(1)) {
          Mat& d = ensure_grad(n.inputs[1]);
          const int arows = nodes_[n.inputs[0]].value.rows;
          for (int i = 0; i < arows; ++i)
            for (int j = 0; j < brows; ++j)
              for (int c = 0; c < g.cols; ++c) d(j, c) += g(i * brows + j, c);
        }
        break;
      }
      case Op::ce_row_mean:
        if (want(0)) {
          const Mat& vl = nodes_[n.inputs[0]].value;
          Mat& d = ensure_grad(n.inputs[0]);
          double scale = g(0, 0) / vl.rows;
          for (int r = 0; r < vl.rows; ++r) {
            double m = vl(r, 0);
            for (int c = 1; c < vl.cols; ++c) m = std::max(m, vl(r, c));
            double lse = 0.0;
            for (int c = 0; c < vl.cols; ++c) lse += std::exp(vl(r, c) - m);
            for (int c = 0; c < vl.cols; ++c) {
              double p = std::exp(vl(r, c) - m) / lse;
              d(r, c) += scale * (p - (c == n.ints[r] ? 1.0 : 0.0));
            }
          }
        }
        break;
      case Op::abs_val:
        if (want(0)) {
          const Mat& va = nodes_[n.inputs[0]].value;
          Mat& d = ensure_grad(n.inputs[0]);
          for (size_t k = 0; k < g.size(); ++k) {
            if (va.a[k] > 0.0)
              d.a[k] += g.a[k];
            else if (va.a[k] < 0.0)
              d.a[k] -= g.a[k];
          }
        }
        break;
      case Op::frob_diff: {
        double norm = n.value(0, 0);
        if (norm <= 1e-300) break;  // subgradient 0 at the kink
        const Mat& va = nodes_[n.inputs[0]].value;
        const Mat& vb = nodes_[n.inputs[1]].value;
        double scale = g(0, 0) / norm;
        if (want(0)) {
          Mat& d = ensure_grad(n.inputs[0]);
          for (size_t k = 0; k < va.size(); ++k) d.a[k] += scale * (va.a[k] - vb.a[k]);
        }
        if (want(1)) {
          Mat& d = ensure_grad(n.inputs[1]);
          for (size_t k = 0; k < va.size(); ++k) d.a[k] -= scale * (va.a[k] - vb.a[k]);
        }
        break;
      }
      case Op::block_mean:
        if (want(0)) {
          Mat& d = ensure_grad(n.inputs[0]);
          const int nn = d.rows;
          const int num_blocks = n.ints[0];
          const int* order = n.ints.data() + 1;
          auto starts = equitable_starts(nn, num_blocks);
          // The forward fills both (a,b) and (b,a) from the a<=b
          // orientation's entries, so those entries collect the gradient
          // of both output cells.
          for (int a = 0; a < num_blocks; ++a)
            for (int b = a; b < num_blocks; ++b) {
              long count = static_cast<long>(starts[a + 1] - starts[a]) *
                           (starts[b + 1] - starts[b]);
              if (a == b) count -= starts[a + 1] - starts[a];
              if (count <= 0) continue;
              double gv = (a == b ? g(a, a) : g(a, b) + g(b, a)) / count;
              for (int i = starts[a]; i < starts[a + 1]; ++i)
                for (int j = starts[b]; j < starts[b + 1]; ++j) {
                  if (a == b && i == j) continue;
                  d(order[i], order[j]) += gv;
                }
            }
        }
        break;
      case Op::weighted_sum:
        for (size_t s = 0; s < n.inputs.size(); ++s)
          if (want(s)) {
            Mat& d = ensure_grad(n.inputs[s]);
            double w = n.reals[s];
            for (size_t k = 0; k < g.size(); ++k) d.a[k] += w * g.a[k];
          }
        break;
    }
  }
}

}  // namespace uil
