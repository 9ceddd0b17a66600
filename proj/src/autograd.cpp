#include "vcemo/autograd.hpp"

#include <cmath>
#include <unordered_set>

#include "vcemo/error.hpp"

namespace vcemo::ag {

namespace {

thread_local bool g_grad_enabled = true;

RowVector mask_vector(const Mask& mask) {
  RowVector m(static_cast<Index>(mask.size()));
  for (std::size_t i = 0; i < mask.size(); ++i) m(static_cast<Index>(i)) = mask[i] ? 1.0 : 0.0;
  return m;
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(Errc::ShapeMismatch, std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                                         std::to_string(a.cols()) + " vs " +
                                         std::to_string(b.rows()) + "x" +
                                         std::to_string(b.cols()));
  }
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void Node::accumulate(const Matrix& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var parameter(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var make_op(Matrix value, std::vector<Var> parents, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (auto& p : parents) node->parents.push_back(p.node());
      node->backward_fn = std::move(fn);
    }
  }
  return Var(std::move(node));
}

void backward(const Var& root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw Error(Errc::ShapeMismatch, "backward() needs a scalar root");
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS; recurrent graphs get deep.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
  }
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw Error(Errc::ShapeMismatch, "matmul: inner dimensions " + std::to_string(a.cols()) +
                                         " vs " + std::to_string(b.rows()));
  }
  return make_op(a.value() * b.value(), {a, b}, [](Node& n) {
    auto& A = n.parent(0);
    auto& B = n.parent(1);
    if (A.requires_grad) A.accumulate(n.grad * B.value.transpose());
    if (B.requires_grad) B.accumulate(A.value.transpose() * n.grad);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) {
    throw Error(Errc::ShapeMismatch, "matmul_nt: feature widths " + std::to_string(a.cols()) +
                                         " vs " + std::to_string(b.cols()));
  }
  return make_op(a.value() * b.value().transpose(), {a, b}, [](Node& n) {
    auto& A = n.parent(0);
    auto& B = n.parent(1);
    if (A.requires_grad) A.accumulate(n.grad * B.value);
    if (B.requires_grad) B.accumulate(n.grad.transpose() * A.value);
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [](Node& n) {
    for (auto& p : n.parents)
      if (p->requires_grad) p->accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [](Node& n) {
    if (n.parent(0).requires_grad) n.parent(0).accumulate(n.grad);
    if (n.parent(1).requires_grad) n.parent(1).accumulate(-n.grad);
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
    auto& A = n.parent(0);
    auto& B = n.parent(1);
    if (A.requires_grad) A.accumulate(n.grad.cwiseProduct(B.value));
    if (B.requires_grad) B.accumulate(n.grad.cwiseProduct(A.value));
  });
}

Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {a}, [s](Node& n) { n.parent(0).accumulate(n.grad * s); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw Error(Errc::ShapeMismatch, "add_row: bias must be 1x" + std::to_string(a.cols()));
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_op(std::move(out), {a, row}, [](Node& n) {
    if (n.parent(0).requires_grad) n.parent(0).accumulate(n.grad);
    if (n.parent(1).requires_grad) n.parent(1).accumulate(n.grad.colwise().sum());
  });
}

Var mask_rows(const Var& a, const Mask& mask) {
  if (static_cast<Index>(mask.size()) != a.rows()) {
    throw Error(Errc::ShapeMismatch, "mask_rows: mask length " + std::to_string(mask.size()) +
                                         " vs rows " + std::to_string(a.rows()));
  }
  Vector m = mask_vector(mask).transpose();
  Matrix out = m.asDiagonal() * a.value();
  return make_op(std::move(out), {a}, [m](Node& n) { n.parent(0).accumulate(m.asDiagonal() * n.grad); });
}

Var transpose(const Var& a) {
  return make_op(a.value().transpose(), {a},
                 [](Node& n) { n.parent(0).accumulate(n.grad.transpose()); });
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return make_op(std::move(out), {a}, [](Node& n) {
    auto& A = n.parent(0);
    A.accumulate(n.grad.cwiseProduct((A.value.array() > 0.0).cast<double>().matrix()));
  });
}

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) { return sigmoid_scalar(x); });
  return make_op(out, {a}, [](Node& n) {
    const Matrix& y = n.value;
    n.parent(0).accumulate(n.grad.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
  });
}

Var tanh(const Var& a) {
  Matrix out = a.value().array().tanh().matrix();
  return make_op(out, {a}, [](Node& n) {
    const Matrix& y = n.value;
    n.parent(0).accumulate(n.grad.cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error(Errc::ShapeMismatch, "concat_cols: nothing to concatenate");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw Error(Errc::ShapeMismatch, "concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }
  return make_op(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                 [offsets](Node& n) {
                   for (std::size_t i = 0; i < n.parents.size(); ++i) {
                     auto& P = *n.parents[i];
                     if (P.requires_grad) P.accumulate(n.grad.middleCols(offsets[i], P.value.cols()));
                   }
                 });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error(Errc::ShapeMismatch, "concat_rows: nothing to concatenate");
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw Error(Errc::ShapeMismatch, "concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Index> offsets;
  Index off = 0;
  for (const auto& p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    offsets.push_back(off);
    off += p.rows();
  }
  return make_op(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                 [offsets](Node& n) {
                   for (std::size_t i = 0; i < n.parents.size(); ++i) {
                     auto& P = *n.parents[i];
                     if (P.requires_grad) P.accumulate(n.grad.middleRows(offsets[i], P.value.rows()));
                   }
                 });
}

Var slice_rows(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw Error(Errc::ShapeMismatch, "slice_rows out of range");
  }
  return make_op(a.value().middleRows(start, count), {a}, [start, count](Node& n) {
    auto& A = n.parent(0);
    Matrix g = Matrix::Zero(A.value.rows(), A.value.cols());
    g.middleRows(start, count) = n.grad;
    A.accumulate(g);
  });
}

Var slice_cols(const Var& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw Error(Errc::ShapeMismatch, "slice_cols out of range");
  }
  return make_op(a.value().middleCols(start, count), {a}, [start, count](Node& n) {
    auto& A = n.parent(0);
    Matrix g = Matrix::Zero(A.value.rows(), A.value.cols());
    g.middleCols(start, count) = n.grad;
    A.accumulate(g);
  });
}

Var pad_rows(const Var& a, Index total_rows) {
  if (total_rows < a.rows()) throw Error(Errc::ShapeMismatch, "pad_rows: target shorter than input");
  if (total_rows == a.rows()) return a;
  Matrix out = Matrix::Zero(total_rows, a.cols());
  out.topRows(a.rows()) = a.value();
  return make_op(std::move(out), {a}, [](Node& n) {
    auto& A = n.parent(0);
    A.accumulate(n.grad.topRows(A.value.rows()));
  });
}

Var repeat_row(const Var& row, Index times) {
  if (row.rows() != 1) throw Error(Errc::ShapeMismatch, "repeat_row: input must be a single row");
  Matrix out = row.value().replicate(times, 1);
  return make_op(std::move(out), {row},
                 [](Node& n) { n.parent(0).accumulate(n.grad.colwise().sum()); });
}

Var gather_patches(const Var& a, const Eigen::MatrixXi& index) {
  const Index channels = a.cols();
  const Index taps = index.cols();
  Matrix out = Matrix::Zero(index.rows(), taps * channels);
  for (Index p = 0; p < index.rows(); ++p) {
    for (Index k = 0; k < taps; ++k) {
      const int src = index(p, k);
      if (src >= 0) out.block(p, k * channels, 1, channels) = a.value().row(src);
    }
  }
  return make_op(std::move(out), {a}, [index, channels, taps](Node& n) {
    auto& A = n.parent(0);
    Matrix g = Matrix::Zero(A.value.rows(), A.value.cols());
    for (Index p = 0; p < index.rows(); ++p) {
      for (Index k = 0; k < taps; ++k) {
        const int src = index(p, k);
        if (src >= 0) g.row(src) += n.grad.block(p, k * channels, 1, channels);
      }
    }
    A.accumulate(g);
  });
}

Var fold_rows(const Var& a, Index group) {
  if (group <= 0 || a.rows() % group != 0) {
    throw Error(Errc::ShapeMismatch, "fold_rows: rows not divisible by group");
  }
  const Index out_rows = a.rows() / group;
  const Index channels = a.cols();
  Matrix out(out_rows, group * channels);
  for (Index r = 0; r < out_rows; ++r)
    for (Index g = 0; g < group; ++g) out.block(r, g * channels, 1, channels) = a.value().row(r * group + g);
  return make_op(std::move(out), {a}, [group, channels](Node& n) {
    auto& A = n.parent(0);
    Matrix g(A.value.rows(), A.value.cols());
    for (Index r = 0; r < n.grad.rows(); ++r)
      for (Index k = 0; k < group; ++k) g.row(r * group + k) = n.grad.block(r, k * channels, 1, channels);
    A.accumulate(g);
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return make_op(std::move(out), {a}, [](Node& n) {
    auto& A = n.parent(0);
    A.accumulate(Matrix::Constant(A.value.rows(), A.value.cols(), n.grad(0, 0)));
  });
}

Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var masked_mean_rows(const Var& a, const Mask& mask) {
  if (static_cast<Index>(mask.size()) != a.rows()) {
    throw Error(Errc::ShapeMismatch, "masked_mean_rows: mask length mismatch");
  }
  const RowVector m = mask_vector(mask);
  const double count = m.sum();
  if (count <= 0.0) throw Error(Errc::EmptyInput, "masked_mean_rows: every row is masked");
  Matrix out = (m * a.value()) / count;
  return make_op(std::move(out), {a}, [m, count](Node& n) {
    n.parent(0).accumulate(m.transpose() * n.grad / count);
  });
}

Var l2_normalize_rows(const Var& a, double eps) {
  const Vector norms = a.value().rowwise().norm().cwiseMax(eps);
  Matrix out = norms.cwiseInverse().asDiagonal() * a.value();
  return make_op(out, {a}, [norms](Node& n) {
    const Matrix& y = n.value;
    const Vector dots = (y.cwiseProduct(n.grad)).rowwise().sum();
    Matrix g = n.grad - dots.asDiagonal() * y;
    n.parent(0).accumulate(norms.cwiseInverse().asDiagonal() * g);
  });
}

Var softmax_rows(const Var& a, const Mask& column_mask) {
  if (static_cast<Index>(column_mask.size()) != a.cols()) {
    throw Error(Errc::ShapeMismatch, "softmax_rows: mask length " +
                                         std::to_string(column_mask.size()) + " vs columns " +
                                         std::to_string(a.cols()));
  }
  bool any = false;
  for (auto v : column_mask) any = any || v;
  if (!any) throw Error(Errc::AllKeysMasked, "every key position is masked");

  const Matrix& x = a.value();
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < x.cols(); ++c)
      if (column_mask[static_cast<std::size_t>(c)]) mx = std::max(mx, x(r, c));
    double z = 0.0;
    for (Index c = 0; c < x.cols(); ++c) {
      if (column_mask[static_cast<std::size_t>(c)]) {
        out(r, c) = std::exp(x(r, c) - mx);
        z += out(r, c);
      }
    }
    out.row(r) /= z;
  }
  return make_op(out, {a}, [](Node& n) {
    const Matrix& y = n.value;
    const Vector dots = (y.cwiseProduct(n.grad)).rowwise().sum();
    Matrix g = y.cwiseProduct((n.grad.colwise() - dots));
    n.parent(0).accumulate(g);
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Index d = x.cols();
  if (gamma.cols() != d || beta.cols() != d) throw Error(Errc::ShapeMismatch, "layer_norm: width");
  const Vector mu = x.value().rowwise().mean();
  Matrix centered = x.value().colwise() - mu;
  const Vector var = centered.array().square().rowwise().mean();
  const Vector inv_std = (var.array() + eps).rsqrt();
  Matrix xhat = inv_std.asDiagonal() * centered;
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += beta.value().row(0);
  return make_op(std::move(out), {x, gamma, beta}, [xhat, inv_std](Node& n) {
    auto& X = n.parent(0);
    auto& G = n.parent(1);
    auto& B = n.parent(2);
    if (G.requires_grad) G.accumulate(n.grad.cwiseProduct(xhat).colwise().sum());
    if (B.requires_grad) B.accumulate(n.grad.colwise().sum());
    if (X.requires_grad) {
      const Matrix dxhat = (n.grad.array().rowwise() * G.value.row(0).array()).matrix();
      const Vector m1 = dxhat.rowwise().mean();
      const Vector m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
      Matrix dx = (dxhat.colwise() - m1) - m2.asDiagonal() * xhat;
      X.accumulate(inv_std.asDiagonal() * dx);
    }
  });
}

Var batch_norm_train(const Var& x, const Var& gamma, const Var& beta, double eps,
                     RowVector* batch_mean, RowVector* batch_var) {
  const Index c = x.cols();
  if (gamma.cols() != c || beta.cols() != c) throw Error(Errc::ShapeMismatch, "batch_norm: width");
  if (x.rows() < 1) throw Error(Errc::EmptyInput, "batch_norm: no rows");
  const RowVector mu = x.value().colwise().mean();
  Matrix centered = x.value().rowwise() - mu;
  const RowVector var = centered.array().square().colwise().mean();
  const RowVector inv_std = (var.array() + eps).rsqrt();
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;
  Matrix xhat = centered * inv_std.asDiagonal();
  Matrix out = xhat * gamma.value().row(0).asDiagonal();
  out.rowwise() += beta.value().row(0);
  return make_op(std::move(out), {x, gamma, beta}, [xhat, inv_std](Node& n) {
    auto& X = n.parent(0);
    auto& G = n.parent(1);
    auto& B = n.parent(2);
    if (G.requires_grad) G.accumulate(n.grad.cwiseProduct(xhat).colwise().sum());
    if (B.requires_grad) B.accumulate(n.grad.colwise().sum());
    if (X.requires_grad) {
      const Matrix dxhat = n.grad * G.value.row(0).asDiagonal();
      const RowVector m1 = dxhat.colwise().mean();
      const RowVector m2 = dxhat.cwiseProduct(xhat).colwise().mean();
      Matrix dx = (dxhat.rowwise() - m1) - xhat * m2.asDiagonal();
      X.accumulate(dx * inv_std.asDiagonal());
    }
  });
}

Var dropout(const Var& a, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return a;
  const double keep = 1.0 - p;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix m(a.rows(), a.cols());
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) m(i, j) = unit(rng) < keep ? 1.0 / keep : 0.0;
  Matrix out = a.value().cwiseProduct(m);
  return make_op(std::move(out), {a}, [m](Node& n) { n.parent(0).accumulate(n.grad.cwiseProduct(m)); });
}

Var cross_entropy(const Var& logits, std::span<const int> labels) {
  const Matrix& x = logits.value();
  if (static_cast<Index>(labels.size()) != x.rows()) {
    throw Error(Errc::LengthMismatch, "cross_entropy: one label per logits row expected");
  }
  Matrix probs(x.rows(), x.cols());
  double total = 0.0;
  for (Index r = 0; r < x.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= x.cols()) throw Error(Errc::LabelOutOfRange, "cross_entropy label");
    const double mx = x.row(r).maxCoeff();
    const RowVector e = (x.row(r).array() - mx).exp();
    const double z = e.sum();
    probs.row(r) = e / z;
    total += (mx + std::log(z)) - x(r, y);
  }
  const double count = static_cast<double>(x.rows());
  Matrix out(1, 1);
  out(0, 0) = total / count;
  std::vector<int> ys(labels.begin(), labels.end());
  return make_op(std::move(out), {logits}, [probs, ys, count](Node& n) {
    Matrix g = probs;
    for (std::size_t r = 0; r < ys.size(); ++r) g(static_cast<Index>(r), ys[r]) -= 1.0;
    n.parent(0).accumulate(g * (n.grad(0, 0) / count));
  });
}

Var lstm(const Var& x, const Var& w_ih, const Var& w_hh, const Var& bias) {
  const Index steps = x.rows();
  const Index hidden = w_hh.rows();
  if (w_ih.rows() != x.cols() || w_ih.cols() != 4 * hidden || w_hh.cols() != 4 * hidden ||
      bias.rows() != 1 || bias.cols() != 4 * hidden) {
    throw Error(Errc::ShapeMismatch, "lstm: weight shapes do not match input/hidden sizes");
  }
  if (steps == 0) throw Error(Errc::EmptyInput, "lstm: empty sequence");

  Matrix pre = x.value() * w_ih.value();
  pre.rowwise() += bias.value().row(0);

  // Per-step activations kept for backpropagation through time.
  auto gates = std::make_shared<Matrix>(steps, 4 * hidden);
  auto cells = std::make_shared<Matrix>(steps, hidden);
  auto cell_tanh = std::make_shared<Matrix>(steps, hidden);
  Matrix h_out(steps, hidden);
  RowVector h = RowVector::Zero(hidden);
  RowVector c = RowVector::Zero(hidden);
  for (Index t = 0; t < steps; ++t) {
    RowVector a = pre.row(t) + h * w_hh.value();
    for (Index k = 0; k < hidden; ++k) {
      a(k) = sigmoid_scalar(a(k));
      a(hidden + k) = sigmoid_scalar(a(hidden + k));
      a(2 * hidden + k) = std::tanh(a(2 * hidden + k));
      a(3 * hidden + k) = sigmoid_scalar(a(3 * hidden + k));
    }
    c = a.segment(hidden, hidden).cwiseProduct(c) +
        a.segment(0, hidden).cwiseProduct(a.segment(2 * hidden, hidden));
    const RowVector tc = c.array().tanh();
    h = a.segment(3 * hidden, hidden).cwiseProduct(tc);
    gates->row(t) = a;
    cells->row(t) = c;
    cell_tanh->row(t) = tc;
    h_out.row(t) = h;
  }

  return make_op(h_out, {x, w_ih, w_hh, bias}, [gates, cells, cell_tanh, hidden](Node& n) {
    auto& X = n.parent(0);
    auto& Wih = n.parent(1);
    auto& Whh = n.parent(2);
    auto& B = n.parent(3);
    const Matrix& hs = n.value;
    const Index steps = hs.rows();
    Matrix dpre(steps, 4 * hidden);
    RowVector dh_next = RowVector::Zero(hidden);
    RowVector dc_next = RowVector::Zero(hidden);
    for (Index t = steps - 1; t >= 0; --t) {
      const Eigen::ArrayXXd i = gates->row(t).segment(0, hidden).array();
      const Eigen::ArrayXXd f = gates->row(t).segment(hidden, hidden).array();
      const Eigen::ArrayXXd g = gates->row(t).segment(2 * hidden, hidden).array();
      const Eigen::ArrayXXd o = gates->row(t).segment(3 * hidden, hidden).array();
      const Eigen::ArrayXXd tc = cell_tanh->row(t).array();
      const RowVector dh = n.grad.row(t) + dh_next;
      const Eigen::ArrayXXd dha = dh.array();
      RowVector dc = (dha * o * (1.0 - tc.square())).matrix() + dc_next;
      const RowVector c_prev = t > 0 ? RowVector(cells->row(t - 1)) : RowVector::Zero(hidden);
      dpre.row(t).segment(0, hidden) = (dc.array() * g * i * (1.0 - i)).matrix();
      dpre.row(t).segment(hidden, hidden) = (dc.array() * c_prev.array() * f * (1.0 - f)).matrix();
      dpre.row(t).segment(2 * hidden, hidden) = (dc.array() * i * (1.0 - g.square())).matrix();
      dpre.row(t).segment(3 * hidden, hidden) = (dha * tc * o * (1.0 - o)).matrix();
      dc_next = (dc.array() * f).matrix();
      dh_next = dpre.row(t) * Whh.value.transpose();
    }
    if (X.requires_grad) X.accumulate(dpre * Wih.value.transpose());
    if (Wih.requires_grad) Wih.accumulate(X.value.transpose() * dpre);
    if (Whh.requires_grad) {
      Matrix h_prev = Matrix::Zero(steps, hidden);
      if (steps > 1) h_prev.bottomRows(steps - 1) = hs.topRows(steps - 1);
      Whh.accumulate(h_prev.transpose() * dpre);
    }
    if (B.requires_grad) B.accumulate(dpre.colwise().sum());
  });
}

}  // namespace vcemo::ag
