#pragma once

// Minimal reverse-mode automatic differentiation over dense row-by-column
// matrices. Every model component is expressed with these operations, so a
// single backward() produces parameter gradients for the whole pipeline.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

namespace vcemo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

/// Per-row validity flags; 1 = valid position, 0 = padding.
using Mask = std::vector<std::uint8_t>;

inline Mask full_mask(Index n) { return Mask(static_cast<std::size_t>(n), 1); }

namespace ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node&)>;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  BackwardFn backward_fn;

  void accumulate(const Matrix& g);
  Node& parent(std::size_t i) { return *parents[i]; }
};

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() != 0; }
  bool requires_grad() const { return node_->requires_grad; }
  Index rows() const { return node_->value.rows(); }
  Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }
  void zero_grad() { node_->grad.resize(0, 0); }
  bool defined() const { return static_cast<bool>(node_); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

Var constant(Matrix value);
Var parameter(Matrix value);

/// Creates an interior node. `fn` receives the node after its grad has been
/// filled and must accumulate into every parent that requires a gradient.
Var make_op(Matrix value, std::vector<Var> parents, BackwardFn fn);

/// Seeds d(root)/d(root) = 1 and propagates through the recorded graph.
/// `root` must be 1x1.
void backward(const Var& root);

// Linear algebra
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a * b^T
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_row(const Var& a, const Var& row);  // broadcast a 1 x n row over a
Var mask_rows(const Var& a, const Mask& mask);
Var transpose(const Var& a);

// Pointwise nonlinearities
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);

// Structural
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, Index start, Index count);
Var slice_cols(const Var& a, Index start, Index count);
Var pad_rows(const Var& a, Index total_rows);
Var repeat_row(const Var& row, Index times);

/// Gathers rows of `a` into patches: out(p, k * C + c) = a(index(p, k), c),
/// or 0 when index(p, k) < 0.
Var gather_patches(const Var& a, const Eigen::MatrixXi& index);

/// Reshapes (R * group) x C into R x (group * C), concatenating each run of
/// `group` consecutive rows.
Var fold_rows(const Var& a, Index group);

// Reductions and normalizations
Var sum(const Var& a);
Var mean(const Var& a);
Var masked_mean_rows(const Var& a, const Mask& mask);
Var l2_normalize_rows(const Var& a, double eps = 1e-12);

/// Row-wise softmax over the unmasked columns; masked columns get weight 0.
/// Throws Errc::AllKeysMasked when a row has no unmasked column.
Var softmax_rows(const Var& a, const Mask& column_mask);

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps);

/// Normalizes each column over all rows using batch statistics.
/// Writes the batch mean and biased variance to the optional outputs.
Var batch_norm_train(const Var& x, const Var& gamma, const Var& beta, double eps,
                     RowVector* batch_mean, RowVector* batch_var);

/// Inverted dropout with a fresh Bernoulli mask drawn from `rng`.
Var dropout(const Var& a, double p, std::mt19937_64& rng);

/// Mean softmax cross-entropy of each logits row against its label.
Var cross_entropy(const Var& logits, std::span<const int> labels);

/// Full-sequence LSTM, gate order (input, forget, cell, output).
/// x: T x in, w_ih: in x 4H, w_hh: H x 4H, bias: 1 x 4H. Returns T x H.
Var lstm(const Var& x, const Var& w_ih, const Var& w_hh, const Var& bias);

}  // namespace ag
}  // namespace vcemo
