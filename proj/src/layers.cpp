#include "vcemo/layers.hpp"

#include <cmath>

#include "vcemo/error.hpp"

namespace vcemo {

ag::Var ParameterStore::add_parameter(std::string name, Matrix init) {
  auto var = ag::parameter(std::move(init));
  params_.push_back({std::move(name), var});
  return var;
}

Matrix* ParameterStore::add_buffer(std::string name, Matrix init) {
  buffers_.push_back({std::move(name), std::move(init)});
  return &buffers_.back().value;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.var.value().size());
  return n;
}

Matrix uniform_init(Index rows, Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

Matrix orthogonal_init(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  // Sign fix makes the draw uniform over the orthogonal group.
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return q;
}

ag::Var apply_dropout(const ag::Var& x, double p, ForwardContext& ctx) {
  if (!ctx.training || p <= 0.0) return x;
  if (ctx.rng == nullptr) throw Error(Errc::InvalidConfig, "training forward needs an rng for dropout");
  return ag::dropout(x, p, *ctx.rng);
}

Linear::Linear(ParameterStore& store, const std::string& name, Index in, Index out,
               std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = store.add_parameter(name + ".weight", uniform_init(in, out, bound, rng));
  bias_ = store.add_parameter(name + ".bias", uniform_init(1, out, bound, rng));
}

ag::Var Linear::operator()(const ag::Var& x) const {
  if (x.cols() != weight_.rows()) {
    throw Error(Errc::DimensionMismatch, "linear layer expects width " +
                                             std::to_string(weight_.rows()) + ", got " +
                                             std::to_string(x.cols()));
  }
  return ag::add_row(ag::matmul(x, weight_), bias_);
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, Index width, double eps)
    : eps_(eps) {
  gamma_ = store.add_parameter(name + ".gamma", Matrix::Ones(1, width));
  beta_ = store.add_parameter(name + ".beta", Matrix::Zero(1, width));
}

ag::Var LayerNorm::operator()(const ag::Var& x) const { return ag::layer_norm(x, gamma_, beta_, eps_); }

BatchNorm::BatchNorm(ParameterStore& store, const std::string& name, Index channels,
                     double momentum, double eps)
    : momentum_(momentum), eps_(eps) {
  gamma_ = store.add_parameter(name + ".gamma", Matrix::Ones(1, channels));
  beta_ = store.add_parameter(name + ".beta", Matrix::Zero(1, channels));
  running_mean_ = store.add_buffer(name + ".running_mean", Matrix::Zero(1, channels));
  running_var_ = store.add_buffer(name + ".running_var", Matrix::Ones(1, channels));
}

ag::Var BatchNorm::operator()(const ag::Var& x, const ForwardContext& ctx) {
  if (ctx.training) {
    RowVector mu;
    RowVector var;
    auto out = ag::batch_norm_train(x, gamma_, beta_, eps_, &mu, &var);
    const double n = static_cast<double>(x.rows());
    const RowVector unbiased = n > 1 ? RowVector(var * (n / (n - 1.0))) : var;
    running_mean_->row(0) = (1.0 - momentum_) * running_mean_->row(0) + momentum_ * mu;
    running_var_->row(0) = (1.0 - momentum_) * running_var_->row(0) + momentum_ * unbiased;
    return out;
  }
  const RowVector inv_std = (running_var_->array() + eps_).rsqrt();
  Matrix xhat = (x.value().rowwise() - running_mean_->row(0)) * inv_std.asDiagonal();
  Matrix out = xhat * gamma_.value().row(0).asDiagonal();
  out.rowwise() += beta_.value().row(0);
  return ag::make_op(std::move(out), {x, gamma_, beta_}, [xhat, inv_std](ag::Node& n) {
    auto& X = n.parent(0);
    auto& G = n.parent(1);
    auto& B = n.parent(2);
    if (X.requires_grad) X.accumulate(n.grad * (G.value.row(0).cwiseProduct(inv_std)).asDiagonal());
    if (G.requires_grad) G.accumulate(n.grad.cwiseProduct(xhat).colwise().sum());
    if (B.requires_grad) B.accumulate(n.grad.colwise().sum());
  });
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, Index in_channels,
               Index out_channels, Index kernel, Index stride_time, Index stride_freq,
               std::mt19937_64& rng)
    : proj_(store, name, kernel * kernel * in_channels, out_channels, rng),
      in_channels_(in_channels),
      kernel_(kernel),
      stride_time_(stride_time),
      stride_freq_(stride_freq) {}

MapShape Conv2d::output_shape(MapShape in) const {
  const Index pad = kernel_ / 2;
  return {(in.time + 2 * pad - kernel_) / stride_time_ + 1,
          (in.freq + 2 * pad - kernel_) / stride_freq_ + 1};
}

ag::Var Conv2d::operator()(const ag::Var& x, std::span<const MapShape> shapes) const {
  if (x.cols() != in_channels_) {
    throw Error(Errc::DimensionMismatch, "conv2d expects " + std::to_string(in_channels_) +
                                             " channels, got " + std::to_string(x.cols()));
  }
  const Index pad = kernel_ / 2;
  Index out_rows = 0;
  Index in_rows = 0;
  for (const auto& s : shapes) {
    out_rows += output_shape(s).rows();
    in_rows += s.rows();
  }
  if (in_rows != x.rows()) throw Error(Errc::ShapeMismatch, "conv2d: stacked maps do not match shapes");

  Eigen::MatrixXi index(out_rows, kernel_ * kernel_);
  Index out_base = 0;
  Index in_base = 0;
  for (const auto& s : shapes) {
    const MapShape o = output_shape(s);
    for (Index t = 0; t < o.time; ++t) {
      for (Index f = 0; f < o.freq; ++f) {
        const Index row = out_base + t * o.freq + f;
        for (Index kt = 0; kt < kernel_; ++kt) {
          for (Index kf = 0; kf < kernel_; ++kf) {
            const Index ti = t * stride_time_ - pad + kt;
            const Index fi = f * stride_freq_ - pad + kf;
            const bool inside = ti >= 0 && ti < s.time && fi >= 0 && fi < s.freq;
            index(row, kt * kernel_ + kf) =
                inside ? static_cast<int>(in_base + ti * s.freq + fi) : -1;
          }
        }
      }
    }
    out_base += o.rows();
    in_base += s.rows();
  }
  return proj_(ag::gather_patches(x, index));
}

Conv1d::Conv1d(ParameterStore& store, const std::string& name, Index in_channels,
               Index out_channels, Index kernel, std::mt19937_64& rng)
    : proj_(store, name, kernel * in_channels, out_channels, rng), kernel_(kernel) {
  if (kernel % 2 == 0) throw Error(Errc::InvalidConfig, "conv1d kernel must be odd");
}

ag::Var Conv1d::operator()(const ag::Var& x) const {
  const Index steps = x.rows();
  const Index half = kernel_ / 2;
  Eigen::MatrixXi index(steps, kernel_);
  for (Index t = 0; t < steps; ++t) {
    for (Index k = 0; k < kernel_; ++k) {
      const Index src = t - half + k;
      index(t, k) = (src >= 0 && src < steps) ? static_cast<int>(src) : -1;
    }
  }
  return proj_(ag::gather_patches(x, index));
}

Lstm::Lstm(ParameterStore& store, const std::string& name, Index in, Index hidden,
           std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  w_ih_ = store.add_parameter(name + ".w_ih", uniform_init(in, 4 * hidden, bound, rng));
  Matrix recurrent(hidden, 4 * hidden);
  for (Index g = 0; g < 4; ++g) recurrent.middleCols(g * hidden, hidden) = orthogonal_init(hidden, rng);
  w_hh_ = store.add_parameter(name + ".w_hh", std::move(recurrent));
  Matrix bias = Matrix::Zero(1, 4 * hidden);
  bias.middleCols(hidden, hidden).setOnes();  // forget gate starts open
  bias_ = store.add_parameter(name + ".bias", std::move(bias));
}

ag::Var Lstm::operator()(const ag::Var& x) const { return ag::lstm(x, w_ih_, w_hh_, bias_); }

}  // namespace vcemo
