#include "vcemo/contrastive.hpp"

#include <cmath>

#include "vcemo/error.hpp"

namespace vcemo {

ag::Var supcon_loss(const ag::Var& z, std::span<const int> labels, double tau, const ContrastMemory* memory) {
  const Index n = z.rows();
  if (n < 2) throw Error(Errc::BatchTooSmall, "supcon needs at least 2 rows, got " + std::to_string(n));
  if (static_cast<Index>(labels.size()) != n) throw Error(Errc::LengthMismatch, "one label per projection");
  if (!(tau > 0.0)) throw Error(Errc::InvalidConfig, "temperature must be positive");
  if (!z.value().allFinite()) throw Error(Errc::NonFiniteInput, "projections are not finite");

  const Index q = memory ? memory->size() : 0;
  if (memory) {
    if (q > 0 && memory->z.cols() != z.cols()) {
      throw Error(Errc::DimensionMismatch, "memory width " + std::to_string(memory->z.cols()) +
                                               " vs projections " + std::to_string(z.cols()));
    }
    if (static_cast<Index>(memory->labels.size()) != q) throw Error(Errc::LengthMismatch, "memory labels");
  }

  // Contrast columns: batch rows first, then memory rows.
  Matrix contrast(n + q, z.cols());
  contrast.topRows(n) = z.value();
  if (q > 0) contrast.bottomRows(q) = memory->z;
  const Matrix scores = z.value() * contrast.transpose() / tau;

  // grad_scores(i, j) = softmax over A(i) minus the positive indicator / |P(i)|.
  Matrix g = Matrix::Zero(n, n + q);
  double total = 0.0;
  int anchors = 0;
  for (Index i = 0; i < n; ++i) {
    int positives = 0;
    for (Index j = 0; j < n + q; ++j) {
      if (j == i) continue;
      const bool is_memory = j >= n;
      const int label = is_memory ? memory->labels[static_cast<std::size_t>(j - n)] : labels[static_cast<std::size_t>(j)];
      if (label == labels[static_cast<std::size_t>(i)] && (!is_memory || memory->as_positives)) ++positives;
    }
    if (positives == 0) continue;

    double peak = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < n + q; ++j)
      if (j != i) peak = std::max(peak, scores(i, j));
    double denom = 0.0;
    for (Index j = 0; j < n + q; ++j)
      if (j != i) denom += std::exp(scores(i, j) - peak);
    const double log_denom = peak + std::log(denom);

    double positive_sum = 0.0;
    for (Index j = 0; j < n + q; ++j) {
      if (j == i) continue;
      g(i, j) = std::exp(scores(i, j) - log_denom);
      const bool is_memory = j >= n;
      const int label = is_memory ? memory->labels[static_cast<std::size_t>(j - n)] : labels[static_cast<std::size_t>(j)];
      if (label == labels[static_cast<std::size_t>(i)] && (!is_memory || memory->as_positives)) {
        positive_sum += scores(i, j) - log_denom;
        g(i, j) -= 1.0 / positives;
      }
    }
    total += -positive_sum / positives;
    ++anchors;
  }
  if (anchors == 0) throw Error(Errc::NoPositivesAnywhere, "no anchor has a positive");

  const double loss = std::max(0.0, total / anchors);
  const double coef = 1.0 / (anchors * tau);
  Matrix grad_z = coef * (g * contrast + g.leftCols(n).transpose() * z.value());
  return ag::make_op(Matrix::Constant(1, 1, loss), {z}, [grad_z = std::move(grad_z)](ag::Node& self) {
    self.parent(0).accumulate(self.grad(0, 0) * grad_z);
  });
}

LossBreakdown combined_loss(double l_ce, double l_supcon, double alpha) {
  if (!std::isfinite(l_ce) || !std::isfinite(l_supcon) || !std::isfinite(alpha)) {
    throw Error(Errc::NonFiniteInput, "loss terms must be finite");
  }
  if (alpha < 0.0) throw Error(Errc::InvalidConfig, "alpha must be >= 0");
  return {l_ce, l_supcon, alpha, (l_ce + alpha * l_supcon) / (1.0 + alpha)};
}

ag::Var combined_loss(const ag::Var& l_ce, const ag::Var& l_supcon, double alpha) {
  const auto b = combined_loss(l_ce.scalar(), l_supcon.scalar(), alpha);
  return ag::make_op(Matrix::Constant(1, 1, b.l_total), {l_ce, l_supcon}, [alpha](ag::Node& self) {
    const double g = self.grad(0, 0) / (1.0 + alpha);
    if (self.parent(0).requires_grad) self.parent(0).accumulate(Matrix::Constant(1, 1, g));
    if (self.parent(1).requires_grad) self.parent(1).accumulate(Matrix::Constant(1, 1, alpha * g));
  });
}

MoCoQueue::MoCoQueue(std::size_t capacity, Index dim) : capacity_(capacity), dim_(dim) {
  if (capacity == 0) throw Error(Errc::InvalidConfig, "queue capacity must be positive");
}

void MoCoQueue::enqueue(const Matrix& z, std::span<const int> labels) {
  if (z.cols() != dim_) {
    throw Error(Errc::DimensionMismatch, "queue holds " + std::to_string(dim_) + "-d entries, got " +
                                             std::to_string(z.cols()));
  }
  if (static_cast<Index>(labels.size()) != z.rows()) throw Error(Errc::LengthMismatch, "one label per key");
  for (Index i = 0; i < z.rows(); ++i) {
    entries_.emplace_back(z.row(i), labels[static_cast<std::size_t>(i)]);
    ++enqueued_;
    if (entries_.size() > capacity_) {
      entries_.pop_front();
      ++evicted_;
    }
  }
}

ContrastMemory MoCoQueue::snapshot(bool as_positives) const {
  ContrastMemory m;
  m.z.resize(static_cast<Index>(entries_.size()), dim_);
  m.as_positives = as_positives;
  Index r = 0;
  for (const auto& [z, label] : entries_) {
    m.z.row(r++) = z;
    m.labels.push_back(label);
  }
  return m;
}

void momentum_update(ParameterStore& key, const ParameterStore& query, double m) {
  auto& kp = key.parameters();
  const auto& qp = query.parameters();
  if (kp.size() != qp.size()) throw Error(Errc::DimensionMismatch, "key and query encoders differ");
  for (std::size_t i = 0; i < kp.size(); ++i) {
    const Matrix& src = qp[i].var.value();
    Matrix& dst = kp[i].var.mutable_value();
    if (src.rows() != dst.rows() || src.cols() != dst.cols()) {
      throw Error(Errc::DimensionMismatch, "parameter " + kp[i].name + " differs in shape");
    }
    dst = m * dst + (1.0 - m) * src;
  }
}

void copy_state(ParameterStore& to, const ParameterStore& from) {
  if (to.parameters().size() != from.parameters().size() || to.buffers().size() != from.buffers().size()) {
    throw Error(Errc::DimensionMismatch, "parameter stores differ");
  }
  for (std::size_t i = 0; i < from.parameters().size(); ++i) {
    to.parameters()[i].var.mutable_value() = from.parameters()[i].var.value();
  }
  for (std::size_t i = 0; i < from.buffers().size(); ++i) to.buffers()[i].value = from.buffers()[i].value;
}

std::pair<BatchOutputs, BatchOutputs> paired_views(EmotionModel& model,
                                                   std::span<const SampleFeatures* const> batch,
                                                   ForwardContext& ctx) {
  if (!model.has_dropout()) throw Error(Errc::DropoutDisabled, "every dropout probability is 0");
  if (!ctx.training) throw Error(Errc::EvalMode, "paired views need active dropout");
  auto first = model.forward(batch, ctx);
  auto second = model.forward(batch, ctx);
  return {first, second};
}

}  // namespace vcemo
