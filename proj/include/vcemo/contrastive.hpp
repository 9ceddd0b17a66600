#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <utility>
#include <vector>

#include "vcemo/fusion.hpp"

namespace vcemo {

/// Fixed contrast entries appended to every anchor's contrast set.
struct ContrastMemory {
  Matrix z;  // Q x dim
  std::vector<int> labels;
  /// When false, memory entries act only as negatives.
  bool as_positives = true;

  Index size() const { return z.rows(); }
};

/// Supervised contrastive loss over the rows of `z` (N x dim). For anchor i
/// the contrast set is every other batch row plus the memory; positives are
/// the contrast entries sharing its label. Anchors without positives are
/// skipped and the loss is the mean over the rest.
ag::Var supcon_loss(const ag::Var& z, std::span<const int> labels, double tau,
                    const ContrastMemory* memory = nullptr);

struct LossBreakdown {
  double l_ce = 0.0;
  double l_supcon = 0.0;
  double alpha = 0.0;
  double l_total = 0.0;
};

/// (l_ce + alpha * l_supcon) / (1 + alpha).
LossBreakdown combined_loss(double l_ce, double l_supcon, double alpha);
ag::Var combined_loss(const ag::Var& l_ce, const ag::Var& l_supcon, double alpha);

/// FIFO memory of (projection, label) pairs.
class MoCoQueue {
 public:
  explicit MoCoQueue(std::size_t capacity = 16384, Index dim = 128);

  /// Appends each row of `z` with its label, evicting the oldest entries
  /// beyond capacity.
  void enqueue(const Matrix& z, std::span<const int> labels);
  ContrastMemory snapshot(bool as_positives = true) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  Index dim() const { return dim_; }
  std::uint64_t total_enqueued() const { return enqueued_; }
  std::uint64_t total_evicted() const { return evicted_; }
  const std::deque<std::pair<RowVector, int>>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  Index dim_;
  std::deque<std::pair<RowVector, int>> entries_;
  std::uint64_t enqueued_ = 0;
  std::uint64_t evicted_ = 0;
};

/// key <- m * key + (1 - m) * query for every parameter.
void momentum_update(ParameterStore& key, const ParameterStore& query, double m);
/// Copies parameters and buffers of `from` into `to`.
void copy_state(ParameterStore& to, const ParameterStore& from);

/// Two training-mode forwards of the same batch with independent dropout
/// masks.
std::pair<BatchOutputs, BatchOutputs> paired_views(EmotionModel& model,
                                                   std::span<const SampleFeatures* const> batch,
                                                   ForwardContext& ctx);

}  // namespace vcemo
