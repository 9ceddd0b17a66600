#pragma once

#include <deque>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vcemo/autograd.hpp"

namespace vcemo {

/// Training/evaluation switch plus the randomness source for dropout.
struct ForwardContext {
  bool training = false;
  std::mt19937_64* rng = nullptr;
};

struct NamedParameter {
  std::string name;
  ag::Var var;
};

struct NamedBuffer {
  std::string name;
  Matrix value;
};

/// Owns every trainable parameter and persistent buffer of a model, in
/// registration order. Registration order is the checkpoint order.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  ag::Var add_parameter(std::string name, Matrix init);
  Matrix* add_buffer(std::string name, Matrix init);

  std::vector<NamedParameter>& parameters() { return params_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::deque<NamedBuffer>& buffers() { return buffers_; }
  const std::deque<NamedBuffer>& buffers() const { return buffers_; }

  void zero_grad();
  std::size_t parameter_count() const;

 private:
  std::vector<NamedParameter> params_;
  std::deque<NamedBuffer> buffers_;
};

Matrix uniform_init(Index rows, Index cols, double bound, std::mt19937_64& rng);
Matrix orthogonal_init(Index n, std::mt19937_64& rng);

ag::Var apply_dropout(const ag::Var& x, double p, ForwardContext& ctx);

/// x * W + b with W: in x out.
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, Index in, Index out, std::mt19937_64& rng);

  ag::Var operator()(const ag::Var& x) const;
  Index in_features() const { return weight_.rows(); }
  Index out_features() const { return weight_.cols(); }
  const ag::Var& weight() const { return weight_; }
  const ag::Var& bias() const { return bias_; }

 private:
  ag::Var weight_;
  ag::Var bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, Index width, double eps = 1e-6);
  ag::Var operator()(const ag::Var& x) const;

 private:
  ag::Var gamma_;
  ag::Var beta_;
  double eps_ = 1e-6;
};

/// Per-channel normalization with running statistics for evaluation.
/// Rows are positions (across the whole batch), columns are channels.
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(ParameterStore& store, const std::string& name, Index channels,
            double momentum = 0.1, double eps = 1e-5);
  ag::Var operator()(const ag::Var& x, const ForwardContext& ctx);

 private:
  ag::Var gamma_;
  ag::Var beta_;
  Matrix* running_mean_ = nullptr;
  Matrix* running_var_ = nullptr;
  double momentum_ = 0.1;
  double eps_ = 1e-5;
};

/// Spatial extent of one feature map stored as (time * freq) x channels,
/// row index = t * freq + f.
struct MapShape {
  Index time = 0;
  Index freq = 0;
  Index rows() const { return time * freq; }
};

/// 2-D convolution over (time, frequency) maps, zero padding, any stride.
/// Several maps can be stacked row-wise and convolved in one product.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterStore& store, const std::string& name, Index in_channels, Index out_channels,
         Index kernel, Index stride_time, Index stride_freq, std::mt19937_64& rng);

  MapShape output_shape(MapShape in) const;
  /// `x` holds the maps of `shapes` stacked in order.
  ag::Var operator()(const ag::Var& x, std::span<const MapShape> shapes) const;

 private:
  Linear proj_;
  Index in_channels_ = 0;
  Index kernel_ = 3;
  Index stride_time_ = 1;
  Index stride_freq_ = 1;
};

/// 1-D convolution over time with same-length zero padding (odd kernel).
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(ParameterStore& store, const std::string& name, Index in_channels, Index out_channels,
         Index kernel, std::mt19937_64& rng);
  ag::Var operator()(const ag::Var& x) const;

 private:
  Linear proj_;
  Index kernel_ = 3;
};

/// Unidirectional single-layer LSTM returning every hidden state.
class Lstm {
 public:
  Lstm() = default;
  Lstm(ParameterStore& store, const std::string& name, Index in, Index hidden, std::mt19937_64& rng);
  ag::Var operator()(const ag::Var& x) const;
  Index hidden() const { return w_hh_.rows(); }

 private:
  ag::Var w_ih_;
  ag::Var w_hh_;
  ag::Var bias_;
};

}  // namespace vcemo
