#pragma once

#include <utility>
#include <vector>

#include "vcemo/layers.hpp"

namespace vcemo {

struct AttentionConfig {
  Index d_model = 128;
  Index n_layers = 2;
  Index n_heads = 1;
  Index ffn_width = 512;
  double dropout_p = 0.1;

  void validate() const;
};

struct AttentionResult {
  ag::Var output;  // Nq x d
  Matrix weights;  // Nq x Nk, zero on masked keys
};

/// softmax(q k^T / sqrt(d)) v over the unmasked keys, d = q.cols().
AttentionResult scaled_dot_attention(const ag::Var& q, const ag::Var& k, const ag::Var& v,
                                     const Mask& key_mask = {});

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, Index d_model, Index n_heads,
                     std::mt19937_64& rng);

  /// Queries from `x`, keys and values from `source`. Per-head weights are
  /// appended to `weights` when it is non-null.
  ag::Var operator()(const ag::Var& x, const ag::Var& source, const Mask& source_mask,
                     std::vector<Matrix>* weights = nullptr) const;

 private:
  Linear q_, k_, v_, out_;
  Index n_heads_ = 1;
};

/// LayerNorm(x + dropout(attend(x, source))).
class AttentionSublayer {
 public:
  AttentionSublayer() = default;
  AttentionSublayer(ParameterStore& store, const std::string& name, const AttentionConfig& cfg,
                    std::mt19937_64& rng);
  ag::Var operator()(const ag::Var& x, const ag::Var& source, const Mask& source_mask, ForwardContext& ctx,
                     std::vector<Matrix>* weights = nullptr) const;

 private:
  MultiHeadAttention mha_;
  LayerNorm norm_;
  double dropout_p_ = 0.1;
};

/// LayerNorm(x + dropout(W2 relu(W1 x))).
class FeedForwardSublayer {
 public:
  FeedForwardSublayer() = default;
  FeedForwardSublayer(ParameterStore& store, const std::string& name, const AttentionConfig& cfg,
                      std::mt19937_64& rng);
  ag::Var operator()(const ag::Var& x, ForwardContext& ctx) const;

 private:
  Linear hidden_, out_;
  LayerNorm norm_;
  double dropout_p_ = 0.1;
};

/// Attention sub-layer plus feed-forward sub-layer. Called with x as its own
/// source it is a self-attention block, otherwise a guided-attention block.
/// Rows of x outside `x_mask` are zeroed in the output.
class AttentionBlock {
 public:
  AttentionBlock() = default;
  AttentionBlock(ParameterStore& store, const std::string& name, const AttentionConfig& cfg,
                 std::mt19937_64& rng);

  ag::Var self(const ag::Var& x, const Mask& x_mask, ForwardContext& ctx,
               std::vector<Matrix>* weights = nullptr) const;
  ag::Var guided(const ag::Var& x, const Mask& x_mask, const ag::Var& guide, const Mask& guide_mask,
                 ForwardContext& ctx, std::vector<Matrix>* weights = nullptr) const;

 private:
  AttentionSublayer attend_;
  FeedForwardSublayer ffn_;
};

/// Self-attention, then guided attention, then feed-forward.
class DecoderBlock {
 public:
  DecoderBlock() = default;
  DecoderBlock(ParameterStore& store, const std::string& name, const AttentionConfig& cfg,
               std::mt19937_64& rng);

  ag::Var operator()(const ag::Var& x, const Mask& x_mask, const ag::Var& guide, const Mask& guide_mask,
                     ForwardContext& ctx) const;

 private:
  AttentionSublayer self_;
  AttentionSublayer guided_;
  FeedForwardSublayer ffn_;
};

/// Encoder-decoder co-attention. Modality A runs through n_layers
/// self-attention blocks; every decoder block of modality B is guided by
/// A's final output.
class CoAttention {
 public:
  CoAttention() = default;
  CoAttention(ParameterStore& store, const std::string& name, const AttentionConfig& cfg, std::mt19937_64& rng);

  std::pair<ag::Var, ag::Var> operator()(const ag::Var& a, const Mask& a_mask, const ag::Var& b,
                                         const Mask& b_mask, ForwardContext& ctx) const;

 private:
  std::vector<AttentionBlock> encoder_;
  std::vector<DecoderBlock> decoder_;
};

}  // namespace vcemo
