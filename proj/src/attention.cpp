#include "vcemo/attention.hpp"

#include <cmath>

#include "vcemo/error.hpp"

namespace vcemo {

namespace {

Mask or_full(const Mask& m, Index n) {
  if (m.empty()) return full_mask(n);
  if (static_cast<Index>(m.size()) != n) {
    throw Error(Errc::ShapeMismatch, "mask has " + std::to_string(m.size()) + " entries for " + std::to_string(n) +
                                         " rows");
  }
  return m;
}

}  // namespace

void AttentionConfig::validate() const {
  if (d_model <= 0 || n_heads <= 0 || d_model % n_heads != 0) {
    throw Error(Errc::InvalidConfig, "d_model must be a positive multiple of n_heads");
  }
  if (n_layers < 1) throw Error(Errc::InvalidConfig, "n_layers must be >= 1");
  if (ffn_width < 1) throw Error(Errc::InvalidConfig, "ffn_width must be >= 1");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw Error(Errc::InvalidConfig, "dropout_p must be in [0, 1)");
}

AttentionResult scaled_dot_attention(const ag::Var& q, const ag::Var& k, const ag::Var& v, const Mask& key_mask) {
  if (q.cols() != k.cols() || k.rows() != v.rows() || k.rows() == 0 || q.rows() == 0) {
    throw Error(Errc::ShapeMismatch, "attention shapes q " + std::to_string(q.rows()) + "x" +
                                         std::to_string(q.cols()) + ", k " + std::to_string(k.rows()) + "x" +
                                         std::to_string(k.cols()) + ", v " + std::to_string(v.rows()) + "x" +
                                         std::to_string(v.cols()));
  }
  const Mask mask = or_full(key_mask, k.rows());
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  auto weights = ag::softmax_rows(ag::scale(ag::matmul_nt(q, k), scale), mask);
  return {ag::matmul(weights, v), weights.value()};
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, Index d_model,
                                       Index n_heads, std::mt19937_64& rng)
    : q_(store, name + ".q", d_model, d_model, rng),
      k_(store, name + ".k", d_model, d_model, rng),
      v_(store, name + ".v", d_model, d_model, rng),
      out_(store, name + ".out", d_model, d_model, rng),
      n_heads_(n_heads) {}

ag::Var MultiHeadAttention::operator()(const ag::Var& x, const ag::Var& source, const Mask& source_mask,
                                       std::vector<Matrix>* weights) const {
  const auto q = q_(x);
  const auto k = k_(source);
  const auto v = v_(source);
  if (n_heads_ == 1) {
    auto r = scaled_dot_attention(q, k, v, source_mask);
    if (weights) weights->push_back(std::move(r.weights));
    return out_(r.output);
  }
  const Index width = q.cols() / n_heads_;
  std::vector<ag::Var> heads;
  for (Index h = 0; h < n_heads_; ++h) {
    auto r = scaled_dot_attention(ag::slice_cols(q, h * width, width), ag::slice_cols(k, h * width, width),
                                  ag::slice_cols(v, h * width, width), source_mask);
    if (weights) weights->push_back(std::move(r.weights));
    heads.push_back(r.output);
  }
  return out_(ag::concat_cols(heads));
}

AttentionSublayer::AttentionSublayer(ParameterStore& store, const std::string& name, const AttentionConfig& cfg,
                                     std::mt19937_64& rng)
    : mha_(store, name + ".mha", cfg.d_model, cfg.n_heads, rng),
      norm_(store, name + ".norm", cfg.d_model),
      dropout_p_(cfg.dropout_p) {}

ag::Var AttentionSublayer::operator()(const ag::Var& x, const ag::Var& source, const Mask& source_mask,
                                      ForwardContext& ctx, std::vector<Matrix>* weights) const {
  auto attended = apply_dropout(mha_(x, source, source_mask, weights), dropout_p_, ctx);
  return norm_(ag::add(x, attended));
}

FeedForwardSublayer::FeedForwardSublayer(ParameterStore& store, const std::string& name,
                                         const AttentionConfig& cfg, std::mt19937_64& rng)
    : hidden_(store, name + ".fc1", cfg.d_model, cfg.ffn_width, rng),
      out_(store, name + ".fc2", cfg.ffn_width, cfg.d_model, rng),
      norm_(store, name + ".norm", cfg.d_model),
      dropout_p_(cfg.dropout_p) {}

ag::Var FeedForwardSublayer::operator()(const ag::Var& x, ForwardContext& ctx) const {
  auto h = apply_dropout(ag::relu(hidden_(x)), dropout_p_, ctx);
  auto y = apply_dropout(out_(h), dropout_p_, ctx);
  return norm_(ag::add(x, y));
}

AttentionBlock::AttentionBlock(ParameterStore& store, const std::string& name, const AttentionConfig& cfg,
                               std::mt19937_64& rng)
    : attend_(store, name + ".att", cfg, rng), ffn_(store, name + ".ffn", cfg, rng) {}

ag::Var AttentionBlock::self(const ag::Var& x, const Mask& x_mask, ForwardContext& ctx,
                             std::vector<Matrix>* weights) const {
  return guided(x, x_mask, x, x_mask, ctx, weights);
}

ag::Var AttentionBlock::guided(const ag::Var& x, const Mask& x_mask, const ag::Var& guide,
                               const Mask& guide_mask, ForwardContext& ctx, std::vector<Matrix>* weights) const {
  const Mask xm = or_full(x_mask, x.rows());
  auto y = ffn_(attend_(x, guide, or_full(guide_mask, guide.rows()), ctx, weights), ctx);
  return ag::mask_rows(y, xm);
}

DecoderBlock::DecoderBlock(ParameterStore& store, const std::string& name, const AttentionConfig& cfg,
                           std::mt19937_64& rng)
    : self_(store, name + ".self", cfg, rng),
      guided_(store, name + ".guided", cfg, rng),
      ffn_(store, name + ".ffn", cfg, rng) {}

ag::Var DecoderBlock::operator()(const ag::Var& x, const Mask& x_mask, const ag::Var& guide,
                                 const Mask& guide_mask, ForwardContext& ctx) const {
  const Mask xm = or_full(x_mask, x.rows());
  auto h = self_(x, x, xm, ctx);
  h = guided_(h, guide, or_full(guide_mask, guide.rows()), ctx);
  return ag::mask_rows(ffn_(h, ctx), xm);
}

CoAttention::CoAttention(ParameterStore& store, const std::string& name, const AttentionConfig& cfg,
                         std::mt19937_64& rng) {
  cfg.validate();
  for (Index i = 0; i < cfg.n_layers; ++i) {
    encoder_.emplace_back(store, name + ".enc" + std::to_string(i), cfg, rng);
  }
  for (Index i = 0; i < cfg.n_layers; ++i) {
    decoder_.emplace_back(store, name + ".dec" + std::to_string(i), cfg, rng);
  }
}

std::pair<ag::Var, ag::Var> CoAttention::operator()(const ag::Var& a, const Mask& a_mask, const ag::Var& b,
                                                    const Mask& b_mask, ForwardContext& ctx) const {
  if (a.rows() == 0 || b.rows() == 0) throw Error(Errc::EmptyInput, "co-attention needs two non-empty sequences");
  const Mask am = or_full(a_mask, a.rows());
  const Mask bm = or_full(b_mask, b.rows());
  ag::Var x = a;
  for (const auto& block : encoder_) x = block.self(x, am, ctx);
  ag::Var y = b;
  for (const auto& block : decoder_) y = block(y, bm, x, am, ctx);
  return {x, y};
}

}  // namespace vcemo
