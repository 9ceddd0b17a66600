#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vcemo/attention.hpp"
#include "vcemo/encoders.hpp"

namespace vcemo {

struct FusedFeature {
  ag::Var values;  // T x d_fused
  Mask mask;
};

/// Zero-pads the shorter input to the longer length and adds. The mask is
/// the union of both validity masks.
FusedFeature fuse_add(const ag::Var& a, const Mask& a_mask, const ag::Var& b, const Mask& b_mask);

/// Appends the single knowledge row to every row of `seq`.
ag::Var fuse_concat_broadcast(const ag::Var& seq, const ag::Var& know);

struct HeadOutputs {
  ag::Var logits;      // 1 x C
  ag::Var projection;  // 1 x projection_dim, unit norm
};

struct HeadConfig {
  Index d_fused = 256;
  Index num_classes = 4;
  Index projection_dim = 128;
  int predictor_layers = 2;
  Index predictor_hidden = 128;
};

/// Final self-attention, masked mean pooling, predictor and projector.
class Heads {
 public:
  Heads() = default;
  Heads(ParameterStore& store, const HeadConfig& head, const AttentionConfig& att, std::mt19937_64& rng);

  HeadOutputs operator()(const ag::Var& fused, const Mask& mask, ForwardContext& ctx) const;

 private:
  AttentionBlock attend_;
  std::vector<Linear> predictor_;
  Linear projector_;
};

struct ModalitySet {
  bool acoustic = true;
  bool word = true;
  bool knowledge = true;

  bool empty() const { return !acoustic && !word && !knowledge; }
  int count() const { return int(acoustic) + int(word) + int(knowledge); }
  /// Comma-separated names, e.g. "acoustic,word".
  std::string to_string() const;
  /// Row label in the ablation table, e.g. "Embeddings+Acoustic".
  std::string display_name() const;
  /// Accepts comma-separated names from {acoustic, word, knowledge}, or "all".
  static ModalitySet parse(const std::string& text);
  bool operator==(const ModalitySet&) const = default;
};

/// The seven single/pair/triple modality subsets in table order.
std::vector<ModalitySet> default_ablation_subsets();

struct ModelConfig {
  EncoderConfig encoder;
  AttentionConfig attention;
  Index num_classes = 4;
  Index projection_dim = 128;
  int predictor_layers = 2;
  Index predictor_hidden = 128;
  ModalitySet modalities;
  /// Round-1 roles: words guide acoustic frames when true.
  bool word_guides_acoustic = true;

  void validate() const;
  Index fused_width() const;
};

/// Inputs of one utterance. Only the fields of active modalities are read.
struct SampleFeatures {
  Matrix mel;        // frames x mel_bins
  Matrix words;      // T_w x word_dim
  RowVector knowledge;  // 768
};

struct BatchOutputs {
  ag::Var logits;       // N x C
  ag::Var projections;  // N x projection_dim
};

class EmotionModel {
 public:
  EmotionModel(const ModelConfig& cfg, std::uint64_t seed);
  EmotionModel(const EmotionModel&) = delete;
  EmotionModel& operator=(const EmotionModel&) = delete;

  BatchOutputs forward(std::span<const SampleFeatures* const> batch, ForwardContext& ctx);
  HeadOutputs forward_one(const SampleFeatures& sample, ForwardContext& ctx);

  /// Stage-level access for tests.
  std::vector<ModalityFeature> encode_acoustic(std::span<const Matrix* const> mels, ForwardContext& ctx);
  ModalityFeature encode_words(const Matrix& words, ForwardContext& ctx) const;
  ModalityFeature encode_knowledge(const RowVector& sentence, ForwardContext& ctx) const;
  /// Fusion rounds and heads on already encoded features. Absent modalities
  /// are passed as nullptr.
  HeadOutputs fuse_and_predict(const ModalityFeature* acoustic, const ModalityFeature* word,
                               const ModalityFeature* knowledge, ForwardContext& ctx) const;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& store() { return store_; }
  const ParameterStore& store() const { return store_; }
  /// True when some dropout layer has p > 0.
  bool has_dropout() const;

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  std::optional<AcousticEncoder> acoustic_;
  std::optional<WordEncoder> word_;
  std::optional<KnowledgeAdapter> knowledge_;
  std::optional<CoAttention> sequence_fusion_;
  std::optional<CoAttention> knowledge_fusion_;
  std::optional<Heads> heads_;
};

}  // namespace vcemo
