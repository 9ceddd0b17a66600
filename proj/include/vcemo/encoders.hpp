#pragma once

#include <span>
#include <string>
#include <vector>

#include "vcemo/layers.hpp"

namespace vcemo {

enum class Modality { Acoustic, Word, Knowledge };

const char* modality_name(Modality m);

/// Encoded modality in the shared model width. Masked rows are zero.
struct ModalityFeature {
  ag::Var values;  // T x d_model
  Mask mask;
  Modality tag = Modality::Acoustic;

  Index length() const { return values.rows(); }
};

struct ConvBlockSpec {
  Index channels = 32;
  Index kernel = 3;
  Index stride_time = 1;
  Index stride_freq = 2;
};

struct EncoderConfig {
  std::vector<ConvBlockSpec> conv_blocks{{32, 3, 1, 2}, {64, 3, 1, 2}, {128, 3, 1, 2}};
  Index mel_bins = 80;
  Index word_dim = 300;
  Index knowledge_dim = 768;
  Index d_model = 128;
  Index recurrent_hidden = 128;
  Index conv1d_kernel = 3;
  double dropout_p = 0.1;

  void validate() const;
};

/// Conv-BatchNorm-ReLU blocks over (time, frequency), frequency folded into
/// channels, affine map to d_model, then an LSTM over time.
class AcousticEncoder {
 public:
  AcousticEncoder() = default;
  AcousticEncoder(ParameterStore& store, const EncoderConfig& cfg, std::mt19937_64& rng);

  /// Each mel is frames x mel_bins. The whole batch shares BatchNorm statistics.
  std::vector<ModalityFeature> operator()(std::span<const Matrix* const> mels, ForwardContext& ctx);
  ModalityFeature operator()(const Matrix& mel, ForwardContext& ctx);

  MapShape output_map(MapShape in) const;

 private:
  std::vector<Conv2d> convs_;
  std::vector<BatchNorm> norms_;
  Linear fold_;
  Lstm lstm_;
  Index mel_bins_ = 80;
  double dropout_p_ = 0.1;
};

/// LSTM over word vectors, then a same-length 1-D convolution.
class WordEncoder {
 public:
  WordEncoder() = default;
  WordEncoder(ParameterStore& store, const EncoderConfig& cfg, std::mt19937_64& rng);

  /// words: T x word_dim. An empty mask means every row is valid.
  ModalityFeature operator()(const ag::Var& words, const Mask& mask, ForwardContext& ctx) const;

 private:
  Lstm lstm_;
  Conv1d conv_;
  Index word_dim_ = 300;
  double dropout_p_ = 0.1;
};

/// Affine map of the 768-d sentence vector to one d_model row.
class KnowledgeAdapter {
 public:
  KnowledgeAdapter() = default;
  KnowledgeAdapter(ParameterStore& store, const EncoderConfig& cfg, std::mt19937_64& rng);

  ModalityFeature operator()(const ag::Var& sentence, ForwardContext& ctx) const;

 private:
  Linear proj_;
  double dropout_p_ = 0.1;
};

}  // namespace vcemo
