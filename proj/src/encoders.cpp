#include "vcemo/encoders.hpp"

#include "vcemo/error.hpp"

namespace vcemo {

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::Acoustic: return "acoustic";
    case Modality::Word: return "word";
    case Modality::Knowledge: return "knowledge";
  }
  return "?";
}

void EncoderConfig::validate() const {
  if (recurrent_hidden != d_model) throw Error(Errc::InvalidConfig, "recurrent_hidden must equal d_model");
  if (d_model <= 0 || mel_bins <= 0 || word_dim <= 0 || knowledge_dim <= 0) {
    throw Error(Errc::InvalidConfig, "encoder widths must be positive");
  }
  if (conv1d_kernel < 1 || conv1d_kernel % 2 == 0) throw Error(Errc::InvalidConfig, "conv1d_kernel must be odd");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw Error(Errc::InvalidConfig, "dropout_p must be in [0, 1)");
  if (conv_blocks.empty()) throw Error(Errc::InvalidConfig, "at least one conv block is required");
  for (const auto& b : conv_blocks) {
    if (b.channels <= 0 || b.kernel < 1 || b.kernel % 2 == 0 || b.stride_time < 1 || b.stride_freq < 1) {
      throw Error(Errc::InvalidConfig, "conv blocks need positive channels, odd kernels and strides >= 1");
    }
  }
}

AcousticEncoder::AcousticEncoder(ParameterStore& store, const EncoderConfig& cfg, std::mt19937_64& rng)
    : mel_bins_(cfg.mel_bins), dropout_p_(cfg.dropout_p) {
  cfg.validate();
  Index channels = 1;
  MapShape shape{1, cfg.mel_bins};
  for (std::size_t i = 0; i < cfg.conv_blocks.size(); ++i) {
    const auto& b = cfg.conv_blocks[i];
    const std::string name = "acoustic.conv" + std::to_string(i);
    convs_.emplace_back(store, name, channels, b.channels, b.kernel, b.stride_time, b.stride_freq, rng);
    norms_.emplace_back(store, name + ".bn", b.channels);
    shape = convs_.back().output_shape(shape);
    channels = b.channels;
  }
  fold_ = Linear(store, "acoustic.fold", shape.freq * channels, cfg.d_model, rng);
  lstm_ = Lstm(store, "acoustic.lstm", cfg.d_model, cfg.recurrent_hidden, rng);
}

MapShape AcousticEncoder::output_map(MapShape in) const {
  for (const auto& c : convs_) in = c.output_shape(in);
  return in;
}

std::vector<ModalityFeature> AcousticEncoder::operator()(std::span<const Matrix* const> mels,
                                                         ForwardContext& ctx) {
  if (mels.empty()) throw Error(Errc::EmptyInput, "no spectrograms to encode");
  std::vector<MapShape> shapes;
  Index total = 0;
  for (const Matrix* m : mels) {
    if (m->rows() == 0) throw Error(Errc::EmptyInput, "mel spectrogram has no frames");
    if (m->cols() != mel_bins_) {
      throw Error(Errc::DimensionMismatch, "expected " + std::to_string(mel_bins_) + " mel bins, got " +
                                               std::to_string(m->cols()));
    }
    shapes.push_back({m->rows(), m->cols()});
    total += m->size();
  }

  Matrix stacked(total, 1);
  Index row = 0;
  for (const Matrix* m : mels) {
    for (Index t = 0; t < m->rows(); ++t)
      for (Index f = 0; f < m->cols(); ++f) stacked(row++, 0) = (*m)(t, f);
  }

  ag::Var x = ag::constant(std::move(stacked));
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    x = convs_[i](x, shapes);
    for (auto& s : shapes) s = convs_[i].output_shape(s);
    x = ag::relu(norms_[i](x, ctx));
    x = apply_dropout(x, dropout_p_, ctx);
  }

  // Each map's rows run time-major, so folding freq consecutive rows gives one frame.
  x = fold_(ag::fold_rows(x, shapes.front().freq));
  x = apply_dropout(x, dropout_p_, ctx);

  std::vector<ModalityFeature> out;
  Index start = 0;
  for (const auto& s : shapes) {
    auto seq = lstm_(ag::slice_rows(x, start, s.time));
    seq = apply_dropout(seq, dropout_p_, ctx);
    out.push_back({seq, full_mask(s.time), Modality::Acoustic});
    start += s.time;
  }
  return out;
}

ModalityFeature AcousticEncoder::operator()(const Matrix& mel, ForwardContext& ctx) {
  const Matrix* one[] = {&mel};
  return std::move((*this)(std::span<const Matrix* const>(one), ctx).front());
}

WordEncoder::WordEncoder(ParameterStore& store, const EncoderConfig& cfg, std::mt19937_64& rng)
    : word_dim_(cfg.word_dim), dropout_p_(cfg.dropout_p) {
  cfg.validate();
  lstm_ = Lstm(store, "word.lstm", cfg.word_dim, cfg.recurrent_hidden, rng);
  conv_ = Conv1d(store, "word.conv", cfg.recurrent_hidden, cfg.d_model, cfg.conv1d_kernel, rng);
}

ModalityFeature WordEncoder::operator()(const ag::Var& words, const Mask& mask, ForwardContext& ctx) const {
  if (words.rows() == 0) throw Error(Errc::EmptyInput, "word sequence is empty");
  if (words.cols() != word_dim_) {
    throw Error(Errc::DimensionMismatch, "expected " + std::to_string(word_dim_) + "-d word vectors, got " +
                                             std::to_string(words.cols()));
  }
  const Mask m = mask.empty() ? full_mask(words.rows()) : mask;
  if (static_cast<Index>(m.size()) != words.rows()) throw Error(Errc::ShapeMismatch, "word mask length");

  auto h = ag::mask_rows(lstm_(words), m);
  h = apply_dropout(h, dropout_p_, ctx);
  auto y = apply_dropout(conv_(h), dropout_p_, ctx);
  return {ag::mask_rows(y, m), m, Modality::Word};
}

KnowledgeAdapter::KnowledgeAdapter(ParameterStore& store, const EncoderConfig& cfg, std::mt19937_64& rng)
    : dropout_p_(cfg.dropout_p) {
  cfg.validate();
  proj_ = Linear(store, "knowledge.proj", cfg.knowledge_dim, cfg.d_model, rng);
}

ModalityFeature KnowledgeAdapter::operator()(const ag::Var& sentence, ForwardContext& ctx) const {
  if (sentence.rows() != 1 || sentence.cols() != proj_.in_features()) {
    throw Error(Errc::DimensionMismatch, "expected a 1 x " + std::to_string(proj_.in_features()) +
                                             " sentence vector, got " + std::to_string(sentence.rows()) + " x " +
                                             std::to_string(sentence.cols()));
  }
  auto y = apply_dropout(proj_(sentence), dropout_p_, ctx);
  return {y, full_mask(1), Modality::Knowledge};
}

}  // namespace vcemo
