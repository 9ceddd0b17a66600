#include "vcemo/fusion.hpp"

#include <algorithm>
#include <sstream>

#include "vcemo/error.hpp"

namespace vcemo {

FusedFeature fuse_add(const ag::Var& a, const Mask& a_mask, const ag::Var& b, const Mask& b_mask) {
  if (a.cols() != b.cols()) {
    throw Error(Errc::ShapeMismatch, "fuse_add widths " + std::to_string(a.cols()) + " and " +
                                         std::to_string(b.cols()));
  }
  const Index len = std::max(a.rows(), b.rows());
  const Mask am = a_mask.empty() ? full_mask(a.rows()) : a_mask;
  const Mask bm = b_mask.empty() ? full_mask(b.rows()) : b_mask;
  Mask mask(static_cast<std::size_t>(len), 0);
  for (std::size_t i = 0; i < am.size(); ++i) mask[i] |= am[i];
  for (std::size_t i = 0; i < bm.size(); ++i) mask[i] |= bm[i];
  return {ag::add(ag::pad_rows(a, len), ag::pad_rows(b, len)), mask};
}

ag::Var fuse_concat_broadcast(const ag::Var& seq, const ag::Var& know) {
  if (know.rows() != 1) throw Error(Errc::ShapeMismatch, "knowledge feature must be a single row");
  const ag::Var parts[] = {seq, ag::repeat_row(know, seq.rows())};
  return ag::concat_cols(parts);
}

Heads::Heads(ParameterStore& store, const HeadConfig& head, const AttentionConfig& att, std::mt19937_64& rng) {
  AttentionConfig wide = att;
  wide.d_model = head.d_fused;
  wide.ffn_width = 4 * head.d_fused;
  wide.validate();
  attend_ = AttentionBlock(store, "head.att", wide, rng);
  if (head.predictor_layers == 1) {
    predictor_.emplace_back(store, "head.pred0", head.d_fused, head.num_classes, rng);
  } else if (head.predictor_layers == 2) {
    predictor_.emplace_back(store, "head.pred0", head.d_fused, head.predictor_hidden, rng);
    predictor_.emplace_back(store, "head.pred1", head.predictor_hidden, head.num_classes, rng);
  } else {
    throw Error(Errc::InvalidConfig, "predictor_layers must be 1 or 2");
  }
  projector_ = Linear(store, "head.proj", head.d_fused, head.projection_dim, rng);
}

HeadOutputs Heads::operator()(const ag::Var& fused, const Mask& mask, ForwardContext& ctx) const {
  if (fused.rows() == 0) throw Error(Errc::EmptyInput, "nothing to pool");
  const Mask m = mask.empty() ? full_mask(fused.rows()) : mask;
  auto pooled = ag::masked_mean_rows(attend_.self(fused, m, ctx), m);
  auto logits = predictor_[0](pooled);
  if (predictor_.size() == 2) logits = predictor_[1](ag::relu(logits));
  return {logits, ag::l2_normalize_rows(projector_(pooled))};
}

std::string ModalitySet::to_string() const {
  std::vector<std::string> parts;
  if (acoustic) parts.emplace_back("acoustic");
  if (word) parts.emplace_back("word");
  if (knowledge) parts.emplace_back("knowledge");
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

std::string ModalitySet::display_name() const {
  if (acoustic && word && knowledge) return "Embeddings+BERT+Acoustic";
  std::vector<std::string> parts;
  if (word) parts.emplace_back("Embeddings");
  if (knowledge) parts.emplace_back("BERT");
  if (acoustic) parts.emplace_back("Acoustic");
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "+" : "") + parts[i];
  return out;
}

ModalitySet ModalitySet::parse(const std::string& text) {
  if (text == "all") return {};
  ModalitySet s{false, false, false};
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (item == "acoustic") {
      s.acoustic = true;
    } else if (item == "word" || item == "words") {
      s.word = true;
    } else if (item == "knowledge") {
      s.knowledge = true;
    } else if (!item.empty()) {
      throw Error(Errc::InvalidConfig, "unknown modality '" + item + "'");
    }
  }
  if (s.empty()) throw Error(Errc::InvalidConfig, "modality set must not be empty");
  return s;
}

std::vector<ModalitySet> default_ablation_subsets() {
  return {
      {false, true, false},  // Embeddings
      {false, false, true},  // BERT
      {true, false, false},  // Acoustic
      {false, true, true},   // Embeddings+BERT
      {true, true, false},   // Embeddings+Acoustic
      {true, false, true},   // BERT+Acoustic
      {true, true, true},
  };
}

void ModelConfig::validate() const {
  encoder.validate();
  attention.validate();
  if (modalities.empty()) throw Error(Errc::InvalidConfig, "modality set must not be empty");
  if (attention.d_model != encoder.d_model) throw Error(Errc::InvalidConfig, "attention and encoder widths differ");
  if (num_classes < 2) throw Error(Errc::InvalidConfig, "need at least two classes");
  if (projection_dim < 1) throw Error(Errc::InvalidConfig, "projection_dim must be positive");
}

Index ModelConfig::fused_width() const {
  const bool has_sequence = modalities.acoustic || modalities.word;
  return (has_sequence && modalities.knowledge) ? 2 * encoder.d_model : encoder.d_model;
}

EmotionModel::EmotionModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const auto& m = cfg_.modalities;
  if (m.acoustic) acoustic_.emplace(store_, cfg_.encoder, rng);
  if (m.word) word_.emplace(store_, cfg_.encoder, rng);
  if (m.knowledge) knowledge_.emplace(store_, cfg_.encoder, rng);
  if (m.acoustic && m.word) sequence_fusion_.emplace(store_, "fuse1", cfg_.attention, rng);
  if (m.knowledge && (m.acoustic || m.word)) knowledge_fusion_.emplace(store_, "fuse2", cfg_.attention, rng);
  HeadConfig head;
  head.d_fused = cfg_.fused_width();
  head.num_classes = cfg_.num_classes;
  head.projection_dim = cfg_.projection_dim;
  head.predictor_layers = cfg_.predictor_layers;
  head.predictor_hidden = cfg_.predictor_hidden;
  heads_.emplace(store_, head, cfg_.attention, rng);
}

bool EmotionModel::has_dropout() const {
  return cfg_.encoder.dropout_p > 0.0 || cfg_.attention.dropout_p > 0.0;
}

std::vector<ModalityFeature> EmotionModel::encode_acoustic(std::span<const Matrix* const> mels,
                                                           ForwardContext& ctx) {
  if (!acoustic_) throw Error(Errc::InvalidConfig, "acoustic modality is disabled");
  return (*acoustic_)(mels, ctx);
}

ModalityFeature EmotionModel::encode_words(const Matrix& words, ForwardContext& ctx) const {
  if (!word_) throw Error(Errc::InvalidConfig, "word modality is disabled");
  return (*word_)(ag::constant(words), {}, ctx);
}

ModalityFeature EmotionModel::encode_knowledge(const RowVector& sentence, ForwardContext& ctx) const {
  if (!knowledge_) throw Error(Errc::InvalidConfig, "knowledge modality is disabled");
  return (*knowledge_)(ag::constant(sentence), ctx);
}

HeadOutputs EmotionModel::fuse_and_predict(const ModalityFeature* acoustic, const ModalityFeature* word,
                                           const ModalityFeature* knowledge, ForwardContext& ctx) const {
  std::optional<FusedFeature> seq;
  if (acoustic && word) {
    const auto& guide = cfg_.word_guides_acoustic ? *word : *acoustic;
    const auto& led = cfg_.word_guides_acoustic ? *acoustic : *word;
    auto [a_out, b_out] = (*sequence_fusion_)(guide.values, guide.mask, led.values, led.mask, ctx);
    seq = fuse_add(a_out, guide.mask, b_out, led.mask);
  } else if (acoustic) {
    seq = FusedFeature{acoustic->values, acoustic->mask};
  } else if (word) {
    seq = FusedFeature{word->values, word->mask};
  }

  if (!seq) {
    if (!knowledge) throw Error(Errc::EmptyInput, "no modality features");
    return (*heads_)(knowledge->values, knowledge->mask, ctx);
  }
  if (!knowledge) return (*heads_)(seq->values, seq->mask, ctx);

  auto [k_out, s_out] = (*knowledge_fusion_)(knowledge->values, knowledge->mask, seq->values, seq->mask, ctx);
  return (*heads_)(fuse_concat_broadcast(s_out, k_out), seq->mask, ctx);
}

BatchOutputs EmotionModel::forward(std::span<const SampleFeatures* const> batch, ForwardContext& ctx) {
  if (batch.empty()) throw Error(Errc::EmptyInput, "empty batch");
  std::vector<ModalityFeature> acoustic;
  if (acoustic_) {
    std::vector<const Matrix*> mels;
    for (const auto* s : batch) mels.push_back(&s->mel);
    acoustic = (*acoustic_)(mels, ctx);
  }
  std::vector<ag::Var> logits;
  std::vector<ag::Var> projections;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::optional<ModalityFeature> word;
    std::optional<ModalityFeature> know;
    if (word_) word = encode_words(batch[i]->words, ctx);
    if (knowledge_) know = encode_knowledge(batch[i]->knowledge, ctx);
    auto out = fuse_and_predict(acoustic_ ? &acoustic[i] : nullptr, word ? &*word : nullptr,
                                know ? &*know : nullptr, ctx);
    logits.push_back(out.logits);
    projections.push_back(out.projection);
  }
  return {ag::concat_rows(logits), ag::concat_rows(projections)};
}

HeadOutputs EmotionModel::forward_one(const SampleFeatures& sample, ForwardContext& ctx) {
  const SampleFeatures* one[] = {&sample};
  auto out = forward(std::span<const SampleFeatures* const>(one), ctx);
  return {out.logits, out.projections};
}

}  // namespace vcemo
