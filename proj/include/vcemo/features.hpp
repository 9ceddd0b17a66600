#pragma once

#include <memory>
#include <set>
#include <string>
#include <unordered_map>

#include "vcemo/audio.hpp"
#include "vcemo/data.hpp"
#include "vcemo/fusion.hpp"
#include "vcemo/text.hpp"

namespace vcemo {

struct ProviderConfig {
  std::string transcript;                 // empty: manifest text only
  std::string word_vectors = "fake";
  std::string sentence_encoder = "fake";
  std::string cache_dir;                  // empty: VCEMO_CACHE_DIR or memory only
  Index max_tokens = 64;
};

/// Turns manifest samples into model inputs for the active modalities. Only
/// the providers those modalities need are ever constructed or called.
class FeatureExtractor {
 public:
  FeatureExtractor(ProviderConfig providers, FrontendConfig frontend, ModalitySet modalities,
                   std::shared_ptr<ProviderCache> cache = nullptr);

  /// Memoized by sample id.
  const SampleFeatures& get(const Sample& s);
  /// Same as get() but with the mel computed from an edited waveform.
  SampleFeatures with_waveform(const Sample& s, const Waveform& w);
  /// Memoized by sample id.
  const Waveform& waveform(const Sample& s);
  MelSpectrogram mel(const Waveform& w) const { return compute_mel_spectrogram(w, frontend_); }

  std::string transcript(const Sample& s);

  /// Names of the sources touched so far: audio, transcript, word_vectors,
  /// sentence_encoder.
  const std::set<std::string>& sources_used() const { return used_; }
  const ModalitySet& modalities() const { return modalities_; }
  const std::shared_ptr<ProviderCache>& cache() const { return cache_; }

 private:
  TranscriptProvider* transcript_provider();
  WordVectorTable& word_table();
  SentenceEncoder& sentence_encoder();

  ProviderConfig providers_;
  FrontendConfig frontend_;
  ModalitySet modalities_;
  std::shared_ptr<ProviderCache> cache_;
  std::unique_ptr<TranscriptProvider> transcript_;
  bool transcript_built_ = false;
  std::unique_ptr<WordVectorTable> words_;
  std::unique_ptr<SentenceEncoder> sentences_;
  std::unordered_map<std::string, SampleFeatures> memo_;
  std::unordered_map<std::string, Waveform> waves_;
  std::set<std::string> used_;
};

}  // namespace vcemo
