#include "vcemo/features.hpp"

#include <fstream>
#include <sstream>

#include "vcemo/error.hpp"

namespace vcemo {

namespace {

std::string mel_provider_id(const FrontendConfig& f) {
  return "mel-" + std::to_string(f.target_rate) + "-" + std::to_string(f.win_length) + "-" +
         std::to_string(f.hop_length) + "-" + std::to_string(f.fft_size) + "-" + std::to_string(f.mel_bins);
}

std::uint64_t file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingFile, path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return content_hash(ss.str());
}

}  // namespace

FeatureExtractor::FeatureExtractor(ProviderConfig providers, FrontendConfig frontend, ModalitySet modalities,
                                   std::shared_ptr<ProviderCache> cache)
    : providers_(std::move(providers)), frontend_(frontend), modalities_(modalities), cache_(std::move(cache)) {
  frontend_.validate();
  if (modalities_.empty()) throw Error(Errc::InvalidConfig, "modality set must not be empty");
  if (!cache_) {
    cache_ = providers_.cache_dir.empty() ? ProviderCache::from_environment()
                                          : std::make_shared<ProviderCache>(providers_.cache_dir);
  }
}

TranscriptProvider* FeatureExtractor::transcript_provider() {
  if (!transcript_built_) {
    transcript_ = make_transcript_provider(providers_.transcript);
    transcript_built_ = true;
  }
  return transcript_.get();
}

WordVectorTable& FeatureExtractor::word_table() {
  if (!words_) {
    words_ = make_word_vectors(providers_.word_vectors);
    if (!words_) throw Error(Errc::ProviderUnavailable, "no word-vector table configured");
  }
  return *words_;
}

SentenceEncoder& FeatureExtractor::sentence_encoder() {
  if (!sentences_) {
    sentences_ = make_sentence_encoder(providers_.sentence_encoder);
    if (!sentences_) throw Error(Errc::ProviderUnavailable, "no sentence encoder configured");
  }
  return *sentences_;
}

const Waveform& FeatureExtractor::waveform(const Sample& s) {
  auto it = waves_.find(s.id);
  if (it != waves_.end()) return it->second;
  used_.insert("audio");
  return waves_.emplace(s.id, read_wav(s.audio_ref)).first->second;
}

std::string FeatureExtractor::transcript(const Sample& s) {
  if (s.transcript.empty()) used_.insert("transcript");
  return transcribe(s.audio_ref, s.transcript, s.transcript.empty() ? transcript_provider() : nullptr, *cache_);
}

const SampleFeatures& FeatureExtractor::get(const Sample& s) {
  if (auto it = memo_.find(s.id); it != memo_.end()) return it->second;

  SampleFeatures f;
  if (modalities_.acoustic) {
    used_.insert("audio");
    const std::string pid = mel_provider_id(frontend_);
    const std::uint64_t key = file_hash(s.audio_ref);
    if (auto hit = cache_->load_matrix(pid, key)) {
      f.mel = std::move(*hit);
    } else {
      f.mel = compute_mel_spectrogram(read_wav(s.audio_ref), frontend_).values;
      cache_->store_matrix(pid, key, f.mel);
    }
  }
  if (modalities_.word || modalities_.knowledge) {
    const std::string text = transcript(s);
    if (modalities_.word) {
      used_.insert("word_vectors");
      f.words = tokenize_and_embed(text, word_table(), providers_.max_tokens).vectors;
    }
    if (modalities_.knowledge) {
      used_.insert("sentence_encoder");
      f.knowledge = encode_sentence(text, &sentence_encoder(), *cache_).vector;
    }
  }
  return memo_.emplace(s.id, std::move(f)).first->second;
}

SampleFeatures FeatureExtractor::with_waveform(const Sample& s, const Waveform& w) {
  SampleFeatures f = get(s);
  f.mel = mel(w).values;
  return f;
}

}  // namespace vcemo
