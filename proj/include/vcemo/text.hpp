#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vcemo/autograd.hpp"

namespace vcemo {

inline constexpr Index kWordVectorDim = 300;
inline constexpr Index kSentenceDim = 768;

/// 64-bit FNV-1a.
std::uint64_t content_hash(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Disk-backed store keyed by (provider id, content hash). An empty
/// directory keeps entries in memory only.
class ProviderCache {
 public:
  ProviderCache() = default;
  explicit ProviderCache(std::filesystem::path dir);
  /// Directory from VCEMO_CACHE_DIR, or memory-only when unset.
  static std::shared_ptr<ProviderCache> from_environment();

  std::optional<Matrix> load_matrix(const std::string& provider, std::uint64_t key);
  void store_matrix(const std::string& provider, std::uint64_t key, const Matrix& m);
  std::optional<std::string> load_text(const std::string& provider, std::uint64_t key);
  void store_text(const std::string& provider, std::uint64_t key, const std::string& text);

  const std::filesystem::path& directory() const { return dir_; }

 private:
  std::filesystem::path entry_path(const std::string& provider, std::uint64_t key,
                                   const char* ext) const;

  std::filesystem::path dir_;
  std::mutex mu_;
  std::unordered_map<std::string, Matrix> matrices_;
  std::unordered_map<std::string, std::string> texts_;
};

class TranscriptProvider {
 public:
  virtual ~TranscriptProvider() = default;
  virtual std::string id() const = 0;
  virtual std::string transcribe(const std::filesystem::path& audio) = 0;
};

class WordVectorTable {
 public:
  virtual ~WordVectorTable() = default;
  virtual std::string id() const = 0;
  virtual Index dim() const = 0;
  /// nullopt when the token is out of vocabulary.
  virtual std::optional<RowVector> lookup(const std::string& token) const = 0;
};

class SentenceEncoder {
 public:
  virtual ~SentenceEncoder() = default;
  virtual std::string id() const = 0;
  virtual RowVector encode(const std::string& text) = 0;
};

/// Deterministic stand-ins: hash-seeded Gaussian vectors, no I/O.
class FakeWordVectors final : public WordVectorTable {
 public:
  explicit FakeWordVectors(std::uint64_t seed = 0, Index dim = kWordVectorDim) : seed_(seed), dim_(dim) {}
  std::string id() const override { return "fake-words-" + std::to_string(seed_); }
  Index dim() const override { return dim_; }
  std::optional<RowVector> lookup(const std::string& token) const override;

 private:
  std::uint64_t seed_;
  Index dim_;
};

class FakeSentenceEncoder final : public SentenceEncoder {
 public:
  explicit FakeSentenceEncoder(std::uint64_t seed = 0, Index dim = kSentenceDim) : seed_(seed), dim_(dim) {}
  std::string id() const override { return "fake-sentence-" + std::to_string(seed_); }
  RowVector encode(const std::string& text) override;

 private:
  std::uint64_t seed_;
  Index dim_;
};

class FakeTranscriptProvider final : public TranscriptProvider {
 public:
  std::string id() const override { return "fake-asr"; }
  std::string transcribe(const std::filesystem::path& audio) override;
};

/// Text table with one "token v1 ... vD" line per entry.
class VocabularyFile final : public WordVectorTable {
 public:
  explicit VocabularyFile(const std::filesystem::path& path);
  std::string id() const override { return id_; }
  Index dim() const override { return dim_; }
  std::optional<RowVector> lookup(const std::string& token) const override;
  std::size_t size() const { return table_.size(); }

 private:
  std::string id_;
  Index dim_ = 0;
  std::unordered_map<std::string, RowVector> table_;
};

/// JSON-lines lookup: {"audio": "...", "text": "..."} keyed by audio file name.
class JsonlTranscriptProvider final : public TranscriptProvider {
 public:
  explicit JsonlTranscriptProvider(const std::filesystem::path& path);
  std::string id() const override { return id_; }
  std::string transcribe(const std::filesystem::path& audio) override;

 private:
  std::string id_;
  std::unordered_map<std::string, std::string> by_name_;
};

/// JSON-lines lookup: {"text": "...", "embedding": [...]} keyed by text.
class JsonlSentenceEncoder final : public SentenceEncoder {
 public:
  explicit JsonlSentenceEncoder(const std::filesystem::path& path);
  std::string id() const override { return id_; }
  RowVector encode(const std::string& text) override;

 private:
  std::string id_;
  std::unordered_map<std::string, RowVector> by_text_;
};

/// POST {"audio": path} to the endpoint, expects {"text": "..."}.
class HttpTranscriptProvider final : public TranscriptProvider {
 public:
  explicit HttpTranscriptProvider(std::string url) : url_(std::move(url)) {}
  std::string id() const override { return "http-asr:" + url_; }
  std::string transcribe(const std::filesystem::path& audio) override;

 private:
  std::string url_;
};

/// POST {"text": "..."} to the endpoint, expects {"embedding": [...]}.
class HttpSentenceEncoder final : public SentenceEncoder {
 public:
  explicit HttpSentenceEncoder(std::string url) : url_(std::move(url)) {}
  std::string id() const override { return "http-sentence:" + url_; }
  RowVector encode(const std::string& text) override;

 private:
  std::string url_;
};

// Provider URIs: "" (none), "fake" or "fake:<seed>", "file:<path>",
// "http://host:port/path".
std::unique_ptr<TranscriptProvider> make_transcript_provider(const std::string& uri);
std::unique_ptr<WordVectorTable> make_word_vectors(const std::string& uri);
std::unique_ptr<SentenceEncoder> make_sentence_encoder(const std::string& uri);

/// Manifest text when non-empty; otherwise the provider's transcript,
/// cached by the audio file's content hash.
std::string transcribe(const std::filesystem::path& audio_ref, const std::string& manifest_text,
                       TranscriptProvider* provider, ProviderCache& cache);

/// Whitespace tokenization; tokens containing CJK codepoints are split
/// into single CJK characters (non-CJK runs stay together).
std::vector<std::string> tokenize(std::string_view text);

struct WordEmbeddingSequence {
  Matrix vectors;  // T x dim, OOV rows exactly zero
  std::vector<std::string> tokens;
  std::vector<bool> in_vocabulary;

  Index length() const { return vectors.rows(); }
  /// Zero-pads to `max_tokens` rows and returns the validity mask.
  std::pair<Matrix, Mask> padded(Index max_tokens) const;
};

/// Keeps the first `max_tokens` tokens.
WordEmbeddingSequence tokenize_and_embed(std::string_view text, const WordVectorTable& table,
                                         Index max_tokens = 64);

struct SentenceEmbedding {
  RowVector vector;  // 768
};

SentenceEmbedding encode_sentence(const std::string& text, SentenceEncoder* encoder, ProviderCache& cache);

}  // namespace vcemo
