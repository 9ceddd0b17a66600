#include "vcemo/text.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "vcemo/error.hpp"

namespace vcemo {

namespace {

using nlohmann::json;

RowVector gaussian_row(std::uint64_t seed, Index dim) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  RowVector v(dim);
  for (Index i = 0; i < dim; ++i) v(i) = normal(rng);
  return v;
}

std::string sanitize(const std::string& id) {
  std::string out;
  for (char c : id) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

std::string trim_and_collapse(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out += ' ';
      pending_space = false;
      out += c;
    }
  }
  return out;
}

/// Decodes one UTF-8 codepoint starting at text[i]; returns its byte length.
std::size_t utf8_decode(std::string_view text, std::size_t i, char32_t& cp) {
  const auto b = static_cast<unsigned char>(text[i]);
  std::size_t len = 1;
  if (b < 0x80) {
    cp = b;
  } else if ((b >> 5) == 0x6) {
    cp = b & 0x1F;
    len = 2;
  } else if ((b >> 4) == 0xE) {
    cp = b & 0x0F;
    len = 3;
  } else if ((b >> 3) == 0x1E) {
    cp = b & 0x07;
    len = 4;
  } else {
    cp = 0xFFFD;
    return 1;
  }
  if (i + len > text.size()) {
    cp = 0xFFFD;
    return text.size() - i;
  }
  for (std::size_t k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(text[i + k]) & 0x3F);
  return len;
}

bool is_cjk(char32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
         (cp >= 0x20000 && cp <= 0x2A6DF) || (cp >= 0xF900 && cp <= 0xFAFF) ||
         (cp >= 0x3000 && cp <= 0x303F) || (cp >= 0x3040 && cp <= 0x30FF) ||
         (cp >= 0xFF00 && cp <= 0xFFEF);
}

std::string ascii_lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

struct Endpoint {
  std::string base;
  std::string path;
};

Endpoint split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error(Errc::InvalidConfig, "bad provider url " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

json post_json(const std::string& url, const json& body) {
  const auto ep = split_url(url);
  httplib::Client client(ep.base);
  client.set_connection_timeout(5);
  client.set_read_timeout(60);
  auto res = client.Post(ep.path, body.dump(), "application/json");
  if (!res) throw Error(Errc::ProviderUnavailable, url + ": " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw Error(Errc::ProviderUnavailable, url + " returned HTTP " + std::to_string(res->status));
  }
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw Error(Errc::ProviderUnavailable, url + ": bad response: " + e.what());
  }
}

RowVector to_row(const json& arr) {
  if (!arr.is_array()) throw Error(Errc::DimensionMismatch, "embedding must be a JSON array");
  RowVector v(static_cast<Index>(arr.size()));
  for (std::size_t i = 0; i < arr.size(); ++i) v(static_cast<Index>(i)) = arr[i].get<double>();
  return v;
}

std::uint64_t parse_seed(const std::string& uri) {
  const auto colon = uri.find(':');
  if (colon == std::string::npos) return 0;
  return std::stoull(uri.substr(colon + 1));
}

}  // namespace

std::uint64_t content_hash(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

ProviderCache::ProviderCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::shared_ptr<ProviderCache> ProviderCache::from_environment() {
  if (const char* env = std::getenv("VCEMO_CACHE_DIR"); env != nullptr && *env != '\0') {
    return std::make_shared<ProviderCache>(env);
  }
  return std::make_shared<ProviderCache>();
}

std::filesystem::path ProviderCache::entry_path(const std::string& provider, std::uint64_t key,
                                                const char* ext) const {
  return dir_ / sanitize(provider) / (hex64(key) + ext);
}

std::optional<Matrix> ProviderCache::load_matrix(const std::string& provider, std::uint64_t key) {
  const std::string mem_key = provider + "/" + hex64(key);
  std::lock_guard lock(mu_);
  if (auto it = matrices_.find(mem_key); it != matrices_.end()) return it->second;
  if (dir_.empty()) return std::nullopt;
  std::ifstream in(entry_path(provider, key, ".bin"), std::ios::binary);
  if (!in) return std::nullopt;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  in.read(reinterpret_cast<char*>(&rows), sizeof rows);
  in.read(reinterpret_cast<char*>(&cols), sizeof cols);
  if (!in || rows < 0 || cols < 0) return std::nullopt;
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) return std::nullopt;
  matrices_[mem_key] = m;
  return m;
}

void ProviderCache::store_matrix(const std::string& provider, std::uint64_t key, const Matrix& m) {
  const std::string mem_key = provider + "/" + hex64(key);
  std::lock_guard lock(mu_);
  matrices_[mem_key] = m;
  if (dir_.empty()) return;
  const auto path = entry_path(provider, key, ".bin");
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(Errc::Io, "cannot write cache entry " + tmp);
    const std::int64_t rows = m.rows();
    const std::int64_t cols = m.cols();
    out.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    out.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * m.size()));
  }
  std::filesystem::rename(tmp, path);
}

std::optional<std::string> ProviderCache::load_text(const std::string& provider, std::uint64_t key) {
  const std::string mem_key = provider + "/" + hex64(key);
  std::lock_guard lock(mu_);
  if (auto it = texts_.find(mem_key); it != texts_.end()) return it->second;
  if (dir_.empty()) return std::nullopt;
  std::ifstream in(entry_path(provider, key, ".txt"), std::ios::binary);
  if (!in) return std::nullopt;
  std::stringstream ss;
  ss << in.rdbuf();
  texts_[mem_key] = ss.str();
  return ss.str();
}

void ProviderCache::store_text(const std::string& provider, std::uint64_t key, const std::string& text) {
  const std::string mem_key = provider + "/" + hex64(key);
  std::lock_guard lock(mu_);
  texts_[mem_key] = text;
  if (dir_.empty()) return;
  const auto path = entry_path(provider, key, ".txt");
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(Errc::Io, "cannot write cache entry " + tmp);
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

std::optional<RowVector> FakeWordVectors::lookup(const std::string& token) const {
  return gaussian_row(content_hash(token) ^ (seed_ * 0x9E3779B97F4A7C15ULL), dim_);
}

RowVector FakeSentenceEncoder::encode(const std::string& text) {
  return gaussian_row(content_hash(text) ^ (seed_ * 0x9E3779B97F4A7C15ULL) ^ 0x5bd1e995ULL, dim_);
}

std::string FakeTranscriptProvider::transcribe(const std::filesystem::path& audio) {
  return "utterance " + audio.stem().string();
}

VocabularyFile::VocabularyFile(const std::filesystem::path& path) : id_("vocab:" + path.string()) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    std::vector<double> values;
    double v;
    while (ss >> v) values.push_back(v);
    if (dim_ == 0) dim_ = static_cast<Index>(values.size());
    if (static_cast<Index>(values.size()) != dim_ || dim_ == 0) {
      throw Error(Errc::MalformedRecord, path.string() + " line " + std::to_string(n) + ": expected " +
                                             std::to_string(dim_) + " values");
    }
    table_[token] = Eigen::Map<const RowVector>(values.data(), dim_);
  }
}

std::optional<RowVector> VocabularyFile::lookup(const std::string& token) const {
  if (auto it = table_.find(token); it != table_.end()) return it->second;
  if (auto it = table_.find(ascii_lower(token)); it != table_.end()) return it->second;
  return std::nullopt;
}

JsonlTranscriptProvider::JsonlTranscriptProvider(const std::filesystem::path& path)
    : id_("jsonl-asr:" + path.string()) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto rec = json::parse(line);
    by_name_[std::filesystem::path(rec.at("audio").get<std::string>()).filename().string()] =
        rec.at("text").get<std::string>();
  }
}

std::string JsonlTranscriptProvider::transcribe(const std::filesystem::path& audio) {
  auto it = by_name_.find(audio.filename().string());
  if (it == by_name_.end()) throw Error(Errc::TranscriptionFailed, audio.string());
  return it->second;
}

JsonlSentenceEncoder::JsonlSentenceEncoder(const std::filesystem::path& path)
    : id_("jsonl-sentence:" + path.string()) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto rec = json::parse(line);
    by_text_[rec.at("text").get<std::string>()] = to_row(rec.at("embedding"));
  }
}

RowVector JsonlSentenceEncoder::encode(const std::string& text) {
  auto it = by_text_.find(text);
  if (it == by_text_.end()) throw Error(Errc::ProviderUnavailable, "no stored embedding for: " + text);
  return it->second;
}

std::string HttpTranscriptProvider::transcribe(const std::filesystem::path& audio) {
  const auto res = post_json(url_, json{{"audio", audio.string()}});
  if (!res.contains("text") || !res["text"].is_string()) {
    throw Error(Errc::TranscriptionFailed, audio.string());
  }
  return res["text"].get<std::string>();
}

RowVector HttpSentenceEncoder::encode(const std::string& text) {
  const auto res = post_json(url_, json{{"text", text}});
  if (!res.contains("embedding")) throw Error(Errc::ProviderUnavailable, url_ + ": no embedding");
  return to_row(res["embedding"]);
}

std::unique_ptr<TranscriptProvider> make_transcript_provider(const std::string& uri) {
  if (uri.empty()) return nullptr;
  if (uri == "fake" || uri.starts_with("fake:")) return std::make_unique<FakeTranscriptProvider>();
  if (uri.starts_with("file:")) return std::make_unique<JsonlTranscriptProvider>(uri.substr(5));
  if (uri.starts_with("http://") || uri.starts_with("https://")) return std::make_unique<HttpTranscriptProvider>(uri);
  throw Error(Errc::InvalidConfig, "unknown transcript provider " + uri);
}

std::unique_ptr<WordVectorTable> make_word_vectors(const std::string& uri) {
  if (uri.empty()) return nullptr;
  if (uri == "fake" || uri.starts_with("fake:")) return std::make_unique<FakeWordVectors>(parse_seed(uri));
  if (uri.starts_with("file:")) return std::make_unique<VocabularyFile>(uri.substr(5));
  throw Error(Errc::InvalidConfig, "unknown word-vector source " + uri);
}

std::unique_ptr<SentenceEncoder> make_sentence_encoder(const std::string& uri) {
  if (uri.empty()) return nullptr;
  if (uri == "fake" || uri.starts_with("fake:")) return std::make_unique<FakeSentenceEncoder>(parse_seed(uri));
  if (uri.starts_with("file:")) return std::make_unique<JsonlSentenceEncoder>(uri.substr(5));
  if (uri.starts_with("http://") || uri.starts_with("https://")) return std::make_unique<HttpSentenceEncoder>(uri);
  throw Error(Errc::InvalidConfig, "unknown sentence encoder " + uri);
}

std::string transcribe(const std::filesystem::path& audio_ref, const std::string& manifest_text,
                       TranscriptProvider* provider, ProviderCache& cache) {
  if (!manifest_text.empty()) return manifest_text;
  if (provider == nullptr) throw Error(Errc::ProviderUnavailable, "no transcript provider for " + audio_ref.string());

  std::ifstream in(audio_ref, std::ios::binary);
  if (!in) throw Error(Errc::TranscriptionFailed, audio_ref.string() + " is not readable");
  std::stringstream bytes;
  bytes << in.rdbuf();
  const std::uint64_t key = content_hash(bytes.str());
  if (auto hit = cache.load_text(provider->id(), key)) return *hit;

  std::string text;
  try {
    text = provider->transcribe(audio_ref);
  } catch (const Error& e) {
    if (e.code() == Errc::ProviderUnavailable) throw;
    throw Error(Errc::TranscriptionFailed, audio_ref.string() + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(Errc::TranscriptionFailed, audio_ref.string() + ": " + e.what());
  }
  cache.store_text(provider->id(), key, text);
  return text;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  const std::string normalized = trim_and_collapse(text);
  std::size_t start = 0;
  while (start < normalized.size()) {
    std::size_t end = normalized.find(' ', start);
    if (end == std::string::npos) end = normalized.size();
    const std::string_view word(normalized.data() + start, end - start);

    std::string run;
    bool split = false;
    for (std::size_t i = 0; i < word.size();) {
      char32_t cp;
      const std::size_t len = utf8_decode(word, i, cp);
      if (is_cjk(cp)) {
        if (!run.empty()) tokens.push_back(std::move(run));
        run.clear();
        tokens.emplace_back(word.substr(i, len));
        split = true;
      } else {
        run.append(word.substr(i, len));
      }
      i += len;
    }
    if (!run.empty() || !split) tokens.push_back(run.empty() ? std::string(word) : run);
    start = end + 1;
  }
  return tokens;
}

std::pair<Matrix, Mask> WordEmbeddingSequence::padded(Index max_tokens) const {
  const Index n = std::min(length(), max_tokens);
  Matrix m = Matrix::Zero(max_tokens, vectors.cols());
  m.topRows(n) = vectors.topRows(n);
  Mask mask(static_cast<std::size_t>(max_tokens), 0);
  for (Index i = 0; i < n; ++i) mask[static_cast<std::size_t>(i)] = 1;
  return {m, mask};
}

WordEmbeddingSequence tokenize_and_embed(std::string_view text, const WordVectorTable& table,
                                         Index max_tokens) {
  auto tokens = tokenize(text);
  if (tokens.empty()) throw Error(Errc::EmptyText, "nothing to embed after normalization");
  if (static_cast<Index>(tokens.size()) > max_tokens) tokens.resize(static_cast<std::size_t>(max_tokens));

  WordEmbeddingSequence seq;
  seq.vectors = Matrix::Zero(static_cast<Index>(tokens.size()), table.dim());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto v = table.lookup(tokens[i]);
    seq.in_vocabulary.push_back(v.has_value());
    if (v) seq.vectors.row(static_cast<Index>(i)) = *v;
  }
  seq.tokens = std::move(tokens);
  return seq;
}

SentenceEmbedding encode_sentence(const std::string& text, SentenceEncoder* encoder, ProviderCache& cache) {
  if (trim_and_collapse(text).empty()) throw Error(Errc::EmptyText, "sentence is empty");
  if (encoder == nullptr) throw Error(Errc::ProviderUnavailable, "no sentence encoder configured");
  const std::uint64_t key = content_hash(text);
  if (auto hit = cache.load_matrix(encoder->id(), key)) return {hit->row(0)};
  RowVector v = encoder->encode(text);
  if (v.size() != kSentenceDim) {
    throw Error(Errc::DimensionMismatch, "sentence encoder returned " + std::to_string(v.size()) +
                                             " values, expected 768");
  }
  if (!v.allFinite()) throw Error(Errc::NonFiniteInput, "sentence embedding is not finite");
  cache.store_matrix(encoder->id(), key, v);
  return {v};
}

}  // namespace vcemo
