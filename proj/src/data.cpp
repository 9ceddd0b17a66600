#include "vcemo/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "vcemo/error.hpp"

namespace vcemo {

namespace {

using nlohmann::json;

std::string required_string(const json& rec, const char* key, std::size_t line) {
  auto it = rec.find(key);
  if (it == rec.end() || !it->is_string()) {
    throw Error(Errc::MalformedRecord, "line " + std::to_string(line) + ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

Sample parse_record(const std::string& text, std::size_t line, const ManifestOptions& options,
                    const std::filesystem::path& base) {
  json rec;
  try {
    rec = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::MalformedRecord, "line " + std::to_string(line) + ": " + e.what());
  }
  if (!rec.is_object()) throw Error(Errc::MalformedRecord, "line " + std::to_string(line) + ": not an object");

  Sample s;
  s.id = required_string(rec, "id", line);
  s.audio_ref = required_string(rec, "audio", line);
  if (s.audio_ref.is_relative()) s.audio_ref = base / s.audio_ref;
  if (auto it = rec.find("text"); it != rec.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(Errc::MalformedRecord, "line " + std::to_string(line) + ": text must be a string");
    s.transcript = it->get<std::string>();
  }
  std::string raw = required_string(rec, "label", line);
  if (auto m = options.label_map.find(raw); m != options.label_map.end()) raw = m->second;
  const auto idx = options.labels.index_of(raw);
  if (!idx) throw Error(Errc::UnknownLabel, raw + " (line " + std::to_string(line) + ")");
  s.label = raw;
  s.label_index = *idx;
  s.speaker_id = required_string(rec, "speaker", line);
  if (auto it = rec.find("session"); it != rec.end() && !it->is_null()) {
    if (!it->is_string()) throw Error(Errc::MalformedRecord, "line " + std::to_string(line) + ": session must be a string");
    s.session_id = it->get<std::string>();
  } else {
    s.session_id = s.speaker_id;
  }
  auto dur = rec.find("duration");
  if (dur == rec.end() || !dur->is_number()) {
    throw Error(Errc::MalformedRecord, "line " + std::to_string(line) + ": missing numeric field 'duration'");
  }
  s.duration_s = dur->get<double>();
  if (!(s.duration_s > 0.0) || !std::isfinite(s.duration_s)) {
    throw Error(Errc::MalformedRecord, "line " + std::to_string(line) + ": duration must be > 0");
  }
  return s;
}

std::size_t rounded_share(std::size_t n, int part, int total) {
  if (part <= 0) return 0;
  const auto share = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * part / static_cast<double>(total)));
  return std::max<std::size_t>(1, share);
}

}  // namespace

LabelSet::LabelSet(std::vector<std::string> names) : names_(std::move(names)) {
  std::sort(names_.begin(), names_.end());
  names_.erase(std::unique(names_.begin(), names_.end()), names_.end());
}

LabelSet LabelSet::six_class() { return LabelSet({"angry", "fear", "happy", "neutral", "sad", "surprise"}); }
LabelSet LabelSet::four_class() { return LabelSet({"angry", "happy", "neutral", "sad"}); }

LabelSet LabelSet::for_class_count(int classes) {
  if (classes == 6) return six_class();
  if (classes == 4) return four_class();
  throw Error(Errc::InvalidConfig, "class count must be 4 or 6, got " + std::to_string(classes));
}

std::optional<int> LabelSet::index_of(const std::string& name) const {
  auto it = std::lower_bound(names_.begin(), names_.end(), name);
  if (it == names_.end() || *it != name) return std::nullopt;
  return static_cast<int>(it - names_.begin());
}

std::vector<Sample> load_manifest(const std::filesystem::path& path, const ManifestOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, path.string());
  const auto base = path.parent_path();

  std::vector<Sample> samples;
  std::unordered_set<std::string> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    Sample s = parse_record(text, line, options, base);
    if (!seen.insert(s.id).second) throw Error(Errc::DuplicateId, s.id);
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_manifest(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  for (const auto& s : samples) {
    nlohmann::ordered_json rec;
    rec["id"] = s.id;
    rec["audio"] = s.audio_ref.string();
    rec["text"] = s.transcript;
    rec["label"] = s.label;
    rec["speaker"] = s.speaker_id;
    rec["session"] = s.session_id;
    rec["duration"] = s.duration_s;
    out << rec.dump() << '\n';
  }
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

DatasetSplit split_dataset(const std::vector<Sample>& samples, std::uint64_t seed, SplitRatios ratios,
                           bool speaker_disjoint) {
  if (ratios.train <= 0 || ratios.val < 0 || ratios.test < 0) {
    throw Error(Errc::InvalidConfig, "split ratios must be positive");
  }
  const std::size_t n = samples.size();
  if (n < 3) throw Error(Errc::TooFewSamples, "need at least 3 samples, got " + std::to_string(n));
  const int total = ratios.train + ratios.val + ratios.test;
  const std::size_t n_val = rounded_share(n, ratios.val, total);
  const std::size_t n_test = rounded_share(n, ratios.test, total);
  if (n_val + n_test >= n) throw Error(Errc::TooFewSamples, "no samples left for training");

  DatasetSplit split;
  split.seed = seed;
  if (!speaker_disjoint) {
    const auto order = seeded_permutation(n, seed);
    for (std::size_t k = 0; k < n; ++k) {
      const Sample& s = samples[order[k]];
      if (k < n_val) {
        split.val.push_back(s);
      } else if (k < n_val + n_test) {
        split.test.push_back(s);
      } else {
        split.train.push_back(s);
      }
    }
    return split;
  }

  // Whole speakers go to val, then test, until each reaches its target size.
  std::vector<std::string> speakers;
  std::map<std::string, std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < n; ++i) {
    auto& bucket = by_speaker[samples[i].speaker_id];
    if (bucket.empty()) speakers.push_back(samples[i].speaker_id);
    bucket.push_back(i);
  }
  std::sort(speakers.begin(), speakers.end());
  const auto order = seeded_permutation(speakers.size(), seed);
  for (std::size_t k : order) {
    const auto& idx = by_speaker[speakers[k]];
    auto* part = &split.train;
    if (split.val.size() < n_val) {
      part = &split.val;
    } else if (split.test.size() < n_test) {
      part = &split.test;
    }
    for (std::size_t i : idx) part->push_back(samples[i]);
  }
  if (split.train.empty() || split.val.empty() || split.test.empty()) {
    throw Error(Errc::TooFewSamples, "too few speakers for a speaker-disjoint split");
  }
  return split;
}

std::vector<Sample> filter_classes(const std::vector<Sample>& samples,
                                   const std::vector<std::string>& subset, const LabelSet& active) {
  for (const auto& name : subset) {
    if (!active.contains(name)) throw Error(Errc::UnknownLabel, name);
  }
  const LabelSet retained(subset);
  std::vector<Sample> out;
  for (const auto& s : samples) {
    if (auto idx = retained.index_of(s.label)) {
      Sample copy = s;
      copy.label_index = *idx;
      out.push_back(std::move(copy));
    }
  }
  if (out.empty()) throw Error(Errc::EmptyResult, "no sample carries a retained label");
  return out;
}

std::vector<SessionFold> make_session_folds(const std::vector<Sample>& samples, int k) {
  std::set<std::string> sessions;
  for (const auto& s : samples) sessions.insert(s.session_id);
  if (static_cast<int>(sessions.size()) != k) {
    throw Error(Errc::SessionCountMismatch, "found " + std::to_string(sessions.size()) +
                                                " sessions, expected " + std::to_string(k));
  }
  std::vector<SessionFold> folds;
  for (const auto& held_out : sessions) {
    SessionFold fold;
    fold.val_session = held_out;
    for (const auto& s : sessions)
      if (s != held_out) fold.train_sessions.push_back(s);
    folds.push_back(std::move(fold));
  }
  return folds;
}

std::vector<Sample> select_sessions(const std::vector<Sample>& samples,
                                    const std::vector<std::string>& sessions) {
  const std::set<std::string> wanted(sessions.begin(), sessions.end());
  std::vector<Sample> out;
  for (const auto& s : samples)
    if (wanted.count(s.session_id)) out.push_back(s);
  return out;
}

}  // namespace vcemo
