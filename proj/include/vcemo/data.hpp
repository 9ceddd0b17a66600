#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vcemo {

/// A closed, alphabetically ordered set of emotion names. Index = position.
class LabelSet {
 public:
  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> names);

  /// angry, fear, happy, neutral, sad, surprise
  static LabelSet six_class();
  /// angry, happy, neutral, sad
  static LabelSet four_class();
  static LabelSet for_class_count(int classes);

  std::optional<int> index_of(const std::string& name) const;
  bool contains(const std::string& name) const { return index_of(name).has_value(); }
  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(int index) const { return names_.at(static_cast<std::size_t>(index)); }

  bool operator==(const LabelSet&) const = default;

 private:
  std::vector<std::string> names_;
};

struct Sample {
  std::string id;
  std::filesystem::path audio_ref;
  std::string transcript;
  std::string label;
  int label_index = -1;
  std::string speaker_id;
  std::string session_id;
  double duration_s = 0.0;

  bool operator==(const Sample&) const = default;
};

struct ManifestOptions {
  LabelSet labels = LabelSet::six_class();
  /// Raw label -> canonical name, applied before validation.
  std::map<std::string, std::string> label_map;
};

/// Reads a JSON-lines manifest. Relative audio paths resolve against the
/// manifest's directory.
std::vector<Sample> load_manifest(const std::filesystem::path& path, const ManifestOptions& options = {});
void write_manifest(const std::filesystem::path& path, const std::vector<Sample>& samples);

struct SplitRatios {
  int train = 8;
  int val = 1;
  int test = 1;
};

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
  std::uint64_t seed = 0;
};

/// Shuffles by seed and partitions. Validation and test sizes are
/// N * ratio / total rounded to nearest (at least one each), the rest trains.
/// With `speaker_disjoint`, whole speakers are assigned to a part.
DatasetSplit split_dataset(const std::vector<Sample>& samples, std::uint64_t seed,
                           SplitRatios ratios = {}, bool speaker_disjoint = false);

/// Keeps samples whose label is in `subset` and re-packs label indices
/// alphabetically over the retained names. `active` is the label set the
/// samples were loaded with.
std::vector<Sample> filter_classes(const std::vector<Sample>& samples,
                                   const std::vector<std::string>& subset,
                                   const LabelSet& active = LabelSet::six_class());

struct SessionFold {
  std::vector<std::string> train_sessions;
  std::string val_session;
};

/// One fold per session (sorted by name); each session validates once.
std::vector<SessionFold> make_session_folds(const std::vector<Sample>& samples, int k = 5);

/// Samples whose session is in `sessions`, preserving input order.
std::vector<Sample> select_sessions(const std::vector<Sample>& samples,
                                    const std::vector<std::string>& sessions);

/// Deterministic Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

}  // namespace vcemo
