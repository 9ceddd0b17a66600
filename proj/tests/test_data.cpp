#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "support.hpp"
#include "vcemo/data.hpp"
#include "vcemo/error.hpp"

using namespace vcemo;

namespace {

std::vector<Sample> numbered(int n, int sessions = 5) {
  std::vector<Sample> out;
  const auto labels = LabelSet::six_class();
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.id = "s" + std::to_string(i);
    s.audio_ref = s.id + ".wav";
    s.label = labels.name(i % 6);
    s.label_index = i % 6;
    s.speaker_id = "spk" + std::to_string(i % 17);
    s.session_id = "Ses0" + std::to_string(i % sessions + 1);
    s.duration_s = 1.0;
    out.push_back(s);
  }
  return out;
}

std::filesystem::path write_lines(const std::string& tag, const std::vector<std::string>& lines) {
  const auto dir = testsupport::temp_dir(tag);
  const auto path = dir / "m.jsonl";
  std::ofstream out(path);
  for (const auto& l : lines) out << l << '\n';
  return path;
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::Io;
}

std::vector<std::string> ids(const std::vector<Sample>& v) {
  std::vector<std::string> out;
  for (const auto& s : v) out.push_back(s.id);
  return out;
}

}  // namespace

TEST(LabelSet, SixAndFourClassSets) {
  EXPECT_EQ(LabelSet::six_class().names(),
            (std::vector<std::string>{"angry", "fear", "happy", "neutral", "sad", "surprise"}));
  EXPECT_EQ(LabelSet::four_class().names(), (std::vector<std::string>{"angry", "happy", "neutral", "sad"}));
  EXPECT_EQ(LabelSet::six_class().index_of("neutral"), 3);
  EXPECT_FALSE(LabelSet::six_class().index_of("joyful").has_value());
}

TEST(LoadManifest, EmptyFileGivesEmptyList) {
  const auto path = write_lines("empty", {});
  EXPECT_TRUE(load_manifest(path, {LabelSet::six_class(), {}}).empty());
}

TEST(LoadManifest, ThreeLinesInFileOrder) {
  const auto path = write_lines(
      "three", {R"({"id":"b","audio":"b.wav","text":"hi","label":"sad","speaker":"x","session":"S1","duration":1.5})",
                R"({"id":"a","audio":"/abs/a.wav","label":"fear","speaker":"y","duration":2})",
                "",
                R"({"id":"c","audio":"c.wav","text":"yo","label":"angry","speaker":"z","session":"S2","duration":0.5})"});
  const auto s = load_manifest(path, {LabelSet::six_class(), {}});
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(ids(s), (std::vector<std::string>{"b", "a", "c"}));
  EXPECT_EQ(s[0].audio_ref, path.parent_path() / "b.wav");
  EXPECT_EQ(s[1].audio_ref, std::filesystem::path("/abs/a.wav"));
  EXPECT_EQ(s[1].transcript, "");
  EXPECT_EQ(s[1].session_id, "y");
  EXPECT_EQ(s[1].label_index, 1);
}

TEST(LoadManifest, Errors) {
  const auto six = ManifestOptions{LabelSet::six_class(), {}};
  EXPECT_EQ(code_of([&] { load_manifest("/nonexistent/m.jsonl", six); }), Errc::MissingFile);
  const auto joyful =
      write_lines("joy", {R"({"id":"a","audio":"a.wav","label":"joyful","speaker":"x","duration":1})"});
  EXPECT_EQ(code_of([&] { load_manifest(joyful, six); }), Errc::UnknownLabel);
  const auto dup = write_lines("dup", {R"({"id":"a","audio":"a.wav","label":"sad","speaker":"x","duration":1})",
                                       R"({"id":"a","audio":"b.wav","label":"sad","speaker":"x","duration":1})"});
  EXPECT_EQ(code_of([&] { load_manifest(dup, six); }), Errc::DuplicateId);
  const auto bad = write_lines("bad", {R"({"id":"a","audio":"a.wav","label":"sad","speaker":"x","duration":1})",
                                       R"({"id":"b", broken)"});
  try {
    load_manifest(bad, six);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::MalformedRecord);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  const auto zero = write_lines("zero", {R"({"id":"a","audio":"a.wav","label":"sad","speaker":"x","duration":0})"});
  EXPECT_EQ(code_of([&] { load_manifest(zero, six); }), Errc::MalformedRecord);
}

TEST(LoadManifest, LabelMapAppliesBeforeValidation) {
  const auto path =
      write_lines("map", {R"({"id":"a","audio":"a.wav","label":"excited","speaker":"x","duration":1})"});
  const auto s = load_manifest(path, {LabelSet::four_class(), {{"excited", "happy"}}});
  EXPECT_EQ(s[0].label, "happy");
  EXPECT_EQ(s[0].label_index, 1);
}

TEST(LoadManifest, WriteThenLoadRoundTrips) {
  const auto dir = testsupport::temp_dir("roundtrip");
  auto samples = numbered(12);
  for (auto& s : samples) s.audio_ref = dir / s.audio_ref;
  write_manifest(dir / "m.jsonl", samples);
  const auto back = load_manifest(dir / "m.jsonl", {LabelSet::six_class(), {}});
  ASSERT_EQ(back.size(), samples.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].id, samples[i].id);
    EXPECT_EQ(back[i].audio_ref, samples[i].audio_ref);
    EXPECT_EQ(back[i].label_index, samples[i].label_index);
    EXPECT_EQ(back[i].session_id, samples[i].session_id);
  }
}

TEST(SplitDataset, Sizes) {
  const auto ten = split_dataset(numbered(10), 3);
  EXPECT_EQ(ten.train.size(), 8u);
  EXPECT_EQ(ten.val.size(), 1u);
  EXPECT_EQ(ten.test.size(), 1u);
  const auto big = split_dataset(numbered(7477), 3);
  EXPECT_EQ(big.train.size(), 5981u);
  EXPECT_EQ(big.val.size(), 748u);
  EXPECT_EQ(big.test.size(), 748u);
  EXPECT_EQ(code_of([] { split_dataset(numbered(2), 0); }), Errc::TooFewSamples);
}

TEST(SplitDataset, SameSeedSameSplitDifferentSeedDiffers) {
  const auto s = numbered(100);
  EXPECT_EQ(ids(split_dataset(s, 5).test), ids(split_dataset(s, 5).test));
  EXPECT_NE(ids(split_dataset(s, 5).test), ids(split_dataset(s, 6).test));
}

TEST(SplitDataset, PartitionPropertyOverSeedsAndSizes) {
  for (int n = 3; n < 60; n += 7) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const auto s = numbered(n);
      const auto split = split_dataset(s, seed);
      std::multiset<std::string> all;
      for (const auto* part : {&split.train, &split.val, &split.test})
        for (const auto& x : *part) all.insert(x.id);
      const auto expect = ids(s);
      EXPECT_EQ(all, std::multiset<std::string>(expect.begin(), expect.end()));
      EXPECT_EQ(all.size(), std::set<std::string>(all.begin(), all.end()).size());
    }
  }
}

TEST(SplitDataset, SpeakerDisjointMode) {
  const auto split = split_dataset(numbered(200), 1, {}, true);
  std::set<std::string> train_spk;
  for (const auto& s : split.train) train_spk.insert(s.speaker_id);
  for (const auto* part : {&split.val, &split.test})
    for (const auto& s : *part) EXPECT_FALSE(train_spk.count(s.speaker_id)) << s.speaker_id;
  EXPECT_EQ(split.train.size() + split.val.size() + split.test.size(), 200u);
}

TEST(FilterClasses, IdentityFourClassAndEmpty) {
  const auto six = LabelSet::six_class();
  const auto s = numbered(30);
  const auto same = filter_classes(s, six.names(), six);
  ASSERT_EQ(same.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_EQ(same[i].id, s[i].id);
    EXPECT_EQ(same[i].label_index, s[i].label_index);
  }

  const auto four = filter_classes(s, LabelSet::four_class().names(), six);
  EXPECT_EQ(four.size(), 20u);
  for (const auto& x : four) {
    EXPECT_TRUE(LabelSet::four_class().contains(x.label));
    EXPECT_EQ(x.label_index, *LabelSet::four_class().index_of(x.label));
  }

  std::vector<Sample> no_fear;
  for (const auto& x : s)
    if (x.label != "fear") no_fear.push_back(x);
  EXPECT_EQ(code_of([&] { filter_classes(no_fear, {"fear"}, six); }), Errc::EmptyResult);
  EXPECT_EQ(code_of([&] { filter_classes(s, {"joyful"}, six); }), Errc::UnknownLabel);
}

TEST(SessionFolds, ExactPartition) {
  const auto s = numbered(50);
  const auto folds = make_session_folds(s, 5);
  ASSERT_EQ(folds.size(), 5u);
  std::set<std::string> val;
  for (const auto& f : folds) {
    EXPECT_EQ(f.train_sessions.size(), 4u);
    EXPECT_EQ(std::count(f.train_sessions.begin(), f.train_sessions.end(), f.val_session), 0);
    val.insert(f.val_session);
  }
  EXPECT_EQ(val, (std::set<std::string>{"Ses01", "Ses02", "Ses03", "Ses04", "Ses05"}));
  EXPECT_EQ(code_of([] { make_session_folds(numbered(40, 4), 5); }), Errc::SessionCountMismatch);
}
