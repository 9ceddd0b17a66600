#include <gtest/gtest.h>

#include <numeric>

#include "support.hpp"
#include "vcemo/error.hpp"
#include "vcemo/metrics.hpp"

using namespace vcemo;

namespace {

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::Io;
}

}  // namespace

TEST(Metrics, PerfectPredictions) {
  const std::vector<int> y{0, 1, 2, 3, 3, 2, 1, 0, 0};
  const auto r = compute_metrics(y, y, 4);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.macro_f1, 1.0);
  EXPECT_EQ(r.weighted_accuracy, 1.0);
  EXPECT_EQ(r.unweighted_accuracy, 1.0);
  EXPECT_EQ(r.total(), 9);
}

TEST(Metrics, WorkedTwoClassExample) {
  const auto r = compute_metrics(std::vector<int>{0, 0, 0, 1}, std::vector<int>{0, 0, 0, 0}, 2);
  EXPECT_DOUBLE_EQ(r.weighted_accuracy, 0.75);
  EXPECT_DOUBLE_EQ(r.unweighted_accuracy, 0.5);
  EXPECT_DOUBLE_EQ(r.per_class[0].precision, 0.75);
  EXPECT_DOUBLE_EQ(r.per_class[0].recall, 1.0);
  EXPECT_DOUBLE_EQ(r.per_class[0].f1, 6.0 / 7.0);
  EXPECT_EQ(r.per_class[1].f1, 0.0);
  EXPECT_DOUBLE_EQ(r.macro_f1, 3.0 / 7.0);
  EXPECT_NEAR(r.macro_f1, 0.4286, 5e-5);
  EXPECT_EQ(r.confusion(1, 0), 1);
}

TEST(Metrics, F1EqualsCommonValueWhenPrecisionEqualsRecall) {
  for (double v : {0.0, 0.1, 0.5, 0.77, 1.0}) EXPECT_DOUBLE_EQ(f1_score(v, v), v);
  // Symmetric confusion gives precision == recall per class.
  const auto r = compute_metrics(std::vector<int>{0, 0, 1, 1, 2, 2}, std::vector<int>{0, 1, 1, 0, 2, 2}, 3);
  for (const auto& c : r.per_class) {
    EXPECT_DOUBLE_EQ(c.precision, c.recall);
    EXPECT_DOUBLE_EQ(c.f1, c.recall);
  }
}

TEST(Metrics, MatchesBruteForceOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const int classes = 2 + trial % 5;
    std::uniform_int_distribution<int> pick(0, classes - 1);
    std::uniform_int_distribution<int> len(1, 60);
    std::vector<int> t(static_cast<std::size_t>(len(rng))), p(t.size());
    for (auto& v : t) v = pick(rng);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = rng() % 3 == 0 ? t[i] : pick(rng);
    const auto r = compute_metrics(t, p, classes);
    const auto o = testsupport::brute_force_metrics(t, p, classes);
    EXPECT_DOUBLE_EQ(r.accuracy, o.accuracy);
    EXPECT_DOUBLE_EQ(r.weighted_accuracy, o.accuracy);
    EXPECT_DOUBLE_EQ(r.macro_f1, o.macro_f1);
    EXPECT_DOUBLE_EQ(r.unweighted_accuracy, o.unweighted_accuracy);
    for (int c = 0; c < classes; ++c) {
      EXPECT_DOUBLE_EQ(r.per_class[static_cast<std::size_t>(c)].precision, o.precision[static_cast<std::size_t>(c)]);
      EXPECT_DOUBLE_EQ(r.per_class[static_cast<std::size_t>(c)].recall, o.recall[static_cast<std::size_t>(c)]);
      EXPECT_DOUBLE_EQ(r.per_class[static_cast<std::size_t>(c)].f1, o.f1[static_cast<std::size_t>(c)]);
    }
    EXPECT_EQ(r.total(), static_cast<long>(t.size()));
    for (double m : {r.accuracy, r.macro_f1, r.weighted_f1, r.unweighted_accuracy}) {
      EXPECT_GE(m, 0.0);
      EXPECT_LE(m, 1.0);
    }
  }
}

TEST(Metrics, PairPermutationAndRelabelInvariance) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> pick(0, 3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> t(40), p(40);
    for (auto& v : t) v = pick(rng);
    for (auto& v : p) v = pick(rng);
    const auto base = compute_metrics(t, p, 4);

    std::vector<std::size_t> order(40);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> tp, pp;
    for (auto i : order) {
      tp.push_back(t[i]);
      pp.push_back(p[i]);
    }
    const auto shuffled = compute_metrics(tp, pp, 4);
    EXPECT_EQ(shuffled.confusion, base.confusion);
    EXPECT_EQ(shuffled.macro_f1, base.macro_f1);

    std::vector<int> relabel{2, 0, 3, 1};
    std::vector<int> tr, pr;
    for (std::size_t i = 0; i < 40; ++i) {
      tr.push_back(relabel[static_cast<std::size_t>(t[i])]);
      pr.push_back(relabel[static_cast<std::size_t>(p[i])]);
    }
    const auto renamed = compute_metrics(tr, pr, 4);
    EXPECT_DOUBLE_EQ(renamed.accuracy, base.accuracy);
    EXPECT_NEAR(renamed.macro_f1, base.macro_f1, 1e-12);
    EXPECT_NEAR(renamed.unweighted_accuracy, base.unweighted_accuracy, 1e-12);
    for (int c = 0; c < 4; ++c) {
      EXPECT_EQ(renamed.per_class[static_cast<std::size_t>(relabel[static_cast<std::size_t>(c)])].f1,
                base.per_class[static_cast<std::size_t>(c)].f1);
    }
  }
}

TEST(Metrics, Errors) {
  EXPECT_EQ(code_of([] { compute_metrics(std::vector<int>{0, 1}, std::vector<int>{0}, 2); }), Errc::LengthMismatch);
  EXPECT_EQ(code_of([] { compute_metrics(std::vector<int>{0, 2}, std::vector<int>{0, 1}, 2); }), Errc::LabelOutOfRange);
  EXPECT_EQ(code_of([] { compute_metrics(std::vector<int>{0, 1}, std::vector<int>{0, -1}, 2); }), Errc::LabelOutOfRange);
  EXPECT_EQ(code_of([] { compute_metrics(std::vector<int>{}, std::vector<int>{}, 2); }), Errc::EmptyEvalSet);
}

TEST(Metrics, JsonRoundTrip) {
  auto r = compute_metrics(std::vector<int>{0, 1, 2, 1, 0}, std::vector<int>{0, 2, 2, 1, 1}, 3);
  r.class_names = {"angry", "happy", "sad"};
  const auto j = r.to_json();
  for (const char* key : {"accuracy", "macro_f1", "weighted_f1", "weighted_accuracy", "unweighted_accuracy",
                          "confusion", "per_class", "class_names"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  const auto back = MetricsReport::from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.confusion, r.confusion);
  EXPECT_EQ(back.macro_f1, r.macro_f1);
  EXPECT_EQ(back.class_names, r.class_names);
  EXPECT_EQ(back.per_class[2].precision, r.per_class[2].precision);
}
