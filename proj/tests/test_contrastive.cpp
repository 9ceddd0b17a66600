#include <gtest/gtest.h>

#include <numeric>

#include "support.hpp"
#include "vcemo/contrastive.hpp"
#include "vcemo/error.hpp"

using namespace vcemo;
using testsupport::check_gradients;
using testsupport::random_matrix;
using testsupport::random_unit_rows;
using testsupport::supcon_enumerate;

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

std::vector<int> random_labels(int n, int classes, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, classes - 1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (auto& l : out) l = pick(rng);
  return out;
}

double loss_of(const Matrix& z, const std::vector<int>& labels, double tau, const ContrastMemory* mem = nullptr) {
  return supcon_loss(ag::constant(z), labels, tau, mem).scalar();
}

ModelConfig tiny_model(double dropout) {
  ModelConfig cfg;
  cfg.encoder.conv_blocks = {{2, 3, 1, 2}};
  cfg.encoder.mel_bins = 4;
  cfg.encoder.word_dim = 3;
  cfg.encoder.knowledge_dim = 5;
  cfg.encoder.d_model = 4;
  cfg.encoder.recurrent_hidden = 4;
  cfg.encoder.dropout_p = dropout;
  cfg.attention.d_model = 4;
  cfg.attention.n_layers = 1;
  cfg.attention.ffn_width = 8;
  cfg.attention.dropout_p = dropout;
  cfg.projection_dim = 8;
  cfg.predictor_hidden = 4;
  return cfg;
}

}  // namespace

TEST(SupCon, PairWithSameLabelIsZero) {
  std::mt19937_64 rng(1);
  EXPECT_NEAR(loss_of(random_unit_rows(2, 128, rng), {3, 3}, 1.0), 0.0, 1e-15);
}

TEST(SupCon, IdenticalRowsGiveLogThree) {
  Matrix z = Matrix::Zero(4, 128);
  z.col(0).setOnes();
  EXPECT_NEAR(loss_of(z, {0, 0, 1, 1}, 1.0), std::log(3.0), 1e-12);
  EXPECT_NEAR(loss_of(z, {0, 0, 1, 1}, 1.0), 1.0986, 5e-5);
}

TEST(SupCon, MatchesEnumerationOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix z = random_unit_rows(8, 128, rng);
    const auto labels = random_labels(8, 3, rng);
    const double tau = trial % 2 ? 1.0 : 0.3;
    const double oracle = supcon_enumerate(z, labels, tau, Matrix(0, 128), {});
    if (std::isnan(oracle)) continue;
    EXPECT_NEAR(loss_of(z, labels, tau), oracle, 1e-6);
  }
}

TEST(SupCon, QueueMatchesOracleInBothPositiveModes) {
  std::mt19937_64 rng(3);
  for (bool pos : {true, false}) {
    const Matrix z = random_unit_rows(6, 16, rng);
    const auto labels = random_labels(6, 3, rng);
    ContrastMemory mem{random_unit_rows(10, 16, rng), random_labels(10, 3, rng), pos};
    EXPECT_NEAR(loss_of(z, labels, 1.0, &mem), supcon_enumerate(z, labels, 1.0, mem.z, mem.labels, pos), 1e-9);
  }
}

TEST(SupCon, NonNegativeAndInvariantToRotationAndPermutation) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix z = random_unit_rows(10, 12, rng);
    const auto labels = random_labels(10, 3, rng);
    const double base = loss_of(z, labels, 1.0);
    EXPECT_GE(base, 0.0);

    const Eigen::HouseholderQR<Matrix> qr(random_matrix(12, 12, rng));
    const Matrix q = qr.householderQ();
    EXPECT_NEAR(loss_of(z * q, labels, 1.0), base, 1e-6);

    std::vector<Index> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix zp(10, 12);
    std::vector<int> lp(10);
    for (Index i = 0; i < 10; ++i) {
      zp.row(i) = z.row(perm[static_cast<std::size_t>(i)]);
      lp[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    }
    EXPECT_NEAR(loss_of(zp, lp, 1.0), base, 1e-9);
  }
}

TEST(SupCon, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  for (bool with_queue : {false, true}) {
    auto z = ag::parameter(random_unit_rows(6, 8, rng));
    const std::vector<int> labels{0, 1, 0, 2, 1, 0};
    ContrastMemory mem{random_unit_rows(5, 8, rng), {0, 2, 2, 1, 0}, true};
    const auto res = check_gradients([&] { return supcon_loss(z, labels, 0.7, with_queue ? &mem : nullptr); }, {z},
                                     48, rng, 1e-6, 1e-4);
    EXPECT_EQ(res.passed, res.checked) << "worst " << res.worst;
  }
}

TEST(SupCon, Errors) {
  std::mt19937_64 rng(6);
  const Matrix z = random_unit_rows(4, 8, rng);
  EXPECT_EQ(code_of([&] { loss_of(z.topRows(1), {0}, 1.0); }), Errc::BatchTooSmall);
  EXPECT_EQ(code_of([&] { loss_of(z, {0, 1, 2, 3}, 1.0); }), Errc::NoPositivesAnywhere);
  EXPECT_EQ(code_of([&] { loss_of(z, {0, 1}, 1.0); }), Errc::LengthMismatch);
  EXPECT_EQ(code_of([&] { loss_of(z, {0, 0, 1, 1}, 0.0); }), Errc::InvalidConfig);
  Matrix bad = z;
  bad(1, 1) = NAN;
  EXPECT_EQ(code_of([&] { loss_of(bad, {0, 0, 1, 1}, 1.0); }), Errc::NonFiniteInput);
  ContrastMemory mem{random_unit_rows(2, 5, rng), {0, 1}, true};
  EXPECT_EQ(code_of([&] { loss_of(z, {0, 0, 1, 1}, 1.0, &mem); }), Errc::DimensionMismatch);
}

TEST(CombinedLoss, Identities) {
  EXPECT_EQ(combined_loss(0.731, 5.0, 0.0).l_total, 0.731);
  const auto b = combined_loss(2.0, 4.0, 1.0);
  EXPECT_DOUBLE_EQ(b.l_total, 3.0);
  EXPECT_EQ(b.l_ce, 2.0);
  EXPECT_EQ(b.l_supcon, 4.0);
  EXPECT_EQ(b.alpha, 1.0);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int i = 0; i < 1000; ++i) {
    const double ce = u(rng), sc = u(rng), alpha = u(rng) * u(rng);
    const double t = combined_loss(ce, sc, alpha).l_total;
    EXPECT_GE(t, std::min(ce, sc) - 1e-12);
    EXPECT_LE(t, std::max(ce, sc) + 1e-12);
    EXPECT_EQ(t, (ce + alpha * sc) / (1.0 + alpha));
  }
  EXPECT_EQ(code_of([] { combined_loss(NAN, 1.0, 0.1); }), Errc::NonFiniteInput);
  EXPECT_EQ(code_of([] { combined_loss(1.0, INFINITY, 0.1); }), Errc::NonFiniteInput);

  const auto v = combined_loss(ag::constant(Matrix::Constant(1, 1, 2.0)), ag::constant(Matrix::Constant(1, 1, 4.0)), 1.0);
  EXPECT_DOUBLE_EQ(v.scalar(), 3.0);
}

TEST(MoCoQueue, FifoEvictionAndCounters) {
  MoCoQueue q(3, 2);
  Matrix z(4, 2);
  z << 1, 0, 0, 1, -1, 0, 0, -1;
  const std::vector<int> labels{10, 11, 12, 13};
  q.enqueue(z, labels);
  ASSERT_EQ(q.size(), 3u);
  EXPECT_EQ(q.entries()[0].second, 11);
  EXPECT_EQ(q.entries()[2].second, 13);
  EXPECT_EQ(q.total_enqueued() - q.total_evicted(), q.size());
  const auto snap = q.snapshot(false);
  EXPECT_EQ(snap.z.row(0), z.row(1));
  EXPECT_FALSE(snap.as_positives);
  EXPECT_EQ(code_of([&] { q.enqueue(Matrix::Zero(1, 3), std::vector<int>{1}); }), Errc::DimensionMismatch);
  EXPECT_EQ(MoCoQueue().capacity(), 16384u);
}

TEST(MoCoQueue, SizeNeverExceedsCapacity) {
  MoCoQueue q(16384, 4);
  std::mt19937_64 rng(8);
  for (int step = 0; step < 70; ++step) {
    q.enqueue(random_unit_rows(256, 4, rng), random_labels(256, 4, rng));
    EXPECT_LE(q.size(), 16384u);
    EXPECT_EQ(q.total_enqueued() - q.total_evicted(), q.size());
  }
  EXPECT_EQ(q.size(), 16384u);
}

TEST(Momentum, IdentityAndLimit) {
  EmotionModel query(tiny_model(0.1), 1), key(tiny_model(0.1), 2);
  std::vector<Matrix> before;
  for (const auto& p : key.store().parameters()) before.push_back(p.var.value());
  momentum_update(key.store(), query.store(), 1.0);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(key.store().parameters()[i].var.value(), before[i]);
  momentum_update(key.store(), query.store(), 0.0);
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(key.store().parameters()[i].var.value(), query.store().parameters()[i].var.value());
  }
  EmotionModel other(tiny_model(0.1), 3);
  copy_state(other.store(), query.store());
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(other.store().parameters()[i].var.value(), query.store().parameters()[i].var.value());
  }
}

TEST(PairedViews, ErrorsAndDistinctViews) {
  std::mt19937_64 rng(9);
  std::vector<SampleFeatures> samples;
  for (int i = 0; i < 100; ++i) {
    samples.push_back({random_matrix(4, 4, rng), random_matrix(3, 3, rng), random_matrix(1, 5, rng)});
  }
  std::vector<const SampleFeatures*> batch;
  for (const auto& s : samples) batch.push_back(&s);

  EmotionModel no_dropout(tiny_model(0.0), 1);
  ForwardContext train{true, &rng};
  EXPECT_EQ(code_of([&] { paired_views(no_dropout, batch, train); }), Errc::DropoutDisabled);

  EmotionModel model(tiny_model(0.1), 1);
  ForwardContext eval;
  EXPECT_EQ(code_of([&] { paired_views(model, batch, eval); }), Errc::EvalMode);

  const auto [a, b] = paired_views(model, batch, train);
  int differing = 0;
  for (Index i = 0; i < 100; ++i) differing += (a.projections.value().row(i) - b.projections.value().row(i)).norm() > 0;
  EXPECT_EQ(differing, 100);
}
