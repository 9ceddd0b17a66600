#include <gtest/gtest.h>

#include <algorithm>

#include "support.hpp"
#include "vcemo/attention.hpp"
#include "vcemo/error.hpp"

using namespace vcemo;
using testsupport::check_gradients;
using testsupport::random_matrix;
using testsupport::unit_norm;
using testsupport::weighted_sum;

namespace {

AttentionConfig small_config(Index layers = 2, Index heads = 1) {
  AttentionConfig cfg;
  cfg.d_model = 6;
  cfg.n_layers = layers;
  cfg.n_heads = heads;
  cfg.ffn_width = 12;
  cfg.dropout_p = 0.0;
  return cfg;
}

Matrix permute_rows(const Matrix& m, const std::vector<Index>& perm) {
  Matrix out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(perm[static_cast<std::size_t>(i)]);
  return out;
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(ScaledDotAttention, SingleKeyReturnsItsValue) {
  std::mt19937_64 rng(1);
  const Matrix v = random_matrix(1, 4, rng);
  const auto r = scaled_dot_attention(ag::constant(random_matrix(3, 4, rng)), ag::constant(random_matrix(1, 4, rng)),
                                      ag::constant(v));
  for (Index i = 0; i < 3; ++i) EXPECT_EQ(r.output.value().row(i), v.row(0));
}

TEST(ScaledDotAttention, OrthogonalQueryGivesColumnMean) {
  std::mt19937_64 rng(2);
  Matrix k = random_matrix(5, 4, rng);
  k.col(0).setZero();
  Matrix q = Matrix::Zero(1, 4);
  q(0, 0) = 2.0;
  const Matrix v = random_matrix(5, 3, rng);
  const auto r = scaled_dot_attention(ag::constant(q), ag::constant(k), ag::constant(v));
  EXPECT_LT(max_abs(r.output.value() - v.colwise().mean()), 1e-12);
}

TEST(ScaledDotAttention, TwoDimensionalWorkedExample) {
  Matrix q(1, 2), k(2, 2);
  q << 1, 0;
  k << 1, 0, 0, 1;
  const auto r = scaled_dot_attention(ag::constant(q), ag::constant(k), ag::constant(k));
  // Independent evaluation of softmax([1/sqrt(2), 0]).
  const double e = std::exp(1.0 / std::sqrt(2.0));
  EXPECT_NEAR(r.weights(0, 0), e / (e + 1.0), 1e-12);
  EXPECT_NEAR(r.weights(0, 0), 0.6698, 5e-5);
  EXPECT_NEAR(r.weights(0, 1), 0.3302, 5e-5);
  EXPECT_NEAR(r.output.value()(0, 0), 0.6698, 5e-5);
  EXPECT_NEAR(r.output.value()(0, 1), 0.3302, 5e-5);
}

TEST(ScaledDotAttention, RowStochasticAndConvexOverRandomInputs) {
  std::mt19937_64 rng(3);
  std::bernoulli_distribution keep(0.6);
  for (int trial = 0; trial < 50; ++trial) {
    const Index nq = 1 + trial % 5, nk = 1 + trial % 7, d = 1 + trial % 4;
    Mask mask(static_cast<std::size_t>(nk));
    for (auto& m : mask) m = keep(rng);
    mask[static_cast<std::size_t>(trial % nk)] = 1;
    const Matrix v = random_matrix(nk, 3, rng);
    const auto r = scaled_dot_attention(ag::constant(random_matrix(nq, d, rng) * 3.0),
                                        ag::constant(random_matrix(nk, d, rng) * 3.0), ag::constant(v), mask);
    for (Index i = 0; i < nq; ++i) {
      EXPECT_NEAR(r.weights.row(i).sum(), 1.0, 1e-6);
      for (Index j = 0; j < nk; ++j) {
        EXPECT_GE(r.weights(i, j), 0.0);
        if (!mask[static_cast<std::size_t>(j)]) EXPECT_EQ(r.weights(i, j), 0.0);
      }
      for (Index c = 0; c < 3; ++c) {
        double lo = 1e300, hi = -1e300;
        for (Index j = 0; j < nk; ++j) {
          if (!mask[static_cast<std::size_t>(j)]) continue;
          lo = std::min(lo, v(j, c));
          hi = std::max(hi, v(j, c));
        }
        EXPECT_GE(r.output.value()(i, c), lo - 1e-12);
        EXPECT_LE(r.output.value()(i, c), hi + 1e-12);
      }
    }
  }
}

TEST(ScaledDotAttention, Errors) {
  const auto a = ag::constant(Matrix::Ones(2, 3));
  try {
    scaled_dot_attention(a, ag::constant(Matrix::Ones(2, 4)), a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ShapeMismatch);
  }
  try {
    scaled_dot_attention(a, a, a, Mask{0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::AllKeysMasked);
  }
}

TEST(AttentionBlock, SingletonSelfAttentionIsPerRow) {
  ParameterStore store;
  std::mt19937_64 rng(4);
  AttentionBlock block(store, "blk", small_config(), rng);
  ForwardContext eval;
  std::vector<Matrix> weights;
  block.self(ag::constant(random_matrix(1, 6, rng)), full_mask(1), eval, &weights);
  ASSERT_EQ(weights.size(), 1u);
  EXPECT_DOUBLE_EQ(weights[0](0, 0), 1.0);
}

TEST(AttentionBlock, SelfAttentionIsPermutationEquivariant) {
  for (Index heads : {1, 2, 3}) {
    ParameterStore store;
    std::mt19937_64 rng(5 + heads);
    AttentionBlock block(store, "blk", small_config(2, heads), rng);
    ForwardContext eval;
    const Matrix x = random_matrix(5, 6, rng);
    const std::vector<Index> perm{3, 0, 4, 1, 2};
    const auto y = block.self(ag::constant(x), full_mask(5), eval).value();
    const auto yp = block.self(ag::constant(permute_rows(x, perm)), full_mask(5), eval).value();
    EXPECT_LT(max_abs(yp - permute_rows(y, perm)), 1e-12) << heads;
  }
}

TEST(AttentionBlock, MaskedRowsGetZeroWeightAndZeroOutput) {
  ParameterStore store;
  std::mt19937_64 rng(9);
  AttentionBlock block(store, "blk", small_config(), rng);
  ForwardContext eval;
  const Mask mask{1, 0, 1, 1, 0};
  std::vector<Matrix> weights;
  const auto y = block.self(ag::constant(random_matrix(5, 6, rng)), mask, eval, &weights).value();
  EXPECT_TRUE((weights[0].col(1).array() == 0.0).all());
  EXPECT_TRUE((weights[0].col(4).array() == 0.0).all());
  EXPECT_TRUE((y.row(1).array() == 0.0).all());
  EXPECT_TRUE((y.row(4).array() == 0.0).all());
}

TEST(AttentionBlock, GuidedWithSelfAsGuideMatchesSelf) {
  ParameterStore store;
  std::mt19937_64 rng(10);
  AttentionBlock block(store, "blk", small_config(), rng);
  ForwardContext eval;
  const auto x = ag::constant(random_matrix(4, 6, rng));
  const auto a = block.self(x, full_mask(4), eval).value();
  const auto b = block.guided(x, full_mask(4), x, full_mask(4), eval).value();
  EXPECT_EQ(a, b);
}

TEST(AttentionBlock, GuideOfLengthOneAndGuidePermutationInvariance) {
  ParameterStore store;
  std::mt19937_64 rng(11);
  AttentionBlock block(store, "blk", small_config(1, 2), rng);
  ForwardContext eval;
  const auto x = ag::constant(random_matrix(3, 6, rng));
  std::vector<Matrix> w1;
  block.guided(x, full_mask(3), ag::constant(random_matrix(1, 6, rng)), full_mask(1), eval, &w1);
  for (const auto& w : w1) EXPECT_TRUE((w.array() == 1.0).all());

  const Matrix g = random_matrix(6, 6, rng);
  const std::vector<Index> perm{5, 2, 0, 4, 1, 3};
  const Mask gm{1, 1, 0, 1, 1, 1};
  Mask gmp(6);
  for (std::size_t i = 0; i < 6; ++i) gmp[i] = gm[static_cast<std::size_t>(perm[i])];
  const auto a = block.guided(x, full_mask(3), ag::constant(g), gm, eval).value();
  const auto b = block.guided(x, full_mask(3), ag::constant(permute_rows(g, perm)), gmp, eval).value();
  EXPECT_LT(max_abs(a - b), 1e-12);
}

TEST(CoAttention, MinimalStackAndShapes) {
  ParameterStore store;
  std::mt19937_64 rng(12);
  CoAttention co(store, "co", small_config(1), rng);
  ForwardContext eval;
  const auto [a, b] = co(ag::constant(random_matrix(4, 6, rng)), full_mask(4), ag::constant(random_matrix(1, 6, rng)),
                         full_mask(1), eval);
  EXPECT_EQ(a.rows(), 4);
  EXPECT_EQ(b.rows(), 1);
  EXPECT_EQ(b.cols(), 6);
}

TEST(CoAttention, ABranchIgnoresB) {
  ParameterStore store;
  std::mt19937_64 rng(13);
  CoAttention co(store, "co", small_config(), rng);
  ForwardContext eval;
  const auto a = ag::constant(random_matrix(4, 6, rng));
  const auto [a1, b1] = co(a, full_mask(4), ag::constant(random_matrix(3, 6, rng)), full_mask(3), eval);
  const auto [a2, b2] = co(a, full_mask(4), ag::constant(random_matrix(5, 6, rng)), full_mask(5), eval);
  EXPECT_EQ(a1.value(), a2.value());
  EXPECT_NE(b1.value().row(0), b2.value().row(0));
}

TEST(CoAttention, PermutingAPermutesAAndKeepsB) {
  ParameterStore store;
  std::mt19937_64 rng(14);
  CoAttention co(store, "co", small_config(), rng);
  ForwardContext eval;
  const Matrix a = random_matrix(5, 6, rng);
  const auto b = ag::constant(random_matrix(3, 6, rng));
  const std::vector<Index> perm{4, 2, 3, 0, 1};
  const auto [a1, b1] = co(ag::constant(a), full_mask(5), b, full_mask(3), eval);
  const auto [a2, b2] = co(ag::constant(permute_rows(a, perm)), full_mask(5), b, full_mask(3), eval);
  EXPECT_LT(max_abs(a2.value() - permute_rows(a1.value(), perm)), 1e-12);
  EXPECT_LT(max_abs(b2.value() - b1.value()), 1e-12);
}

TEST(CoAttention, GradientCheck) {
  ParameterStore store;
  std::mt19937_64 rng(15);
  CoAttention co(store, "co", small_config(2, 2), rng);
  const auto a = ag::parameter(unit_norm(random_matrix(4, 6, rng)));
  const auto b = ag::parameter(unit_norm(random_matrix(3, 6, rng)));
  const Mask bm{1, 1, 0};
  const Matrix wa = random_matrix(4, 6, rng), wb = random_matrix(3, 6, rng);
  auto loss = [&] {
    ForwardContext eval;
    const auto [ao, bo] = co(a, full_mask(4), b, bm, eval);
    return ag::add(weighted_sum(ao, wa), weighted_sum(bo, wb));
  };
  std::vector<ag::Var> tensors{a, b};
  for (auto& p : store.parameters()) tensors.push_back(p.var);
  const auto res = check_gradients(loss, tensors, 8, rng);
  EXPECT_GE(res.pass_fraction(), 0.95) << "worst " << res.worst << " checked " << res.checked;
}

TEST(AttentionConfig, HeadsMustDivideWidth) {
  auto cfg = small_config(2, 4);
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_NO_THROW(small_config(2, 3).validate());
}
