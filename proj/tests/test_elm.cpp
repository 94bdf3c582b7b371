#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ssc/elm.hpp"
#include "ssc/error.hpp"

using namespace ssc;
using namespace ssc::elm;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

ElmInputs random_inputs(std::mt19937_64& rng, int n, int d, double scale = 1.0) {
  return {{random_matrix(n, d, rng, scale)}, {random_matrix(n, d, rng, scale)},
          {random_matrix(n, d, rng, scale)}, {random_matrix(n, d, rng, scale)}};
}

// Textbook attention without stabilisation, for small inputs only.
Matrix naive_attention(const Matrix& q, const Matrix& k, const Matrix& v, int window = 0) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Matrix out = Matrix::Zero(q.rows(), v.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    double z = 0.0;
    std::vector<double> w(k.rows(), 0.0);
    for (Eigen::Index j = 0; j < k.rows(); ++j) {
      if (window > 0 && (j < i - (window - 1) / 2 || j > i + window / 2)) continue;
      w[j] = std::exp(q.row(i).dot(k.row(j)) * scale);
      z += w[j];
    }
    for (Eigen::Index j = 0; j < k.rows(); ++j) out.row(i) += (w[j] / z) * v.row(j);
  }
  return out;
}

}  // namespace

TEST(GradCheck, AllOpsBelowTolerance) {
  const GradCheckOp ops[] = {GradCheckOp::kFuseAdd, GradCheckOp::kAttention, GradCheckOp::kElmFuse,
                             GradCheckOp::kDeformableQuery};
  for (auto op : ops) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      GradCheckShape s;
      s.n = 1 + static_cast<int>(seed * 7 % 12);
      s.d = 1 + static_cast<int>(seed * 5 % 8);
      s.window = 1 + static_cast<int>(seed % 5);
      s.gate_shape = seed % 2 ? GateShape::kPerToken : GateShape::kComponentwise;
      EXPECT_LT(grad_check(op, s, seed), 1e-5) << "op " << static_cast<int>(op) << " seed " << seed;
    }
  }
}

TEST(GradCheck, LargestShapes) {
  GradCheckShape s;
  s.n = 32;
  s.d = 16;
  s.window = 7;
  EXPECT_LT(grad_check(GradCheckOp::kAttention, s, 99), 1e-5);
  EXPECT_LT(grad_check(GradCheckOp::kElmFuse, s, 99), 1e-5);
  s.n = 33;
  EXPECT_THROW(grad_check(GradCheckOp::kAttention, s, 0), ConfigError);
}

TEST(Attention, RowsAreStochastic) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const ProposalFeatures q{random_matrix(17, 8, rng, 5.0)}, k{random_matrix(23, 8, rng, 5.0)};
    const Matrix p = attention_weights(q, k);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
      EXPECT_GE(p.row(i).minCoeff(), 0.0);
    }
    const Matrix pw = attention_weights(q, q, 5);
    for (Eigen::Index i = 0; i < pw.rows(); ++i) EXPECT_NEAR(pw.row(i).sum(), 1.0, 1e-12);
  }
}

TEST(Attention, MatchesDirectFormula) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    const ProposalFeatures q{random_matrix(9, 4, rng)}, k{random_matrix(11, 4, rng)}, v{random_matrix(11, 3, rng)};
    const auto out = attention(q, k, v);
    EXPECT_LT((out.data - naive_attention(q.data, k.data, v.data)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((out.data - reference::attention(q, k, v).data).cwiseAbs().maxCoeff(), 1e-12);
    const ProposalFeatures vs{random_matrix(9, 3, rng)};
    for (int w : {1, 2, 3, 4, 7}) {
      const auto local = attention(q, q, vs, w);
      EXPECT_LT((local.data - naive_attention(q.data, q.data, vs.data, w)).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Attention, WindowOfOneIsIdentityOnValues) {
  std::mt19937_64 rng(3);
  const ProposalFeatures q{random_matrix(6, 4, rng)}, v{random_matrix(6, 2, rng)};
  EXPECT_LT((attention(q, q, v, 1).data - v.data).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Attention, StableForLargeLogits) {
  std::mt19937_64 rng(4);
  const ProposalFeatures q{random_matrix(5, 4, rng, 1e3)}, v{random_matrix(5, 4, rng)};
  const auto out = attention(q, q, v);
  EXPECT_TRUE(out.data.allFinite());
}

TEST(Attention, ShapeErrors) {
  const ProposalFeatures a{Matrix::Zero(3, 4)}, b{Matrix::Zero(3, 5)}, c{Matrix::Zero(2, 4)};
  EXPECT_THROW(attention(a, b, a), ShapeError);
  EXPECT_THROW(attention(a, a, c), ShapeError);
  EXPECT_THROW(attention(a, c, c, 3), ShapeError);
  EXPECT_THROW(attention(a, a, a, 0), ConfigError);
}

TEST(ElmFuse, GateStrictlyInsideUnitInterval) {
  std::mt19937_64 rng(5);
  for (double scale : {1.0, 50.0, 1e4}) {
    for (auto shape : {GateShape::kComponentwise, GateShape::kPerToken}) {
      const auto in = random_inputs(rng, 12, 6, scale);
      GateParams p;
      p.shape = shape;
      const auto out = elm_fuse(in, p);
      EXPECT_GT(out.gate.w.minCoeff(), 0.0) << scale;
      EXPECT_LT(out.gate.w.maxCoeff(), 1.0) << scale;
      if (shape == GateShape::kPerToken) {
        for (Eigen::Index i = 0; i < 12; ++i) EXPECT_EQ(out.gate.w.row(i).minCoeff(), out.gate.w.row(i).maxCoeff());
      }
    }
  }
}

TEST(ElmFuse, OutputsLieBetweenModalities) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> n(1, 24), d(1, 12);
  std::uniform_real_distribution<double> scale(0.1, 100.0);
  for (int draw = 0; draw < 1000; ++draw) {
    const auto in = random_inputs(rng, n(rng), d(rng), scale(rng));
    const auto out = elm_fuse(in);
    const auto& ki = in.key_img.data;
    const auto& ke = in.key_event.data;
    const auto& vi = in.value_img.data;
    const auto& ve = in.value_event.data;
    ASSERT_TRUE((out.key_fusion.data.array() >= ki.cwiseMin(ke).array()).all());
    ASSERT_TRUE((out.key_fusion.data.array() <= ki.cwiseMax(ke).array()).all());
    ASSERT_TRUE((out.value_fusion.data.array() >= vi.cwiseMin(ve).array()).all());
    ASSERT_TRUE((out.value_fusion.data.array() <= vi.cwiseMax(ve).array()).all());
  }
}

TEST(ElmFuse, BlendMatchesGateFormula) {
  std::mt19937_64 rng(7);
  const auto in = random_inputs(rng, 10, 4);
  GateParams p;
  p.window = 3;
  const auto out = elm_fuse(in, p);
  const ProposalFeatures ka{in.key_img.data + in.key_event.data}, va{in.value_img.data + in.value_event.data};
  const Matrix pre = naive_attention(ka.data, ka.data, va.data) + naive_attention(ka.data, ka.data, va.data, 3);
  for (Eigen::Index i = 0; i < 10; ++i) {
    for (Eigen::Index j = 0; j < 4; ++j) {
      const double w = 1.0 / (1.0 + std::exp(-pre(i, j)));
      EXPECT_NEAR(out.gate.w(i, j), w, 1e-12);
      EXPECT_NEAR(out.key_fusion.data(i, j), (1 - w) * in.key_img.data(i, j) + w * in.key_event.data(i, j), 1e-12);
    }
  }
}

TEST(ElmFuse, KeyEmbeddingShiftsKeys) {
  std::mt19937_64 rng(8);
  const auto in = random_inputs(rng, 6, 3);
  GateParams p;
  const auto plain = elm_fuse(in, p);
  p.key_embedding = RowVector::Constant(3, 0.0);
  EXPECT_EQ(elm_fuse(in, p).gate.w, plain.gate.w);
  p.key_embedding = RowVector::Constant(3, 2.0);
  EXPECT_GT((elm_fuse(in, p).gate.w - plain.gate.w).cwiseAbs().maxCoeff(), 1e-6);
  p.key_embedding = RowVector::Constant(4, 2.0);
  EXPECT_THROW(elm_fuse(in, p), ShapeError);
}

TEST(ElmFuse, RejectsBadInputs) {
  std::mt19937_64 rng(9);
  auto in = random_inputs(rng, 4, 3);
  in.value_event.data = Matrix::Zero(4, 2);
  EXPECT_THROW(elm_fuse(in), ShapeError);
  in = random_inputs(rng, 4, 3);
  in.key_img.data(0, 0) = std::nan("");
  EXPECT_THROW(elm_fuse(in), ShapeError);
  in = random_inputs(rng, 4, 3);
  GateParams p;
  p.window = 0;
  EXPECT_THROW(elm_fuse(in, p), ConfigError);
}

TEST(Bilinear, LatticeCenterAndOutside) {
  std::mt19937_64 rng(10);
  FeatureMap2D m{3, 4, random_matrix(12, 2, rng)};
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) EXPECT_EQ(bilinear(m, x, y), m.data.row(y * 4 + x));
  const RowVector centre = (m.data.row(0) + m.data.row(1) + m.data.row(4) + m.data.row(5)) / 4;
  EXPECT_LT((bilinear(m, 0.5, 0.5) - centre).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(bilinear(m, -5, 1), RowVector::Zero(2));
  EXPECT_EQ(bilinear(m, 1, 3.0), RowVector::Zero(2));
  // Half a cell outside: zero padding halves the edge value.
  EXPECT_LT((bilinear(m, -0.5, 0) - 0.5 * m.data.row(0)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((bilinear(m, 3.5, 2) - 0.5 * m.data.row(11)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(DeformableQuery, SinglePointOnLatticeCopiesCell) {
  std::mt19937_64 rng(11);
  FeatureMap2D m{4, 5, random_matrix(20, 3, rng)};
  VolumeFeatures q{2, 1, 1, Matrix::Zero(2, 1)};
  DeformableSampling s{Matrix(2, 2), Matrix::Zero(2, 2), Matrix::Zero(2, 1)};
  s.refs << 1, 2, 4, 3;
  const auto out = deformable_query(q, m, s);
  EXPECT_EQ(out.data.row(0), m.data.row(2 * 5 + 1));
  EXPECT_EQ(out.data.row(1), m.data.row(3 * 5 + 4));
}

TEST(DeformableQuery, SoftmaxWeightedSumAndReference) {
  std::mt19937_64 rng(12);
  FeatureMap2D m{6, 7, random_matrix(42, 4, rng)};
  VolumeFeatures q{2, 3, 2, random_matrix(12, 5, rng)};
  Matrix refs(12, 2);
  std::uniform_real_distribution<double> u(0, 5);
  for (int i = 0; i < 12; ++i) refs(i, 0) = u(rng), refs(i, 1) = u(rng);
  const DeformableProjection proj{random_matrix(5, 8, rng), random_matrix(5, 4, rng)};
  const auto s = sampling_from_queries(q, refs, proj);
  const auto out = deformable_query(q, m, s);
  for (Eigen::Index i = 0; i < 12; ++i) {
    const RowVector l = s.logits.row(i);
    const RowVector a = (l.array() - l.maxCoeff()).exp().matrix() / (l.array() - l.maxCoeff()).exp().sum();
    RowVector want = RowVector::Zero(4);
    for (int p = 0; p < 4; ++p) want += a[p] * bilinear(m, refs(i, 0) + s.offsets(i, 2 * p), refs(i, 1) + s.offsets(i, 2 * p + 1));
    EXPECT_LT((out.data.row(i) - want).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_LT((out.data - reference::deformable_query(q, m, s).data).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(sampling_from_queries(q, refs, {random_matrix(4, 8, rng), random_matrix(5, 4, rng)}), ShapeError);
}

TEST(Lift, ParadigmsAgreeWhenLinear) {
  std::mt19937_64 rng(13);
  LiftingInputs in;
  in.key_img = {3, 4, random_matrix(12, 3, rng)};
  in.value_img = {3, 4, random_matrix(12, 3, rng)};
  in.key_event = {3, 4, random_matrix(12, 3, rng)};
  in.value_event = {3, 4, random_matrix(12, 3, rng)};
  in.queries = {2, 2, 1, random_matrix(4, 3, rng)};
  in.sampling = {Matrix::Constant(4, 2, 1.5), random_matrix(4, 4, rng), random_matrix(4, 2, rng)};
  LiftingConfig cfg;
  cfg.lifting = LiftingFusion::kAdd;
  const auto based = lift(in, cfg);
  cfg.paradigm = FusionParadigm::kFusionThenLifting;
  const auto then = lift(in, cfg);
  cfg.paradigm = FusionParadigm::kDecodeThenFusion;
  const auto decode = lift(in, cfg);
  // Deformable lifting is linear in the value map, so additive fusion commutes with it.
  EXPECT_LT((based.data - then.data).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((based.data - decode.data).cwiseAbs().maxCoeff(), 1e-12);
  cfg.paradigm = FusionParadigm::kFusionBasedLifting;
  cfg.lifting = LiftingFusion::kElm;
  EXPECT_EQ(lift(in, cfg).data.cols(), 3);
  cfg.paradigm = FusionParadigm::kDecodeThenFusion;
  cfg.mode = FuseMode::kConcat;
  EXPECT_EQ(lift(in, cfg).data.cols(), 6);
  EXPECT_THROW(paradigm_from_name("late"), ConfigError);
}
