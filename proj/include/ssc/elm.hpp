#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string_view>

namespace ssc::elm {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

/// n tokens x d features (spatial locations or query proposals).
struct ProposalFeatures {
  Matrix data;

  Eigen::Index n() const { return data.rows(); }
  Eigen::Index d() const { return data.cols(); }
};

/// b x c image-plane grid with d features per cell, stored (b*c) x d with
/// the column index c fastest.
struct FeatureMap2D {
  int b = 0, c = 0;
  Matrix data;

  Eigen::Index d() const { return data.cols(); }
  static FeatureMap2D zeros(int b, int c, Eigen::Index d);
};

/// h x w x c voxel volume with d features per voxel, stored (h*w*c) x d.
struct VolumeFeatures {
  int h = 0, w = 0, c = 0;
  Matrix data;

  Eigen::Index d() const { return data.cols(); }
  Eigen::Index voxels() const { return static_cast<Eigen::Index>(h) * w * c; }
  static VolumeFeatures zeros(int h, int w, int c, Eigen::Index d);
};

/// Gate weights, every entry strictly inside (0, 1).
struct GateField {
  Matrix w;
};

enum class FuseMode { kAdd, kConcat };
FuseMode fuse_mode_from_name(std::string_view name);

/// Componentwise sum, or feature concatenation with `a` first.
FeatureMap2D fuse_elementwise(const FeatureMap2D& a, const FeatureMap2D& b, FuseMode mode);
VolumeFeatures fuse_elementwise(const VolumeFeatures& a, const VolumeFeatures& b, FuseMode mode);
ProposalFeatures fuse_elementwise(const ProposalFeatures& a, const ProposalFeatures& b, FuseMode mode);

/// softmax(Q K^T / sqrt(d)) V with row-max stabilisation. With `window`,
/// query i only sees keys in [i - (W-1)/2, i + W/2] (self-attention only).
ProposalFeatures attention(const ProposalFeatures& q, const ProposalFeatures& k,
                           const ProposalFeatures& v, std::optional<int> window = std::nullopt);

/// Row-stochastic attention weights used by `attention`.
Matrix attention_weights(const ProposalFeatures& q, const ProposalFeatures& k,
                         std::optional<int> window = std::nullopt);

struct AttentionGrads {
  Matrix dq, dk, dv;
};

AttentionGrads attention_backward(const ProposalFeatures& q, const ProposalFeatures& k,
                                  const ProposalFeatures& v, const Matrix& d_out,
                                  std::optional<int> window = std::nullopt);

enum class GateShape { kComponentwise, kPerToken };

struct GateParams {
  /// Local-branch window size in tokens.
  int window = 7;
  GateShape shape = GateShape::kComponentwise;
  /// Camera/level embedding added to every key row before attention.
  std::optional<RowVector> key_embedding;
};

struct ElmInputs {
  ProposalFeatures key_img, value_img, key_event, value_event;
};

struct ElmOutput {
  ProposalFeatures key_fusion, value_fusion;
  GateField gate;
};

/// Adds the modalities, runs global + windowed self-attention on the sums,
/// gates w = sigmoid(global + local), then blends (1 - w) img + w event for
/// keys and values.
ElmOutput elm_fuse(const ElmInputs& in, const GateParams& params = {});

struct ElmGrads {
  Matrix d_key_img, d_value_img, d_key_event, d_value_event;
};

/// Input gradients given upstream gradients of the three outputs.
ElmGrads elm_fuse_backward(const ElmInputs& in, const GateParams& params, const Matrix& d_key_fusion,
                           const Matrix& d_value_fusion, const Matrix& d_gate);

/// Per-query sampling for deformable attention, in continuous feature-map
/// coordinates (x along c, y along b; integer values hit cell centres).
struct DeformableSampling {
  Matrix refs;     // queries x 2
  Matrix offsets;  // queries x 2P, (dx, dy) pairs
  Matrix logits;   // queries x P, softmax applied internally

  Eigen::Index points() const { return logits.cols(); }
};

/// Learned projections that turn voxel queries into offsets and logits.
struct DeformableProjection {
  Matrix offset_proj;  // d_q x 2P
  Matrix logit_proj;   // d_q x P
};

DeformableSampling sampling_from_queries(const VolumeFeatures& queries, const Matrix& refs,
                                         const DeformableProjection& proj);

/// Zero-padded bilinear sample of the map at (x, y).
RowVector bilinear(const FeatureMap2D& map, double x, double y);

/// F_voxel[q] = sum_p softmax(logits[q])_p * bilinear(value, ref[q] + offset[q, p]).
VolumeFeatures deformable_query(const VolumeFeatures& queries, const FeatureMap2D& value,
                                const DeformableSampling& sampling);

struct DeformableGrads {
  Matrix d_value, d_offsets, d_logits;
};

DeformableGrads deformable_query_backward(const VolumeFeatures& queries, const FeatureMap2D& value,
                                          const DeformableSampling& sampling, const Matrix& d_out);

enum class FusionParadigm { kFusionThenLifting, kFusionBasedLifting, kDecodeThenFusion };
FusionParadigm paradigm_from_name(std::string_view name);

enum class LiftingFusion { kAdd, kElm };

struct LiftingInputs {
  FeatureMap2D key_img, value_img, key_event, value_event;
  VolumeFeatures queries;
  DeformableSampling sampling;
};

struct LiftingConfig {
  FusionParadigm paradigm = FusionParadigm::kFusionBasedLifting;
  /// 2D / 3D fusion for the two elementwise paradigms.
  FuseMode mode = FuseMode::kAdd;
  /// Key/value fusion inside the lifting step.
  LiftingFusion lifting = LiftingFusion::kElm;
  GateParams gate;
};

/// Runs one of the three event-image fusion placements around a single
/// deformable lifting step and returns the voxel features.
VolumeFeatures lift(const LiftingInputs& in, const LiftingConfig& cfg);

enum class GradCheckOp { kFuseAdd, kAttention, kElmFuse, kDeformableQuery };
GradCheckOp grad_check_op_from_name(std::string_view name);

struct GradCheckShape {
  int n = 4;       // tokens (attention / elm) or queries (deformable)
  int d = 3;       // feature dimension
  int window = 3;  // elm local window
  int points = 4;  // deformable sampling points
  int map_b = 5, map_c = 6;
  GateShape gate_shape = GateShape::kComponentwise;
};

/// Worst |analytic - numeric| / max(1, |analytic|, |numeric|) over every
/// input scalar, with loss = sum of all outputs and central differences of
/// step 1e-6. Inputs are drawn uniformly from [-1, 1] with `seed`.
double grad_check(GradCheckOp op, const GradCheckShape& shape, std::uint64_t seed);

namespace reference {
/// Direct two-loop evaluation, serial.
ProposalFeatures attention(const ProposalFeatures& q, const ProposalFeatures& k,
                           const ProposalFeatures& v, std::optional<int> window = std::nullopt);
VolumeFeatures deformable_query(const VolumeFeatures& queries, const FeatureMap2D& value,
                                const DeformableSampling& sampling);
}  // namespace reference

}  // namespace ssc::elm
