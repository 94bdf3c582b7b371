#include "ssc/elm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "ssc/error.hpp"

namespace ssc::elm {

namespace {

std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw ShapeError(std::string(what) + " contains non-finite values");
}

constexpr double kGateLo = std::numeric_limits<double>::min();
constexpr double kGateHi = 1.0 - 0x1p-53;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double gate_value(double x) { return std::clamp(sigmoid(x), kGateLo, kGateHi); }

// a + w (b - a), kept inside [min(a, b), max(a, b)] against rounding.
double blend(double a, double b, double w) {
  const double v = a + w * (b - a);
  return std::clamp(v, std::min(a, b), std::max(a, b));
}

bool in_window(Eigen::Index i, Eigen::Index j, std::optional<int> window) {
  if (!window) return true;
  const Eigen::Index left = (*window - 1) / 2;
  const Eigen::Index right = *window / 2;
  return j >= i - left && j <= i + right;
}

void check_attention_shapes(const ProposalFeatures& q, const ProposalFeatures& k,
                            const ProposalFeatures& v, std::optional<int> window) {
  if (q.d() != k.d()) {
    throw ShapeError("attention: Q is " + shape_str(q.n(), q.d()) + " but K is " +
                     shape_str(k.n(), k.d()));
  }
  if (k.n() != v.n()) {
    throw ShapeError("attention: K is " + shape_str(k.n(), k.d()) + " but V is " +
                     shape_str(v.n(), v.d()));
  }
  if (k.n() == 0 || q.d() == 0) throw ShapeError("attention: empty inputs");
  if (window) {
    if (*window < 1) throw ConfigError("attention window must be >= 1");
    if (q.n() != k.n()) throw ShapeError("windowed attention needs as many queries as keys");
  }
}

}  // namespace

FeatureMap2D FeatureMap2D::zeros(int b, int c, Eigen::Index d) {
  return {b, c, Matrix::Zero(static_cast<Eigen::Index>(b) * c, d)};
}

VolumeFeatures VolumeFeatures::zeros(int h, int w, int c, Eigen::Index d) {
  return {h, w, c, Matrix::Zero(static_cast<Eigen::Index>(h) * w * c, d)};
}

FuseMode fuse_mode_from_name(std::string_view name) {
  if (name == "add") return FuseMode::kAdd;
  if (name == "concat") return FuseMode::kConcat;
  throw ConfigError("unknown fuse mode '" + std::string(name) + "'");
}

namespace {

Matrix fuse_data(const Matrix& a, const Matrix& b, FuseMode mode, const std::string& sa,
                 const std::string& sb) {
  if (mode == FuseMode::kAdd) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
      throw ShapeError("add fusion needs equal shapes, got " + sa + " and " + sb);
    }
    return a + b;
  }
  if (a.rows() != b.rows()) {
    throw ShapeError("concat fusion needs equal spatial shapes, got " + sa + " and " + sb);
  }
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace

FeatureMap2D fuse_elementwise(const FeatureMap2D& a, const FeatureMap2D& b, FuseMode mode) {
  const auto sa = std::to_string(a.b) + "x" + std::to_string(a.c) + "x" + std::to_string(a.d());
  const auto sb = std::to_string(b.b) + "x" + std::to_string(b.c) + "x" + std::to_string(b.d());
  if (a.b != b.b || a.c != b.c) throw ShapeError("fusion spatial mismatch: " + sa + " vs " + sb);
  return {a.b, a.c, fuse_data(a.data, b.data, mode, sa, sb)};
}

VolumeFeatures fuse_elementwise(const VolumeFeatures& a, const VolumeFeatures& b, FuseMode mode) {
  auto s = [](const VolumeFeatures& v) {
    return std::to_string(v.h) + "x" + std::to_string(v.w) + "x" + std::to_string(v.c) + "x" +
           std::to_string(v.d());
  };
  if (a.h != b.h || a.w != b.w || a.c != b.c) {
    throw ShapeError("fusion spatial mismatch: " + s(a) + " vs " + s(b));
  }
  return {a.h, a.w, a.c, fuse_data(a.data, b.data, mode, s(a), s(b))};
}

ProposalFeatures fuse_elementwise(const ProposalFeatures& a, const ProposalFeatures& b, FuseMode mode) {
  return {fuse_data(a.data, b.data, mode, shape_str(a.n(), a.d()), shape_str(b.n(), b.d()))};
}

Matrix attention_weights(const ProposalFeatures& q, const ProposalFeatures& k,
                         std::optional<int> window) {
  const Eigen::Index nq = q.n(), nk = k.n();
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.d()));
  Matrix p = Matrix::Zero(nq, nk);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < nq; ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < nk; ++j) {
      if (!in_window(i, j, window)) continue;
      p(i, j) = q.data.row(i).dot(k.data.row(j)) * scale;
      row_max = std::max(row_max, p(i, j));
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < nk; ++j) {
      if (!in_window(i, j, window)) continue;
      p(i, j) = std::exp(p(i, j) - row_max);
      sum += p(i, j);
    }
    for (Eigen::Index j = 0; j < nk; ++j) p(i, j) = in_window(i, j, window) ? p(i, j) / sum : 0.0;
  }
  return p;
}

ProposalFeatures attention(const ProposalFeatures& q, const ProposalFeatures& k,
                           const ProposalFeatures& v, std::optional<int> window) {
  check_attention_shapes(q, k, v, window);
  const Matrix p = attention_weights(q, k, window);
  Matrix out(q.n(), v.d());
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < q.n(); ++i) out.row(i) = p.row(i) * v.data;
  return {std::move(out)};
}

AttentionGrads attention_backward(const ProposalFeatures& q, const ProposalFeatures& k,
                                  const ProposalFeatures& v, const Matrix& d_out,
                                  std::optional<int> window) {
  check_attention_shapes(q, k, v, window);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.d()));
  const Matrix p = attention_weights(q, k, window);
  const Matrix dp = d_out * v.data.transpose();
  Matrix ds(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double inner = p.row(i).dot(dp.row(i));
    ds.row(i) = p.row(i).cwiseProduct((dp.row(i).array() - inner).matrix());
  }
  return {ds * k.data * scale, ds.transpose() * q.data * scale, p.transpose() * d_out};
}

namespace {

struct ElmForward {
  ProposalFeatures key_add, value_add;
  Matrix pre_gate;   // G + L, n x d
  Matrix raw_gate;   // unclamped sigmoid, n x d (broadcast for per-token)
  ElmOutput out;
};

void check_elm(const ElmInputs& in, const GateParams& params) {
  const auto n = in.key_img.n(), d = in.key_img.d();
  for (const auto* m : {&in.value_img, &in.key_event, &in.value_event}) {
    if (m->n() != n || m->d() != d) {
      throw ShapeError("elm_fuse inputs must share shape " + shape_str(n, d) + ", got " +
                       shape_str(m->n(), m->d()));
    }
  }
  if (n == 0 || d == 0) throw ShapeError("elm_fuse: empty inputs");
  if (params.window < 1) throw ConfigError("elm_fuse local window must be >= 1");
  if (params.key_embedding && params.key_embedding->size() != d) {
    throw ShapeError("key embedding has " + std::to_string(params.key_embedding->size()) +
                     " features, expected " + std::to_string(d));
  }
  require_finite(in.key_img.data, "key_img");
  require_finite(in.value_img.data, "value_img");
  require_finite(in.key_event.data, "key_event");
  require_finite(in.value_event.data, "value_event");
}

ElmForward elm_forward(const ElmInputs& in, const GateParams& params) {
  check_elm(in, params);
  ElmForward f;
  f.key_add.data = in.key_img.data + in.key_event.data;
  if (params.key_embedding) f.key_add.data.rowwise() += *params.key_embedding;
  f.value_add.data = in.value_img.data + in.value_event.data;

  const auto global = attention(f.key_add, f.key_add, f.value_add);
  const auto local = attention(f.key_add, f.key_add, f.value_add, params.window);
  f.pre_gate = global.data + local.data;

  const auto n = in.key_img.n(), d = in.key_img.d();
  f.raw_gate.resize(n, d);
  f.out.gate.w.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double token = params.shape == GateShape::kPerToken ? f.pre_gate.row(i).mean() : 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double a = params.shape == GateShape::kPerToken ? token : f.pre_gate(i, j);
      f.raw_gate(i, j) = sigmoid(a);
      f.out.gate.w(i, j) = gate_value(a);
    }
  }

  f.out.key_fusion.data.resize(n, d);
  f.out.value_fusion.data.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double w = f.out.gate.w(i, j);
      f.out.key_fusion.data(i, j) = blend(in.key_img.data(i, j), in.key_event.data(i, j), w);
      f.out.value_fusion.data(i, j) = blend(in.value_img.data(i, j), in.value_event.data(i, j), w);
    }
  }
  return f;
}

}  // namespace

ElmOutput elm_fuse(const ElmInputs& in, const GateParams& params) {
  return elm_forward(in, params).out;
}

ElmGrads elm_fuse_backward(const ElmInputs& in, const GateParams& params, const Matrix& d_key_fusion,
                           const Matrix& d_value_fusion, const Matrix& d_gate) {
  const ElmForward f = elm_forward(in, params);
  const auto n = in.key_img.n(), d = in.key_img.d();
  for (const auto* m : {&d_key_fusion, &d_value_fusion, &d_gate}) {
    if (m->rows() != n || m->cols() != d) throw ShapeError("elm_fuse_backward: upstream shape mismatch");
  }
  const Matrix& w = f.out.gate.w;
  const Matrix one_minus_w = (1.0 - w.array()).matrix();

  ElmGrads g;
  g.d_key_img = d_key_fusion.cwiseProduct(one_minus_w);
  g.d_key_event = d_key_fusion.cwiseProduct(w);
  g.d_value_img = d_value_fusion.cwiseProduct(one_minus_w);
  g.d_value_event = d_value_fusion.cwiseProduct(w);

  const Matrix dw = d_key_fusion.cwiseProduct(in.key_event.data - in.key_img.data) +
                    d_value_fusion.cwiseProduct(in.value_event.data - in.value_img.data) + d_gate;
  const Matrix dsig = (f.raw_gate.array() * (1.0 - f.raw_gate.array())).matrix();
  Matrix d_pre(n, d);
  if (params.shape == GateShape::kPerToken) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double da = dw.row(i).sum() * dsig(i, 0);
      d_pre.row(i).setConstant(da / static_cast<double>(d));
    }
  } else {
    d_pre = dw.cwiseProduct(dsig);
  }

  const auto gg = attention_backward(f.key_add, f.key_add, f.value_add, d_pre);
  const auto gl = attention_backward(f.key_add, f.key_add, f.value_add, d_pre, params.window);
  const Matrix d_key_add = gg.dq + gg.dk + gl.dq + gl.dk;
  const Matrix d_value_add = gg.dv + gl.dv;
  g.d_key_img += d_key_add;
  g.d_key_event += d_key_add;
  g.d_value_img += d_value_add;
  g.d_value_event += d_value_add;
  return g;
}

DeformableSampling sampling_from_queries(const VolumeFeatures& queries, const Matrix& refs,
                                         const DeformableProjection& proj) {
  if (proj.offset_proj.rows() != queries.d() || proj.logit_proj.rows() != queries.d()) {
    throw ShapeError("deformable projections expect " + std::to_string(queries.d()) +
                     " query features");
  }
  if (proj.offset_proj.cols() != 2 * proj.logit_proj.cols()) {
    throw ShapeError("offset projection must emit two values per sampling point");
  }
  if (refs.rows() != queries.voxels() || refs.cols() != 2) {
    throw ShapeError("reference points must be queries x 2");
  }
  return {refs, queries.data * proj.offset_proj, queries.data * proj.logit_proj};
}

RowVector bilinear(const FeatureMap2D& map, double x, double y) {
  RowVector out = RowVector::Zero(map.d());
  const double fx0 = std::floor(x), fy0 = std::floor(y);
  if (!(fx0 > -2.0 && fx0 < map.c && fy0 > -2.0 && fy0 < map.b)) return out;
  const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
  const double ax = x - fx0, ay = y - fy0;
  const double wts[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
  const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
  for (int k = 0; k < 4; ++k) {
    if (xs[k] < 0 || xs[k] >= map.c || ys[k] < 0 || ys[k] >= map.b) continue;
    out += wts[k] * map.data.row(static_cast<Eigen::Index>(ys[k]) * map.c + xs[k]);
  }
  return out;
}

namespace {

void check_deformable(const VolumeFeatures& queries, const FeatureMap2D& value,
                      const DeformableSampling& s) {
  const auto nq = queries.voxels();
  if (queries.data.rows() != nq) throw ShapeError("voxel query storage does not match h*w*c");
  if (value.data.rows() != static_cast<Eigen::Index>(value.b) * value.c) {
    throw ShapeError("feature map storage does not match b*c");
  }
  if (s.points() < 1) throw ConfigError("deformable query needs at least one sampling point");
  if (s.refs.rows() != nq || s.refs.cols() != 2) throw ShapeError("reference points must be queries x 2");
  if (s.offsets.rows() != nq || s.offsets.cols() != 2 * s.points()) {
    throw ShapeError("offsets must be queries x 2P");
  }
  if (s.logits.rows() != nq) throw ShapeError("logits must be queries x P");
}

RowVector softmax_row(const Eigen::Ref<const RowVector>& logits) {
  const double m = logits.maxCoeff();
  RowVector a = (logits.array() - m).exp().matrix();
  return a / a.sum();
}

}  // namespace

VolumeFeatures deformable_query(const VolumeFeatures& queries, const FeatureMap2D& value,
                                const DeformableSampling& sampling) {
  check_deformable(queries, value, sampling);
  VolumeFeatures out = VolumeFeatures::zeros(queries.h, queries.w, queries.c, value.d());
  const auto nq = queries.voxels();
  const auto np = sampling.points();
#pragma omp parallel for schedule(static)
  for (Eigen::Index q = 0; q < nq; ++q) {
    const RowVector a = softmax_row(sampling.logits.row(q));
    for (Eigen::Index p = 0; p < np; ++p) {
      const double x = sampling.refs(q, 0) + sampling.offsets(q, 2 * p);
      const double y = sampling.refs(q, 1) + sampling.offsets(q, 2 * p + 1);
      out.data.row(q) += a[p] * bilinear(value, x, y);
    }
  }
  return out;
}

DeformableGrads deformable_query_backward(const VolumeFeatures& queries, const FeatureMap2D& value,
                                          const DeformableSampling& sampling, const Matrix& d_out) {
  check_deformable(queries, value, sampling);
  const auto nq = queries.voxels();
  const auto np = sampling.points();
  if (d_out.rows() != nq || d_out.cols() != value.d()) {
    throw ShapeError("deformable_query_backward: upstream shape mismatch");
  }
  DeformableGrads g{Matrix::Zero(value.data.rows(), value.d()), Matrix::Zero(nq, 2 * np),
                    Matrix::Zero(nq, np)};
  for (Eigen::Index q = 0; q < nq; ++q) {
    const RowVector a = softmax_row(sampling.logits.row(q));
    RowVector da(np);
    for (Eigen::Index p = 0; p < np; ++p) {
      const double x = sampling.refs(q, 0) + sampling.offsets(q, 2 * p);
      const double y = sampling.refs(q, 1) + sampling.offsets(q, 2 * p + 1);
      const double fx0 = std::floor(x), fy0 = std::floor(y);
      da[p] = 0.0;
      if (!(fx0 > -2.0 && fx0 < value.c && fy0 > -2.0 && fy0 < value.b)) continue;
      const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
      const double ax = x - fx0, ay = y - fy0;
      const double wts[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
      const double dwx[4] = {-(1 - ay), (1 - ay), -ay, ay};
      const double dwy[4] = {-(1 - ax), -ax, (1 - ax), ax};
      const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
      for (int k = 0; k < 4; ++k) {
        if (xs[k] < 0 || xs[k] >= value.c || ys[k] < 0 || ys[k] >= value.b) continue;
        const auto row = static_cast<Eigen::Index>(ys[k]) * value.c + xs[k];
        const double gv = d_out.row(q).dot(value.data.row(row));
        da[p] += wts[k] * gv;
        g.d_offsets(q, 2 * p) += a[p] * dwx[k] * gv;
        g.d_offsets(q, 2 * p + 1) += a[p] * dwy[k] * gv;
        g.d_value.row(row) += a[p] * wts[k] * d_out.row(q);
      }
    }
    const double inner = a.dot(da);
    g.d_logits.row(q) = a.cwiseProduct((da.array() - inner).matrix());
  }
  return g;
}

FusionParadigm paradigm_from_name(std::string_view name) {
  if (name == "fusion-then-lifting") return FusionParadigm::kFusionThenLifting;
  if (name == "fusion-based-lifting") return FusionParadigm::kFusionBasedLifting;
  if (name == "decode-then-fusion") return FusionParadigm::kDecodeThenFusion;
  throw ConfigError("unknown fusion paradigm '" + std::string(name) + "'");
}

VolumeFeatures lift(const LiftingInputs& in, const LiftingConfig& cfg) {
  const auto& vi = in.value_img;
  for (const auto* m : {&in.key_img, &in.key_event, &in.value_event}) {
    if (m->b != vi.b || m->c != vi.c || m->d() != vi.d()) {
      throw ShapeError("lifting inputs must share the same b x c x d shape");
    }
  }
  switch (cfg.paradigm) {
    case FusionParadigm::kFusionThenLifting:
      return deformable_query(in.queries, fuse_elementwise(vi, in.value_event, cfg.mode), in.sampling);
    case FusionParadigm::kDecodeThenFusion:
      return fuse_elementwise(deformable_query(in.queries, vi, in.sampling),
                              deformable_query(in.queries, in.value_event, in.sampling), cfg.mode);
    case FusionParadigm::kFusionBasedLifting: {
      FeatureMap2D fused{vi.b, vi.c, Matrix()};
      if (cfg.lifting == LiftingFusion::kAdd) {
        fused.data = vi.data + in.value_event.data;
      } else {
        ElmInputs e{{in.key_img.data}, {vi.data}, {in.key_event.data}, {in.value_event.data}};
        fused.data = elm_fuse(e, cfg.gate).value_fusion.data;
      }
      return deformable_query(in.queries, fused, in.sampling);
    }
  }
  throw ConfigError("unknown fusion paradigm");
}

GradCheckOp grad_check_op_from_name(std::string_view name) {
  if (name == "fuse_add" || name == "fuse") return GradCheckOp::kFuseAdd;
  if (name == "attention") return GradCheckOp::kAttention;
  if (name == "elm_fuse" || name == "elm") return GradCheckOp::kElmFuse;
  if (name == "deformable_query" || name == "deformable") return GradCheckOp::kDeformableQuery;
  throw ConfigError("unknown gradient-check op '" + std::string(name) + "'");
}

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(rng);
  }
  return m;
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

// Perturbs every entry of every input and compares against the analytic
// gradient with the same layout.
double compare_gradients(const std::vector<Matrix*>& inputs, const std::vector<Matrix>& analytic,
                         const std::function<double()>& loss) {
  constexpr double kStep = 1e-6;
  double worst = 0.0;
  for (std::size_t m = 0; m < inputs.size(); ++m) {
    Matrix& x = *inputs[m];
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double orig = x(i, j);
        x(i, j) = orig + kStep;
        const double up = loss();
        x(i, j) = orig - kStep;
        const double down = loss();
        x(i, j) = orig;
        worst = std::max(worst, relative_error(analytic[m](i, j), (up - down) / (2.0 * kStep)));
      }
    }
  }
  return worst;
}

}  // namespace

double grad_check(GradCheckOp op, const GradCheckShape& s, std::uint64_t seed) {
  if (s.n < 1 || s.d < 1 || s.n > 32 || s.d > 16) {
    throw ConfigError("grad_check shapes must satisfy 1 <= n <= 32 and 1 <= d <= 16");
  }
  std::mt19937_64 rng(seed);
  switch (op) {
    case GradCheckOp::kFuseAdd: {
      FeatureMap2D a{s.map_b, s.map_c, random_matrix(Eigen::Index{s.map_b} * s.map_c, s.d, rng)};
      FeatureMap2D b{s.map_b, s.map_c, random_matrix(Eigen::Index{s.map_b} * s.map_c, s.d, rng)};
      auto loss = [&] { return fuse_elementwise(a, b, FuseMode::kAdd).data.sum(); };
      const Matrix ones = Matrix::Ones(a.data.rows(), a.data.cols());
      return compare_gradients({&a.data, &b.data}, {ones, ones}, loss);
    }
    case GradCheckOp::kAttention: {
      ProposalFeatures q{random_matrix(s.n, s.d, rng)};
      ProposalFeatures k{random_matrix(s.n, s.d, rng)};
      ProposalFeatures v{random_matrix(s.n, s.d, rng)};
      auto loss = [&] { return attention(q, k, v).data.sum(); };
      const auto g = attention_backward(q, k, v, Matrix::Ones(s.n, s.d));
      return compare_gradients({&q.data, &k.data, &v.data}, {g.dq, g.dk, g.dv}, loss);
    }
    case GradCheckOp::kElmFuse: {
      ElmInputs in{{random_matrix(s.n, s.d, rng)}, {random_matrix(s.n, s.d, rng)},
                   {random_matrix(s.n, s.d, rng)}, {random_matrix(s.n, s.d, rng)}};
      GateParams params;
      params.window = s.window;
      params.shape = s.gate_shape;
      auto loss = [&] {
        const auto o = elm_fuse(in, params);
        return o.key_fusion.data.sum() + o.value_fusion.data.sum() + o.gate.w.sum();
      };
      const Matrix ones = Matrix::Ones(s.n, s.d);
      const auto g = elm_fuse_backward(in, params, ones, ones, ones);
      return compare_gradients(
          {&in.key_img.data, &in.value_img.data, &in.key_event.data, &in.value_event.data},
          {g.d_key_img, g.d_value_img, g.d_key_event, g.d_value_event}, loss);
    }
    case GradCheckOp::kDeformableQuery: {
      if (s.points < 1) throw ConfigError("grad_check needs at least one sampling point");
      FeatureMap2D value{s.map_b, s.map_c, random_matrix(Eigen::Index{s.map_b} * s.map_c, s.d, rng)};
      VolumeFeatures queries{s.n, 1, 1, random_matrix(s.n, s.d, rng)};
      Matrix refs(s.n, 2);
      for (int q = 0; q < s.n; ++q) {
        refs(q, 0) = std::uniform_real_distribution<double>(0.0, s.map_c - 1.0)(rng);
        refs(q, 1) = std::uniform_real_distribution<double>(0.0, s.map_b - 1.0)(rng);
      }
      DeformableProjection proj{random_matrix(s.d, 2 * s.points, rng, -0.5, 0.5),
                                random_matrix(s.d, s.points, rng)};
      auto loss = [&] {
        return deformable_query(queries, value, sampling_from_queries(queries, refs, proj)).data.sum();
      };
      const auto sampling = sampling_from_queries(queries, refs, proj);
      const auto g = deformable_query_backward(queries, value, sampling, Matrix::Ones(s.n, s.d));
      const Matrix d_queries =
          g.d_offsets * proj.offset_proj.transpose() + g.d_logits * proj.logit_proj.transpose();
      return compare_gradients({&value.data, &queries.data}, {g.d_value, d_queries}, loss);
    }
  }
  throw ConfigError("unknown gradient-check op");
}

namespace reference {

ProposalFeatures attention(const ProposalFeatures& q, const ProposalFeatures& k,
                           const ProposalFeatures& v, std::optional<int> window) {
  check_attention_shapes(q, k, v, window);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.d()));
  ProposalFeatures out{Matrix::Zero(q.n(), v.d())};
  std::vector<double> w(static_cast<std::size_t>(k.n()));
  for (Eigen::Index i = 0; i < q.n(); ++i) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < k.n(); ++j) {
      if (!in_window(i, j, window)) continue;
      double s = 0.0;
      for (Eigen::Index t = 0; t < q.d(); ++t) s += q.data(i, t) * k.data(j, t);
      w[j] = s * scale;
      m = std::max(m, w[j]);
    }
    double z = 0.0;
    for (Eigen::Index j = 0; j < k.n(); ++j) {
      w[j] = in_window(i, j, window) ? std::exp(w[j] - m) : 0.0;
      z += w[j];
    }
    for (Eigen::Index j = 0; j < k.n(); ++j) {
      for (Eigen::Index t = 0; t < v.d(); ++t) out.data(i, t) += w[j] / z * v.data(j, t);
    }
  }
  return out;
}

VolumeFeatures deformable_query(const VolumeFeatures& queries, const FeatureMap2D& value,
                                const DeformableSampling& sampling) {
  check_deformable(queries, value, sampling);
  VolumeFeatures out = VolumeFeatures::zeros(queries.h, queries.w, queries.c, value.d());
  for (Eigen::Index q = 0; q < queries.voxels(); ++q) {
    const RowVector a = softmax_row(sampling.logits.row(q));
    for (Eigen::Index p = 0; p < sampling.points(); ++p) {
      out.data.row(q) += a[p] * bilinear(value, sampling.refs(q, 0) + sampling.offsets(q, 2 * p),
                                         sampling.refs(q, 1) + sampling.offsets(q, 2 * p + 1));
    }
  }
  return out;
}

}  // namespace reference

}  // namespace ssc::elm
