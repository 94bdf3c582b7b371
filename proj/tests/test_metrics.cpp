#include <gtest/gtest.h>

#include <random>

#include "ssc/error.hpp"
#include "ssc/metrics.hpp"

using namespace ssc;

namespace {

const LabelSet& labels() {
  static const LabelSet s = default_labelset();
  return s;
}

std::optional<double> class_iou(const Scores& s, LabelId id) {
  for (const auto& c : s.per_class) {
    if (c.id == id) return c.iou;
  }
  return std::nullopt;
}

std::pair<VoxelGrid, VoxelGrid> random_pair(std::uint64_t seed) {
  const auto g = grid_from_bounds(Point3(0, 0, 0), Point3(8, 8, 4), 0.5);
  VoxelGrid pred(g, 0), gt(g, 0);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> lab(0, 6), m(0, 9);
  for (std::size_t k = 0; k < g.cell_count(); ++k) {
    pred.labels[k] = static_cast<LabelId>(lab(rng));
    const int l = lab(rng);
    gt.labels[k] = l == 6 ? labels().unknown_id() : static_cast<LabelId>(l);
    const int mm = m(rng);
    gt.mask[k] = mm == 0 ? 0 : mm == 1 ? mask::kOccluded : mask::kValid;
  }
  return {pred, gt};
}

}  // namespace

TEST(Scores, GeometryClosedForm) {
  ConfusionMatrix cm(256);
  cm.at(1, 1) = 50;  // TP
  cm.at(0, 1) = 25;  // FP
  cm.at(1, 0) = 25;  // FN
  cm.at(0, 0) = 1000;
  const auto s = scores(cm, labels());
  EXPECT_DOUBLE_EQ(*s.iou, 0.5);
  EXPECT_DOUBLE_EQ(*s.precision, 50.0 / 75);
  EXPECT_DOUBLE_EQ(*s.recall, 50.0 / 75);
}

TEST(Scores, MeanOverPresentClasses) {
  ConfusionMatrix cm(256);
  cm.at(1, 1) = 10;  // class 1: 10 / (10 + 10) = 0.5
  cm.at(1, 0) = 10;
  cm.at(2, 2) = 5;   // class 2: 5 / (5 + 15) = 0.25
  cm.at(0, 2) = 15;
  const auto s = scores(cm, labels());
  EXPECT_DOUBLE_EQ(*class_iou(s, 1), 0.5);
  EXPECT_DOUBLE_EQ(*class_iou(s, 2), 0.25);
  EXPECT_FALSE(class_iou(s, 3).has_value());
  EXPECT_DOUBLE_EQ(*s.miou, 0.375);
  EXPECT_EQ(s.per_class.size(), labels().labels().size() - 2);
}

TEST(Scores, CrossClassConfusionCountsAgainstBoth) {
  ConfusionMatrix cm(256);
  cm.at(1, 1) = 3;
  cm.at(1, 2) = 1;
  cm.at(2, 2) = 1;
  const auto s = scores(cm, labels());
  EXPECT_DOUBLE_EQ(*class_iou(s, 1), 0.75);
  EXPECT_DOUBLE_EQ(*class_iou(s, 2), 0.5);
  EXPECT_DOUBLE_EQ(*s.iou, 1.0);  // all occupied both ways
  EXPECT_GE(*s.miou, 0.5);
  EXPECT_LE(*s.miou, 0.75);
}

TEST(Scores, PerfectPrediction) {
  const auto [pred, gt_unused] = random_pair(1);
  VoxelGrid gt = pred;
  const auto s = scores(accumulate(pred, gt, labels(), ConfusionMatrix(256)), labels());
  EXPECT_DOUBLE_EQ(*s.iou, 1.0);
  EXPECT_DOUBLE_EQ(*s.miou, 1.0);
  EXPECT_DOUBLE_EQ(*s.precision, 1.0);
  EXPECT_DOUBLE_EQ(*s.recall, 1.0);
}

TEST(Scores, AllMaskedIsUndefinedNotZero) {
  auto [pred, gt] = random_pair(2);
  std::fill(gt.mask.begin(), gt.mask.end(), 0);
  const auto cm = accumulate(pred, gt, labels(), ConfusionMatrix(256));
  EXPECT_EQ(cm.total(), 0u);
  EXPECT_EQ(cm.mask_skipped(), gt.labels.size());
  const auto s = scores(cm, labels());
  EXPECT_FALSE(s.iou.has_value());
  EXPECT_FALSE(s.miou.has_value());
  EXPECT_FALSE(s.precision.has_value());
  EXPECT_FALSE(s.recall.has_value());
}

TEST(Accumulate, MatchesPerVoxelLoop) {
  const auto [pred, gt] = random_pair(3);
  ConfusionMatrix oracle(256);
  for (std::size_t k = 0; k < gt.labels.size(); ++k) {
    const bool skip = !(gt.mask[k] & mask::kValid) || (gt.mask[k] & mask::kOccluded) ||
                      gt.labels[k] == labels().unknown_id();
    if (skip) {
      oracle.add_skipped(1);
    } else {
      ++oracle.at(gt.labels[k], pred.labels[k]);
    }
  }
  EXPECT_EQ(accumulate(pred, gt, labels(), ConfusionMatrix(256)), oracle);
  EXPECT_EQ(reference::accumulate(pred, gt, labels(), ConfusionMatrix(256)), oracle);
}

TEST(Accumulate, AdditiveOverGridHalves) {
  const auto [pred, gt] = random_pair(4);
  const auto whole = accumulate(pred, gt, labels(), ConfusionMatrix(256));
  // Split along z into two grids.
  auto half = [&](const VoxelGrid& g, int z0, int z1) {
    auto spec = grid_from_bounds(Point3(0, 0, 0), Point3(8, 8, (z1 - z0) * 0.5), 0.5);
    VoxelGrid out(spec, 0);
    for (int z = z0; z < z1; ++z)
      for (int y = 0; y < spec.dims[1]; ++y)
        for (int x = 0; x < spec.dims[0]; ++x) {
          out.labels[spec.linear({x, y, z - z0})] = g.label({x, y, z});
          out.mask[spec.linear({x, y, z - z0})] = g.mask[g.spec.linear({x, y, z})];
        }
    return out;
  };
  const int mid = gt.spec.dims[2] / 2, top = gt.spec.dims[2];
  auto a = accumulate(half(pred, 0, mid), half(gt, 0, mid), labels(), ConfusionMatrix(256));
  const auto b = accumulate(half(pred, mid, top), half(gt, mid, top), labels(), ConfusionMatrix(256));
  EXPECT_EQ(a.merge(b), whole);
  // Accumulating into a running matrix is the same as merging.
  const auto running = accumulate(half(pred, mid, top), half(gt, mid, top), labels(),
                                  accumulate(half(pred, 0, mid), half(gt, 0, mid), labels(), ConfusionMatrix(256)));
  EXPECT_EQ(running, whole);
}

TEST(Accumulate, ShapeMismatch) {
  const auto [pred, gt] = random_pair(5);
  VoxelGrid small(grid_from_bounds(Point3(0, 0, 0), Point3(1, 1, 1), 0.5), 0);
  EXPECT_THROW(accumulate(small, gt, labels(), ConfusionMatrix(256)), ShapeError);
  ConfusionMatrix a(4), b(5);
  EXPECT_THROW(a.merge(b), ShapeError);
}
