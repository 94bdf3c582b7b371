#include <gtest/gtest.h>

#include <random>

#include "ssc/error.hpp"
#include "ssc/projection.hpp"

using namespace ssc;

namespace {

// Camera looking down the LiDAR x axis.
CameraModel forward_camera(double f = 300, int w = 640, int h = 480) {
  CameraModel c;
  c.fx = c.fy = f;
  c.cx = w / 2.0;
  c.cy = h / 2.0;
  c.width = w;
  c.height = h;
  Mat3 r;
  r << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  c.cam_from_lidar = Pose(r, Point3::Zero());
  return c;
}

CameraModel identity_camera(double f, double cx, double cy, int w, int h) {
  CameraModel c;
  c.fx = c.fy = f;
  c.cx = cx;
  c.cy = cy;
  c.width = w;
  c.height = h;
  return c;
}

SemanticImage uniform_image(int w, int h, LabelId id) {
  return {w, h, std::vector<LabelId>(static_cast<std::size_t>(w) * h, id)};
}

}  // namespace

TEST(ProjectToImage, PrincipalPointAndPinholeFormula) {
  const auto cam = identity_camera(300, 320, 240, 640, 480);
  LabeledPointCloud c;
  c.push_back(Point3(0, 0, 2), 1, 0);
  c.push_back(Point3(0, 0, -1), 1, 0);
  const auto hits = project_to_image(c, cam);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].point_index, 0u);
  EXPECT_DOUBLE_EQ(hits[0].u, 320);
  EXPECT_DOUBLE_EQ(hits[0].v, 240);
  EXPECT_DOUBLE_EQ(hits[0].depth, 2);

  const auto small = identity_camera(100, 50, 50, 200, 100);
  LabeledPointCloud p;
  p.push_back(Point3(1, 0, 2), 1, 0);
  const auto h2 = project_to_image(p, small);
  ASSERT_EQ(h2.size(), 1u);
  EXPECT_DOUBLE_EQ(h2[0].u, 100);
  EXPECT_DOUBLE_EQ(h2[0].v, 50);
}

TEST(ProjectToImage, UnprojectRecoversCameraPoint) {
  const auto cam = forward_camera();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-20, 20), fwd(0.5, 60);
  LabeledPointCloud c;
  for (int i = 0; i < 2000; ++i) c.push_back(Point3(fwd(rng), u(rng), u(rng) / 4), 1, 0);
  const auto hits = project_to_image(c, cam);
  ASSERT_GT(hits.size(), 500u);
  for (const auto& h : hits) {
    EXPECT_GE(h.u, 0.0);
    EXPECT_LT(h.u, cam.width);
    EXPECT_GE(h.v, 0.0);
    EXPECT_LT(h.v, cam.height);
    const Point3 cam_pt = cam.cam_from_lidar.apply(c.points[h.point_index]);
    EXPECT_LT((unproject(cam, h.u, h.v, h.depth) - cam_pt).norm(), 1e-6);
  }
}

TEST(LabelPoints, UniformRoadImageMakesEveryInViewPointStatic) {
  const auto cam = forward_camera();
  const LabelSet labels = default_labelset();
  LabeledPointCloud c;
  for (int i = 1; i <= 10; ++i) c.push_back(Point3(i, 0, -0.5), labels.unknown_id(), 0);
  const auto split = label_points(c, uniform_image(640, 480, 1), cam, labels);
  EXPECT_EQ(split.static_points.size(), 10u);
  EXPECT_TRUE(split.dynamic_points.empty());
  for (auto l : split.static_points.labels) EXPECT_EQ(l, 1);
}

TEST(LabelPoints, CarPixelGoesDynamicAndOutOfViewIsUnknown) {
  const auto cam = forward_camera();
  const LabelSet labels = default_labelset();
  auto img = uniform_image(640, 480, 1);
  img.label_ids[240 * 640 + 320] = 4;  // principal point
  LabeledPointCloud c;
  c.push_back(Point3(5, 0, 0), 0, 0);    // on the principal ray
  c.push_back(Point3(-5, 0, 0), 0, 0);   // behind
  c.push_back(Point3(1, 50, 0), 0, 0);   // far left, outside the image
  const auto split = label_points(c, img, cam, labels);
  ASSERT_EQ(split.dynamic_points.size(), 1u);
  EXPECT_EQ(split.dynamic_points.labels[0], 4);
  ASSERT_EQ(split.static_points.size(), 2u);
  for (auto l : split.static_points.labels) EXPECT_EQ(l, labels.unknown_id());
}

TEST(LabelPoints, NearestPixelRoundsHalfUp) {
  const auto cam = identity_camera(100, 50, 50, 100, 100);
  const LabelSet labels = default_labelset();
  auto img = uniform_image(100, 100, 1);
  img.label_ids[50 * 100 + 51] = 3;  // u = 51, v = 50
  LabeledPointCloud c;
  c.push_back(Point3(1, 0, 200), 0, 0);    // u = 50.5 -> 51
  c.push_back(Point3(0.75, 0, 200), 0, 0);  // u = 50.375 -> 50
  const auto split = label_points(c, img, cam, labels);
  ASSERT_EQ(split.static_points.size(), 2u);
  EXPECT_EQ(split.static_points.labels[0], 3);
  EXPECT_EQ(split.static_points.labels[1], 1);
}

TEST(LabelPoints, PartitionAndDeterminism) {
  const auto cam = forward_camera();
  const LabelSet labels = default_labelset();
  std::mt19937_64 rng(9);
  SemanticImage img = uniform_image(640, 480, 1);
  std::uniform_int_distribution<int> lab(1, 14);
  for (auto& l : img.label_ids) l = static_cast<LabelId>(lab(rng));
  std::uniform_real_distribution<double> u(-30, 30);
  LabeledPointCloud c;
  for (int i = 0; i < 5000; ++i) c.push_back(Point3(u(rng), u(rng), u(rng) / 5), 255, i);
  const auto a = label_points(c, img, cam, labels);
  const auto b = label_points(c, img, cam, labels);
  EXPECT_EQ(a.static_points.size() + a.dynamic_points.size(), c.size());
  EXPECT_EQ(a.static_points.points, b.static_points.points);
  EXPECT_EQ(a.dynamic_points.labels, b.dynamic_points.labels);
  for (auto l : a.dynamic_points.labels) EXPECT_TRUE(labels.is_dynamic(l));
}

TEST(LabelPoints, ImageSizeMismatchIsConfigError) {
  const auto cam = forward_camera();
  LabeledPointCloud c;
  c.push_back(Point3(1, 0, 0), 0, 0);
  EXPECT_THROW(label_points(c, uniform_image(320, 240, 1), cam, default_labelset()), ConfigError);
}

TEST(AccumulateMaps, TranslatesAndConcatenatesInFrameOrder) {
  StaticDynamicSplit f0, f1;
  f0.static_points.push_back(Point3(1, 0, 0), 1, 0);
  f0.dynamic_points.push_back(Point3(2, 0, 0), 4, 0);
  f1.static_points.push_back(Point3(1, 0, 0), 1, 100);
  f1.dynamic_points.push_back(Point3(2, 0, 0), 4, 100);
  const auto one = accumulate_maps({f0}, {Pose::identity()});
  EXPECT_EQ(one.static_map.points, f0.static_points.points);
  const auto maps = accumulate_maps({f0, f1}, {Pose::identity(), Pose::from_translation(Point3(10, 0, 0))});
  ASSERT_EQ(maps.static_map.size(), 2u);
  ASSERT_EQ(maps.dynamic_map.size(), 2u);
  EXPECT_EQ(maps.static_map.points[1], Point3(11, 0, 0));
  EXPECT_EQ(maps.dynamic_map.points[1], Point3(12, 0, 0));
  EXPECT_EQ(maps.dynamic_map.stamps, (std::vector<TimeUs>{0, 100}));
  EXPECT_THROW(accumulate_maps({f0, f1}, {Pose::identity()}), ConfigError);
}

TEST(CameraModel, ValidatesIntrinsics) {
  auto c = forward_camera();
  EXPECT_NO_THROW(c.validate());
  c.fx = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = forward_camera();
  c.cx = 640;
  EXPECT_THROW(c.validate(), ConfigError);
}
