#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ssc {

using Point3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using LabelId = std::uint16_t;
using TimeUs = std::int64_t;

enum class LabelGroup { kVehicle, kHuman, kGround, kObject, kStructure, kNone };

std::string_view group_name(LabelGroup g);
LabelGroup group_from_name(std::string_view name);

struct SemanticLabel {
  LabelId id = 0;
  std::string name;
  LabelGroup group = LabelGroup::kNone;
  bool dynamic = false;
};

/// Ordered set of labels with exactly one `free` and one `unknown` id.
class LabelSet {
 public:
  LabelSet(std::vector<SemanticLabel> labels, LabelId free_id, LabelId unknown_id,
           std::optional<std::vector<double>> frequency = std::nullopt);

  const std::vector<SemanticLabel>& labels() const { return labels_; }
  const std::optional<std::vector<double>>& frequency() const { return frequency_; }
  LabelId free_id() const { return free_id_; }
  LabelId unknown_id() const { return unknown_id_; }

  bool contains(LabelId id) const;
  const SemanticLabel& at(LabelId id) const;
  bool is_dynamic(LabelId id) const;
  /// One past the largest id; sizes dense per-id tables.
  std::size_t id_bound() const { return id_bound_; }
  std::optional<LabelId> find(std::string_view name) const;

 private:
  std::vector<SemanticLabel> labels_;
  std::vector<int> index_;  // id -> position in labels_, -1 when absent
  LabelId free_id_;
  LabelId unknown_id_;
  std::size_t id_bound_ = 0;
  std::optional<std::vector<double>> frequency_;
};

/// The 14 DSEC-SSC classes grouped into vehicle/human/ground/object/structure,
/// plus free (0) and unknown (255). Vehicle and human classes are dynamic.
LabelSet default_labelset();

/// Rigid world-from-sensor style transform p' = R p + t.
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Point3::Zero()) {}
  /// Throws InvalidPoseError unless R is orthonormal with det +1 (1e-9).
  Pose(const Mat3& rotation, const Point3& translation);

  static Pose identity() { return Pose(); }
  static Pose from_translation(const Point3& t) { return Pose(Mat3::Identity(), t); }
  static Pose from_yaw(double yaw, const Point3& t = Point3::Zero());

  const Mat3& rotation() const { return rotation_; }
  const Point3& translation() const { return translation_; }

  Point3 apply(const Point3& p) const { return rotation_ * p + translation_; }
  Pose inverse() const;

 private:
  Mat3 rotation_;
  Point3 translation_;
};

/// Result applies `b` first, then `a`.
Pose compose(const Pose& a, const Pose& b);

bool is_valid_rotation(const Mat3& r, double tol = 1e-9);

/// Points with per-point label and capture time. `frame_time` is the nominal
/// time of the cloud (the latest frame for aggregated maps).
struct LabeledPointCloud {
  std::vector<Point3> points;
  std::vector<LabelId> labels;
  std::vector<TimeUs> stamps;
  TimeUs frame_time = 0;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  void reserve(std::size_t n);
  void push_back(const Point3& p, LabelId label, TimeUs stamp);
  void append(const LabeledPointCloud& other);
  /// Throws ShapeError if the parallel lists disagree in length.
  void check_parallel() const;
};

/// Cloud whose points all carry `label` and `stamp`.
LabeledPointCloud make_cloud(std::span<const Point3> points, LabelId label, TimeUs stamp);

LabeledPointCloud transform_points(const LabeledPointCloud& cloud, const Pose& pose);

}  // namespace ssc
