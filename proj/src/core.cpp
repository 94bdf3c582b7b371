#include "ssc/core.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssc/error.hpp"

namespace ssc {

std::string_view group_name(LabelGroup g) {
  switch (g) {
    case LabelGroup::kVehicle: return "vehicle";
    case LabelGroup::kHuman: return "human";
    case LabelGroup::kGround: return "ground";
    case LabelGroup::kObject: return "object";
    case LabelGroup::kStructure: return "structure";
    case LabelGroup::kNone: return "none";
  }
  return "none";
}

LabelGroup group_from_name(std::string_view name) {
  for (auto g : {LabelGroup::kVehicle, LabelGroup::kHuman, LabelGroup::kGround,
                 LabelGroup::kObject, LabelGroup::kStructure, LabelGroup::kNone}) {
    if (group_name(g) == name) return g;
  }
  throw ConfigError("unknown label group '" + std::string(name) + "'");
}

LabelSet::LabelSet(std::vector<SemanticLabel> labels, LabelId free_id, LabelId unknown_id,
                   std::optional<std::vector<double>> frequency)
    : labels_(std::move(labels)),
      free_id_(free_id),
      unknown_id_(unknown_id),
      frequency_(std::move(frequency)) {
  if (labels_.empty()) throw ConfigError("label set is empty");
  LabelId max_id = 0;
  for (const auto& l : labels_) max_id = std::max(max_id, l.id);
  id_bound_ = std::size_t{max_id} + 1;
  index_.assign(id_bound_, -1);
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    auto& slot = index_[labels_[i].id];
    if (slot != -1) {
      throw ConfigError("duplicate label id " + std::to_string(labels_[i].id));
    }
    slot = static_cast<int>(i);
  }
  if (!contains(free_id_)) throw ConfigError("free label id not in label set");
  if (!contains(unknown_id_)) throw ConfigError("unknown label id not in label set");
  if (free_id_ == unknown_id_) throw ConfigError("free and unknown must differ");

  if (frequency_) {
    if (frequency_->size() != labels_.size()) {
      throw ConfigError("label frequency list must parallel the labels");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      const double f = (*frequency_)[i];
      if (!(f >= 0.0)) throw ConfigError("label frequencies must be non-negative");
      if (labels_[i].id != free_id_) sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError("label frequencies over non-free labels must sum to 1");
    }
  }
}

bool LabelSet::contains(LabelId id) const { return id < id_bound_ && index_[id] >= 0; }

const SemanticLabel& LabelSet::at(LabelId id) const {
  if (!contains(id)) throw ConfigError("label id " + std::to_string(id) + " not in label set");
  return labels_[static_cast<std::size_t>(index_[id])];
}

bool LabelSet::is_dynamic(LabelId id) const { return contains(id) && at(id).dynamic; }

std::optional<LabelId> LabelSet::find(std::string_view name) const {
  for (const auto& l : labels_) {
    if (l.name == name) return l.id;
  }
  return std::nullopt;
}

LabelSet default_labelset() {
  using G = LabelGroup;
  std::vector<SemanticLabel> labels = {
      {0, "free", G::kNone, false},
      {1, "road", G::kGround, false},
      {2, "sidewalk", G::kGround, false},
      {3, "building", G::kStructure, false},
      {4, "car", G::kVehicle, true},
      {5, "truck", G::kVehicle, true},
      {6, "bicycle", G::kVehicle, true},
      {7, "motorcycle", G::kVehicle, true},
      {8, "other-vehicle", G::kVehicle, true},
      {9, "vegetation", G::kStructure, false},
      {10, "terrain", G::kGround, false},
      {11, "person", G::kHuman, true},
      {12, "fence", G::kStructure, false},
      {13, "pole", G::kObject, false},
      {14, "traffic-sign", G::kObject, false},
      {255, "unknown", G::kNone, false},
  };
  return LabelSet(std::move(labels), 0, 255);
}

bool is_valid_rotation(const Mat3& r, double tol) {
  if (!r.allFinite()) return false;
  const Mat3 gram = r.transpose() * r;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

Pose::Pose(const Mat3& rotation, const Point3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!is_valid_rotation(rotation_)) {
    throw InvalidPoseError("rotation is not orthonormal with determinant +1");
  }
  if (!translation_.allFinite()) throw InvalidPoseError("translation is not finite");
}

Pose Pose::from_yaw(double yaw, const Point3& t) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Mat3 r;
  r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return Pose(r, t);
}

Pose Pose::inverse() const {
  Pose out;
  out.rotation_ = rotation_.transpose();
  out.translation_ = -(out.rotation_ * translation_);
  return out;
}

Pose compose(const Pose& a, const Pose& b) {
  // R_a R_b may drift from orthonormal by a few ulps; the constructor
  // tolerance absorbs that.
  return Pose(a.rotation() * b.rotation(), a.rotation() * b.translation() + a.translation());
}

void LabeledPointCloud::reserve(std::size_t n) {
  points.reserve(n);
  labels.reserve(n);
  stamps.reserve(n);
}

void LabeledPointCloud::push_back(const Point3& p, LabelId label, TimeUs stamp) {
  points.push_back(p);
  labels.push_back(label);
  stamps.push_back(stamp);
}

void LabeledPointCloud::append(const LabeledPointCloud& other) {
  points.insert(points.end(), other.points.begin(), other.points.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  stamps.insert(stamps.end(), other.stamps.begin(), other.stamps.end());
}

void LabeledPointCloud::check_parallel() const {
  if (labels.size() != points.size() || stamps.size() != points.size()) {
    throw ShapeError("point cloud lists differ in length: points=" +
                     std::to_string(points.size()) + " labels=" + std::to_string(labels.size()) +
                     " stamps=" + std::to_string(stamps.size()));
  }
}

LabeledPointCloud make_cloud(std::span<const Point3> points, LabelId label, TimeUs stamp) {
  LabeledPointCloud out;
  out.frame_time = stamp;
  out.points.assign(points.begin(), points.end());
  out.labels.assign(points.size(), label);
  out.stamps.assign(points.size(), stamp);
  return out;
}

LabeledPointCloud transform_points(const LabeledPointCloud& cloud, const Pose& pose) {
  if (!is_valid_rotation(pose.rotation())) throw InvalidPoseError("invalid pose");
  cloud.check_parallel();
  LabeledPointCloud out = cloud;
  for (auto& p : out.points) p = pose.apply(p);
  return out;
}

}  // namespace ssc
