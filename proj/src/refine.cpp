#include "ssc/refine.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "ssc/error.hpp"

namespace ssc {

double Plane::height_at(double x, double y) const {
  if (std::abs(normal.z()) < 1e-9) throw DegenerateInputError("plane is vertical");
  return (offset - normal.x() * x - normal.y() * y) / normal.z();
}

namespace {

Plane oriented(Point3 n, const Point3& on_plane) {
  n.normalize();
  if (n.z() < 0.0 || (n.z() == 0.0 && (n.y() < 0.0 || (n.y() == 0.0 && n.x() < 0.0)))) n = -n;
  return {n, n.dot(on_plane)};
}

std::size_t count_inliers(const std::vector<Point3>& pts, const Plane& plane, double eps) {
  std::size_t count = 0;
  const auto n = static_cast<std::ptrdiff_t>(pts.size());
#pragma omp parallel for reduction(+ : count) schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (std::abs(plane.signed_distance(pts[i])) < eps) ++count;
  }
  return count;
}

// Finds three points spanning a plane, or throws.
std::array<std::size_t, 3> non_collinear_triple(const std::vector<Point3>& pts) {
  double scale = 1.0;
  for (const auto& p : pts) scale = std::max(scale, p.cwiseAbs().maxCoeff());
  const double tol = 1e-12 * scale * scale;
  const std::size_t i0 = 0;
  std::size_t i1 = pts.size();
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if ((pts[i] - pts[i0]).squaredNorm() > tol) {
      i1 = i;
      break;
    }
  }
  if (i1 == pts.size()) throw DegenerateInputError("ground fit: all points coincide");
  const Point3 axis = pts[i1] - pts[i0];
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (axis.cross(pts[i] - pts[i0]).norm() > tol) return {i0, i1, i};
  }
  throw DegenerateInputError("ground fit: all points are collinear");
}

Plane least_squares_plane(const std::vector<Point3>& pts, const Plane& fallback, double eps) {
  Point3 mean = Point3::Zero();
  std::size_t n = 0;
  for (const auto& p : pts) {
    if (std::abs(fallback.signed_distance(p)) < eps) {
      mean += p;
      ++n;
    }
  }
  if (n < 3) return fallback;
  mean /= static_cast<double>(n);
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) {
    if (std::abs(fallback.signed_distance(p)) < eps) {
      const Point3 q = p - mean;
      cov += q * q.transpose();
    }
  }
  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  if (solver.info() != Eigen::Success) return fallback;
  // A rank-deficient inlier set (collinear) leaves the normal undetermined.
  if (solver.eigenvalues()[1] <= 1e-12 * std::max(1.0, solver.eigenvalues()[2])) return fallback;
  return oriented(solver.eigenvectors().col(0), mean);
}

}  // namespace

GroundFit fit_ground(const LabeledPointCloud& static_map, const GroundFitParams& params) {
  static_map.check_parallel();
  if (!(params.epsilon > 0.0)) throw ConfigError("ground fit epsilon must be positive");
  if (params.iterations < 1) throw ConfigError("ground fit needs at least one iteration");
  const auto& pts = static_map.points;
  if (pts.size() < 3) throw DegenerateInputError("ground fit needs at least 3 points");
  const auto triple = non_collinear_triple(pts);

  auto plane_through = [&](std::size_t a, std::size_t b, std::size_t c) -> std::optional<Plane> {
    const Point3 n = (pts[b] - pts[a]).cross(pts[c] - pts[a]);
    if (!(n.norm() > 0.0)) return std::nullopt;
    return oriented(n, pts[a]);
  };

  Plane best = *plane_through(triple[0], triple[1], triple[2]);
  std::size_t best_count = count_inliers(pts, best, params.epsilon);

  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<std::size_t> pick(0, pts.size() - 1);
  for (int it = 0; it < params.iterations; ++it) {
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    std::size_t c = pick(rng);
    if (a == b || b == c || a == c) continue;
    const auto hyp = plane_through(a, b, c);
    if (!hyp) continue;
    const std::size_t count = count_inliers(pts, *hyp, params.epsilon);
    if (count > best_count) {
      best_count = count;
      best = *hyp;
    }
  }

  GroundFit fit;
  fit.plane = least_squares_plane(pts, best, params.epsilon);
  fit.ground.frame_time = static_map.frame_time;
  fit.non_ground.frame_time = static_map.frame_time;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const bool in = std::abs(fit.plane.signed_distance(pts[i])) < params.epsilon;
    auto& dst = in ? fit.ground : fit.non_ground;
    dst.push_back(pts[i], static_map.labels[i], static_map.stamps[i]);
  }
  fit.inliers = fit.ground.size();
  return fit;
}

namespace {

std::size_t nearest_centroid(const Point3& p, const std::vector<Point3>& centroids) {
  std::size_t best = 0;
  double best_d = (p - centroids[0]).squaredNorm();
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    const double d = (p - centroids[c]).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

double objective_of(const std::vector<Point3>& pts, const ClusterAssignment& a) {
  double sum = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    sum += (pts[i] - a.centroids[a.assignment[i]]).squaredNorm();
  }
  return sum;
}

void update_centroids(const std::vector<Point3>& pts, ClusterAssignment& a) {
  const std::size_t k = a.centroids.size();
  std::vector<Point3> sums(k, Point3::Zero());
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    sums[a.assignment[i]] += pts[i];
    ++counts[a.assignment[i]];
  }
  // Empty clusters take the point farthest from its own centroid among
  // clusters that can spare one.
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    std::size_t donor_point = pts.size();
    double far = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto owner = a.assignment[i];
      if (counts[owner] < 2) continue;
      const double d = (pts[i] - sums[owner] / static_cast<double>(counts[owner])).squaredNorm();
      if (d > far) {
        far = d;
        donor_point = i;
      }
    }
    const auto owner = a.assignment[donor_point];
    sums[owner] -= pts[donor_point];
    --counts[owner];
    a.assignment[donor_point] = static_cast<std::uint32_t>(c);
    sums[c] = pts[donor_point];
    counts[c] = 1;
  }
  for (std::size_t c = 0; c < k; ++c) a.centroids[c] = sums[c] / static_cast<double>(counts[c]);
}

}  // namespace

ClusterAssignment kmeans_frame(const LabeledPointCloud& points, std::size_t k, int max_iters,
                               std::uint64_t seed) {
  const auto& pts = points.points;
  if (pts.empty()) throw DegenerateInputError("kmeans needs at least one point");
  if (k < 1) throw ConfigError("kmeans needs k >= 1");
  ClusterAssignment out;
  if (k > pts.size()) {
    k = pts.size();
    out.k_clamped = true;
  }

  // k-means++ seeding.
  std::mt19937_64 rng(seed);
  std::vector<char> chosen(pts.size(), 0);
  std::vector<double> d2(pts.size(), std::numeric_limits<double>::infinity());
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, pts.size() - 1)(rng);
  out.centroids.push_back(pts[first]);
  chosen[first] = 1;
  while (out.centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      d2[i] = std::min(d2[i], (pts[i] - out.centroids.back()).squaredNorm());
      total += d2[i];
    }
    std::size_t next = pts.size();
    if (total > 0.0) {
      double r = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        if (d2[i] <= 0.0) continue;
        next = i;
        r -= d2[i];
        if (r < 0.0) break;
      }
    } else {
      next = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), 0) - chosen.begin());
    }
    chosen[next] = 1;
    out.centroids.push_back(pts[next]);
  }

  out.assignment.resize(pts.size());
  const auto n = static_cast<std::ptrdiff_t>(pts.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out.assignment[i] = static_cast<std::uint32_t>(nearest_centroid(pts[i], out.centroids));
  }
  update_centroids(pts, out);
  out.objective_history.push_back(objective_of(pts, out));

  for (int it = 0; it < max_iters; ++it) {
    std::size_t changed = 0;
#pragma omp parallel for reduction(+ : changed) schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const auto cur = out.assignment[i];
      const auto best = nearest_centroid(pts[i], out.centroids);
      if (best != cur &&
          (pts[i] - out.centroids[best]).squaredNorm() < (pts[i] - out.centroids[cur]).squaredNorm()) {
        out.assignment[i] = static_cast<std::uint32_t>(best);
        ++changed;
      }
    }
    if (changed == 0) break;
    ++out.iterations;
    update_centroids(pts, out);
    out.objective_history.push_back(objective_of(pts, out));
  }
  out.objective = out.objective_history.back();
  return out;
}

std::size_t default_cluster_count(std::size_t n, double points_per_cluster) {
  if (!(points_per_cluster > 0.0)) throw ConfigError("points per cluster must be positive");
  const auto k = static_cast<std::size_t>(std::llround(static_cast<double>(n) / points_per_cluster));
  return std::max<std::size_t>(1, k);
}

namespace {

LabelId modal_label(const std::map<LabelId, std::size_t>& tally) {
  LabelId best = tally.begin()->first;
  std::size_t best_count = 0;
  for (const auto& [id, count] : tally) {  // ascending ids: first max wins ties
    if (count > best_count) {
      best = id;
      best_count = count;
    }
  }
  return best;
}

}  // namespace

LabeledPointCloud relabel_clusters(const LabeledPointCloud& points,
                                   const ClusterAssignment& assignment, LabelId unknown_id) {
  points.check_parallel();
  if (assignment.assignment.size() != points.size()) {
    throw ShapeError("cluster assignment covers " + std::to_string(assignment.assignment.size()) +
                     " points, cloud has " + std::to_string(points.size()));
  }
  std::vector<std::map<LabelId, std::size_t>> tallies(assignment.centroids.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto c = assignment.assignment[i];
    if (c >= tallies.size()) throw ShapeError("cluster index out of range");
    if (points.labels[i] != unknown_id) ++tallies[c][points.labels[i]];
  }
  LabeledPointCloud out = points;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& t = tallies[assignment.assignment[i]];
    out.labels[i] = t.empty() ? unknown_id : modal_label(t);
  }
  return out;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

LabeledPointCloud refine_non_ground(const LabeledPointCloud& non_ground, LabelId unknown_id,
                                    const NonGroundRefineParams& params) {
  non_ground.check_parallel();
  std::map<TimeUs, std::vector<std::size_t>> frames;
  for (std::size_t i = 0; i < non_ground.size(); ++i) frames[non_ground.stamps[i]].push_back(i);
  std::vector<const std::pair<const TimeUs, std::vector<std::size_t>>*> groups;
  for (const auto& g : frames) groups.push_back(&g);

  LabeledPointCloud out = non_ground;
  const auto ng = static_cast<std::ptrdiff_t>(groups.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t g = 0; g < ng; ++g) {
    const auto& [stamp, idx] = *groups[g];
    LabeledPointCloud sub;
    sub.reserve(idx.size());
    for (auto i : idx) sub.push_back(non_ground.points[i], non_ground.labels[i], stamp);
    const auto k = default_cluster_count(sub.size(), params.points_per_cluster);
    const auto seed = splitmix64(params.seed ^ static_cast<std::uint64_t>(stamp));
    const auto clusters = kmeans_frame(sub, k, params.max_iters, seed);
    const auto relabelled = relabel_clusters(sub, clusters, unknown_id);
    for (std::size_t j = 0; j < idx.size(); ++j) out.labels[idx[j]] = relabelled.labels[j];
  }
  return out;
}

LabelId vote_winner(std::span<const std::pair<LabelId, std::uint32_t>> tally, LabelId free_id,
                    LabelId unknown_id) {
  LabelId best = free_id;
  std::uint32_t best_count = 0;
  bool saw_unknown = false;
  for (const auto& [id, count] : tally) {
    if (count == 0 || id == free_id) continue;
    if (id == unknown_id) {
      saw_unknown = true;
      continue;
    }
    if (count > best_count || (count == best_count && id < best)) {
      best = id;
      best_count = count;
    }
  }
  if (best_count == 0) return saw_unknown ? unknown_id : free_id;
  return best;
}

VoxelGrid vote_voxels(const LabeledPointCloud& cloud, const GridSpec& grid, LabelId free_id,
                      LabelId unknown_id) {
  cloud.check_parallel();
  constexpr std::uint64_t kSkip = std::numeric_limits<std::uint64_t>::max();
  std::vector<std::uint64_t> keys(cloud.size());
  const auto n = static_cast<std::ptrdiff_t>(cloud.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = voxel_index(cloud.points[i], grid);
    keys[i] = (!idx || cloud.labels[i] == free_id)
                  ? kSkip
                  : (static_cast<std::uint64_t>(grid.linear(*idx)) << 16) | cloud.labels[i];
  }
  std::sort(keys.begin(), keys.end());

  VoxelGrid out(grid, free_id);
  std::vector<std::pair<LabelId, std::uint32_t>> tally;
  std::size_t i = 0;
  while (i < keys.size() && keys[i] != kSkip) {
    const std::uint64_t voxel = keys[i] >> 16;
    tally.clear();
    while (i < keys.size() && keys[i] != kSkip && (keys[i] >> 16) == voxel) {
      const auto label = static_cast<LabelId>(keys[i] & 0xffff);
      std::uint32_t count = 0;
      while (i < keys.size() && keys[i] == ((voxel << 16) | label)) {
        ++count;
        ++i;
      }
      tally.emplace_back(label, count);
    }
    out.labels[voxel] = vote_winner(tally, free_id, unknown_id);
  }
  return out;
}

namespace reference {

VoxelGrid vote_voxels(const LabeledPointCloud& cloud, const GridSpec& grid, LabelId free_id,
                      LabelId unknown_id) {
  cloud.check_parallel();
  std::map<std::size_t, std::map<LabelId, std::uint32_t>> votes;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.labels[i] == free_id) continue;
    if (const auto idx = voxel_index(cloud.points[i], grid)) {
      ++votes[grid.linear(*idx)][cloud.labels[i]];
    }
  }
  VoxelGrid out(grid, free_id);
  for (const auto& [voxel, tally] : votes) {
    std::vector<std::pair<LabelId, std::uint32_t>> flat(tally.begin(), tally.end());
    out.labels[voxel] = vote_winner(flat, free_id, unknown_id);
  }
  return out;
}

}  // namespace reference

}  // namespace ssc
