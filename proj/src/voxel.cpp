#include "ssc/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ssc/error.hpp"

namespace ssc {

VoxelIndex GridSpec::unlinear(std::size_t k) const {
  const auto nx = static_cast<std::size_t>(dims[0]);
  const auto ny = static_cast<std::size_t>(dims[1]);
  return {static_cast<int>(k % nx), static_cast<int>((k / nx) % ny),
          static_cast<int>(k / (nx * ny))};
}

Point3 GridSpec::center(const VoxelIndex& i) const {
  return {min_corner.x() + (i[0] + 0.5) * voxel, min_corner.y() + (i[1] + 0.5) * voxel,
          min_corner.z() + (i[2] + 0.5) * voxel};
}

GridSpec grid_from_bounds(const Point3& min_corner, const Point3& max_corner, double voxel) {
  if (!min_corner.allFinite() || !max_corner.allFinite()) {
    throw ConfigError("grid bounds must be finite");
  }
  if (!(voxel > 0.0) || !std::isfinite(voxel)) throw ConfigError("voxel size must be positive");
  GridSpec spec;
  spec.min_corner = min_corner;
  spec.max_corner = max_corner;
  spec.voxel = voxel;
  for (int a = 0; a < 3; ++a) {
    const double extent = max_corner[a] - min_corner[a];
    if (!(extent > 0.0)) {
      throw ConfigError("grid extent along axis " + std::to_string(a) + " is not positive");
    }
    const double cells = extent / voxel;
    const double rounded = std::round(cells);
    if (std::abs(rounded * voxel - extent) > 1e-6 || rounded < 1.0) {
      throw ConfigError("grid extent " + std::to_string(extent) + " along axis " +
                        std::to_string(a) + " is not divisible by voxel " + std::to_string(voxel));
    }
    spec.dims[a] = static_cast<int>(rounded);
  }
  return spec;
}

GridSpec dsec_grid() { return grid_from_bounds({-25.6, -25.6, -3.0}, {25.6, 25.6, 3.4}, 0.4); }

GridSpec semantickitti_grid() {
  return grid_from_bounds({0.0, -25.6, -2.0}, {51.2, 25.6, 4.4}, 0.2);
}

std::optional<VoxelIndex> voxel_index(const Point3& p, const GridSpec& spec) {
  VoxelIndex idx{};
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] >= spec.min_corner[a]) || !(p[a] < spec.max_corner[a])) return std::nullopt;
    const int i = static_cast<int>(std::floor((p[a] - spec.min_corner[a]) / spec.voxel));
    idx[a] = std::clamp(i, 0, spec.dims[a] - 1);
  }
  return idx;
}

namespace {

// Walks cells along from -> center(target) in grid units, calling
// visit(cell) for every cell before the target. visit returns true to stop.
template <class Visit>
void walk(const GridSpec& spec, const Point3& from, const VoxelIndex& target, Visit&& visit) {
  Eigen::Vector3d s, d;
  for (int a = 0; a < 3; ++a) {
    s[a] = (from[a] - spec.min_corner[a]) / spec.voxel;
    d[a] = (target[a] + 0.5) - s[a];
  }

  // Clip the segment to the box; the end point is inside by construction.
  double t_enter = 0.0;
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) continue;
    const double t0 = (0.0 - s[a]) / d[a];
    const double t1 = (spec.dims[a] - s[a]) / d[a];
    t_enter = std::max(t_enter, std::min(t0, t1));
  }

  VoxelIndex cur{};
  std::array<int, 3> step{};
  std::array<double, 3> t_max{}, t_delta{};
  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double start = s[a] + t_enter * d[a];
    cur[a] = std::clamp(static_cast<int>(std::floor(start)), 0, spec.dims[a] - 1);
    if (d[a] > 0.0) {
      step[a] = 1;
      t_max[a] = (cur[a] + 1 - s[a]) / d[a];
      t_delta[a] = 1.0 / d[a];
    } else if (d[a] < 0.0) {
      step[a] = -1;
      t_max[a] = (cur[a] - s[a]) / d[a];
      t_delta[a] = -1.0 / d[a];
    } else {
      step[a] = 0;
      t_max[a] = kInf;
      t_delta[a] = kInf;
    }
  }

  const int limit = spec.dims[0] + spec.dims[1] + spec.dims[2] + 3;
  for (int n = 0; n < limit; ++n) {
    if (cur == target) return;
    if (visit(cur)) return;
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    if (t_max[axis] > 1.0 + 1e-9) return;
    cur[axis] += step[axis];
    t_max[axis] += t_delta[axis];
    if (cur[axis] < 0 || cur[axis] >= spec.dims[axis]) return;
  }
}

bool voxel_occluded(const VoxelGrid& grid, const Point3& sensor,
                    const std::optional<VoxelIndex>& sensor_cell, const VoxelIndex& target,
                    LabelId free_id) {
  bool occluded = false;
  walk(grid.spec, sensor, target, [&](const VoxelIndex& c) {
    if (sensor_cell && c == *sensor_cell) return false;
    if (grid.label(c) != free_id) {
      occluded = true;
      return true;
    }
    return false;
  });
  return occluded;
}

std::uint8_t visibility_flags(std::uint8_t old, bool occluded) {
  const auto kept = static_cast<std::uint8_t>(old & ~(mask::kValid | mask::kOccluded));
  return static_cast<std::uint8_t>(kept | (occluded ? mask::kOccluded : mask::kValid));
}

}  // namespace

std::vector<VoxelIndex> walk_to_voxel(const GridSpec& spec, const Point3& from,
                                      const VoxelIndex& target) {
  std::vector<VoxelIndex> cells;
  walk(spec, from, target, [&](const VoxelIndex& c) {
    cells.push_back(c);
    return false;
  });
  return cells;
}

VoxelGrid compute_visibility(const VoxelGrid& grid, const Point3& sensor, LabelId free_id) {
  if (!sensor.allFinite()) throw ConfigError("sensor position must be finite");
  VoxelGrid out = grid;
  const auto sensor_cell = voxel_index(sensor, grid.spec);
  const auto n = static_cast<std::ptrdiff_t>(grid.spec.cell_count());
#pragma omp parallel for schedule(dynamic, 1024)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const auto idx = grid.spec.unlinear(static_cast<std::size_t>(k));
    out.mask[k] = visibility_flags(grid.mask[k], voxel_occluded(grid, sensor, sensor_cell, idx, free_id));
  }
  return out;
}

namespace reference {

VoxelGrid compute_visibility(const VoxelGrid& grid, const Point3& sensor, LabelId free_id) {
  if (!sensor.allFinite()) throw ConfigError("sensor position must be finite");
  VoxelGrid out = grid;
  const auto sensor_cell = voxel_index(sensor, grid.spec);
  for (std::size_t k = 0; k < grid.spec.cell_count(); ++k) {
    const auto idx = grid.spec.unlinear(k);
    out.mask[k] = visibility_flags(grid.mask[k], voxel_occluded(grid, sensor, sensor_cell, idx, free_id));
  }
  return out;
}

}  // namespace reference

}  // namespace ssc
