#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "ssc/core.hpp"

namespace ssc {

using VoxelIndex = std::array<int, 3>;

/// Axis-aligned metric box tiled by cubic voxels with half-open cells
/// [min + i*voxel, min + (i+1)*voxel).
struct GridSpec {
  Point3 min_corner = Point3::Zero();
  Point3 max_corner = Point3::Zero();
  double voxel = 0.0;
  VoxelIndex dims{0, 0, 0};

  std::size_t cell_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t linear(const VoxelIndex& i) const {
    return static_cast<std::size_t>(i[0]) +
           static_cast<std::size_t>(dims[0]) *
               (static_cast<std::size_t>(i[1]) + static_cast<std::size_t>(dims[1]) * i[2]);
  }
  VoxelIndex unlinear(std::size_t k) const;
  Point3 center(const VoxelIndex& i) const;
};

/// Throws ConfigError for empty boxes or extents not divisible by `voxel`
/// within 1e-6.
GridSpec grid_from_bounds(const Point3& min_corner, const Point3& max_corner, double voxel);

/// The DSEC-SSC label box: [-25.6,-25.6,-3] to [25.6,25.6,3.4] at 0.4 m.
GridSpec dsec_grid();
/// SemanticKITTI-style 51.2 x 51.2 x 6.4 m box at 0.2 m.
GridSpec semantickitti_grid();

std::optional<VoxelIndex> voxel_index(const Point3& p, const GridSpec& spec);

namespace mask {
inline constexpr std::uint8_t kValid = 1u << 0;
inline constexpr std::uint8_t kOccluded = 1u << 1;
}  // namespace mask

/// Dense label volume, x-fastest.
struct VoxelGrid {
  GridSpec spec;
  std::vector<LabelId> labels;
  std::vector<std::uint8_t> mask;

  VoxelGrid() = default;
  VoxelGrid(const GridSpec& s, LabelId fill, std::uint8_t mask_fill = mask::kValid)
      : spec(s), labels(s.cell_count(), fill), mask(s.cell_count(), mask_fill) {}

  LabelId label(const VoxelIndex& i) const { return labels[spec.linear(i)]; }
  LabelId& label(const VoxelIndex& i) { return labels[spec.linear(i)]; }
  bool occluded(const VoxelIndex& i) const { return mask[spec.linear(i)] & mask::kOccluded; }
};

/// Marks each voxel occluded when the segment from `sensor` to its center
/// crosses a non-free voxel first. The voxel holding the sensor never blocks.
/// Visits are made with an integer grid walk (Amanatides-Woo).
VoxelGrid compute_visibility(const VoxelGrid& grid, const Point3& sensor, LabelId free_id);

namespace reference {
VoxelGrid compute_visibility(const VoxelGrid& grid, const Point3& sensor, LabelId free_id);
}  // namespace reference

/// Voxels crossed by the walk from `from` toward the center of `target`,
/// excluding `target` itself. Exposed for tests.
std::vector<VoxelIndex> walk_to_voxel(const GridSpec& spec, const Point3& from,
                                      const VoxelIndex& target);

}  // namespace ssc
