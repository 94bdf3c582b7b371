#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ssc/core.hpp"
#include "ssc/voxel.hpp"

namespace ssc {

/// counts[gt][pred] over label ids, plus the number of masked-out voxels.
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t id_bound)
      : size_(id_bound), counts_(id_bound * id_bound, 0) {}

  std::size_t size() const { return size_; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * size_ + pred]; }
  std::uint64_t& at(std::size_t gt, std::size_t pred) { return counts_[gt * size_ + pred]; }
  std::uint64_t mask_skipped() const { return mask_skipped_; }
  void add_skipped(std::uint64_t n) { mask_skipped_ += n; }
  std::uint64_t total() const;

  /// Elementwise sum; sizes must agree.
  ConfusionMatrix& merge(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t size_ = 0;
  std::vector<std::uint64_t> counts_;
  std::uint64_t mask_skipped_ = 0;
};

/// Skips voxels whose ground truth is invalid, occluded or `unknown`.
ConfusionMatrix accumulate(const VoxelGrid& pred, const VoxelGrid& gt, const LabelSet& labels,
                           ConfusionMatrix cm);

namespace reference {
ConfusionMatrix accumulate(const VoxelGrid& pred, const VoxelGrid& gt, const LabelSet& labels,
                           ConfusionMatrix cm);
}  // namespace reference

struct ClassIoU {
  LabelId id;
  std::optional<double> iou;  // nullopt when absent from gt and pred
};

/// Undefined scores are nullopt rather than zero.
struct Scores {
  std::optional<double> iou;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> miou;
  std::vector<ClassIoU> per_class;  // semantic classes in label-set order
};

/// Geometry scores collapse to occupied (non-free) vs free; per-class IoU
/// covers every label except free and unknown; mIoU averages the classes
/// present in gt or pred.
Scores scores(const ConfusionMatrix& cm, const LabelSet& labels);

}  // namespace ssc
