#include "ssc/metrics.hpp"

#include <numeric>
#include <omp.h>

#include "ssc/error.hpp"

namespace ssc {

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

ConfusionMatrix& ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.size_ != size_) throw ShapeError("cannot merge confusion matrices of different sizes");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  mask_skipped_ += other.mask_skipped_;
  return *this;
}

namespace {

void check_pair(const VoxelGrid& pred, const VoxelGrid& gt, const LabelSet& labels,
                const ConfusionMatrix& cm) {
  if (pred.spec.dims != gt.spec.dims) {
    auto s = [](const VoxelIndex& d) {
      return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
    };
    throw ShapeError("prediction grid " + s(pred.spec.dims) + " vs ground truth " + s(gt.spec.dims));
  }
  if (pred.labels.size() != gt.labels.size() || gt.mask.size() != gt.labels.size()) {
    throw ShapeError("voxel grid storage does not match its dimensions");
  }
  if (cm.size() != labels.id_bound()) {
    throw ShapeError("confusion matrix size does not match the label set");
  }
}

bool skipped(const VoxelGrid& gt, std::size_t k, LabelId unknown) {
  const auto m = gt.mask[k];
  return !(m & mask::kValid) || (m & mask::kOccluded) || gt.labels[k] == unknown;
}

void tally(const VoxelGrid& pred, const VoxelGrid& gt, const LabelSet& labels, std::size_t begin,
           std::size_t end, ConfusionMatrix& cm) {
  for (std::size_t k = begin; k < end; ++k) {
    if (skipped(gt, k, labels.unknown_id())) {
      cm.add_skipped(1);
      continue;
    }
    const auto g = gt.labels[k], p = pred.labels[k];
    if (g >= cm.size() || p >= cm.size()) throw ShapeError("voxel label outside the label set");
    ++cm.at(g, p);
  }
}

}  // namespace

ConfusionMatrix accumulate(const VoxelGrid& pred, const VoxelGrid& gt, const LabelSet& labels,
                           ConfusionMatrix cm) {
  check_pair(pred, gt, labels, cm);
  const std::size_t n = gt.labels.size();
  const int shards = std::max(1, omp_get_max_threads());
  std::vector<ConfusionMatrix> parts(static_cast<std::size_t>(shards), ConfusionMatrix(cm.size()));
  bool bad = false;
#pragma omp parallel for schedule(static, 1) reduction(|| : bad)
  for (int s = 0; s < shards; ++s) {
    try {
      tally(pred, gt, labels, n * s / shards, n * (s + 1) / shards, parts[s]);
    } catch (const ShapeError&) {
      bad = true;
    }
  }
  if (bad) throw ShapeError("voxel label outside the label set");
  for (const auto& p : parts) cm.merge(p);
  return cm;
}

namespace reference {

ConfusionMatrix accumulate(const VoxelGrid& pred, const VoxelGrid& gt, const LabelSet& labels,
                           ConfusionMatrix cm) {
  check_pair(pred, gt, labels, cm);
  tally(pred, gt, labels, 0, gt.labels.size(), cm);
  return cm;
}

}  // namespace reference

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Scores scores(const ConfusionMatrix& cm, const LabelSet& labels) {
  if (cm.size() != labels.id_bound()) {
    throw ShapeError("confusion matrix size does not match the label set");
  }
  const std::size_t free = labels.free_id();
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t g = 0; g < cm.size(); ++g) {
    for (std::size_t p = 0; p < cm.size(); ++p) {
      const auto c = cm.at(g, p);
      if (g != free && p != free) tp += c;
      if (g == free && p != free) fp += c;
      if (g != free && p == free) fn += c;
    }
  }
  Scores s;
  if (cm.total() == 0) {
    for (const auto& l : labels.labels()) {
      if (l.id != labels.free_id() && l.id != labels.unknown_id()) s.per_class.push_back({l.id, std::nullopt});
    }
    return s;
  }
  s.iou = ratio(tp, tp + fp + fn);
  s.precision = ratio(tp, tp + fp);
  s.recall = ratio(tp, tp + fn);

  double sum = 0.0;
  std::size_t present = 0;
  for (const auto& l : labels.labels()) {
    if (l.id == labels.free_id() || l.id == labels.unknown_id()) continue;
    const std::size_t c = l.id;
    std::uint64_t inter = cm.at(c, c), gt_total = 0, pred_total = 0;
    for (std::size_t o = 0; o < cm.size(); ++o) {
      gt_total += cm.at(c, o);
      pred_total += cm.at(o, c);
    }
    ClassIoU ci{l.id, ratio(inter, gt_total + pred_total - inter)};
    if (ci.iou) {
      sum += *ci.iou;
      ++present;
    }
    s.per_class.push_back(ci);
  }
  if (present > 0) s.miou = sum / static_cast<double>(present);
  return s;
}

}  // namespace ssc
