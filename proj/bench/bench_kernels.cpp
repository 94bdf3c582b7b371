// Serial reference vs. OpenMP kernels. Run with --benchmark_filter to pick one.

#include <benchmark/benchmark.h>

#include <random>

#include "ssc/corrupt.hpp"
#include "ssc/elm.hpp"
#include "ssc/events.hpp"
#include "ssc/parallel.hpp"
#include "ssc/refine.hpp"
#include "ssc/voxel.hpp"

using namespace ssc;

namespace {

constexpr LabelId kFree = 0;
constexpr LabelId kUnknown = 255;

const GridSpec& grid() {
  static const GridSpec g = dsec_grid();
  return g;
}

const LabeledPointCloud& cloud() {
  static const LabeledPointCloud c = [] {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> xy(-25.6, 25.6), z(-3.0, 3.4);
    std::uniform_int_distribution<int> lab(1, 12);
    LabeledPointCloud out;
    for (int i = 0; i < 400'000; ++i) out.push_back(Point3(xy(rng), xy(rng), z(rng)), static_cast<LabelId>(lab(rng)), i);
    return out;
  }();
  return c;
}

const VoxelGrid& sparse_grid() {
  static const VoxelGrid g = [] {
    VoxelGrid out(grid(), kFree);
    std::mt19937_64 rng(2);
    std::bernoulli_distribution occ(0.03);
    for (auto& l : out.labels) l = occ(rng) ? 1 : kFree;
    return out;
  }();
  return g;
}

const Image& photo() {
  static const Image img = [] {
    Image out = Image::filled(640, 480, 0.0);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    for (auto& v : out.data) v = u(rng);
    return out;
  }();
  return img;
}

const EventStream& stream() {
  static const EventStream s = [] {
    EventStream out;
    out.width = 640;
    out.height = 480;
    out.t_start = 0;
    out.t_end = 50'000;
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> x(0, 639), y(0, 479), p(0, 1);
    for (std::uint64_t t = 0; t < 50'000; t += 1) {
      for (int k = 0; k < 20; ++k) {
        out.events.push_back({t, static_cast<std::uint16_t>(x(rng)), static_cast<std::uint16_t>(y(rng)),
                              static_cast<std::int8_t>(p(rng) ? 1 : -1)});
      }
    }
    return out;
  }();
  return s;
}

elm::ProposalFeatures features(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  elm::ProposalFeatures f{elm::Matrix(n, d)};
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) f.data(i, j) = u(rng);
  return f;
}

// Arg 0 selects the implementation: 0 serial reference, 1 parallel.
void jobs_arg(benchmark::State& state) {
  set_jobs(max_jobs());
  state.counters["jobs"] = state.range(0) ? max_jobs() : 1;
}

void BM_Vote(benchmark::State& state) {
  jobs_arg(state);
  for (auto _ : state) {
    auto g = state.range(0) ? vote_voxels(cloud(), grid(), kFree, kUnknown)
                            : reference::vote_voxels(cloud(), grid(), kFree, kUnknown);
    benchmark::DoNotOptimize(g.labels.data());
  }
  state.SetItemsProcessed(state.iterations() * cloud().size());
}

void BM_Visibility(benchmark::State& state) {
  jobs_arg(state);
  const Point3 sensor(0.1, 0.1, 0.1);
  for (auto _ : state) {
    auto g = state.range(0) ? compute_visibility(sparse_grid(), sensor, kFree)
                            : reference::compute_visibility(sparse_grid(), sensor, kFree);
    benchmark::DoNotOptimize(g.mask.data());
  }
  state.SetItemsProcessed(state.iterations() * grid().cell_count());
}

void BM_MotionBlur(benchmark::State& state) {
  jobs_arg(state);
  const auto kernel = motion_blur_kernel(kBlurLength[4], 0.7);
  for (auto _ : state) {
    auto out = state.range(0) ? convolve(photo(), kernel) : reference::convolve(photo(), kernel);
    benchmark::DoNotOptimize(out.data.data());
  }
}

void BM_Attention(benchmark::State& state) {
  jobs_arg(state);
  const auto q = features(state.range(1), 64, 5), k = features(state.range(1), 64, 6), v = features(state.range(1), 64, 7);
  for (auto _ : state) {
    auto out = state.range(0) ? elm::attention(q, k, v) : elm::reference::attention(q, k, v);
    benchmark::DoNotOptimize(out.data.data());
  }
}

void BM_Representation(benchmark::State& state) {
  jobs_arg(state);
  const auto kind = static_cast<RepresentationKind>(state.range(1));
  for (auto _ : state) {
    auto t = state.range(0) ? build_representation(stream(), kind) : reference::build_representation(stream(), kind);
    benchmark::DoNotOptimize(t.data.data());
  }
  state.SetItemsProcessed(state.iterations() * stream().events.size());
}

}  // namespace

BENCHMARK(BM_Vote)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Visibility)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MotionBlur)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Attention)->ArgsProduct({{0, 1}, {256, 1024}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Representation)
    ->ArgsProduct({{0, 1},
                   {static_cast<int>(RepresentationKind::kRasterized), static_cast<int>(RepresentationKind::kTimeSurface),
                    static_cast<int>(RepresentationKind::kHats)}})
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
