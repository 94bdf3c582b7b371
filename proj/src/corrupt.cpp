#include "ssc/corrupt.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

#include "ssc/error.hpp"

namespace ssc {

Image Image::filled(int w, int h, double value) {
  return {w, h, std::vector<double>(static_cast<std::size_t>(w) * h * 3, value)};
}

double Image::mean() const {
  if (data.empty()) return 0.0;
  return std::accumulate(data.begin(), data.end(), 0.0) / static_cast<double>(data.size());
}

CorruptionMode corruption_from_name(std::string_view name) {
  if (name == "motion_blur") return CorruptionMode::kMotionBlur;
  if (name == "fog") return CorruptionMode::kFog;
  if (name == "brightness") return CorruptionMode::kBrightness;
  if (name == "darkness") return CorruptionMode::kDarkness;
  if (name == "shot_noise") return CorruptionMode::kShotNoise;
  throw ConfigError("unknown corruption mode '" + std::string(name) + "'");
}

std::string_view corruption_name(CorruptionMode mode) {
  switch (mode) {
    case CorruptionMode::kMotionBlur: return "motion_blur";
    case CorruptionMode::kFog: return "fog";
    case CorruptionMode::kBrightness: return "brightness";
    case CorruptionMode::kDarkness: return "darkness";
    case CorruptionMode::kShotNoise: return "shot_noise";
  }
  return "unknown";
}

double BlurKernel::sum() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

BlurKernel motion_blur_kernel(int length, double angle_rad) {
  if (length < 1 || length % 2 == 0) throw ConfigError("blur length must be a positive odd number");
  BlurKernel k;
  k.size = length;
  k.weights.assign(static_cast<std::size_t>(length) * length, 0.0);
  const double c = (length - 1) / 2.0;
  const double dx = std::cos(angle_rad), dy = std::sin(angle_rad);
  for (int i = 0; i < length; ++i) {
    const double s = i - c;
    const double px = c + s * dx, py = c + s * dy;
    const int x0 = static_cast<int>(std::floor(px)), y0 = static_cast<int>(std::floor(py));
    const double ax = px - x0, ay = py - y0;
    const double w[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
    const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
    for (int j = 0; j < 4; ++j) {
      if (w[j] == 0.0) continue;
      const int x = std::clamp(xs[j], 0, length - 1), y = std::clamp(ys[j], 0, length - 1);
      k.weights[static_cast<std::size_t>(y) * length + x] += w[j];
    }
  }
  const double total = k.sum();
  for (auto& w : k.weights) w /= total;
  return k;
}

double motion_blur_angle(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return std::uniform_real_distribution<double>(0.0, std::numbers::pi)(rng);
}

namespace {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

void check_severity(int severity) {
  if (severity < 1 || severity > 5) {
    throw ConfigError("severity " + std::to_string(severity) + " outside 1..5");
  }
}

std::uint64_t row_seed(std::uint64_t seed, int row) {
  std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(row) + 1));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double convolve_at(const Image& img, const BlurKernel& k, int x, int y, int ch) {
  const int r = k.size / 2;
  double acc = 0.0;
  for (int ky = 0; ky < k.size; ++ky) {
    const int sy = reflect101(y + ky - r, img.height);
    for (int kx = 0; kx < k.size; ++kx) {
      const double w = k.weights[static_cast<std::size_t>(ky) * k.size + kx];
      if (w == 0.0) continue;
      acc += w * img.at(reflect101(x + kx - r, img.width), sy, ch);
    }
  }
  return clamp01(acc);
}

void shot_noise_row(const Image& img, Image& out, int y, double photons, std::uint64_t seed) {
  std::mt19937_64 rng(row_seed(seed, y));
  for (int x = 0; x < img.width; ++x) {
    for (int ch = 0; ch < 3; ++ch) {
      const double lambda = img.at(x, y, ch) * photons;
      double v = 0.0;
      if (lambda > 0.0) v = static_cast<double>(std::poisson_distribution<long>(lambda)(rng)) / photons;
      out.at(x, y, ch) = clamp01(v);
    }
  }
}

double pointwise(CorruptionMode mode, int s, double v) {
  switch (mode) {
    case CorruptionMode::kFog: return clamp01(v * (1.0 - kFogDensity[s]) + kFogDensity[s] * kFogAirlight);
    case CorruptionMode::kBrightness: return clamp01(v + kBrightnessShift[s]);
    case CorruptionMode::kDarkness: return clamp01(v * kDarknessGain[s]);
    default: return v;
  }
}

}  // namespace

Image convolve(const Image& img, const BlurKernel& kernel) {
  Image out = img;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int ch = 0; ch < 3; ++ch) out.at(x, y, ch) = convolve_at(img, kernel, x, y, ch);
    }
  }
  return out;
}

Image corrupt_image(const Image& img, CorruptionMode mode, int severity, std::uint64_t seed) {
  check_severity(severity);
  const int s = severity - 1;
  switch (mode) {
    case CorruptionMode::kMotionBlur:
      return convolve(img, motion_blur_kernel(kBlurLength[s], motion_blur_angle(seed)));
    case CorruptionMode::kShotNoise: {
      Image out = img;
#pragma omp parallel for schedule(static)
      for (int y = 0; y < img.height; ++y) shot_noise_row(img, out, y, kShotPhotons[s], seed);
      return out;
    }
    default: {
      Image out = img;
      const auto n = static_cast<std::ptrdiff_t>(img.data.size());
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t i = 0; i < n; ++i) out.data[i] = pointwise(mode, s, img.data[i]);
      return out;
    }
  }
}

namespace reference {

Image convolve(const Image& img, const BlurKernel& kernel) {
  Image out = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int ch = 0; ch < 3; ++ch) out.at(x, y, ch) = convolve_at(img, kernel, x, y, ch);
    }
  }
  return out;
}

Image corrupt_image(const Image& img, CorruptionMode mode, int severity, std::uint64_t seed) {
  check_severity(severity);
  const int s = severity - 1;
  if (mode == CorruptionMode::kMotionBlur) {
    return reference::convolve(img, motion_blur_kernel(kBlurLength[s], motion_blur_angle(seed)));
  }
  Image out = img;
  if (mode == CorruptionMode::kShotNoise) {
    for (int y = 0; y < img.height; ++y) shot_noise_row(img, out, y, kShotPhotons[s], seed);
    return out;
  }
  for (auto& v : out.data) v = pointwise(mode, s, v);
  return out;
}

}  // namespace reference

}  // namespace ssc
