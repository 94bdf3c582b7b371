#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace ssc {

/// Interleaved RGB in [0, 1].
struct Image {
  int width = 0, height = 0;
  std::vector<double> data;

  static Image filled(int w, int h, double value);
  double& at(int x, int y, int ch) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + ch]; }
  double at(int x, int y, int ch) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
  }
  double mean() const;
};

enum class CorruptionMode { kMotionBlur, kFog, kBrightness, kDarkness, kShotNoise };

CorruptionMode corruption_from_name(std::string_view name);
std::string_view corruption_name(CorruptionMode mode);

/// Square, odd-sized, normalised line kernel of the given length and angle.
struct BlurKernel {
  int size = 1;
  std::vector<double> weights;  // row-major size x size

  double sum() const;
};

BlurKernel motion_blur_kernel(int length, double angle_rad);

/// Severity tables (index 0 = severity 1).
inline constexpr int kBlurLength[5] = {5, 9, 13, 17, 21};
inline constexpr double kFogDensity[5] = {0.15, 0.30, 0.45, 0.60, 0.75};
inline constexpr double kFogAirlight = 0.9;
inline constexpr double kBrightnessShift[5] = {0.10, 0.18, 0.26, 0.34, 0.42};
inline constexpr double kDarknessGain[5] = {0.60, 0.48, 0.36, 0.24, 0.12};
inline constexpr double kShotPhotons[5] = {60, 25, 12, 5, 3};

/// Deterministic in (img, mode, severity, seed); output stays in [0, 1].
/// Throws ConfigError for severity outside 1..5.
Image corrupt_image(const Image& img, CorruptionMode mode, int severity, std::uint64_t seed);

/// Kernel angle used for motion blur under `seed`.
double motion_blur_angle(std::uint64_t seed);

/// Reflect-101 convolution.
Image convolve(const Image& img, const BlurKernel& kernel);

namespace reference {
Image corrupt_image(const Image& img, CorruptionMode mode, int severity, std::uint64_t seed);
Image convolve(const Image& img, const BlurKernel& kernel);
}  // namespace reference

}  // namespace ssc
