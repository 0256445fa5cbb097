#pragma once

// Focus scoring: bilateral filter, squared-Laplacian energy and Z scans.

#include <cstdint>
#include <optional>
#include <vector>

#include "atomforge/config.hpp"
#include "atomforge/rng.hpp"

namespace atomforge::autofocus {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // row-major

  Image() = default;
  Image(int w, int h, double fill = 0.0) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// Spatial Gaussian times range Gaussian over a (2 ceil(3 sigma_space) + 1)^2
/// window clipped at the border. Written as a weighted mean of differences
/// from the center pixel, so constant images come back bit-identical.
Image bilateral_filter(const Image& img, double sigma_space, double sigma_range);

/// Normalized Gaussian blur with the same window and border rule.
/// sigma = 0 returns the input.
Image gaussian_blur(const Image& img, double sigma);

/// Sum over interior pixels of (4 I - left - right - up - down)^2.
/// Throws ModelError below 3x3.
double laplacian_score(const Image& img);

struct Subregion {
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;
};

Image crop(const Image& img, const Subregion& region);

/// Total variation, sum of absolute neighbor differences.
double total_variation(const Image& img);

struct FocusScan {
  std::vector<double> z_um;
  std::vector<double> scores;
  std::size_t best_index = 0;
  double best_z_um = 0.0;
  double target_fraction = 1.0;
  double recommended_z_um = 0.0;
  bool out_of_range = false;     // maximum sits on a scan end
  bool target_reached = true;    // false when the chosen side never drops to the target
};

/// Argmax (lowest z wins ties) and the z on `side` of the peak where the score
/// falls to target_fraction * max, linearly interpolated between grid points.
FocusScan analyze_scan(const std::vector<double>& z_um, const std::vector<double>& scores, double target_fraction,
                       ScanSide side);

/// Device-like test card: bright stripes on a dim background.
Image device_pattern(int width, int height, Rng& rng);

struct SyntheticImager {
  Image sharp;
  double focus_z_um = 0.0;
  double blur_px_per_um = 1.0;  // sigma = blur_px_per_um * |z - focus|
  double photons_per_count = 0.0;  // > 0 adds shot noise
  std::uint64_t seed = 0;

  Image capture(double z_um, std::uint64_t shot) const;
};

/// Captures, filters and scores every z. Each z uses its own noise stream, so
/// the scan is independent of `threads`. Throws ModelError for fewer than 5
/// or non-increasing z positions.
FocusScan scan_focus(const std::vector<double>& z_um, const SyntheticImager& imager, const AutofocusParams& params,
                     const std::optional<Subregion>& region = std::nullopt, unsigned threads = 1);

/// Filters and scores one image, optionally restricted to a subregion.
double focus_score(const Image& img, const AutofocusParams& params, const std::optional<Subregion>& region = std::nullopt);

}  // namespace atomforge::autofocus
