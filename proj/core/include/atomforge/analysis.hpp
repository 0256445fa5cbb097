#pragma once

// Post-processing of camera frames: averaging, background subtraction and
// the atom/device overlay.

#include <vector>

#include "atomforge/imaging.hpp"

namespace atomforge::analysis {

struct AveragedImage {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;  // row-major mean counts
  int n_frames = 1;
  double exposure_ms = 0.0;
  std::vector<imaging::Roi> rois;
  // Processing provenance.
  int background_frames = 0;  // frames behind the subtracted reference, 0 = none
  double offset = 0.0;
  double scale = 1.0;

  double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const AveragedImage&) const = default;
};

AveragedImage to_image(const imaging::Frame& frame);

/// Pixel-wise mean. Counts are summed as integers, so the result is exact and
/// independent of frame order and thread count. Throws ModelError on an empty
/// list or mismatched dimensions or exposure.
AveragedImage average_frames(const std::vector<imaging::Frame>& frames, unsigned threads = 1);

/// img - bg + offset with offset = max(0, -min(img - bg)).
AveragedImage subtract_background(const AveragedImage& img, const AveragedImage& bg);

enum class ScaleRule { MatchPeak, MatchNorm };

struct Overlay {
  AveragedImage composite;
  double scale = 1.0;
};

/// atom * s + device. MatchPeak sets max(atom * s) = max(device); MatchNorm
/// matches the Euclidean norms. An all-zero atom image gives s = 1.
Overlay overlay_devices(const AveragedImage& atom, const AveragedImage& device, ScaleRule rule = ScaleRule::MatchPeak);

}  // namespace atomforge::analysis
