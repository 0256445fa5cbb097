#include "atomforge/analysis.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "atomforge/errors.hpp"
#include "atomforge/parallel.hpp"

namespace atomforge::analysis {

namespace {

void require_same_shape(const AveragedImage& a, const AveragedImage& b, const char* op) {
  if (a.width != b.width || a.height != b.height)
    throw ModelError(fmt::format("{}: dimension mismatch ({}x{} vs {}x{})", op, a.width, a.height, b.width, b.height));
}

}  // namespace

AveragedImage to_image(const imaging::Frame& f) {
  AveragedImage img;
  img.width = f.width;
  img.height = f.height;
  img.exposure_ms = f.exposure_ms;
  img.rois = f.rois;
  img.pixels.assign(f.counts.begin(), f.counts.end());
  return img;
}

AveragedImage average_frames(const std::vector<imaging::Frame>& frames, unsigned threads) {
  if (frames.empty()) throw ModelError("average_frames: no frames");
  const auto& first = frames.front();
  for (const auto& f : frames) {
    if (f.width != first.width || f.height != first.height)
      throw ModelError(fmt::format("average_frames: dimension mismatch ({}x{} vs {}x{})", f.width, f.height,
                                   first.width, first.height));
    if (f.exposure_ms != first.exposure_ms)
      throw ModelError(fmt::format("average_frames: exposure mismatch ({} vs {} ms)", f.exposure_ms, first.exposure_ms));
  }
  const std::size_t n_px = first.counts.size();
  std::vector<std::uint64_t> sums(n_px, 0);
  // Parallel over pixel blocks; each block sums its pixels over every frame.
  constexpr std::size_t kBlock = 4096;
  const std::size_t n_blocks = (n_px + kBlock - 1) / kBlock;
  parallel_for(n_blocks, threads, [&](std::size_t b) {
    const std::size_t lo = b * kBlock;
    const std::size_t hi = std::min(n_px, lo + kBlock);
    for (const auto& f : frames)
      for (std::size_t i = lo; i < hi; ++i) sums[i] += f.counts[i];
  });
  AveragedImage img = to_image(first);
  img.n_frames = static_cast<int>(frames.size());
  const double n = static_cast<double>(frames.size());
  for (std::size_t i = 0; i < n_px; ++i) img.pixels[i] = static_cast<double>(sums[i]) / n;
  return img;
}

AveragedImage subtract_background(const AveragedImage& img, const AveragedImage& bg) {
  require_same_shape(img, bg, "subtract_background");
  AveragedImage out = img;
  double lowest = 0.0;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = img.pixels[i] - bg.pixels[i];
    lowest = std::min(lowest, out.pixels[i]);
  }
  out.offset = -lowest;
  if (out.offset > 0)
    for (auto& v : out.pixels) v = std::max(0.0, v + out.offset);
  out.background_frames = std::max(1, bg.n_frames);
  return out;
}

Overlay overlay_devices(const AveragedImage& atom, const AveragedImage& device, ScaleRule rule) {
  require_same_shape(atom, device, "overlay_devices");
  double s = 1.0;
  if (rule == ScaleRule::MatchPeak) {
    const double a = *std::max_element(atom.pixels.begin(), atom.pixels.end());
    const double d = *std::max_element(device.pixels.begin(), device.pixels.end());
    if (a > 0) s = d / a;
  } else {
    double a2 = 0.0;
    double d2 = 0.0;
    for (std::size_t i = 0; i < atom.pixels.size(); ++i) {
      a2 += atom.pixels[i] * atom.pixels[i];
      d2 += device.pixels[i] * device.pixels[i];
    }
    if (a2 > 0) s = std::sqrt(d2 / a2);
  }
  Overlay out;
  out.scale = s;
  out.composite = device;
  for (std::size_t i = 0; i < atom.pixels.size(); ++i) out.composite.pixels[i] = atom.pixels[i] * s + device.pixels[i];
  out.composite.scale = s;
  return out;
}

}  // namespace atomforge::analysis
