#pragma once

// Synthetic camera frames for a single row of tweezer sites, ROI decoding and
// photon-count histogram fits.

#include <cstdint>
#include <vector>

#include "atomforge/config.hpp"

namespace atomforge::imaging {

struct Roi {
  int site = 0;
  int x0 = 0;  // top-left pixel
  int y0 = 0;
  int size = 4;

  bool operator==(const Roi&) const = default;
};

struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> counts;  // row-major
  double exposure_ms = 0.0;
  std::vector<Roi> rois;
  std::uint64_t seed = 0;

  std::uint16_t at(int x, int y) const { return counts[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const Frame&) const = default;
};

/// Row of n_sites ROIs at site pitch, with a margin on every side.
Frame empty_frame(int n_sites, const ImagingParams& params);

/// Throws ModelError when an ROI leaves the frame or two ROIs overlap.
void check_rois(const Frame& frame);

enum class Region { FreeSpace, OnDevice };

/// Per-ROI photon numbers at the 40 ms reference exposure.
struct EmissionModel {
  double signal_per_roi = 25.0;
  double background_per_roi = 2.0;
  double device_background_per_roi = 0.0;  // added inside device stripes
  double p_loss = 0.0;
  Region region = Region::FreeSpace;
};

EmissionModel emission_model(const ImagingParams& params, Region region);

/// Per-pixel expected counts for an occupied ROI is signal * psf + background;
/// all counts scale linearly with exposure. Each site draws its loss event from
/// its own stream and each pixel row from its own stream, keyed by
/// (seed, frame_index), so the frame does not depend on iteration order.
Frame render_frame(const std::vector<bool>& occupancy, double exposure_ms, const ImagingParams& params,
                   const EmissionModel& model, std::uint64_t seed, std::uint64_t frame_index);

/// render_frame with params.p_loss, free-space emission.
Frame render_frame(const std::vector<bool>& occupancy, double exposure_ms, const ImagingParams& params,
                   std::uint64_t seed, std::uint64_t frame_index);

/// render_frame where each atom, with probability p_loss, stops emitting at a
/// uniformly distributed fraction of the exposure.
Frame imaging_survival(const std::vector<bool>& occupancy, double exposure_ms, const ImagingParams& params,
                       const EmissionModel& model, double p_loss, std::uint64_t seed, std::uint64_t frame_index);

/// Expected counts per pixel before Poisson sampling, for an atom emitting
/// its full exposure at every occupied site.
std::vector<double> expected_counts(const Frame& layout, const std::vector<bool>& occupancy, double exposure_ms,
                                    const ImagingParams& params, const EmissionModel& model);

// ---------------------------------------------------------------------------

struct OccupancyMatrix {
  std::vector<bool> occupied;  // per ROI, in roi_list order
  std::vector<int> roi_sums;
  double decode_ns = 0.0;
};

int roi_sum(const Frame& frame, const Roi& roi);

/// Site occupied iff its ROI sum exceeds threshold. Touches ROI pixels only.
OccupancyMatrix decode_occupancy(const Frame& frame, double threshold);

// ---------------------------------------------------------------------------

struct HistogramFit {
  bool bimodal = false;
  double background_mean = 0.0;
  double signal_mean = 0.0;
  double background_weight = 0.0;
  double signal_weight = 0.0;
  int threshold = 0;      // occupied iff count > threshold
  double fidelity = 0.0;  // NaN when not bimodal
  int iterations = 0;
  double log_likelihood = 0.0;
};

/// 1 - (P(signal <= t) + P(background > t)) / 2 from Poisson tails.
double threshold_fidelity(double background_mean, double signal_mean, int threshold);

struct ThresholdChoice {
  int threshold = 0;
  double fidelity = 0.0;
};

/// Best threshold in [0, max_threshold]; ties go to the lowest threshold.
ThresholdChoice optimal_threshold(double background_mean, double signal_mean, int max_threshold = -1);

/// Two-component Poisson mixture by expectation-maximization. Initialized by
/// splitting the data at its median. Data the mixture does not explain better
/// than a single Poisson (BIC) is reported as not bimodal.
HistogramFit fit_histogram(const std::vector<int>& roi_sums, int max_iterations = 1000);

}  // namespace atomforge::imaging
