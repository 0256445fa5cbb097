#pragma once

// Rearrangement plans for a single row of AOD tones.
//
// Geometry: devices are stripes running along X, stacked along Y at
// device_pitch. The row axis is whichever AOD axis carries more than one
// tone; the other axis carries the single transverse tone. Frequencies map
// to positions through aod_scale.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "atomforge/config.hpp"

namespace atomforge::planner {

enum class SegmentKind { Hold, Chirp, Drop };
enum class Axis { X, Y };

const char* to_string(SegmentKind kind);
const char* to_string(Axis axis);

/// Symmetric piecewise-quadratic frequency sweep: zero slope at both ends,
/// peak slope 2 (f_end - f_start) / T at the midpoint.
struct ChirpProfile {
  double f_start_mhz = 0.0;
  double f_end_mhz = 0.0;
  double duration_ms = 0.0;

  double frequency(double t_ms) const;
  double slope(double t_ms) const;  // MHz/ms
  double peak_slew() const;         // |MHz/ms|
};

/// Throws ModelError for duration <= 0.
ChirpProfile chirp(double f_start_mhz, double f_end_mhz, double duration_ms);

struct Segment {
  SegmentKind kind = SegmentKind::Hold;
  Axis axis = Axis::Y;
  double f0_mhz = 0.0;
  double f1_mhz = 0.0;
  double t_start_ms = 0.0;
  double duration_ms = 0.0;

  double frequency(double t_ms) const;  // t_ms relative to the plan start
};

struct ToneTimeline {
  int tone_id = 0;
  Axis axis = Axis::Y;
  std::vector<Segment> segments;

  double end_time_ms() const;
  bool dropped() const;
  double final_frequency() const;
  /// Frequency at time t, or nullopt once dropped.
  std::optional<double> frequency(double t_ms) const;
};

struct TrajectoryPlan {
  std::vector<ToneTimeline> tones;
  double duration_ms = 0.0;

  bool motion_free() const;  // only HOLD and DROP segments
};

// ---------------------------------------------------------------------------

struct RowLayout {
  Axis row_axis = Axis::Y;
  std::vector<double> row_tones_mhz;
  double transverse_tone_mhz = 0.0;
  double pitch_mhz = 0.0;  // device pitch through aod_scale
};

/// Picks the row axis (the axis with more than one tone; Y when both have one).
/// Throws ModelError when both axes carry several tones.
RowLayout row_layout(const TweezerArray& tw, const ChipGeometry& geom);

/// Slot frequencies of the compressed block for n_atoms survivors.
std::vector<double> target_slots(const std::vector<double>& site_tones_mhz, double pitch_mhz, int n_atoms,
                                 const PlannerParams& params);

/// Drops empty tones at t = 0, then chirps every occupied tone over
/// compression_ms to target_slots, preserving order. Returns a zero-duration
/// plan when nothing needs to move. Throws ModelError on occupancy/tone
/// length mismatch, more atoms than slots, or a chirp above max_slew.
TrajectoryPlan plan_compression(const std::vector<bool>& occupancy, const std::vector<double>& site_tones_mhz,
                                double pitch_mhz, const PlannerParams& params, Axis axis = Axis::Y);

struct DeviceMode {
  enum class Kind { OnePerDevice, NOnOneDevice } kind = Kind::OnePerDevice;
  int k = 1;

  static DeviceMode one_per_device() { return {}; }
  static DeviceMode n_on_one(int k) { return {Kind::NOnOneDevice, k}; }
};

/// Parses "one-per-device" or "n-on-one:K".
DeviceMode parse_mode(const std::string& text);

struct DeviceTarget {
  int tone_id = 0;
  int device = -1;      // -1 when parked
  double position_um = 0.0;  // along the device, N-on-one only
  bool parked = false;
};

struct DevicePlan {
  TrajectoryPlan plan;
  std::vector<DeviceTarget> targets;
  double x_move_ms = 0.0;
  double y_move_ms = 0.0;
};

/// Sites one device can hold at intra-device spacing.
int device_capacity(const ChipGeometry& geom, const PlannerParams& params);

/// Appends the moves that bring a compressed row onto the chip.
///   one-per-device (row along Y): the transverse X tone slides the row
///   through the gaps between devices by loading_region_offset.x at x_speed,
///   then the row tones chirp by half a pitch onto the device centers at
///   approach_speed.
///   n-on-one:K (row along X, parallel to the devices): the row tones re-space
///   to K sites at intra_device_spacing along one device, parking the rest
///   park_offset past the device end, then the transverse Y tone chirps half a
///   pitch onto the device at approach_speed.
/// Checks feasibility before planning any motion.
DevicePlan plan_to_devices(const TrajectoryPlan& compressed, const ChipGeometry& geom, const TweezerArray& tw,
                           const PlannerParams& params, DeviceMode mode, double approach_speed_um_per_ms);

// ---------------------------------------------------------------------------

struct PlanCheck {
  bool contiguous = true;
  bool continuous = true;
  bool drops_terminal = true;
  bool ordered = true;  // tones on one axis never cross or touch
  double min_separation_mhz = 0.0;
  double max_slew_mhz_per_ms = 0.0;
  std::vector<std::string> problems;

  bool ok() const { return contiguous && continuous && drops_terminal && ordered; }
};

/// Structural checks plus a sampled simulation of every live tone at step_ms.
PlanCheck check_plan(const TrajectoryPlan& plan, double step_ms = 1e-3);

std::string plan_to_json(const TrajectoryPlan& plan);

/// Parses a string of 0/1 characters.
std::vector<bool> parse_occupancy(const std::string& bits);

// ---------------------------------------------------------------------------

struct PipelineOptions {
  int n_sites = 9;
  int n_shots = 10000;
  // Probability that an atom moved onto a device ends in the first maximum;
  // unset skips the device-loading step.
  std::optional<double> device_weight;
};

struct PipelineStats {
  int n_sites = 0;
  int n_shots = 0;
  std::vector<double> p_site_image1;  // per loading site, detected in image 1
  std::vector<double> p_loaded;       // per slot k: at least k atoms loaded
  std::vector<double> p_raw;          // per slot: filled in image 2
  std::vector<double> p_corrected;    // p_raw divided by the slot's measured imaging survival
  std::vector<double> stderr_raw;
  double mean_image1 = 0.0;
  double mean_image2 = 0.0;
};

/// Per shot: Bernoulli loading per site, imaging survival, order-preserving
/// compression of the detected pattern, rearrangement survival and optional
/// device loading. Shot i draws from stream (seed, {kPipeline, i}).
PipelineStats simulate_pipeline(const RateTable& rates, const PipelineOptions& options, std::uint64_t seed,
                                unsigned threads = 1);

}  // namespace atomforge::planner
