#pragma once

// Shared domain types and the key-value configuration file.
//
// Units are fixed per field and spelled out in the member name suffix:
// nm, um (micrometre), mhz, ms, us, uk (microkelvin, energies in uK * k_B),
// mw, s. The config file uses the bare field names (e.g. `device_pitch`);
// configs/default.cfg documents the unit of every key.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace atomforge {

struct ChipGeometry {
  double film_thickness_nm = 330.0;
  double film_index = 2.0;
  double device_pitch_um = 11.0;
  double device_width_um = 1.1;
  double device_length_um = 63.0;
  double device_tilt_mrad = 0.0;
  std::array<double, 2> loading_region_offset_um{60.0, 0.0};
  int n_devices = 9;

  bool operator==(const ChipGeometry&) const = default;
};

struct TweezerArray {
  double wavelength_nm = 935.0;
  double power_per_tweezer_mw = 2.4;
  double waist_um = 1.1;
  std::vector<double> tones_x_mhz{100.0};
  std::vector<double> tones_y_mhz{80.0, 85.0, 90.0, 95.0, 100.0, 105.0, 110.0, 115.0, 120.0};
  double aod_scale_um_per_mhz = 2.2;
  // Free-space trap depth per unit peak intensity, uK per (mW/um^2).
  double trap_depth_scale = 1580.0;

  double rayleigh_range_um() const;
  double peak_intensity_mw_per_um2() const;
  double free_space_depth_uk() const;

  bool operator==(const TweezerArray&) const = default;
};

struct RateTable {
  double load_prob = 0.55;
  double imaging_survival = 0.875;
  double rearrange_survival = 0.77;
  double lifetime_loading_s = 13.6;
  double lifetime_device_s = 0.78;

  bool operator==(const RateTable&) const = default;
};

enum class Envelope { PlaneWave, Gaussian };

struct OpticsParams {
  // D1 Stark shift per unit intensity ratio (calibration input).
  double kappa_mhz = 1.0;
  Envelope envelope = Envelope::PlaneWave;
  double focal_offset_nm = 0.0;

  bool operator==(const OpticsParams&) const = default;
};

struct ImagingParams {
  double exposure_ms = 40.0;
  int roi_size_px = 4;
  int site_pitch_px = 8;
  int margin_px = 4;
  double psf_sigma_px = 1.0;
  // Photon numbers per ROI referenced to a 40 ms exposure.
  double signal_per_roi = 25.0;
  double background_per_roi = 2.0;
  double device_background_per_roi = 1.0;
  double threshold = 5.0;
  double p_loss = 0.0;
  // On-device regime: lower effective signal and loss during the exposure.
  double device_signal_per_roi = 5.5;
  double device_p_loss = 0.3;

  bool operator==(const ImagingParams&) const = default;
};

struct TwoPhotonParams {
  double light_shift_mhz = 30.0;
  double gamma_852_mhz = 10.0;
  double gamma_two_photon_mhz = 6.0;
  double amplitude = 25.0;
  // Single-photon scattering loss rate on resonance.
  double loss_rate_per_ms = 1.25;
  double exposure_ms = 40.0;

  bool operator==(const TwoPhotonParams&) const = default;
};

struct McParams {
  double temperature_uk = 50.0;
  double approach_speed_um_per_ms = 6.0;
  double focal_offset_nm = 200.0;
  double timestep_us = 0.1;
  int n_trials = 10000;
  // Y-move path starts and ends this many waists from the device edge.
  double ramp_half_span_waists = 3.0;

  bool operator==(const McParams&) const = default;
};

enum class Anchor { LeftEdge, Centered, DeviceRegistered };

struct PlannerParams {
  double compression_ms = 1.0;
  Anchor anchor = Anchor::DeviceRegistered;
  // Frequency of target slot 0 for DeviceRegistered; defaults to the first row tone.
  std::optional<double> device_anchor_mhz;
  double max_slew_mhz_per_ms = 100.0;
  double x_speed_um_per_ms = 60.0;
  double intra_device_spacing_um = 8.8;
  double park_offset_um = 11.0;
  double clearance_um = 1.1;
  int n_slots = 0;  // 0 = one slot per row tone

  bool operator==(const PlannerParams&) const = default;
};

enum class ScanSide { Below, Above };

struct AutofocusParams {
  double sigma_space_px = 1.5;
  double sigma_range = 20.0;
  double target_fraction = 0.8;
  ScanSide side = ScanSide::Below;

  bool operator==(const AutofocusParams&) const = default;
};

struct Config {
  std::uint64_t seed = 42;
  ChipGeometry chip;
  TweezerArray tweezer;
  RateTable rates;
  OpticsParams optics;
  ImagingParams imaging;
  TwoPhotonParams twophoton;
  McParams mc;
  PlannerParams planner;
  AutofocusParams autofocus;

  bool operator==(const Config&) const = default;
};

/// Checks every type invariant; throws ConfigError naming the field and bound.
void validate(const Config& cfg);

/// Parses the sectioned key-value text. Keys absent from the text keep their
/// defaults; unknown sections or keys are rejected by name.
Config parse_config(const std::string& text);

/// Reads and parses a file. The ATOMFORGE_SEED environment variable, when
/// set, overrides the seed.
Config load_config(const std::filesystem::path& path);

/// Writes every field; parse_config(serialize_config(c)) == c.
std::string serialize_config(const Config& cfg);

/// Overrides the seed from ATOMFORGE_SEED if present.
void apply_seed_env(Config& cfg);

}  // namespace atomforge
