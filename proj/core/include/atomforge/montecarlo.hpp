#pragma once

// Classical 1D axial Monte Carlo of a thermal atom carried from a free-space
// tweezer onto a partially reflecting film.
//
// Units: z in um, t in us, v in um/us, energies in uK (times k_B).
// The tweezer slides across the device edge at approach_speed; the reflected
// field fades in with the fraction s(t) of the beam that sits over the film,
//   U(z, t) = -D * envelope(z) * |1 + s(t) r exp(2ikz)|^2,
// so the single free-space well deforms into the standing-wave ladder.

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "atomforge/config.hpp"
#include "atomforge/optics.hpp"
#include "atomforge/rng.hpp"

namespace atomforge::montecarlo {

/// Acceleration in um/us^2 produced by a potential gradient of 1 uK/um on a
/// cesium-133 atom (k_B / m * 1e-6).
extern const double kAccelPerGradient;

struct TransferScenario {
  double temperature_uk = 50.0;
  double trap_depth_free_uk = 2000.0;
  double approach_speed_um_per_ms = 6.0;
  double focal_offset_nm = 200.0;
  double timestep_us = 0.1;
  int n_trials = 10000;
  double ramp_half_span_waists = 3.0;
};

TransferScenario make_scenario(const Config& cfg);

/// Focal offset seen by site `site_index` when the chip is tilted by
/// device_tilt across the row at device pitch.
double site_focal_offset_nm(const TransferScenario& sc, const ChipGeometry& geom, int site_index);

// ---------------------------------------------------------------------------
// Thermal sampling

struct AxialPotential {
  std::function<double(double)> energy_uk;  // U(z)
  double z_lo_um = 0.0;
  double z_hi_um = 0.0;
};

struct PhaseSpacePoint {
  double z_um = 0.0;
  double v_um_per_us = 0.0;
};

/// Draws (z, v) from exp(-(KE + U)/k_B T) restricted to energies below the
/// lower window edge. T = 0 returns the potential minimum at rest. Throws
/// ModelError when the well is shallower than k_B T or the rejection loop
/// exhausts its attempt budget.
PhaseSpacePoint sample_thermal_state(double temperature_uk, const AxialPotential& potential, Rng& rng,
                                     int max_attempts = 1000000);

// ---------------------------------------------------------------------------
// Transfer simulation

inline constexpr int kLost = 0;

struct TrialOutcome {
  int well = kLost;  // 1 = z1 (closest to the surface), 2 = z2, ...; kLost
  double z_um = 0.0;
  double energy_uk = 0.0;
};

/// Wells of the static end-of-move potential, between adjacent barriers.
struct Basin {
  double z_lo_um;
  double z_hi_um;
  double barrier_uk;  // lower of the two bounding barriers
  double bottom_uk;
};

class TransferModel {
 public:
  TransferModel(const TransferScenario& scenario, const optics::StandingWave& wave, double waist_um);

  double reflected_fraction(double t_us) const;  // s(t)
  double beam_offset_um(double t_us) const;      // y(t), device edge at 0
  double duration_us() const { return duration_us_; }
  double potential(double z_um, double s) const;
  double force(double z_um, double s) const;  // -dU/dz in uK/um
  double window_lo_um() const { return window_lo_; }
  double window_hi_um() const { return window_hi_; }
  const std::vector<Basin>& basins() const { return basins_; }
  const TransferScenario& scenario() const { return scenario_; }

  /// Maps a final (z, v) to its basin index, or kLost.
  int classify(double z_um, double v_um_per_us) const;

  /// Energy drift per step of a probe trajectory in the final static
  /// potential, as a fraction of the free-space depth.
  double drift_per_step() const;

  /// Throws ModelError when drift_per_step() >= 1e-4.
  void validate_timestep() const;

  TrialOutcome run_trial(Rng& rng) const;
  TrialOutcome run_from(PhaseSpacePoint start) const;

 private:
  TransferScenario scenario_;
  double k_;       // 2 pi / lambda, 1/um
  double r_mag_;
  double r_phase_;
  bool gaussian_;
  double focal_um_;
  double rayleigh_um_;
  double waist_um_;
  double half_span_um_;
  double duration_us_;
  double window_lo_;
  double window_hi_;
  double s_final_;
  int steps_;
  std::vector<double> s_table_;  // s(i * dt), i = 0..steps
  int first_over_film_step_;
  bool has_surface_ = true;
  std::vector<Basin> basins_;
};

/// Single trial; validates the timestep first.
TrialOutcome simulate_transfer(const TransferScenario& scenario, const optics::StandingWave& wave, double waist_um,
                               Rng& rng);

struct LoadingDistribution {
  std::vector<double> weights;  // weights[i] = basin i+1
  double lost = 0.0;
  std::vector<double> stderr_weights;
  double stderr_lost = 0.0;
  int n_trials = 0;

  double weight(int well) const { return well >= 1 && well <= static_cast<int>(weights.size()) ? weights[well - 1] : 0.0; }
  double stderr_of(int well) const {
    return well >= 1 && well <= static_cast<int>(stderr_weights.size()) ? stderr_weights[well - 1] : 0.0;
  }
};

/// Runs n_trials independent transfers; trial i draws from stream
/// (seed, {kMonteCarlo, i}), so the result is independent of `threads`.
LoadingDistribution loading_distribution(const TransferScenario& scenario, const optics::StandingWave& wave,
                                         double waist_um, std::uint64_t seed, unsigned threads = 1);

struct SweepPoint {
  double focal_offset_nm;
  LoadingDistribution distribution;
};

std::vector<SweepPoint> sweep_focal_offset(const TransferScenario& base, const optics::StandingWave& wave,
                                           double waist_um, const std::vector<double>& offsets_nm,
                                           std::uint64_t seed, unsigned threads = 1);

/// Free-space standing wave for the scenario: Gaussian envelope about the focal plane.
optics::StandingWave transfer_wave(const ChipGeometry& geom, const TweezerArray& tw, double focal_offset_nm);

}  // namespace atomforge::montecarlo
