#pragma once

#include <array>
#include <vector>

#include "atomforge/config.hpp"
#include "atomforge/rng.hpp"

namespace atomforge::spectroscopy {

/// Lorentzian with unit peak and full width at half maximum `width`.
double lorentzian(double x, double width);

// ---------------------------------------------------------------------------
// Blow-out survival

enum class LocationTag { Loading, Between, OnDevice };

struct SurvivalCurve {
  std::vector<double> detunings_mhz;  // strictly increasing
  std::vector<double> survival;
  int site_index = 0;
  LocationTag location = LocationTag::Loading;
};

/// floor + (1 - floor) * (1 - depth * L(detuning - center; width)), clipped to [0, 1].
double blowout_survival(double detuning_mhz, double center_mhz, double width_mhz, double depth, double floor);

struct MixtureModel {
  std::array<double, 3> weights{0.0, 0.0, 0.0};
  std::array<double, 3> centers_mhz{0.0, 0.0, 0.0};  // |c1| > |c2| > |c3|
  double width_mhz = 10.0;
  double depth = 1.0;
  double floor = 0.0;
};

/// Untrapped remainder 1 - sum(w) is never blown out and contributes survival 1.
double mixture_survival(double detuning_mhz, const MixtureModel& model);

struct BlowoutFit {
  bool has_dip = false;
  double center_mhz = 0.0;
  double width_mhz = 0.0;
  double depth = 0.0;
  double floor = 0.0;     // held fixed during the fit
  double baseline = 1.0;  // off-resonant survival scale
  double center_err = 0.0;
  double width_err = 0.0;
  double depth_err = 0.0;
  double baseline_err = 0.0;
  double residual_norm = 0.0;
  int iterations = 0;
};

struct BlowoutFitOptions {
  double floor = 0.0;
  double min_contrast = 0.05;
  int max_iterations = 200;
};

/// Levenberg-Marquardt fit of baseline * blowout_survival(center, width,
/// depth, floor) with floor held fixed (it is degenerate with depth when the
/// off-resonant level is free). Flat curves return has_dip = false.
/// Throws ModelError on fewer than 8 points or non-convergence.
BlowoutFit fit_blowout(const SurvivalCurve& curve, const BlowoutFitOptions& options = {});

struct MixtureFit {
  bool identifiable = true;
  std::array<double, 3> weights{0.0, 0.0, 0.0};
  std::array<double, 3> weight_errs{0.0, 0.0, 0.0};
  double residual_norm = 0.0;
};

/// Weights of a three-component mixture with fixed centers, minimizing the
/// squared residual subject to w_i >= 0 and sum(w) <= 1. Centers closer than
/// width/2 are flagged non-identifiable and left unfitted.
MixtureFit fit_mixture(const SurvivalCurve& curve, const std::array<double, 3>& centers_mhz, double width_mhz,
                       double depth = 1.0, double floor = 0.0);

// ---------------------------------------------------------------------------
// Two-photon imaging response

/// Hyperfine splitting of the intermediate state F' = 4 from F' = 5.
inline constexpr double kHyperfineOffsetMhz = -251.0;

struct DetuningPair {
  double delta_852_mhz = 0.0;   // from 6S1/2 F=4 -> 6P3/2 F'=5
  double delta_1470_mhz = 0.0;  // from 6P3/2 F'=5 -> 7S1/2 F''=4
};

struct TwoPhotonResponse {
  double signal = 0.0;    // photons per exposure from an atom that stays
  double survival = 1.0;  // probability of surviving the exposure
  double detected = 0.0;  // signal * survival
};

/// Phenomenological surrogate: a two-photon Lorentzian ridge at
/// delta_852 + delta_1470 = light_shift, and single-photon scattering loss on
/// both intermediate hyperfine resonances (shifted by the magic D2 shift).
TwoPhotonResponse two_photon_response(const DetuningPair& d, const TwoPhotonParams& params);

struct TwoPhotonMap {
  std::vector<double> delta_852_mhz;
  std::vector<double> delta_1470_mhz;
  std::vector<double> detected;  // row-major, [i852 * n1470 + i1470]

  double at(std::size_t i852, std::size_t i1470) const { return detected[i852 * delta_1470_mhz.size() + i1470]; }
};

std::vector<double> linspace(double lo, double hi, int n);

TwoPhotonMap two_photon_map(const std::vector<double>& delta_852_mhz, const std::vector<double>& delta_1470_mhz,
                            const TwoPhotonParams& params);

// ---------------------------------------------------------------------------
// Lifetime

struct LifetimeData {
  std::vector<double> hold_times_s;
  std::vector<int> survivors;
  int n_atoms = 0;
};

/// Binomial detection counts for exp(-t / tau) survival.
LifetimeData lifetime_curve(const std::vector<double>& hold_times_s, double tau_s, int n_atoms, Rng& rng);

struct LifetimeFit {
  double tau_s = 0.0;
  double tau_err_s = 0.0;
};

/// Weighted log-linear regression of ln p = -t / tau through the origin,
/// with binomial weights n p / (1 - p) iterated on the model. Zero counts
/// are replaced by half a count. Throws ModelError when every t > 0 point is
/// zero.
LifetimeFit fit_lifetime(const LifetimeData& data);

}  // namespace atomforge::spectroscopy
