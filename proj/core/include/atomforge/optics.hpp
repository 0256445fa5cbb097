#pragma once

#include <complex>
#include <iosfwd>
#include <vector>

#include "atomforge/config.hpp"

namespace atomforge::optics {

struct ReflectionResult {
  std::complex<double> amplitude;  // field reflection coefficient r
  std::complex<double> transmission;
  double power_reflectance = 0.0;  // |r|^2
};

/// Normal-incidence reflection off a lossless film suspended in vacuum,
/// from the 2x2 characteristic (transfer) matrix of the slab.
ReflectionResult membrane_reflection(double thickness_nm, double index, double wavelength_nm);

/// Focused Gaussian beam intensity relative to the focal peak.
double gaussian_intensity(double radial_um, double axial_um, const TweezerArray& tw);

/// Incident beam plus its reflection off the film, as seen along the beam
/// axis at height z above the film surface:
///   I(z) = envelope(z) * |1 + r exp(2ikz)|^2
/// with envelope either 1 (plane wave) or the axial Gaussian falloff about
/// the focal plane.
struct StandingWave {
  std::complex<double> r{0.0, 0.0};
  double wavelength_nm = 935.0;
  Envelope envelope = Envelope::PlaneWave;
  double focal_offset_nm = 0.0;
  double rayleigh_nm = 4066.0;

  double envelope_at(double z_nm) const;
  double intensity(double z_nm) const;
  double intensity_derivative(double z_nm) const;  // dI/dz per nm
};

StandingWave make_standing_wave(const ChipGeometry& geom, const TweezerArray& tw, const OpticsParams& optics);

struct LatticeMaximum {
  double z_nm;
  double ratio;
  double depth_uk;
  double stark_shift_mhz;
};

struct LatticeProfile {
  std::vector<double> z_nm;
  std::vector<double> intensity_ratio;
  std::vector<double> stark_shift_mhz;
  std::vector<LatticeMaximum> maxima;  // ascending z
};

/// Local maxima of the intensity in (0, z_max]: bracketed on a uniform grid
/// of n_points, then refined on the continuous profile so positions do not
/// depend on the grid.
std::vector<LatticeMaximum> find_maxima(const StandingWave& sw, double z_max_nm, int n_points,
                                        double kappa_mhz = 1.0, double free_depth_uk = 0.0);

/// Samples the profile on [0, z_max]. Throws ModelError when fewer than three
/// maxima fall inside the range.
LatticeProfile lattice_profile(const StandingWave& sw, double z_max_nm, int n_points, double kappa_mhz,
                               double free_depth_uk);

LatticeProfile lattice_profile(const ChipGeometry& geom, const TweezerArray& tw, const OpticsParams& optics,
                               double z_max_nm, int n_points);

/// D1 light shift, linear in local intensity.
constexpr double stark_shift_d1(double intensity_ratio, double kappa_mhz) { return kappa_mhz * intensity_ratio; }

/// 935 nm is magic for the D2 line: its transition frequency does not move
/// with trap intensity.
constexpr double magic_d2_shift(double /*intensity_ratio*/) { return 0.0; }

/// CSV with header `z_nm,intensity_ratio,stark_shift_mhz`.
void write_lattice_csv(std::ostream& out, const LatticeProfile& profile);

}  // namespace atomforge::optics
