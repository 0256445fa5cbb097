#include "atomforge/optics.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <cmath>
#include <numbers>
#include <ostream>

#include "atomforge/errors.hpp"

namespace atomforge::optics {

using namespace std::complex_literals;
using std::numbers::pi;

ReflectionResult membrane_reflection(double thickness_nm, double index, double wavelength_nm) {
  // Characteristic matrix of a homogeneous layer, ambient and substrate index 1,
  // exp(-i w t) convention to match the exp(2ikz) reflected term below.
  const double delta = 2.0 * pi * index * thickness_nm / wavelength_nm;
  const std::complex<double> m11 = std::cos(delta);
  const std::complex<double> m12 = -1i * std::sin(delta) / index;
  const std::complex<double> m21 = -1i * index * std::sin(delta);
  const std::complex<double> m22 = std::cos(delta);

  const double n0 = 1.0;
  const double ns = 1.0;
  const std::complex<double> denom = n0 * m11 + n0 * ns * m12 + m21 + ns * m22;
  ReflectionResult out;
  out.amplitude = (n0 * m11 + n0 * ns * m12 - m21 - ns * m22) / denom;
  out.transmission = 2.0 * n0 / denom;
  out.power_reflectance = std::norm(out.amplitude);
  return out;
}

double gaussian_intensity(double radial_um, double axial_um, const TweezerArray& tw) {
  const double zr = tw.rayleigh_range_um();
  const double axial = 1.0 + (axial_um / zr) * (axial_um / zr);
  const double w2 = tw.waist_um * tw.waist_um * axial;
  return std::exp(-2.0 * radial_um * radial_um / w2) / axial;
}

double StandingWave::envelope_at(double z_nm) const {
  if (envelope == Envelope::PlaneWave) return 1.0;
  const double u = (z_nm - focal_offset_nm) / rayleigh_nm;
  return 1.0 / (1.0 + u * u);
}

double StandingWave::intensity(double z_nm) const {
  const double k = 2.0 * pi / wavelength_nm;
  return envelope_at(z_nm) * std::norm(1.0 + r * std::polar(1.0, 2.0 * k * z_nm));
}

double StandingWave::intensity_derivative(double z_nm) const {
  const double k = 2.0 * pi / wavelength_nm;
  const double phase = 2.0 * k * z_nm + std::arg(r);
  const double mag = std::abs(r);
  const double fringe = 1.0 + mag * mag + 2.0 * mag * std::cos(phase);
  const double dfringe = -4.0 * k * mag * std::sin(phase);
  if (envelope == Envelope::PlaneWave) return dfringe;
  const double u = (z_nm - focal_offset_nm) / rayleigh_nm;
  const double env = 1.0 / (1.0 + u * u);
  const double denv = -2.0 * u / rayleigh_nm * env * env;
  return denv * fringe + env * dfringe;
}

StandingWave make_standing_wave(const ChipGeometry& geom, const TweezerArray& tw, const OpticsParams& optics) {
  StandingWave sw;
  sw.r = membrane_reflection(geom.film_thickness_nm, geom.film_index, tw.wavelength_nm).amplitude;
  sw.wavelength_nm = tw.wavelength_nm;
  sw.envelope = optics.envelope;
  sw.focal_offset_nm = optics.focal_offset_nm;
  sw.rayleigh_nm = tw.rayleigh_range_um() * 1e3;
  return sw;
}

namespace {

// Golden-section search for the maximum of f on [a, b].
template <typename F>
double golden_max(F&& f, double a, double b) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a);
  double d = a + g * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < 200 && (b - a) > 1e-9; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

std::vector<LatticeMaximum> find_maxima(const StandingWave& sw, double z_max_nm, int n_points, double kappa_mhz,
                                        double free_depth_uk) {
  std::vector<LatticeMaximum> out;
  if (n_points < 3 || z_max_nm <= 0) return out;
  const double dz = z_max_nm / (n_points - 1);
  auto f = [&](double z) { return sw.intensity(z); };
  double prev = f(0.0);
  double cur = f(dz);
  for (int i = 1; i + 1 < n_points; ++i) {
    const double next = f((i + 1) * dz);
    // Interior strict rise then non-rise: a bracket [z-dz, z+dz] holding one peak.
    if (cur > prev && cur >= next) {
      const double z = golden_max(f, (i - 1) * dz, (i + 1) * dz);
      const double ratio = f(z);
      out.push_back({z, ratio, free_depth_uk * ratio, stark_shift_d1(ratio, kappa_mhz)});
    }
    prev = cur;
    cur = next;
  }
  return out;
}

LatticeProfile lattice_profile(const StandingWave& sw, double z_max_nm, int n_points, double kappa_mhz,
                               double free_depth_uk) {
  if (n_points < 3) throw ModelError(fmt::format("lattice_profile: n_points must be >= 3, got {}", n_points));
  LatticeProfile p;
  p.z_nm.resize(n_points);
  p.intensity_ratio.resize(n_points);
  p.stark_shift_mhz.resize(n_points);
  const double dz = z_max_nm / (n_points - 1);
  for (int i = 0; i < n_points; ++i) {
    const double z = i * dz;
    p.z_nm[i] = z;
    p.intensity_ratio[i] = sw.intensity(z);
    p.stark_shift_mhz[i] = stark_shift_d1(p.intensity_ratio[i], kappa_mhz);
  }
  p.maxima = find_maxima(sw, z_max_nm, n_points, kappa_mhz, free_depth_uk);
  if (p.maxima.size() < 3)
    throw ModelError(fmt::format(
        "lattice_profile: only {} intensity maxima below z_max = {} nm; need at least 3 (increase z_max)",
        p.maxima.size(), z_max_nm));
  return p;
}

LatticeProfile lattice_profile(const ChipGeometry& geom, const TweezerArray& tw, const OpticsParams& optics,
                               double z_max_nm, int n_points) {
  return lattice_profile(make_standing_wave(geom, tw, optics), z_max_nm, n_points, optics.kappa_mhz,
                         tw.free_space_depth_uk());
}

void write_lattice_csv(std::ostream& out, const LatticeProfile& profile) {
  out << "z_nm,intensity_ratio,stark_shift_mhz\n";
  for (std::size_t i = 0; i < profile.z_nm.size(); ++i)
    fmt::print(out, "{},{},{}\n", profile.z_nm[i], profile.intensity_ratio[i], profile.stark_shift_mhz[i]);
}

}  // namespace atomforge::optics
