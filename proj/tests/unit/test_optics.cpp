#include "doctest.h"

#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "atomforge/errors.hpp"
#include "atomforge/optics.hpp"

using namespace atomforge;
using std::numbers::pi;

namespace {

// Airy sum for a free-standing slab: r = r01 (1 - e^{2i delta}) / (1 - r01^2 e^{2i delta}).
std::complex<double> airy_r(double d_nm, double n, double lambda_nm) {
  const double r01 = (1.0 - n) / (1.0 + n);
  const auto e = std::polar(1.0, 2.0 * 2.0 * pi * n * d_nm / lambda_nm);
  return r01 * (1.0 - e) / (1.0 - r01 * r01 * e);
}

// Closed-form first antinode of |1 + r e^{2ikz}|^2 above z = 0.
double first_antinode_nm(std::complex<double> r, double lambda_nm) {
  double phase = -std::arg(r);
  if (phase <= 0) phase += 2 * pi;
  return phase * lambda_nm / (4 * pi);
}

}  // namespace

TEST_SUITE("optics") {
  TEST_CASE("slab reflection matches the Airy sum") {
    for (double d : {100.0, 250.0, 330.0, 340.0, 500.0})
      for (double n : {1.5, 2.0, 3.4}) {
        const auto got = optics::membrane_reflection(d, n, 935.0);
        const auto want = airy_r(d, n, 935.0);
        CHECK(std::abs(got.amplitude - want) < 1e-12);
      }
  }

  TEST_CASE("default film reflects |r| = 0.585") {
    const auto r = optics::membrane_reflection(330.0, 2.0, 935.0);
    CHECK(std::abs(r.amplitude) == doctest::Approx(0.585).epsilon(0.002));
  }

  TEST_CASE("lossless energy balance") {
    for (double d = 50.0; d < 800.0; d += 37.0) {
      const auto r = optics::membrane_reflection(d, 2.2, 935.0);
      CHECK(std::norm(r.amplitude) + std::norm(r.transmission) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("half-wave film is transparent, index 1 reflects nothing") {
    CHECK(std::abs(optics::membrane_reflection(935.0 / 4.0, 2.0, 935.0).amplitude) < 1e-12);
    CHECK(std::abs(optics::membrane_reflection(330.0, 1.0, 935.0).amplitude) < 1e-12);
  }

  TEST_CASE("lattice maxima: position, height and period") {
    const Config cfg;
    const auto p = optics::lattice_profile(cfg.chip, cfg.tweezer, cfg.optics, 1500.0, 3001);
    const auto r = optics::membrane_reflection(330.0, 2.0, 935.0).amplitude;
    REQUIRE(p.maxima.size() >= 3);
    CHECK(p.maxima[0].z_nm == doctest::Approx(first_antinode_nm(r, 935.0)).epsilon(1e-6));
    CHECK(p.maxima[0].z_nm == doctest::Approx(250.4).epsilon(0.002));
    const double peak = (1 + std::abs(r)) * (1 + std::abs(r));
    CHECK(std::abs(p.maxima[0].ratio - peak) < 1e-9);
    CHECK(p.maxima[1].z_nm - p.maxima[0].z_nm == doctest::Approx(467.5).epsilon(1e-6));
    for (std::size_t i = 1; i < p.maxima.size(); ++i) CHECK(p.maxima[i].z_nm > p.maxima[i - 1].z_nm);
  }

  TEST_CASE("maxima do not move under grid refinement") {
    const Config cfg;
    const auto a = optics::lattice_profile(cfg.chip, cfg.tweezer, cfg.optics, 1500.0, 301);
    const auto b = optics::lattice_profile(cfg.chip, cfg.tweezer, cfg.optics, 1500.0, 602);
    REQUIRE(a.maxima.size() == b.maxima.size());
    for (std::size_t i = 0; i < a.maxima.size(); ++i) CHECK(std::abs(a.maxima[i].z_nm - b.maxima[i].z_nm) < 0.5);
  }

  TEST_CASE("gaussian envelope makes the first maximum the strongest") {
    Config cfg;
    cfg.optics.envelope = Envelope::Gaussian;
    const auto p = optics::lattice_profile(cfg.chip, cfg.tweezer, cfg.optics, 1500.0, 3001);
    CHECK(p.maxima[0].ratio > 1.0);
    for (std::size_t i = 1; i < p.maxima.size(); ++i)
      CHECK(std::abs(p.maxima[0].stark_shift_mhz) >= std::abs(p.maxima[i].stark_shift_mhz));
  }

  TEST_CASE("too short a range is a model error") {
    const Config cfg;
    CHECK_THROWS_AS(optics::lattice_profile(cfg.chip, cfg.tweezer, cfg.optics, 600.0, 601), ModelError);
  }

  TEST_CASE("stark shifts") {
    CHECK(optics::stark_shift_d1(0.0, 3.0) == 0.0);
    CHECK(optics::stark_shift_d1(2.0, 3.0) == 2.0 * optics::stark_shift_d1(1.0, 3.0));
    CHECK(optics::stark_shift_d1(0.7 * 1.3, 2.0) == doctest::Approx(0.7 * optics::stark_shift_d1(1.3, 2.0)));
    for (double x : {0.0, 1.0, 2.5}) CHECK(optics::magic_d2_shift(x) == 0.0);
  }

  TEST_CASE("lattice csv header") {
    const Config cfg;
    const auto p = optics::lattice_profile(cfg.chip, cfg.tweezer, cfg.optics, 1500.0, 11);
    std::ostringstream os;
    optics::write_lattice_csv(os, p);
    CHECK(os.str().rfind("z_nm,intensity_ratio,stark_shift_mhz\n", 0) == 0);
  }

  TEST_CASE("gaussian beam intensity") {
    const TweezerArray tw;
    CHECK(optics::gaussian_intensity(0.0, 0.0, tw) == 1.0);
    CHECK(optics::gaussian_intensity(0.0, tw.rayleigh_range_um(), tw) == doctest::Approx(0.5));
    CHECK(optics::gaussian_intensity(tw.waist_um, 0.0, tw) == doctest::Approx(std::exp(-2.0)));
  }
}
