#include "doctest.h"

#include <cmath>
#include <numeric>

#include "atomforge/errors.hpp"
#include "atomforge/montecarlo.hpp"

using namespace atomforge;
namespace mc = atomforge::montecarlo;

namespace {

mc::TransferScenario small_scenario(int trials) {
  auto sc = mc::make_scenario(Config{});
  sc.n_trials = trials;
  return sc;
}

optics::StandingWave default_wave(double offset_nm = 200.0) {
  const Config cfg;
  return mc::transfer_wave(cfg.chip, cfg.tweezer, offset_nm);
}

}  // namespace

TEST_SUITE("montecarlo") {
  TEST_CASE("zero temperature sits at the minimum at rest") {
    mc::AxialPotential pot{[](double z) { return 3.0 * (z - 0.4) * (z - 0.4); }, -2.0, 2.0};
    Rng rng = make_rng(1, 1);
    const auto s = mc::sample_thermal_state(0.0, pot, rng);
    CHECK(s.z_um == doctest::Approx(0.4).epsilon(1e-6));
    CHECK(s.v_um_per_us == 0.0);
  }

  TEST_CASE("harmonic well obeys equipartition") {
    const double T = 50.0;
    const double kappa = 2.0 * 30.0 * T;  // U(1 um) = 30 k_B T
    mc::AxialPotential pot{[=](double z) { return 0.5 * kappa * z * z; }, -1.0, 1.0};
    Rng rng = make_rng(7, 2);
    const int n = 10000;
    double sum = 0.0;
    double sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto s = mc::sample_thermal_state(T, pot, rng);
      const double e = 0.5 * s.v_um_per_us * s.v_um_per_us / mc::kAccelPerGradient + pot.energy_uk(s.z_um);
      sum += e;
      sum2 += e * e;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    CHECK(std::abs(mean - T) < 3.0 * se);
  }

  TEST_CASE("well shallower than k_B T is rejected") {
    mc::AxialPotential pot{[](double z) { return 25.0 * z * z; }, -1.0, 1.0};
    Rng rng = make_rng(1, 3);
    CHECK_THROWS_AS(mc::sample_thermal_state(50.0, pot, rng), ModelError);
  }

  TEST_CASE("no film, no loss") {
    auto wave = default_wave();
    wave.r = {0.0, 0.0};
    const auto d = mc::loading_distribution(small_scenario(200), wave, TweezerArray{}.waist_um, 11);
    CHECK(d.lost == 0.0);
  }

  TEST_CASE("weights are normalized with binomial errors") {
    const auto d = mc::loading_distribution(small_scenario(300), default_wave(), TweezerArray{}.waist_um, 5);
    const double total = std::accumulate(d.weights.begin(), d.weights.end(), d.lost);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(d.n_trials == 300);
    CHECK(d.stderr_of(1) == doctest::Approx(std::sqrt(d.weight(1) * (1 - d.weight(1)) / 300)));
  }

  TEST_CASE("distribution does not depend on the thread count") {
    const auto sc = small_scenario(120);
    const auto a = mc::loading_distribution(sc, default_wave(), TweezerArray{}.waist_um, 9, 1);
    const auto b = mc::loading_distribution(sc, default_wave(), TweezerArray{}.waist_um, 9, 4);
    CHECK(a.weights == b.weights);
    CHECK(a.lost == b.lost);
  }

  TEST_CASE("slow cold transfer is deterministic") {
    auto sc = small_scenario(1);
    sc.temperature_uk = 0.0;
    sc.approach_speed_um_per_ms = 1.0;
    const mc::TransferModel model(sc, default_wave(), TweezerArray{}.waist_um);
    Rng a = make_rng(1, 1);
    Rng b = make_rng(2, 2);
    const auto x = model.run_trial(a);
    const auto y = model.run_trial(b);
    CHECK(x.well >= 1);
    CHECK(x.well == y.well);
  }

  TEST_CASE("coarse timestep fails validation") {
    auto sc = small_scenario(1);
    sc.timestep_us = 50.0;
    Rng rng = make_rng(1, 1);
    CHECK_THROWS_AS(mc::simulate_transfer(sc, default_wave(), TweezerArray{}.waist_um, rng), ModelError);
  }

  TEST_CASE("default timestep passes validation") {
    const mc::TransferModel model(small_scenario(1), default_wave(), TweezerArray{}.waist_um);
    CHECK(model.drift_per_step() < 1e-4);
    CHECK_NOTHROW(model.validate_timestep());
  }

  TEST_CASE("reflected fraction ramps from 0 to 1") {
    const mc::TransferModel model(small_scenario(1), default_wave(), TweezerArray{}.waist_um);
    CHECK(model.reflected_fraction(0.0) == doctest::Approx(0.0).epsilon(1e-3));
    CHECK(model.reflected_fraction(model.duration_us()) == doctest::Approx(1.0).epsilon(1e-3));
    double prev = -1.0;
    for (int i = 0; i <= 50; ++i) {
      const double s = model.reflected_fraction(model.duration_us() * i / 50.0);
      CHECK(s >= prev);
      prev = s;
    }
  }
}
