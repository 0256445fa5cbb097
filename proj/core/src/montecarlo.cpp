#include "atomforge/montecarlo.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "atomforge/errors.hpp"
#include "atomforge/parallel.hpp"

namespace atomforge::montecarlo {

namespace {
constexpr double kBoltzmann = 1.380649e-23;               // J/K
constexpr double kCesiumMass = 132.905451961 * 1.66053906660e-27;  // kg
}  // namespace

const double kAccelPerGradient = kBoltzmann / kCesiumMass * 1e-6;

TransferScenario make_scenario(const Config& cfg) {
  TransferScenario sc;
  sc.temperature_uk = cfg.mc.temperature_uk;
  sc.trap_depth_free_uk = cfg.tweezer.free_space_depth_uk();
  sc.approach_speed_um_per_ms = cfg.mc.approach_speed_um_per_ms;
  sc.focal_offset_nm = cfg.mc.focal_offset_nm;
  sc.timestep_us = cfg.mc.timestep_us;
  sc.n_trials = cfg.mc.n_trials;
  sc.ramp_half_span_waists = cfg.mc.ramp_half_span_waists;
  return sc;
}

double site_focal_offset_nm(const TransferScenario& sc, const ChipGeometry& geom, int site_index) {
  // mrad * um = nm
  return sc.focal_offset_nm + geom.device_tilt_mrad * geom.device_pitch_um * site_index;
}

optics::StandingWave transfer_wave(const ChipGeometry& geom, const TweezerArray& tw, double focal_offset_nm) {
  OpticsParams op;
  op.envelope = Envelope::Gaussian;
  op.focal_offset_nm = focal_offset_nm;
  return optics::make_standing_wave(geom, tw, op);
}

namespace {

template <typename F>
double golden_min(F&& f, double a, double b) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a);
  double d = a + g * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < 200 && (b - a) > 1e-12; ++it) {
    if (fc < fd) {
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

double argmin_on(const std::function<double(double)>& u, double lo, double hi, int grid = 2000) {
  const double dz = (hi - lo) / grid;
  int best = 0;
  double best_u = u(lo);
  for (int i = 1; i <= grid; ++i) {
    const double v = u(lo + i * dz);
    if (v < best_u) {
      best_u = v;
      best = i;
    }
  }
  const double a = std::max(lo, lo + (best - 1) * dz);
  const double b = std::min(hi, lo + (best + 1) * dz);
  return golden_min(u, a, b);
}

}  // namespace

PhaseSpacePoint sample_thermal_state(double temperature_uk, const AxialPotential& potential, Rng& rng,
                                     int max_attempts) {
  const auto& u = potential.energy_uk;
  const double lo = potential.z_lo_um;
  const double hi = potential.z_hi_um;
  if (!(hi > lo)) throw ModelError("sample_thermal_state: empty potential window");

  const double z_min = argmin_on(u, lo, hi);
  const double u_min = u(z_min);
  if (temperature_uk <= 0.0) return {z_min, 0.0};

  const double escape = std::min(u(lo), u(hi));
  const double depth = escape - u_min;
  if (depth < temperature_uk)
    throw ModelError(fmt::format(
        "sample_thermal_state: trap too shallow for temperature (depth {:.4g} uK < k_B T = {:.4g} uK)", depth,
        temperature_uk));

  std::normal_distribution<double> velocity(0.0, std::sqrt(kAccelPerGradient * temperature_uk));
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const double z = lo + (hi - lo) * uniform01(rng);
    const double pe = u(z);
    if (uniform01(rng) >= std::exp(-(pe - u_min) / temperature_uk)) continue;
    const double v = velocity(rng);
    const double energy = 0.5 * v * v / kAccelPerGradient + pe;
    if (energy < escape) return {z, v};
  }
  throw ModelError(fmt::format("sample_thermal_state: no bound sample after {} attempts", max_attempts));
}

// ---------------------------------------------------------------------------

TransferModel::TransferModel(const TransferScenario& scenario, const optics::StandingWave& wave, double waist_um)
    : scenario_(scenario),
      k_(2.0 * std::numbers::pi / (wave.wavelength_nm * 1e-3)),
      r_mag_(std::abs(wave.r)),
      r_phase_(std::arg(wave.r)),
      gaussian_(wave.envelope == Envelope::Gaussian),
      focal_um_(scenario.focal_offset_nm * 1e-3),
      rayleigh_um_(wave.rayleigh_nm * 1e-3),
      waist_um_(waist_um) {
  if (!(scenario.approach_speed_um_per_ms > 0)) throw ModelError("approach_speed must be > 0");
  if (!(scenario.timestep_us > 0)) throw ModelError("timestep must be > 0");
  half_span_um_ = scenario.ramp_half_span_waists * waist_um_;
  duration_us_ = 2.0 * half_span_um_ / (scenario.approach_speed_um_per_ms * 1e-3);
  window_lo_ = focal_um_ - 2.0 * rayleigh_um_;
  window_hi_ = focal_um_ + 2.0 * rayleigh_um_;
  steps_ = static_cast<int>(std::ceil(duration_us_ / scenario.timestep_us));
  s_table_.resize(steps_ + 1);
  first_over_film_step_ = steps_ + 1;
  for (int i = 0; i <= steps_; ++i) {
    const double t = i * scenario.timestep_us;
    s_table_[i] = reflected_fraction(t);
    if (beam_offset_um(t) > 0.0 && first_over_film_step_ > steps_) first_over_film_step_ = i;
  }
  s_final_ = s_table_.back();

  // Barriers of the final potential: the surface, every interior maximum and
  // the window edge. Basins are the intervals between them holding a minimum.
  // Without reflection there is no film, so no surface either.
  has_surface_ = r_mag_ > 0.0;
  const double lo = has_surface_ ? 0.0 : window_lo_;
  const double hi = window_hi_;
  const double dz = (wave.wavelength_nm * 1e-3) / 200.0;
  auto u = [&](double z) { return potential(z, s_final_); };
  std::vector<double> barriers{lo};
  const int n = static_cast<int>(std::ceil((hi - lo) / dz));
  double prev = u(lo);
  double cur = u(lo + dz);
  for (int i = 1; i < n; ++i) {
    const double next = u(lo + (i + 1) * dz);
    if (cur > prev && cur >= next)
      barriers.push_back(golden_min([&](double z) { return -u(z); }, lo + (i - 1) * dz, lo + (i + 1) * dz));
    prev = cur;
    cur = next;
  }
  if (hi > barriers.back()) barriers.push_back(hi);
  for (std::size_t i = 0; i + 1 < barriers.size(); ++i) {
    const double a = barriers[i];
    const double b = barriers[i + 1];
    const double zm = golden_min(u, a, b);
    const double um = u(zm);
    const double barrier = std::min(u(a), u(b));
    if (um < barrier - 1e-9 && zm > a && zm < b) basins_.push_back({a, b, barrier, um});
  }
}

double TransferModel::beam_offset_um(double t_us) const {
  return -half_span_um_ + scenario_.approach_speed_um_per_ms * 1e-3 * t_us;
}

double TransferModel::reflected_fraction(double t_us) const {
  // Fraction of a Gaussian spot's power past the device edge.
  return 0.5 * (1.0 + std::erf(std::numbers::sqrt2 * beam_offset_um(t_us) / waist_um_));
}

double TransferModel::potential(double z_um, double s) const {
  const double a = s * r_mag_;
  const double fringe = 1.0 + a * a + 2.0 * a * std::cos(2.0 * k_ * z_um + r_phase_);
  double env = 1.0;
  if (gaussian_) {
    const double q = (z_um - focal_um_) / rayleigh_um_;
    env = 1.0 / (1.0 + q * q);
  }
  return -scenario_.trap_depth_free_uk * env * fringe;
}

double TransferModel::force(double z_um, double s) const {
  const double a = s * r_mag_;
  const double phase = 2.0 * k_ * z_um + r_phase_;
  const double fringe = 1.0 + a * a + 2.0 * a * std::cos(phase);
  const double dfringe = -4.0 * k_ * a * std::sin(phase);
  double env = 1.0;
  double denv = 0.0;
  if (gaussian_) {
    const double q = (z_um - focal_um_) / rayleigh_um_;
    env = 1.0 / (1.0 + q * q);
    denv = -2.0 * q / rayleigh_um_ * env * env;
  }
  return scenario_.trap_depth_free_uk * (denv * fringe + env * dfringe);
}

int TransferModel::classify(double z_um, double v_um_per_us) const {
  const double energy = 0.5 * v_um_per_us * v_um_per_us / kAccelPerGradient + potential(z_um, s_final_);
  for (std::size_t i = 0; i < basins_.size(); ++i) {
    const auto& b = basins_[i];
    if (z_um > b.z_lo_um && z_um <= b.z_hi_um) return energy < b.barrier_uk ? static_cast<int>(i) + 1 : kLost;
  }
  return kLost;
}

double TransferModel::drift_per_step() const {
  if (basins_.empty()) return 0.0;
  const auto& b = *std::min_element(basins_.begin(), basins_.end(),
                                    [](const Basin& x, const Basin& y) { return x.bottom_uk < y.bottom_uk; });
  auto u = [&](double z) { return potential(z, s_final_); };
  // Start a quarter of the way up the deepest well.
  const double zm = golden_min(u, b.z_lo_um, b.z_hi_um);
  const double target = b.bottom_uk + 0.25 * (b.barrier_uk - b.bottom_uk);
  double z = zm;
  const double step = (b.z_hi_um - zm) / 200.0;
  while (z + step < b.z_hi_um && u(z + step) < target) z += step;

  const double dt = scenario_.timestep_us;
  double v = 0.0;
  double a = force(z, s_final_) * kAccelPerGradient;
  const double e0 = u(z);
  constexpr int kSteps = 1000;
  for (int i = 0; i < kSteps; ++i) {
    v += 0.5 * dt * a;
    z += dt * v;
    a = force(z, s_final_) * kAccelPerGradient;
    v += 0.5 * dt * a;
  }
  const double e1 = 0.5 * v * v / kAccelPerGradient + u(z);
  const double drift = std::abs(e1 - e0) / kSteps / scenario_.trap_depth_free_uk;
  return std::isfinite(drift) ? drift : std::numeric_limits<double>::infinity();
}

void TransferModel::validate_timestep() const {
  const double drift = drift_per_step();
  if (!(drift < 1e-4))
    throw ModelError(fmt::format(
        "timestep {} us too large: energy drift per step {:.3g} of trap depth exceeds 1e-4", scenario_.timestep_us,
        drift));
}

TrialOutcome TransferModel::run_from(PhaseSpacePoint start) const {
  const double dt = scenario_.timestep_us;
  double z = start.z_um;
  double v = start.v_um_per_us;
  double a = force(z, s_table_[0]) * kAccelPerGradient;
  for (int i = 1; i <= steps_; ++i) {
    v += 0.5 * dt * a;
    z += dt * v;
    a = force(z, s_table_[i]) * kAccelPerGradient;
    v += 0.5 * dt * a;
    // Once the atom is over the film, reaching the surface ends the trial.
    if ((has_surface_ && z <= 0.0 && i >= first_over_film_step_) || z < window_lo_ || z > window_hi_)
      return {kLost, z, 0.5 * v * v / kAccelPerGradient + potential(z, s_final_)};
  }
  return {classify(z, v), z, 0.5 * v * v / kAccelPerGradient + potential(z, s_final_)};
}

TrialOutcome TransferModel::run_trial(Rng& rng) const {
  const double s0 = s_table_[0];
  AxialPotential initial{[&](double z) { return potential(z, s0); }, window_lo_, window_hi_};
  return run_from(sample_thermal_state(scenario_.temperature_uk, initial, rng));
}

TrialOutcome simulate_transfer(const TransferScenario& scenario, const optics::StandingWave& wave, double waist_um,
                               Rng& rng) {
  TransferModel model(scenario, wave, waist_um);
  model.validate_timestep();
  return model.run_trial(rng);
}

LoadingDistribution loading_distribution(const TransferScenario& scenario, const optics::StandingWave& wave,
                                         double waist_um, std::uint64_t seed, unsigned threads) {
  if (scenario.n_trials < 100)
    throw ModelError(fmt::format("loading_distribution: n_trials must be >= 100, got {}", scenario.n_trials));
  TransferModel model(scenario, wave, waist_um);
  model.validate_timestep();

  const auto n = static_cast<std::size_t>(scenario.n_trials);
  std::vector<int> wells(n, kLost);
  parallel_for(n, threads, [&](std::size_t i) {
    Rng rng = make_rng(seed, stream_key({stream_tag::kMonteCarlo, i}));
    wells[i] = model.run_trial(rng).well;
  });

  LoadingDistribution out;
  out.n_trials = scenario.n_trials;
  std::vector<long> counts(model.basins().size(), 0);
  long lost = 0;
  for (int w : wells) {
    if (w == kLost)
      ++lost;
    else
      ++counts[w - 1];
  }
  const double nt = static_cast<double>(n);
  auto se = [nt](double p) { return std::sqrt(p * (1.0 - p) / nt); };
  for (long c : counts) {
    out.weights.push_back(c / nt);
    out.stderr_weights.push_back(se(c / nt));
  }
  out.lost = lost / nt;
  out.stderr_lost = se(out.lost);
  return out;
}

std::vector<SweepPoint> sweep_focal_offset(const TransferScenario& base, const optics::StandingWave& wave,
                                           double waist_um, const std::vector<double>& offsets_nm,
                                           std::uint64_t seed, unsigned threads) {
  std::vector<SweepPoint> out;
  out.reserve(offsets_nm.size());
  for (double offset : offsets_nm) {
    TransferScenario sc = base;
    sc.focal_offset_nm = offset;
    optics::StandingWave w = wave;
    w.focal_offset_nm = offset;
    out.push_back({offset, loading_distribution(sc, w, waist_um, seed, threads)});
  }
  return out;
}

}  // namespace atomforge::montecarlo
