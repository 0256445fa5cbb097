// Acceptance run: one PASS/FAIL line per criterion, exit 1 if any fails.
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "atomforge/autofocus.hpp"
#include "atomforge/cli.hpp"
#include "atomforge/imaging.hpp"
#include "atomforge/montecarlo.hpp"
#include "atomforge/optics.hpp"
#include "atomforge/planner.hpp"
#include "atomforge/spectroscopy.hpp"
#include "json.hpp"

using namespace atomforge;
namespace fs = std::filesystem;
using std::numbers::pi;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;
int ran = 0;
std::set<int> selected;  // empty = all

void criterion(int id, const char* name, double budget_s, const std::function<Outcome()>& body) {
  if (!selected.empty() && !selected.count(id)) return;
  ++ran;
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, fmt::format("exception: {}", e.what())};
  }
  const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = budget_s <= 0 || dt < budget_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  fmt::print("[{}] {:2d} {}: {}{} ({:.2f} s{})\n", pass ? "PASS" : "FAIL", id, name, o.detail,
             in_time ? "" : " [over time budget]", dt, budget_s > 0 ? fmt::format(" / {:.0f} s", budget_s) : "");
  std::fflush(stdout);
}

// --- independent optics oracle --------------------------------------------

std::complex<double> airy_r(double d_nm, double n, double lambda_nm) {
  const double r01 = (1.0 - n) / (1.0 + n);
  const auto e = std::polar(1.0, 4.0 * pi * n * d_nm / lambda_nm);
  return r01 * (1.0 - e) / (1.0 - r01 * r01 * e);
}

Outcome standing_wave() {
  const Config cfg;
  const auto p = optics::lattice_profile(cfg.chip, cfg.tweezer, cfg.optics, 1500.0, 3001);
  const auto r = airy_r(330.0, 2.0, 935.0);
  double phase = -std::arg(r);
  if (phase <= 0) phase += 2 * pi;
  const double z_oracle = phase * 935.0 / (4 * pi);
  const double ratio_oracle = (1 + std::abs(r)) * (1 + std::abs(r));
  const auto& m = p.maxima.front();
  const bool ok = std::abs(m.z_nm - z_oracle) < 1.0 && std::abs(m.ratio - ratio_oracle) < 1e-6 && m.z_nm >= 200 &&
                  m.z_nm <= 350 && m.ratio >= 1.5 && m.ratio <= 2.6;
  return {ok, fmt::format("z1 = {:.3f} nm (oracle {:.3f}), ratio = {:.6f} (oracle {:.6f})", m.z_nm, z_oracle, m.ratio,
                          ratio_oracle)};
}

// --- Monte Carlo loading ---------------------------------------------------

Outcome mc_loading() {
  const Config cfg;
  auto sc = montecarlo::make_scenario(cfg);
  sc.n_trials = 10000;
  std::vector<double> offsets;
  for (int o = -200; o <= 800; o += 100) offsets.push_back(o);
  const auto wave = montecarlo::transfer_wave(cfg.chip, cfg.tweezer, offsets.front());
  const auto sweep = montecarlo::sweep_focal_offset(sc, wave, cfg.tweezer.waist_um, offsets, cfg.seed, 0);
  double best = 0;
  double best_offset = 0;
  double best_se = 0;
  for (const auto& pt : sweep)
    if (pt.distribution.weight(1) > best) {
      best = pt.distribution.weight(1);
      best_se = pt.distribution.stderr_of(1);
      best_offset = pt.focal_offset_nm;
    }
  return {best >= 0.30 && best <= 0.50,
          fmt::format("max z1 fraction {:.4f} +- {:.4f} at focal offset {} nm, T = {} uK, {} um/ms", best, best_se,
                      best_offset, sc.temperature_uk, sc.approach_speed_um_per_ms)};
}

// --- mixture recovery ------------------------------------------------------

Outcome mixture_recovery() {
  spectroscopy::MixtureModel m;
  m.weights = {0.29, 0.66, 0.05};
  m.centers_mhz = {-60.0, -40.0, -25.0};
  m.width_mhz = 8.0;
  const auto det = spectroscopy::linspace(-100.0, 0.0, 81);
  int good = 0;
  double worst = 0;
  for (int rep = 0; rep < 100; ++rep) {
    Rng rng = make_rng(1000 + rep, stream_key({stream_tag::kSpectroscopy, 2}));
    std::normal_distribution<double> noise(0.0, 0.02);
    spectroscopy::SurvivalCurve c;
    c.detunings_mhz = det;
    for (double d : det) c.survival.push_back(spectroscopy::mixture_survival(d, m) + noise(rng));
    const auto fit = spectroscopy::fit_mixture(c, m.centers_mhz, m.width_mhz);
    double err = 0;
    for (int i = 0; i < 3; ++i) err = std::max(err, std::abs(fit.weights[i] - m.weights[i]));
    if (fit.identifiable && err <= 0.05) ++good;
    worst = std::max(worst, err);
  }
  return {good >= 95, fmt::format("{}/100 repetitions within 0.05 per weight (worst error {:.4f})", good, worst)};
}

// --- imaging fidelity ------------------------------------------------------

double exact_tail_fidelity(double bg, double sig, int t) {
  // Log-space Poisson terms summed directly.
  double s_le = 0;
  double b_le = 0;
  for (int k = 0; k <= t; ++k) {
    s_le += std::exp(k * std::log(sig) - sig - std::lgamma(k + 1.0));
    b_le += std::exp(k * std::log(bg) - bg - std::lgamma(k + 1.0));
  }
  return 1.0 - 0.5 * (s_le + (1.0 - b_le));
}

std::vector<int> synthetic_sums(const ImagingParams& p, imaging::Region region, std::uint64_t seed) {
  const int sites = 10;
  const int frames = 1000;
  const auto model = imaging::emission_model(p, region);
  std::vector<int> sums;
  for (int f = 0; f < frames; ++f) {
    Rng rng = make_rng(seed, stream_key({stream_tag::kImaging, 0xACC, static_cast<std::uint64_t>(f)}));
    std::vector<bool> occ(sites);
    for (int s = 0; s < sites; ++s) occ[s] = uniform01(rng) < 0.55;
    const auto frame = imaging::render_frame(occ, p.exposure_ms, p, model, seed, f);
    const auto d = imaging::decode_occupancy(frame, p.threshold);
    sums.insert(sums.end(), d.roi_sums.begin(), d.roi_sums.end());
  }
  return sums;
}

Outcome imaging_fidelity() {
  ImagingParams p;
  const auto free_fit = imaging::fit_histogram(synthetic_sums(p, imaging::Region::FreeSpace, 42));
  double brute_best = -1;
  int brute_t = -1;
  const int t_max = static_cast<int>(std::ceil(free_fit.signal_mean + 10 * std::sqrt(free_fit.signal_mean) + 10));
  for (int t = 0; t <= t_max; ++t) {
    const double f = exact_tail_fidelity(free_fit.background_mean, free_fit.signal_mean, t);
    if (f > brute_best) {
      brute_best = f;
      brute_t = t;
    }
  }
  const auto dev_fit = imaging::fit_histogram(synthetic_sums(p, imaging::Region::OnDevice, 42));
  const bool ok = free_fit.bimodal && free_fit.fidelity >= 0.99 && std::abs(free_fit.fidelity - brute_best) < 1e-6 &&
                  dev_fit.bimodal && std::abs(dev_fit.fidelity - 0.86) <= 0.03 && std::abs(dev_fit.threshold - 5) <= 1;
  return {ok, fmt::format("free space: fidelity {:.6f} at t = {} (brute force {:.6f} at t = {}); on device: fidelity "
                          "{:.4f} at t = {} (bg {:.2f}, signal {:.2f})",
                          free_fit.fidelity, free_fit.threshold, brute_best, brute_t, dev_fit.fidelity,
                          dev_fit.threshold, dev_fit.background_mean, dev_fit.signal_mean)};
}

// --- planner ---------------------------------------------------------------

Outcome planner_exhaustive() {
  const Config cfg;
  const auto layout = planner::row_layout(cfg.tweezer, cfg.chip);
  int bad = 0;
  double worst_slope = 0;
  double worst_mid = 0;
  for (unsigned mask = 0; mask < 512; ++mask) {
    std::vector<bool> occ(9);
    for (int i = 0; i < 9; ++i) occ[i] = (mask >> i) & 1u;
    const auto plan =
        planner::plan_compression(occ, layout.row_tones_mhz, layout.pitch_mhz, cfg.planner, layout.row_axis);
    const auto check = planner::check_plan(plan);
    std::vector<double> finals;
    for (const auto& t : plan.tones) {
      if (t.dropped()) continue;
      finals.push_back(t.final_frequency());
      for (const auto& s : t.segments) {
        if (s.kind != planner::SegmentKind::Chirp) continue;
        const auto c = planner::chirp(s.f0_mhz, s.f1_mhz, s.duration_ms);
        const double h = c.duration_ms / 2;
        worst_slope = std::max({worst_slope, std::abs(c.slope(0.0)), std::abs(c.slope(c.duration_ms))});
        worst_mid = std::max({worst_mid, std::abs(c.frequency(h - 1e-12) - c.frequency(h + 1e-12)),
                              std::abs(c.slope(h - 1e-12) - c.slope(h + 1e-12)) * 1e-3});
      }
    }
    const auto slots = planner::target_slots(layout.row_tones_mhz, layout.pitch_mhz,
                                             static_cast<int>(finals.size()), cfg.planner);
    bool defect_free = finals.size() == slots.size();
    for (std::size_t j = 0; defect_free && j < finals.size(); ++j)
      defect_free = std::abs(finals[j] - slots[j]) < 1e-9 && (j == 0 || finals[j] > finals[j - 1]);
    if (!check.ok() || !defect_free) ++bad;
  }
  const bool ok = bad == 0 && worst_slope < 1e-9 && worst_mid < 1e-9;
  return {ok, fmt::format("{} of 512 patterns failed; max end slope {:.2e} MHz/ms, midpoint jump {:.2e}", bad,
                          worst_slope, worst_mid)};
}

// --- pipeline --------------------------------------------------------------

double binomial_tail(int n, double p, int k) {
  double s = 0;
  for (int j = k; j <= n; ++j)
    s += std::exp(std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) + j * std::log(p) +
                  (n - j) * std::log1p(-p));
  return s;
}

Outcome pipeline_stats() {
  const Config cfg;
  planner::PipelineOptions opt;
  opt.n_sites = 9;
  opt.n_shots = 10000;
  RateTable lossless = cfg.rates;
  lossless.imaging_survival = 1.0;
  lossless.rearrange_survival = 1.0;
  const auto a = planner::simulate_pipeline(lossless, opt, cfg.seed, 0);
  double worst_z = 0;
  for (int k = 1; k <= 9; ++k) {
    const double tail = binomial_tail(9, lossless.load_prob, k);
    const double sigma = std::sqrt(tail * (1 - tail) / opt.n_shots);
    worst_z = std::max(worst_z, std::abs(a.p_raw[k - 1] - tail) / sigma);
  }
  const auto b = planner::simulate_pipeline(cfg.rates, opt, cfg.seed, 0);
  bool above = true;
  for (int k = 0; k < 9; ++k) above = above && b.p_corrected[k] > b.p_raw[k];
  return {worst_z <= 3.0 && above,
          fmt::format("lossless: worst deviation {:.2f} sigma from P(Bin(9, {}) >= k); with losses corrected > raw in "
                      "every slot: {} (slot 1 {:.4f} vs {:.4f})",
                      worst_z, lossless.load_prob, above ? "yes" : "no", b.p_corrected[0], b.p_raw[0])};
}

// --- two-photon map --------------------------------------------------------

Outcome two_photon() {
  const TwoPhotonParams p;
  const auto a = spectroscopy::linspace(-320.0, 80.0, 201);
  const auto b = spectroscopy::linspace(-100.0, 400.0, 251);
  const double cell = b[1] - b[0];
  const auto map = spectroscopy::two_photon_map(a, b, p);
  const double peak = *std::max_element(map.detected.begin(), map.detected.end());
  double at_res = 0;
  for (double d852 : {0.0, -251.0})
    for (double d1470 : b) at_res = std::max(at_res, spectroscopy::two_photon_response({d852, d1470}, p).detected);
  // Ridge: in every row carrying at least 10% of the peak, the best 1470 detuning
  // sits on delta_852 + delta_1470 = light shift.
  double worst = 0;
  int rows = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < b.size(); ++k)
      if (map.at(i, k) > map.at(i, best)) best = k;
    if (map.at(i, best) < 0.1 * peak) continue;
    ++rows;
    worst = std::max(worst, std::abs(a[i] + b[best] - p.light_shift_mhz));
  }
  const bool ok = at_res < 0.01 * peak && rows > 0 && worst <= cell;
  return {ok, fmt::format("signal at the D2 resonances {:.2e} of peak; ridge offset <= {:.2f} MHz over {} rows "
                          "(cell {} MHz, light shift {} MHz)",
                          at_res / peak, worst, rows, cell, p.light_shift_mhz)};
}

// --- lifetime --------------------------------------------------------------

Outcome lifetime() {
  std::string detail;
  bool ok = true;
  for (double tau : {13.6, 0.78}) {
    const auto t = spectroscopy::linspace(0.0, 3.0 * tau, 13);
    double sum = 0;
    double sum2 = 0;
    int covered = 0;
    for (int seed = 0; seed < 20; ++seed) {
      Rng rng = make_rng(seed, stream_key({stream_tag::kSpectroscopy, 3}));
      const auto fit = spectroscopy::fit_lifetime(spectroscopy::lifetime_curve(t, tau, 200, rng));
      sum += fit.tau_s;
      sum2 += fit.tau_s * fit.tau_s;
      covered += std::abs(fit.tau_s - tau) <= 3 * fit.tau_err_s;
    }
    const double mean = sum / 20;
    const double sd = std::sqrt(std::max(0.0, sum2 / 20 - mean * mean));
    const bool this_ok = std::abs(mean - tau) <= 0.05 * tau && covered >= 18;
    ok = ok && this_ok;
    detail += fmt::format("{}tau {} s: mean {:.4f} s (sd {:.4f}), {}/20 within 3 sigma", detail.empty() ? "" : "; ", tau,
                          mean, sd, covered);
  }
  return {ok, detail};
}

// --- autofocus -------------------------------------------------------------

Outcome autofocus_check() {
  std::vector<double> z;
  // Default scan grid of the autofocus-scan subcommand.
  for (int i = 0; i <= 20; ++i) z.push_back(-5.0 + 0.5 * i);
  const double step = z[1] - z[0];
  int hits = 0;
  double worst = 0;
  for (int s = 0; s < 20; ++s) {
    Rng rng = make_rng(500 + s, stream_key({stream_tag::kAutofocus, 1}));
    autofocus::SyntheticImager imager;
    imager.sharp = autofocus::device_pattern(64, 48, rng);
    imager.focus_z_um = -3.0 + 6.0 * uniform01(rng);
    imager.blur_px_per_um = 1.0;
    imager.photons_per_count = 1.0;
    imager.seed = 500 + s;
    const auto scan = autofocus::scan_focus(z, imager, AutofocusParams{});
    const double err = std::abs(scan.best_z_um - imager.focus_z_um);
    worst = std::max(worst, err);
    hits += err <= step;
  }
  bool affine_zero = true;
  for (int a = -3; a <= 3; ++a) {
    autofocus::Image img(17, 11);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) img.at(x, y) = 100.0 + a * 1.5 * x - 0.25 * (a + 2) * y;
    affine_zero = affine_zero && autofocus::laplacian_score(img) == 0.0;
  }
  bool fixed = true;
  for (double c : {0.0, 1.0, 37.125, 4095.0}) {
    const autofocus::Image img(20, 15, c);
    fixed = fixed && autofocus::bilateral_filter(img, 1.5, 20.0).pixels == img.pixels;
  }
  return {hits == 20 && affine_zero && fixed,
          fmt::format("{}/20 stacks within one step ({} um, worst {:.3f} um); affine Laplacian zero: {}; constant "
                      "images fixed: {}",
                      hits, step, worst, affine_zero ? "yes" : "no", fixed ? "yes" : "no")};
}

// --- determinism -----------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every file under dir, keyed by relative path. The manifest's wall time is
// dropped, everything else must match byte for byte.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).generic_string();
    std::string body = slurp(e.path());
    if (rel == "manifest.json") {
      auto m = nlohmann::ordered_json::parse(body);
      m.erase("wall_time_s");
      // The output directory and thread count are part of argv; normalize them.
      auto& argv = m["command_line"];
      for (std::size_t i = 0; i < argv.size(); ++i) {
        if (argv[i].get<std::string>().find(dir.string()) == 0) argv[i] = "OUT";
        if (argv[i] == "--threads" && i + 1 < argv.size()) argv[i + 1] = "N";
      }
      body = m.dump();
    }
    files[rel] = body;
  }
  return files;
}

Outcome determinism() {
  const auto root = fs::temp_directory_path() / "atomforge_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);

  // Inputs for the file-consuming subcommands.
  std::ostringstream sink;
  const auto inputs = root / "inputs";
  auto call = [&](std::vector<std::string> args) {
    std::ostringstream err;
    const int code = cli::dispatch(args, sink, err);
    if (code != 0) throw std::runtime_error(fmt::format("{} exited {}: {}", args.front(), code, err.str()));
  };
  call({"simulate-imaging", "--frames", "8", "--save-frames", "5", "--out", (inputs / "img").string()});
  call({"average", "--synthetic", "6", "--out", (inputs / "avg").string()});
  call({"fit-blowout", "--out", (inputs / "blow").string()});
  {
    std::ifstream in(inputs / "blow" / "curve.csv");
    std::ofstream out(inputs / "curve.csv");
    std::string line;
    while (std::getline(in, line)) out << line.substr(0, line.rfind(',')) << "\n";
  }
  const auto frames = (inputs / "img" / "frames").string();
  const auto avg = (inputs / "avg" / "average.raw").string();

  const std::vector<std::vector<std::string>> commands{
      {"lattice", "--points", "1001"},
      {"simulate-loading", "--trials", "200", "--offsets", "0,200,400"},
      {"simulate-imaging", "--frames", "60", "--save-frames", "2"},
      {"simulate-imaging", "--frames", "60", "--region", "device"},
      {"fit-blowout"},
      {"fit-blowout", "--input", (inputs / "curve.csv").string()},
      {"fit-mixture"},
      {"map-twophoton", "--d852", "-320,80,41", "--d1470", "-100,400,51"},
      {"lifetime"},
      {"lifetime", "--region", "device"},
      {"autofocus-scan"},
      {"autofocus-scan", "--frames-dir", frames, "--z", "-1,0,1,2,3"},
      {"plan", "--occupancy", "101101011"},
      {"plan", "--occupancy", "110011101", "--mode", "one-per-device"},
      {"pipeline", "--shots", "2000"},
      {"average", "--synthetic", "12", "--pgm"},
      {"average", "--inputs", frames, "--background", frames},
      {"overlay", "--pgm"},
      {"overlay", "--atom", avg, "--device", avg, "--rule", "norm"},
  };
  int mismatched = 0;
  std::string first_bad;
  std::set<std::string> covered;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    std::map<std::string, std::string> reference;
    for (const char* threads : {"1", "1", "4"}) {
      const auto out = root / fmt::format("run{}_{}", i, threads);
      fs::remove_all(out);
      auto args = commands[i];
      for (const auto& extra : {"--seed", "17", "--threads", threads, "--out"}) args.emplace_back(extra);
      args.push_back(out.string());
      call(args);
      auto snap = snapshot(out);
      if (reference.empty()) {
        reference = std::move(snap);
      } else if (snap != reference) {
        ++mismatched;
        if (first_bad.empty()) first_bad = commands[i].front();
      }
    }
    covered.insert(commands[i].front());
  }
  fs::remove_all(root);
  return {mismatched == 0 && covered.size() == 12,
          fmt::format("{} subcommands, {} invocations x 3 runs (threads 1, 1, 4): {} mismatched{}", covered.size(),
                      commands.size(), mismatched, first_bad.empty() ? "" : " (first: " + first_bad + ")")};
}

}  // namespace

// Optional arguments pick criteria by number, e.g. `acceptance 1 5`.
int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  criterion(1, "standing-wave structure", 1.0, standing_wave);
  criterion(2, "Monte Carlo loading", 120.0, mc_loading);
  criterion(3, "mixture recovery", 30.0, mixture_recovery);
  criterion(4, "imaging fidelity", 30.0, imaging_fidelity);
  criterion(5, "planner exhaustive check", 10.0, planner_exhaustive);
  criterion(6, "pipeline statistics", 60.0, pipeline_stats);
  criterion(7, "two-photon map", 10.0, two_photon);
  criterion(8, "lifetime fits", 0.0, lifetime);
  criterion(9, "autofocus", 0.0, autofocus_check);
  criterion(10, "determinism", 0.0, determinism);
  fmt::print("{} of {} criteria passed\n", ran - failures, ran);
  return failures == 0 ? 0 : 1;
}
