#include "commands.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "atomforge/analysis.hpp"
#include "atomforge/autofocus.hpp"
#include "atomforge/errors.hpp"
#include "atomforge/frame_io.hpp"
#include "atomforge/imaging.hpp"
#include "atomforge/montecarlo.hpp"
#include "atomforge/optics.hpp"
#include "atomforge/parallel.hpp"
#include "atomforge/planner.hpp"
#include "atomforge/rng.hpp"
#include "atomforge/spectroscopy.hpp"
#include "json.hpp"

namespace atomforge::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Sub-stream ids for synthetic inputs generated by the CLI itself.
constexpr std::uint64_t kOccupancyStream = 0x4f43;
constexpr std::uint64_t kBlowoutNoise = 1;
constexpr std::uint64_t kMixtureNoise = 2;
constexpr std::uint64_t kLifetimeCounts = 3;
constexpr std::uint64_t kPatternStream = 0x5054;

std::vector<double> parse_numbers(const std::string& what, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (item.find_first_not_of(" \t", used) != std::string::npos || !std::isfinite(v)) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("{}: expected comma-separated numbers, got '{}'", what, text));
    }
  }
  if (out.empty()) throw ConfigError(fmt::format("{}: expected comma-separated numbers, got '{}'", what, text));
  return out;
}

std::vector<double> parse_grid(const std::string& what, const std::string& text) {
  const auto v = parse_numbers(what, text);
  if (v.size() != 3 || v[2] < 2 || v[2] != std::floor(v[2]) || !(v[1] > v[0]))
    throw ConfigError(fmt::format("{}: expected lo,hi,n with hi > lo and integer n >= 2, got '{}'", what, text));
  return spectroscopy::linspace(v[0], v[1], static_cast<int>(v[2]));
}

template <std::size_t N>
std::array<double, N> parse_fixed(const std::string& what, const std::string& text) {
  const auto v = parse_numbers(what, text);
  if (v.size() != N) throw ConfigError(fmt::format("{}: expected {} values, got '{}'", what, N, text));
  std::array<double, N> a{};
  std::copy(v.begin(), v.end(), a.begin());
  return a;
}

spectroscopy::SurvivalCurve read_curve(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open {}", path));
  spectroscopy::SurvivalCurve c;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (line_no == 1 && line.find_first_of("abcdefghijklmnopqrstuvwxyz") != std::string::npos) continue;  // header
    std::stringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
      throw IoError(fmt::format("{}:{}: expected detuning_mhz,survival", path, line_no));
    try {
      c.detunings_mhz.push_back(std::stod(a));
      c.survival.push_back(std::stod(b));
    } catch (const std::exception&) {
      throw IoError(fmt::format("{}:{}: not a number", path, line_no));
    }
  }
  return c;
}

std::string json_number_or_null(double v) { return std::isfinite(v) ? fmt::format("{}", v) : "null"; }

ojson finite_or_null(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

std::vector<bool> random_occupancy(std::uint64_t seed, std::uint64_t index, int n_sites, double p) {
  Rng rng = make_rng(seed, stream_key({stream_tag::kImaging, kOccupancyStream, index}));
  std::vector<bool> occ(static_cast<std::size_t>(n_sites));
  for (std::size_t i = 0; i < occ.size(); ++i) occ[i] = uniform01(rng) < p;
  return occ;
}

int row_sites(const Config& cfg) { return static_cast<int>(planner::row_layout(cfg.tweezer, cfg.chip).row_tones_mhz.size()); }

void write_image_outputs(Context& ctx, const std::string& stem, const analysis::AveragedImage& img, bool pgm) {
  const fs::path raw = ctx.output(stem + ".raw");
  ctx.output(stem + ".json");
  io::write_image(raw, img);
  if (pgm) io::write_pgm(ctx.output(stem + ".pgm"), img.width, img.height, img.pixels);
}

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      const auto more = io::list_raw_files(in);
      files.insert(files.end(), more.begin(), more.end());
    } else {
      files.emplace_back(in);
    }
  }
  return files;
}

std::vector<imaging::Frame> synthetic_frames(const Config& cfg, int n, std::uint64_t stream_base, unsigned threads,
                                             double fill = -1.0) {
  const int sites = row_sites(cfg);
  std::vector<imaging::Frame> frames(static_cast<std::size_t>(n));
  parallel_for(frames.size(), threads, [&](std::size_t f) {
    const auto occ = random_occupancy(cfg.seed, stream_base + f, sites, fill < 0 ? cfg.rates.load_prob : fill);
    frames[f] = imaging::render_frame(occ, cfg.imaging.exposure_ms, cfg.imaging,
                                      imaging::emission_model(cfg.imaging, imaging::Region::FreeSpace), cfg.seed,
                                      stream_base + f);
  });
  return frames;
}

}  // namespace

// ---------------------------------------------------------------------------

void run_lattice(Context& ctx, const LatticeOpts& o) {
  const auto profile = optics::lattice_profile(ctx.cfg.chip, ctx.cfg.tweezer, ctx.cfg.optics, o.z_max_nm, o.points);
  std::ostringstream csv;
  optics::write_lattice_csv(csv, profile);
  ctx.write_text("lattice.csv", csv.str());

  std::string maxima = "index,z_nm,intensity_ratio,depth_uk,stark_shift_mhz\n";
  for (std::size_t i = 0; i < profile.maxima.size(); ++i) {
    const auto& m = profile.maxima[i];
    maxima += fmt::format("{},{},{},{},{}\n", i + 1, m.z_nm, m.ratio, m.depth_uk, m.stark_shift_mhz);
  }
  ctx.write_text("maxima.csv", maxima);
  const auto r = optics::membrane_reflection(ctx.cfg.chip.film_thickness_nm, ctx.cfg.chip.film_index,
                                             ctx.cfg.tweezer.wavelength_nm);
  fmt::print(*ctx.out, "|r| = {:.4f}, z1 = {:.1f} nm, peak ratio = {:.4f}\n", std::abs(r.amplitude),
             profile.maxima.front().z_nm, profile.maxima.front().ratio);
}

void run_loading(Context& ctx, const LoadingOpts& o) {
  auto scenario = montecarlo::make_scenario(ctx.cfg);
  if (o.trials > 0) scenario.n_trials = o.trials;
  std::vector<double> offsets{scenario.focal_offset_nm};
  if (!o.sweep.empty()) {
    const std::string key = "focal_offset=";
    if (o.sweep.rfind(key, 0) != 0) throw ConfigError(fmt::format("sweep: expected focal_offset=a:b:n, got '{}'", o.sweep));
    std::string grid = o.sweep.substr(key.size());
    std::replace(grid.begin(), grid.end(), ':', ',');
    offsets = parse_grid("sweep", grid);
  } else if (!o.offsets.empty()) {
    offsets = parse_numbers("offsets", o.offsets);
  }
  const auto wave = montecarlo::transfer_wave(ctx.cfg.chip, ctx.cfg.tweezer, offsets.front());
  const auto sweep = montecarlo::sweep_focal_offset(scenario, wave, ctx.cfg.tweezer.waist_um, offsets, ctx.cfg.seed,
                                                    ctx.threads);

  std::string csv = "offset_nm,w_z1,w_z2,w_z3,w_zhigher,w_lost,se_z1,se_z2,se_z3,se_zhigher,se_lost\n";
  double best = -1.0;
  double best_offset = 0.0;
  for (const auto& pt : sweep) {
    const auto& d = pt.distribution;
    double higher = 0.0;
    for (std::size_t i = 3; i < d.weights.size(); ++i) higher += d.weights[i];
    const double se_higher = std::sqrt(higher * (1.0 - higher) / d.n_trials);
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", pt.focal_offset_nm, d.weight(1), d.weight(2), d.weight(3),
                       higher, d.lost, d.stderr_of(1), d.stderr_of(2), d.stderr_of(3), se_higher, d.stderr_lost);
    if (d.weight(1) > best) {
      best = d.weight(1);
      best_offset = pt.focal_offset_nm;
    }
  }
  ctx.write_text("loading.csv", csv);
  ojson summary;
  summary["n_trials"] = scenario.n_trials;
  summary["temperature_uk"] = scenario.temperature_uk;
  summary["approach_speed_um_per_ms"] = scenario.approach_speed_um_per_ms;
  summary["trap_depth_free_uk"] = scenario.trap_depth_free_uk;
  summary["best_offset_nm"] = best_offset;
  summary["best_w_z1"] = best;
  ctx.write_text("summary.json", summary.dump(2) + "\n");
  fmt::print(*ctx.out, "max z1 fraction {:.3f} at focal offset {} nm\n", best, best_offset);
}

void run_imaging(Context& ctx, const ImagingOpts& o) {
  if (o.frames < 1) throw ConfigError("frames: must be >= 1");
  imaging::Region region;
  if (o.region == "free")
    region = imaging::Region::FreeSpace;
  else if (o.region == "device")
    region = imaging::Region::OnDevice;
  else
    throw ConfigError(fmt::format("region: expected free or device, got '{}'", o.region));
  const auto& p = ctx.cfg.imaging;
  const auto model = imaging::emission_model(p, region);
  const int sites = row_sites(ctx.cfg);
  const auto n = static_cast<std::size_t>(o.frames);

  std::vector<std::vector<bool>> truth(n);
  std::vector<imaging::OccupancyMatrix> decoded(n);
  std::vector<imaging::Frame> kept(static_cast<std::size_t>(std::clamp(o.save_frames, 0, o.frames)));
  parallel_for(n, ctx.threads, [&](std::size_t f) {
    truth[f] = random_occupancy(ctx.cfg.seed, f, sites, ctx.cfg.rates.load_prob);
    auto frame = imaging::render_frame(truth[f], p.exposure_ms, p, model, ctx.cfg.seed, f);
    decoded[f] = imaging::decode_occupancy(frame, p.threshold);
    if (f < kept.size()) kept[f] = std::move(frame);
  });

  std::vector<int> sums;
  std::size_t correct = 0;
  for (std::size_t f = 0; f < n; ++f)
    for (std::size_t s = 0; s < decoded[f].roi_sums.size(); ++s) {
      sums.push_back(decoded[f].roi_sums[s]);
      correct += decoded[f].occupied[s] == truth[f][s];
    }
  const int max_sum = *std::max_element(sums.begin(), sums.end());
  std::vector<long> hist(static_cast<std::size_t>(max_sum) + 1, 0);
  for (int s : sums) ++hist[s];
  std::string csv = "photons,count\n";
  for (std::size_t k = 0; k < hist.size(); ++k) csv += fmt::format("{},{}\n", k, hist[k]);
  ctx.write_text("histogram.csv", csv);

  const auto fit = imaging::fit_histogram(sums);
  ojson j;
  j["region"] = o.region;
  j["n_rois"] = sums.size();
  j["bimodal"] = fit.bimodal;
  j["background_mean"] = fit.background_mean;
  j["signal_mean"] = fit.signal_mean;
  j["background_weight"] = fit.background_weight;
  j["signal_weight"] = fit.signal_weight;
  j["threshold"] = fit.threshold;
  j["fidelity"] = finite_or_null(fit.fidelity);
  j["fidelity_at_config_threshold"] =
      fit.bimodal ? finite_or_null(imaging::threshold_fidelity(fit.background_mean, fit.signal_mean,
                                                               static_cast<int>(std::floor(p.threshold))))
                  : ojson(nullptr);
  j["config_threshold"] = p.threshold;
  j["decode_accuracy"] = static_cast<double>(correct) / static_cast<double>(sums.size());
  j["em_iterations"] = fit.iterations;
  ctx.write_text("fit.json", j.dump(2) + "\n");

  for (std::size_t f = 0; f < kept.size(); ++f) {
    const std::string stem = fmt::format("frames/frame_{:05d}", f);
    const fs::path raw = ctx.output(stem + ".raw");
    ctx.output(stem + ".json");
    io::write_frame(raw, kept[f]);
  }
  fmt::print(*ctx.out, "{} ROIs, fidelity {} at threshold {}\n", sums.size(), json_number_or_null(fit.fidelity),
             fit.threshold);
}

void run_blowout(Context& ctx, const BlowoutOpts& o) {
  spectroscopy::SurvivalCurve curve;
  if (!o.input.empty()) {
    curve = read_curve(o.input);
  } else {
    if (o.points < 2) throw ConfigError("points: must be >= 2");
    Rng rng = make_rng(ctx.cfg.seed, stream_key({stream_tag::kSpectroscopy, kBlowoutNoise}));
    std::normal_distribution<double> noise(0.0, o.noise);
    curve.detunings_mhz = spectroscopy::linspace(o.span_lo, o.span_hi, o.points);
    for (double d : curve.detunings_mhz)
      curve.survival.push_back(spectroscopy::blowout_survival(d, o.center, o.width, o.depth, o.floor) +
                               (o.noise > 0 ? noise(rng) : 0.0));
  }
  spectroscopy::BlowoutFitOptions opt;
  opt.floor = o.floor;
  const auto fit = spectroscopy::fit_blowout(curve, opt);

  std::string csv = "detuning_mhz,survival,model\n";
  for (std::size_t i = 0; i < curve.detunings_mhz.size(); ++i) {
    const double d = curve.detunings_mhz[i];
    const double m = fit.has_dip ? fit.baseline * spectroscopy::blowout_survival(d, fit.center_mhz, fit.width_mhz,
                                                                                 fit.depth, fit.floor)
                                 : std::numeric_limits<double>::quiet_NaN();
    csv += fmt::format("{},{},{}\n", d, curve.survival[i], json_number_or_null(m));
  }
  ctx.write_text("curve.csv", csv);
  ojson j;
  j["has_dip"] = fit.has_dip;
  j["center_mhz"] = fit.center_mhz;
  j["center_err_mhz"] = finite_or_null(fit.center_err);
  j["width_mhz"] = fit.width_mhz;
  j["width_err_mhz"] = finite_or_null(fit.width_err);
  j["depth"] = fit.depth;
  j["depth_err"] = finite_or_null(fit.depth_err);
  j["baseline"] = fit.baseline;
  j["baseline_err"] = finite_or_null(fit.baseline_err);
  j["floor"] = fit.floor;
  j["residual_norm"] = fit.residual_norm;
  j["iterations"] = fit.iterations;
  ctx.write_text("fit.json", j.dump(2) + "\n");
  if (fit.has_dip)
    fmt::print(*ctx.out, "dip at {:.3f} MHz, FWHM {:.3f} MHz, depth {:.3f}\n", fit.center_mhz, fit.width_mhz, fit.depth);
  else
    fmt::print(*ctx.out, "no dip above the contrast threshold\n");
}

void run_mixture(Context& ctx, const MixtureOpts& o) {
  const auto centers = parse_fixed<3>("centers", o.centers);
  spectroscopy::SurvivalCurve curve;
  if (!o.input.empty()) {
    curve = read_curve(o.input);
  } else {
    if (o.points < 3) throw ConfigError("points: must be >= 3");
    spectroscopy::MixtureModel m;
    m.weights = parse_fixed<3>("weights", o.weights);
    m.centers_mhz = centers;
    m.width_mhz = o.width;
    Rng rng = make_rng(ctx.cfg.seed, stream_key({stream_tag::kSpectroscopy, kMixtureNoise}));
    std::normal_distribution<double> noise(0.0, o.noise);
    curve.detunings_mhz = spectroscopy::linspace(o.span_lo, o.span_hi, o.points);
    for (double d : curve.detunings_mhz)
      curve.survival.push_back(spectroscopy::mixture_survival(d, m) + (o.noise > 0 ? noise(rng) : 0.0));
  }
  const auto fit = spectroscopy::fit_mixture(curve, centers, o.width);

  std::string csv = "detuning_mhz,survival\n";
  for (std::size_t i = 0; i < curve.detunings_mhz.size(); ++i)
    csv += fmt::format("{},{}\n", curve.detunings_mhz[i], curve.survival[i]);
  ctx.write_text("curve.csv", csv);
  ojson j;
  j["identifiable"] = fit.identifiable;
  j["centers_mhz"] = centers;
  j["width_mhz"] = o.width;
  ojson w = ojson::array();
  ojson e = ojson::array();
  for (int i = 0; i < 3; ++i) {
    w.push_back(finite_or_null(fit.weights[i]));
    e.push_back(finite_or_null(fit.weight_errs[i]));
  }
  j["weights"] = w;
  j["weight_errs"] = e;
  j["residual_norm"] = fit.residual_norm;
  ctx.write_text("fit.json", j.dump(2) + "\n");
  if (fit.identifiable)
    fmt::print(*ctx.out, "weights z1..z3 = {:.3f}, {:.3f}, {:.3f}\n", fit.weights[0], fit.weights[1], fit.weights[2]);
  else
    fmt::print(*ctx.out, "components not identifiable: centers closer than half a width\n");
}

void run_twophoton(Context& ctx, const TwoPhotonOpts& o) {
  const auto a = parse_grid("d852", o.d852);
  const auto b = parse_grid("d1470", o.d1470);
  const auto map = spectroscopy::two_photon_map(a, b, ctx.cfg.twophoton);
  std::string csv = "delta_852_mhz,delta_1470_mhz,detected\n";
  std::size_t best = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k) {
      const std::size_t idx = i * b.size() + k;
      csv += fmt::format("{},{},{}\n", a[i], b[k], map.detected[idx]);
      if (map.detected[idx] > map.detected[best]) best = idx;
    }
  ctx.write_text("map.csv", csv);
  ojson j;
  j["max_detected"] = map.detected[best];
  j["argmax_delta_852_mhz"] = a[best / b.size()];
  j["argmax_delta_1470_mhz"] = b[best % b.size()];
  j["argmax_sum_mhz"] = a[best / b.size()] + b[best % b.size()];
  j["light_shift_mhz"] = ctx.cfg.twophoton.light_shift_mhz;
  ctx.write_text("summary.json", j.dump(2) + "\n");
  fmt::print(*ctx.out, "peak {:.3f} at d852 = {} MHz, d1470 = {} MHz\n", map.detected[best], a[best / b.size()],
             b[best % b.size()]);
}

void run_lifetime(Context& ctx, const LifetimeOpts& o) {
  double tau = 0.0;
  if (o.region == "loading")
    tau = ctx.cfg.rates.lifetime_loading_s;
  else if (o.region == "device")
    tau = ctx.cfg.rates.lifetime_device_s;
  else
    throw ConfigError(fmt::format("region: expected loading or device, got '{}'", o.region));
  const auto times = o.times.empty() ? spectroscopy::linspace(0.0, 3.0 * tau, 13) : parse_numbers("times", o.times);
  Rng rng = make_rng(ctx.cfg.seed, stream_key({stream_tag::kSpectroscopy, kLifetimeCounts}));
  const auto data = spectroscopy::lifetime_curve(times, tau, o.atoms, rng);
  const auto fit = spectroscopy::fit_lifetime(data);
  std::string csv = "hold_s,survivors,n_atoms\n";
  for (std::size_t i = 0; i < times.size(); ++i) csv += fmt::format("{},{},{}\n", times[i], data.survivors[i], data.n_atoms);
  ctx.write_text("data.csv", csv);
  ojson j;
  j["region"] = o.region;
  j["tau_true_s"] = tau;
  j["tau_s"] = fit.tau_s;
  j["tau_err_s"] = fit.tau_err_s;
  ctx.write_text("fit.json", j.dump(2) + "\n");
  fmt::print(*ctx.out, "tau = {:.4f} +- {:.4f} s (true {} s)\n", fit.tau_s, fit.tau_err_s, tau);
}

void run_autofocus(Context& ctx, const AutofocusOpts& o) {
  std::optional<autofocus::Subregion> roi;
  if (!o.roi.empty()) {
    const auto r = parse_fixed<4>("roi", o.roi);
    roi = autofocus::Subregion{static_cast<int>(r[0]), static_cast<int>(r[1]), static_cast<int>(r[2]),
                               static_cast<int>(r[3])};
  }
  const auto& params = ctx.cfg.autofocus;
  autofocus::FocusScan scan;
  if (!o.frames_dir.empty()) {
    const auto files = io::list_raw_files(o.frames_dir);
    const auto z = parse_numbers("z", o.z);
    if (z.size() != files.size())
      throw ConfigError(fmt::format("z: {} positions for {} frames in {}", z.size(), files.size(), o.frames_dir));
    std::vector<double> scores(files.size());
    std::vector<imaging::Frame> frames;
    for (const auto& f : files) frames.push_back(io::read_frame(f));
    parallel_for(frames.size(), ctx.threads, [&](std::size_t i) {
      autofocus::Image img(frames[i].width, frames[i].height);
      std::copy(frames[i].counts.begin(), frames[i].counts.end(), img.pixels.begin());
      scores[i] = autofocus::focus_score(img, params, roi);
    });
    scan = autofocus::analyze_scan(z, scores, params.target_fraction, params.side);
  } else {
    const auto z = parse_grid("z", o.z);
    Rng rng = make_rng(ctx.cfg.seed, stream_key({stream_tag::kAutofocus, kPatternStream}));
    autofocus::SyntheticImager imager;
    imager.sharp = autofocus::device_pattern(o.width, o.height, rng);
    imager.focus_z_um = o.focus;
    imager.blur_px_per_um = o.blur;
    imager.photons_per_count = o.photons;
    imager.seed = ctx.cfg.seed;
    scan = autofocus::scan_focus(z, imager, params, roi, ctx.threads);
  }
  std::string csv = "z_um,score\n";
  for (std::size_t i = 0; i < scan.z_um.size(); ++i) csv += fmt::format("{},{}\n", scan.z_um[i], scan.scores[i]);
  ctx.write_text("scan.csv", csv);
  ojson j;
  j["best_z_um"] = scan.best_z_um;
  j["recommended_z_um"] = scan.recommended_z_um;
  j["target_fraction"] = scan.target_fraction;
  j["side"] = params.side == ScanSide::Below ? "below" : "above";
  j["out_of_range"] = scan.out_of_range;
  j["target_reached"] = scan.target_reached;
  ctx.write_text("result.json", j.dump(2) + "\n");
  fmt::print(*ctx.out, "best z = {} um, recommended z = {:.4f} um{}\n", scan.best_z_um, scan.recommended_z_um,
             scan.out_of_range ? " (maximum on the scan edge: focus may be out of range)" : "");
}

void run_plan(Context& ctx, const PlanOpts& o) {
  const auto layout = planner::row_layout(ctx.cfg.tweezer, ctx.cfg.chip);
  const auto occ = o.occupancy.empty() ? std::vector<bool>(layout.row_tones_mhz.size(), true)
                                       : planner::parse_occupancy(o.occupancy);
  std::optional<planner::DeviceMode> mode;
  if (o.mode != "compress") mode = planner::parse_mode(o.mode);

  auto compressed = planner::plan_compression(occ, layout.row_tones_mhz, layout.pitch_mhz, ctx.cfg.planner,
                                              layout.row_axis);
  planner::DevicePlan dp;
  dp.plan = compressed;
  if (mode)
    dp = planner::plan_to_devices(compressed, ctx.cfg.chip, ctx.cfg.tweezer, ctx.cfg.planner, *mode,
                                  ctx.cfg.mc.approach_speed_um_per_ms);
  const auto check = planner::check_plan(dp.plan);
  if (!check.ok())
    throw ModelError(fmt::format("plan failed verification: {}", check.problems.empty() ? "" : check.problems.front()));

  const std::string plan_json = planner::plan_to_json(dp.plan);
  ctx.write_text("plan.json", plan_json + "\n");
  ojson r;
  r["feasible"] = true;
  r["mode"] = o.mode;
  r["row_axis"] = planner::to_string(layout.row_axis);
  r["n_atoms"] = std::count(occ.begin(), occ.end(), true);
  r["duration_ms"] = dp.plan.duration_ms;
  r["compression_ms"] = compressed.duration_ms;
  r["x_move_ms"] = dp.x_move_ms;
  r["y_move_ms"] = dp.y_move_ms;
  r["motion_free"] = dp.plan.motion_free();
  r["min_separation_mhz"] = finite_or_null(check.min_separation_mhz);
  r["max_slew_mhz_per_ms"] = check.max_slew_mhz_per_ms;
  ojson targets = ojson::array();
  for (const auto& t : dp.targets) {
    ojson jt;
    jt["tone_id"] = t.tone_id;
    jt["device"] = t.device;
    jt["position_um"] = t.position_um;
    jt["parked"] = t.parked;
    targets.push_back(jt);
  }
  r["targets"] = targets;
  ctx.write_text("report.json", r.dump(2) + "\n");
  *ctx.out << plan_json << "\n" << r.dump(2) << "\n";
}

void run_pipeline(Context& ctx, const PipelineOpts& o) {
  RateTable rates = ctx.cfg.rates;
  if (o.no_losses) {
    rates.imaging_survival = 1.0;
    rates.rearrange_survival = 1.0;
  }
  planner::PipelineOptions opt;
  opt.n_shots = o.shots;
  opt.n_sites = o.sites > 0 ? o.sites : row_sites(ctx.cfg);
  opt.device_weight = o.device_weight;
  const auto st = planner::simulate_pipeline(rates, opt, ctx.cfg.seed, ctx.threads);
  std::string csv = "slot,p_loaded,p_raw,p_corrected,stderr\n";
  for (std::size_t k = 0; k < st.p_raw.size(); ++k)
    csv += fmt::format("{},{},{},{},{}\n", k + 1, st.p_loaded[k], st.p_raw[k], st.p_corrected[k], st.stderr_raw[k]);
  ctx.write_text("pipeline.csv", csv);
  ojson j;
  j["n_shots"] = st.n_shots;
  j["n_sites"] = st.n_sites;
  j["load_prob"] = rates.load_prob;
  j["imaging_survival"] = rates.imaging_survival;
  j["rearrange_survival"] = rates.rearrange_survival;
  j["device_weight"] = o.device_weight ? ojson(*o.device_weight) : ojson(nullptr);
  j["mean_atoms_image1"] = st.mean_image1;
  j["mean_atoms_image2"] = st.mean_image2;
  ctx.write_text("summary.json", j.dump(2) + "\n");
  fmt::print(*ctx.out, "mean atoms: image 1 {:.3f}, image 2 {:.3f}\n", st.mean_image1, st.mean_image2);
}

void run_average(Context& ctx, const AverageOpts& o) {
  std::vector<imaging::Frame> frames;
  if (o.synthetic > 0) {
    frames = synthetic_frames(ctx.cfg, o.synthetic, 0, ctx.threads);
  } else {
    const auto files = expand_inputs(o.inputs);
    if (files.empty()) throw ConfigError("average: give --inputs or --synthetic N");
    for (const auto& f : files) frames.push_back(io::read_frame(f));
  }
  auto img = analysis::average_frames(frames, ctx.threads);
  if (!o.background.empty()) {
    std::vector<imaging::Frame> bg;
    for (const auto& f : expand_inputs({o.background})) bg.push_back(io::read_frame(f));
    if (bg.empty()) throw ConfigError("background: no raw frames found");
    img = analysis::subtract_background(img, analysis::average_frames(bg, ctx.threads));
  } else if (o.synthetic > 0) {
    // Synthetic runs subtract an equally sized stack of empty frames.
    const auto bg = synthetic_frames(ctx.cfg, o.synthetic, static_cast<std::uint64_t>(o.synthetic), ctx.threads, 0.0);
    img = analysis::subtract_background(img, analysis::average_frames(bg, ctx.threads));
  }
  write_image_outputs(ctx, "average", img, o.pgm);
  fmt::print(*ctx.out, "averaged {} frames ({}x{}), offset {}\n", img.n_frames, img.width, img.height, img.offset);
}

void run_overlay(Context& ctx, const OverlayOpts& o) {
  analysis::ScaleRule rule;
  if (o.rule == "peak")
    rule = analysis::ScaleRule::MatchPeak;
  else if (o.rule == "norm")
    rule = analysis::ScaleRule::MatchNorm;
  else
    throw ConfigError(fmt::format("rule: expected peak or norm, got '{}'", o.rule));

  analysis::AveragedImage atom;
  if (!o.atom.empty()) {
    atom = io::read_image(o.atom);
  } else {
    const auto frames = synthetic_frames(ctx.cfg, 50, 0, ctx.threads);
    const auto bg = synthetic_frames(ctx.cfg, 50, 50, ctx.threads, 0.0);
    atom = analysis::subtract_background(analysis::average_frames(frames, ctx.threads),
                                         analysis::average_frames(bg, ctx.threads));
  }
  analysis::AveragedImage device;
  if (!o.device.empty()) {
    device = io::read_image(o.device);
  } else {
    // Device illumination image: the stripe background alone, noiseless.
    const auto layout = imaging::empty_frame(row_sites(ctx.cfg), ctx.cfg.imaging);
    auto model = imaging::emission_model(ctx.cfg.imaging, imaging::Region::FreeSpace);
    model.background_per_roi = 0.0;
    device = analysis::to_image(layout);
    device.pixels = imaging::expected_counts(layout, std::vector<bool>(layout.rois.size(), false),
                                             ctx.cfg.imaging.exposure_ms, ctx.cfg.imaging, model);
  }
  const auto ov = analysis::overlay_devices(atom, device, rule);
  write_image_outputs(ctx, "overlay", ov.composite, o.pgm);
  fmt::print(*ctx.out, "overlay scale {}\n", ov.scale);
}

}  // namespace atomforge::cli
