#include "cli.hpp"

#include <fmt/format.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "atomforge/errors.hpp"
#include "commands.hpp"
#include "json.hpp"

namespace atomforge::cli {

namespace fs = std::filesystem;

fs::path Context::output(const std::string& name) {
  outputs.push_back(name);
  const fs::path p = out_dir / name;
  std::error_code ec;
  fs::create_directories(p.parent_path(), ec);
  if (ec) throw IoError(fmt::format("cannot create directory {}: {}", p.parent_path().string(), ec.message()));
  return p;
}

void Context::write_text(const std::string& name, const std::string& content) {
  const fs::path p = output(name);
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(fmt::format("cannot open {} for writing", p.string()));
  f << content;
  if (!f) throw IoError(fmt::format("write failed: {}", p.string()));
}

namespace {

const char* kind_name(int code) {
  switch (code) {
    case 2: return "config";
    case 3: return "model";
    case 4: return "io";
  }
  return "internal";
}

int report(std::ostream& err, int code, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"] = kind_name(code);
  j["code"] = code;
  j["message"] = message;
  err << j.dump() << "\n";
  return code;
}

void load(Context& ctx, const std::string& config_path, CLI::Option* seed_opt, std::uint64_t seed) {
  if (!config_path.empty()) {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw ConfigError(fmt::format("config file not found: {}", config_path));
    std::ostringstream buf;
    buf << in.rdbuf();
    ctx.config_bytes = buf.str();
    ctx.cfg = parse_config(ctx.config_bytes);
  } else {
    ctx.cfg = Config{};
    ctx.config_bytes = serialize_config(ctx.cfg);
  }
  apply_seed_env(ctx.cfg);
  if (seed_opt->count() > 0) ctx.cfg.seed = seed;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();

  CLI::App app{"atomforge: tweezer-array and nanophotonic-chip simulation toolkit"};
  app.name("atomforge");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ATOMFORGE_VERSION));

  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  unsigned threads = 0;
  std::vector<CLI::Option*> seed_opts;

  auto sub = [&](const char* name, const char* help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--config", config_path, "Configuration file");
    seed_opts.push_back(s->add_option("--seed", seed, "Seed; overrides the config and ATOMFORGE_SEED"));
    s->add_option("--out", out_dir, "Output directory")->capture_default_str();
    s->add_option("--threads", threads, "Worker threads, 0 = hardware concurrency")->capture_default_str();
    return s;
  };

  LatticeOpts lattice;
  auto* s_lattice = sub("lattice", "Standing-wave intensity and Stark-shift profile above the film");
  s_lattice->add_option("--z-max", lattice.z_max_nm, "Profile height in nm")->capture_default_str();
  s_lattice->add_option("--points", lattice.points, "Grid points")->capture_default_str();

  LoadingOpts loading;
  auto* s_loading = sub("simulate-loading", "Monte Carlo transfer into the standing-wave maxima");
  s_loading->add_option("--offsets", loading.offsets, "Comma list of focal offsets in nm");
  s_loading->add_option("--sweep", loading.sweep, "focal_offset=a:b:n, n offsets from a to b nm")
      ->excludes("--offsets");
  s_loading->add_option("--trials", loading.trials, "Trials per offset (default mc.n_trials)");

  ImagingOpts imaging;
  auto* s_imaging = sub("simulate-imaging", "Synthetic frames, ROI histogram and fidelity fit");
  s_imaging->add_option("--frames", imaging.frames, "Number of frames")->capture_default_str();
  s_imaging->add_option("--region", imaging.region, "free | device")->capture_default_str();
  s_imaging->add_option("--save-frames", imaging.save_frames, "Write the first N frames as raw + sidecar");

  BlowoutOpts blowout;
  auto* s_blowout = sub("fit-blowout", "Lorentzian fit of a blow-out survival curve");
  s_blowout->add_option("input,--input", blowout.input, "CSV with detuning_mhz,survival; synthetic when absent");
  s_blowout->add_option("--center", blowout.center, "Synthetic dip center, MHz")->capture_default_str();
  s_blowout->add_option("--width", blowout.width, "Synthetic FWHM, MHz")->capture_default_str();
  s_blowout->add_option("--depth", blowout.depth, "Synthetic depth")->capture_default_str();
  s_blowout->add_option("--noise", blowout.noise, "Synthetic additive noise sigma")->capture_default_str();
  s_blowout->add_option("--points", blowout.points, "Synthetic detuning points")->capture_default_str();
  s_blowout->add_option("--from", blowout.span_lo, "Synthetic scan start, MHz")->capture_default_str();
  s_blowout->add_option("--to", blowout.span_hi, "Synthetic scan end, MHz")->capture_default_str();
  s_blowout->add_option("--floor", blowout.floor, "Fixed floor used by the fit")->capture_default_str();

  MixtureOpts mixture;
  auto* s_mixture = sub("fit-mixture", "Three-maximum mixture weights from a blow-out curve");
  s_mixture->add_option("input,--input", mixture.input, "CSV with detuning_mhz,survival; synthetic when absent");
  s_mixture->add_option("--weights", mixture.weights, "Synthetic weights w1,w2,w3")->capture_default_str();
  s_mixture->add_option("--centers", mixture.centers, "Component centers c1,c2,c3 in MHz")->capture_default_str();
  s_mixture->add_option("--width", mixture.width, "Component FWHM, MHz")->capture_default_str();
  s_mixture->add_option("--noise", mixture.noise, "Synthetic additive noise sigma")->capture_default_str();
  s_mixture->add_option("--points", mixture.points, "Synthetic detuning points")->capture_default_str();
  s_mixture->add_option("--from", mixture.span_lo, "Synthetic scan start, MHz")->capture_default_str();
  s_mixture->add_option("--to", mixture.span_hi, "Synthetic scan end, MHz")->capture_default_str();

  TwoPhotonOpts twophoton;
  auto* s_twophoton = sub("map-twophoton", "Detected signal over the two drive detunings");
  s_twophoton->add_option("--d852", twophoton.d852, "lo,hi,n in MHz")->capture_default_str();
  s_twophoton->add_option("--d1470", twophoton.d1470, "lo,hi,n in MHz")->capture_default_str();

  LifetimeOpts lifetime;
  auto* s_lifetime = sub("lifetime", "Synthetic trap-lifetime decay and fit");
  s_lifetime->add_option("--region", lifetime.region, "loading | device")->capture_default_str();
  s_lifetime->add_option("--atoms", lifetime.atoms, "Atoms per hold time")->capture_default_str();
  s_lifetime->add_option("--times", lifetime.times, "Comma list of hold times in s");

  AutofocusOpts autofocus;
  auto* s_autofocus = sub("autofocus-scan", "Focus score over a Z scan");
  s_autofocus->add_option("--frames-dir", autofocus.frames_dir, "Directory of raw frames, one per z, sorted by name");
  s_autofocus->add_option("--z", autofocus.z, "lo,hi,n for synthetic scans, explicit list with --frames-dir")
      ->capture_default_str();
  s_autofocus->add_option("--focus", autofocus.focus, "Synthetic true focus, um")->capture_default_str();
  s_autofocus->add_option("--blur", autofocus.blur, "Synthetic blur, px per um of defocus")->capture_default_str();
  s_autofocus->add_option("--photons", autofocus.photons, "Synthetic photons per count, 0 = noiseless");
  s_autofocus->add_option("--width", autofocus.width, "Synthetic image width")->capture_default_str();
  s_autofocus->add_option("--height", autofocus.height, "Synthetic image height")->capture_default_str();
  s_autofocus->add_option("--roi", autofocus.roi, "Score only x0,y0,w,h");

  PlanOpts plan;
  auto* s_plan = sub("plan", "Rearrangement plan for one occupancy pattern");
  s_plan->add_option("--occupancy", plan.occupancy, "0/1 per site, e.g. 101101011");
  s_plan->add_option("--mode", plan.mode, "compress | one-per-device | n-on-one:K")->capture_default_str();

  PipelineOpts pipeline;
  auto* s_pipeline = sub("pipeline", "Load, image, compress and rearrange statistics");
  s_pipeline->add_option("--shots", pipeline.shots, "Number of shots")->capture_default_str();
  s_pipeline->add_option("--sites", pipeline.sites, "Loading sites (default: row tones)");
  s_pipeline->add_option("--device-weight", pipeline.device_weight, "Probability of ending in the first maximum");
  s_pipeline->add_flag("--no-losses", pipeline.no_losses, "Set imaging and rearrangement survival to 1");

  AverageOpts average;
  auto* s_average = sub("average", "Average raw frames, optionally subtracting a background");
  s_average->add_option("--inputs", average.inputs, "Raw frame files or directories");
  s_average->add_option("--background", average.background, "Raw frame file or directory for the background");
  s_average->add_option("--synthetic", average.synthetic, "Render N synthetic frames instead of reading inputs");
  s_average->add_flag("--pgm", average.pgm, "Also write a greymap");

  OverlayOpts overlay;
  auto* s_overlay = sub("overlay", "Scale an atom image onto a device image");
  s_overlay->add_option("--atom", overlay.atom, "Averaged atom image (.raw); synthetic when absent");
  s_overlay->add_option("--device", overlay.device, "Averaged device image (.raw); synthetic when absent");
  s_overlay->add_option("--rule", overlay.rule, "peak | norm")->capture_default_str();
  s_overlay->add_flag("--pgm", overlay.pgm, "Also write a greymap");

  std::vector<const char*> cargv{"atomforge"};
  for (const auto& a : args) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << ATOMFORGE_VERSION << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    return report(err, 2, e.what());
  }

  try {
    Context ctx;
    ctx.argv.push_back("atomforge");
    ctx.argv.insert(ctx.argv.end(), args.begin(), args.end());
    ctx.out_dir = out_dir;
    ctx.threads = threads;
    ctx.out = &out;
    CLI::Option* seed_opt = nullptr;
    for (auto* o : seed_opts)
      if (o->count() > 0) seed_opt = o;
    load(ctx, config_path, seed_opt ? seed_opt : seed_opts.front(), seed);

    std::error_code ec;
    fs::create_directories(ctx.out_dir, ec);
    if (ec) throw IoError(fmt::format("cannot create output directory {}: {}", ctx.out_dir.string(), ec.message()));

    if (s_lattice->parsed()) run_lattice(ctx, lattice);
    else if (s_loading->parsed()) run_loading(ctx, loading);
    else if (s_imaging->parsed()) run_imaging(ctx, imaging);
    else if (s_blowout->parsed()) run_blowout(ctx, blowout);
    else if (s_mixture->parsed()) run_mixture(ctx, mixture);
    else if (s_twophoton->parsed()) run_twophoton(ctx, twophoton);
    else if (s_lifetime->parsed()) run_lifetime(ctx, lifetime);
    else if (s_autofocus->parsed()) run_autofocus(ctx, autofocus);
    else if (s_plan->parsed()) run_plan(ctx, plan);
    else if (s_pipeline->parsed()) run_pipeline(ctx, pipeline);
    else if (s_average->parsed()) run_average(ctx, average);
    else if (s_overlay->parsed()) run_overlay(ctx, overlay);

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(ctx, wall);
    return 0;
  } catch (const Error& e) {
    return report(err, static_cast<int>(e.kind()), e.what());
  } catch (const fs::filesystem_error& e) {
    return report(err, 4, e.what());
  } catch (const std::exception& e) {
    return report(err, 3, e.what());
  }
}

}  // namespace atomforge::cli
