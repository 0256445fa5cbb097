#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "atomforge/config.hpp"

namespace atomforge::cli {

struct Context {
  std::vector<std::string> argv;
  Config cfg;
  std::string config_bytes;  // exactly what was hashed
  std::filesystem::path out_dir;
  unsigned threads = 1;
  std::ostream* out = nullptr;
  std::vector<std::string> outputs;  // relative to out_dir, in write order

  /// Registers name as an output and returns its full path.
  std::filesystem::path output(const std::string& name);
  void write_text(const std::string& name, const std::string& content);
};

struct LatticeOpts {
  double z_max_nm = 1500.0;
  int points = 3001;
};

struct LoadingOpts {
  std::string offsets;  // comma list, nm; empty = mc.focal_offset
  std::string sweep;    // focal_offset=a:b:n
  int trials = 0;       // 0 = mc.n_trials
};

struct ImagingOpts {
  int frames = 100;
  std::string region = "free";
  int save_frames = 0;
};

struct BlowoutOpts {
  std::string input;
  double center = -50.0;
  double width = 8.0;
  double depth = 0.9;
  double noise = 0.02;
  int points = 81;
  double span_lo = -100.0;
  double span_hi = 0.0;
  double floor = 0.0;
};

struct MixtureOpts {
  std::string input;
  std::string weights = "0.29,0.66,0.05";
  std::string centers = "-60,-40,-25";
  double width = 8.0;
  double noise = 0.02;
  int points = 81;
  double span_lo = -100.0;
  double span_hi = 0.0;
};

struct TwoPhotonOpts {
  std::string d852 = "-320,80,201";
  std::string d1470 = "-100,400,251";
};

struct LifetimeOpts {
  std::string region = "loading";
  int atoms = 200;
  std::string times;  // comma list, s; empty = 12 points over 3 tau
};

struct AutofocusOpts {
  std::string frames_dir;
  std::string z = "-5,5,21";  // lo,hi,n or explicit list with --frames-dir
  double focus = 0.3;
  double blur = 1.0;
  double photons = 0.0;
  int width = 64;
  int height = 48;
  std::string roi;  // x0,y0,w,h
};

struct PlanOpts {
  std::string occupancy;  // empty = all sites filled
  std::string mode = "compress";
};

struct PipelineOpts {
  int shots = 10000;
  int sites = 0;  // 0 = number of row tones
  std::optional<double> device_weight;
  bool no_losses = false;
};

struct AverageOpts {
  std::vector<std::string> inputs;
  std::string background;
  int synthetic = 0;
  bool pgm = false;
};

struct OverlayOpts {
  std::string atom;
  std::string device;
  std::string rule = "peak";
  bool pgm = false;
};

void run_lattice(Context& ctx, const LatticeOpts& o);
void run_loading(Context& ctx, const LoadingOpts& o);
void run_imaging(Context& ctx, const ImagingOpts& o);
void run_blowout(Context& ctx, const BlowoutOpts& o);
void run_mixture(Context& ctx, const MixtureOpts& o);
void run_twophoton(Context& ctx, const TwoPhotonOpts& o);
void run_lifetime(Context& ctx, const LifetimeOpts& o);
void run_autofocus(Context& ctx, const AutofocusOpts& o);
void run_plan(Context& ctx, const PlanOpts& o);
void run_pipeline(Context& ctx, const PipelineOpts& o);
void run_average(Context& ctx, const AverageOpts& o);
void run_overlay(Context& ctx, const OverlayOpts& o);

/// Hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

void write_manifest(Context& ctx, double wall_time_s);

}  // namespace atomforge::cli
