#include "atomforge/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

#include "atomforge/errors.hpp"

namespace atomforge {

double TweezerArray::rayleigh_range_um() const {
  return std::numbers::pi * waist_um * waist_um / (wavelength_nm * 1e-3);
}

double TweezerArray::peak_intensity_mw_per_um2() const {
  return 2.0 * power_per_tweezer_mw / (std::numbers::pi * waist_um * waist_um);
}

double TweezerArray::free_space_depth_uk() const {
  return trap_depth_scale * peak_intensity_mw_per_um2();
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc{} || ptr != end || !std::isfinite(v))
    throw ConfigError(fmt::format("{}: expected a finite number, got '{}'", key, s));
  return v;
}

long long parse_integer(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  long long v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc{} || ptr != end)
    throw ConfigError(fmt::format("{}: expected an integer, got '{}'", key, s));
  return v;
}

std::vector<double> parse_list(const std::string& key, const std::string& raw) {
  std::vector<double> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
  if (out.empty()) throw ConfigError(fmt::format("{}: expected a comma-separated list", key));
  return out;
}

std::string fmt_list(const std::vector<double>& v) { return fmt::format("{}", fmt::join(v, ", ")); }

template <typename Enum>
struct EnumName {
  Enum value;
  const char* name;
};

constexpr EnumName<Envelope> kEnvelopes[] = {{Envelope::PlaneWave, "plane_wave"},
                                             {Envelope::Gaussian, "gaussian"}};
constexpr EnumName<Anchor> kAnchors[] = {{Anchor::LeftEdge, "left_edge"},
                                         {Anchor::Centered, "centered"},
                                         {Anchor::DeviceRegistered, "device_registered"}};
constexpr EnumName<ScanSide> kSides[] = {{ScanSide::Below, "below"}, {ScanSide::Above, "above"}};

template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& key, const std::string& raw, const EnumName<Enum> (&names)[N]) {
  const std::string s = trim(raw);
  for (const auto& n : names)
    if (s == n.name) return n.value;
  std::string allowed;
  for (const auto& n : names) allowed += std::string(allowed.empty() ? "" : "|") + n.name;
  throw ConfigError(fmt::format("{}: unknown value '{}' (expected {})", key, s, allowed));
}

template <typename Enum, std::size_t N>
const char* enum_name(Enum v, const EnumName<Enum> (&names)[N]) {
  for (const auto& n : names)
    if (n.value == v) return n.name;
  return "?";
}

struct Field {
  const char* section;
  const char* key;
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

template <typename Member>
Field real_field(const char* section, const char* key, Member member) {
  return {section, key,
          [member, key](Config& c, const std::string& v) { member(c) = parse_double(key, v); },
          [member](const Config& c) { return fmt::format("{}", member(c)); }};
}

template <typename Member>
Field int_field(const char* section, const char* key, Member member) {
  return {section, key,
          [member, key](Config& c, const std::string& v) {
            member(c) = static_cast<int>(parse_integer(key, v));
          },
          [member](const Config& c) { return fmt::format("{}", member(c)); }};
}

const std::vector<Field>& schema() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
    f.push_back({"run", "seed",
                 [](Config& c, const std::string& v) {
                   const auto s = trim(v);
                   std::uint64_t x = 0;
                   auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
                   if (s.empty() || ec != std::errc{} || p != s.data() + s.size())
                     throw ConfigError(fmt::format("seed: expected an unsigned integer, got '{}'", s));
                   c.seed = x;
                 },
                 [](const Config& c) { return fmt::format("{}", c.seed); }});

    f.push_back(real_field("chip", "film_thickness", [](auto& c) -> auto& { return c.chip.film_thickness_nm; }));
    f.push_back(real_field("chip", "film_index", [](auto& c) -> auto& { return c.chip.film_index; }));
    f.push_back(real_field("chip", "device_pitch", [](auto& c) -> auto& { return c.chip.device_pitch_um; }));
    f.push_back(real_field("chip", "device_width", [](auto& c) -> auto& { return c.chip.device_width_um; }));
    f.push_back(real_field("chip", "device_length", [](auto& c) -> auto& { return c.chip.device_length_um; }));
    f.push_back(real_field("chip", "device_tilt", [](auto& c) -> auto& { return c.chip.device_tilt_mrad; }));
    f.push_back({"chip", "loading_region_offset",
                 [](Config& c, const std::string& v) {
                   auto l = parse_list("loading_region_offset", v);
                   if (l.size() != 2)
                     throw ConfigError("loading_region_offset: expected exactly 2 values (x, y)");
                   c.chip.loading_region_offset_um = {l[0], l[1]};
                 },
                 [](const Config& c) {
                   return fmt::format("{}, {}", c.chip.loading_region_offset_um[0], c.chip.loading_region_offset_um[1]);
                 }});
    f.push_back(int_field("chip", "n_devices", [](auto& c) -> auto& { return c.chip.n_devices; }));

    f.push_back(real_field("tweezer", "wavelength", [](auto& c) -> auto& { return c.tweezer.wavelength_nm; }));
    f.push_back(real_field("tweezer", "power_per_tweezer", [](auto& c) -> auto& { return c.tweezer.power_per_tweezer_mw; }));
    f.push_back(real_field("tweezer", "waist", [](auto& c) -> auto& { return c.tweezer.waist_um; }));
    f.push_back({"tweezer", "tones_x",
                 [](Config& c, const std::string& v) { c.tweezer.tones_x_mhz = parse_list("tones_x", v); },
                 [](const Config& c) { return fmt_list(c.tweezer.tones_x_mhz); }});
    f.push_back({"tweezer", "tones_y",
                 [](Config& c, const std::string& v) { c.tweezer.tones_y_mhz = parse_list("tones_y", v); },
                 [](const Config& c) { return fmt_list(c.tweezer.tones_y_mhz); }});
    f.push_back(real_field("tweezer", "aod_scale", [](auto& c) -> auto& { return c.tweezer.aod_scale_um_per_mhz; }));
    f.push_back(real_field("tweezer", "trap_depth_scale", [](auto& c) -> auto& { return c.tweezer.trap_depth_scale; }));

    f.push_back(real_field("rates", "load_prob", [](auto& c) -> auto& { return c.rates.load_prob; }));
    f.push_back(real_field("rates", "imaging_survival", [](auto& c) -> auto& { return c.rates.imaging_survival; }));
    f.push_back(real_field("rates", "rearrange_survival", [](auto& c) -> auto& { return c.rates.rearrange_survival; }));
    f.push_back(real_field("rates", "lifetime_loading", [](auto& c) -> auto& { return c.rates.lifetime_loading_s; }));
    f.push_back(real_field("rates", "lifetime_device", [](auto& c) -> auto& { return c.rates.lifetime_device_s; }));

    f.push_back(real_field("optics", "kappa", [](auto& c) -> auto& { return c.optics.kappa_mhz; }));
    f.push_back({"optics", "envelope",
                 [](Config& c, const std::string& v) { c.optics.envelope = parse_enum("envelope", v, kEnvelopes); },
                 [](const Config& c) { return std::string(enum_name(c.optics.envelope, kEnvelopes)); }});
    f.push_back(real_field("optics", "focal_offset", [](auto& c) -> auto& { return c.optics.focal_offset_nm; }));

    f.push_back(real_field("imaging", "exposure", [](auto& c) -> auto& { return c.imaging.exposure_ms; }));
    f.push_back(int_field("imaging", "roi_size", [](auto& c) -> auto& { return c.imaging.roi_size_px; }));
    f.push_back(int_field("imaging", "site_pitch", [](auto& c) -> auto& { return c.imaging.site_pitch_px; }));
    f.push_back(int_field("imaging", "margin", [](auto& c) -> auto& { return c.imaging.margin_px; }));
    f.push_back(real_field("imaging", "psf_sigma", [](auto& c) -> auto& { return c.imaging.psf_sigma_px; }));
    f.push_back(real_field("imaging", "signal_per_roi", [](auto& c) -> auto& { return c.imaging.signal_per_roi; }));
    f.push_back(real_field("imaging", "background_per_roi", [](auto& c) -> auto& { return c.imaging.background_per_roi; }));
    f.push_back(real_field("imaging", "device_background_per_roi", [](auto& c) -> auto& { return c.imaging.device_background_per_roi; }));
    f.push_back(real_field("imaging", "threshold", [](auto& c) -> auto& { return c.imaging.threshold; }));
    f.push_back(real_field("imaging", "p_loss", [](auto& c) -> auto& { return c.imaging.p_loss; }));
    f.push_back(real_field("imaging", "device_signal_per_roi", [](auto& c) -> auto& { return c.imaging.device_signal_per_roi; }));
    f.push_back(real_field("imaging", "device_p_loss", [](auto& c) -> auto& { return c.imaging.device_p_loss; }));

    f.push_back(real_field("twophoton", "light_shift", [](auto& c) -> auto& { return c.twophoton.light_shift_mhz; }));
    f.push_back(real_field("twophoton", "gamma_852", [](auto& c) -> auto& { return c.twophoton.gamma_852_mhz; }));
    f.push_back(real_field("twophoton", "gamma_two_photon", [](auto& c) -> auto& { return c.twophoton.gamma_two_photon_mhz; }));
    f.push_back(real_field("twophoton", "amplitude", [](auto& c) -> auto& { return c.twophoton.amplitude; }));
    f.push_back(real_field("twophoton", "loss_rate", [](auto& c) -> auto& { return c.twophoton.loss_rate_per_ms; }));
    f.push_back(real_field("twophoton", "exposure", [](auto& c) -> auto& { return c.twophoton.exposure_ms; }));

    f.push_back(real_field("mc", "temperature", [](auto& c) -> auto& { return c.mc.temperature_uk; }));
    f.push_back(real_field("mc", "approach_speed", [](auto& c) -> auto& { return c.mc.approach_speed_um_per_ms; }));
    f.push_back(real_field("mc", "focal_offset", [](auto& c) -> auto& { return c.mc.focal_offset_nm; }));
    f.push_back(real_field("mc", "timestep", [](auto& c) -> auto& { return c.mc.timestep_us; }));
    f.push_back(int_field("mc", "n_trials", [](auto& c) -> auto& { return c.mc.n_trials; }));
    f.push_back(real_field("mc", "ramp_half_span", [](auto& c) -> auto& { return c.mc.ramp_half_span_waists; }));

    f.push_back(real_field("planner", "compression_time", [](auto& c) -> auto& { return c.planner.compression_ms; }));
    f.push_back({"planner", "anchor",
                 [](Config& c, const std::string& v) { c.planner.anchor = parse_enum("anchor", v, kAnchors); },
                 [](const Config& c) { return std::string(enum_name(c.planner.anchor, kAnchors)); }});
    f.push_back({"planner", "device_anchor",
                 [](Config& c, const std::string& v) {
                   if (trim(v) == "auto")
                     c.planner.device_anchor_mhz.reset();
                   else
                     c.planner.device_anchor_mhz = parse_double("device_anchor", v);
                 },
                 [](const Config& c) {
                   return c.planner.device_anchor_mhz ? fmt::format("{}", *c.planner.device_anchor_mhz)
                                                      : std::string("auto");
                 }});
    f.push_back(real_field("planner", "max_slew", [](auto& c) -> auto& { return c.planner.max_slew_mhz_per_ms; }));
    f.push_back(real_field("planner", "x_speed", [](auto& c) -> auto& { return c.planner.x_speed_um_per_ms; }));
    f.push_back(real_field("planner", "intra_device_spacing", [](auto& c) -> auto& { return c.planner.intra_device_spacing_um; }));
    f.push_back(real_field("planner", "park_offset", [](auto& c) -> auto& { return c.planner.park_offset_um; }));
    f.push_back(real_field("planner", "clearance", [](auto& c) -> auto& { return c.planner.clearance_um; }));
    f.push_back(int_field("planner", "n_slots", [](auto& c) -> auto& { return c.planner.n_slots; }));

    f.push_back(real_field("autofocus", "sigma_space", [](auto& c) -> auto& { return c.autofocus.sigma_space_px; }));
    f.push_back(real_field("autofocus", "sigma_range", [](auto& c) -> auto& { return c.autofocus.sigma_range; }));
    f.push_back(real_field("autofocus", "target_fraction", [](auto& c) -> auto& { return c.autofocus.target_fraction; }));
    f.push_back({"autofocus", "side",
                 [](Config& c, const std::string& v) { c.autofocus.side = parse_enum("side", v, kSides); },
                 [](const Config& c) { return std::string(enum_name(c.autofocus.side, kSides)); }});
    return f;
  }();
  return fields;
}

void require(bool ok, const char* field, const std::string& bound) {
  if (!ok) throw ConfigError(fmt::format("{}: invariant violated ({})", field, bound));
}

void require_probability(double p, const char* field) {
  require(p >= 0.0 && p <= 1.0, field, "must lie in [0, 1]");
}

void require_strictly_increasing(const std::vector<double>& tones, const char* field) {
  require(!tones.empty(), field, "at least one tone");
  for (std::size_t i = 1; i < tones.size(); ++i)
    if (!(tones[i] > tones[i - 1]))
      throw ConfigError(fmt::format(
          "{}: tone crossing/duplicate at index {} ({} MHz after {} MHz); tones must be strictly increasing",
          field, i, tones[i], tones[i - 1]));
}

}  // namespace

void validate(const Config& cfg) {
  const auto& chip = cfg.chip;
  require(chip.film_thickness_nm > 0, "film_thickness", "must be > 0 nm");
  require(chip.film_index > 1, "film_index", "must be > 1");
  require(chip.device_width_um > 0, "device_width", "must be > 0 um");
  require(chip.device_pitch_um > chip.device_width_um, "device_pitch", "must exceed device_width (pitch > width > 0)");
  require(chip.device_length_um > 0, "device_length", "must be > 0 um");
  require(std::abs(chip.device_tilt_mrad) < 50.0, "device_tilt", "|tilt| must be < 50 mrad");
  require(chip.n_devices >= 1, "n_devices", "must be >= 1");

  const auto& tw = cfg.tweezer;
  require(tw.wavelength_nm > 0, "wavelength", "must be > 0 nm");
  require(tw.power_per_tweezer_mw > 0, "power_per_tweezer", "must be > 0 mW");
  require(tw.waist_um > 0, "waist", "must be > 0 um");
  require(tw.aod_scale_um_per_mhz > 0, "aod_scale", "must be > 0 um/MHz");
  require(tw.trap_depth_scale > 0, "trap_depth_scale", "must be > 0");
  require_strictly_increasing(tw.tones_x_mhz, "tones_x");
  require_strictly_increasing(tw.tones_y_mhz, "tones_y");

  const auto& r = cfg.rates;
  require_probability(r.load_prob, "load_prob");
  require_probability(r.imaging_survival, "imaging_survival");
  require_probability(r.rearrange_survival, "rearrange_survival");
  require(r.lifetime_loading_s > 0, "lifetime_loading", "must be > 0 s");
  require(r.lifetime_device_s > 0, "lifetime_device", "must be > 0 s");

  const auto& im = cfg.imaging;
  require(im.exposure_ms > 0, "exposure", "must be > 0 ms");
  require(im.roi_size_px >= 1, "roi_size", "must be >= 1 px");
  require(im.site_pitch_px >= im.roi_size_px, "site_pitch", "must be >= roi_size (ROIs may not overlap)");
  require(im.margin_px >= 0, "margin", "must be >= 0 px");
  require(im.psf_sigma_px > 0, "psf_sigma", "must be > 0 px");
  require(im.signal_per_roi >= 0, "signal_per_roi", "must be >= 0");
  require(im.background_per_roi >= 0, "background_per_roi", "must be >= 0");
  require(im.device_background_per_roi >= 0, "device_background_per_roi", "must be >= 0");
  require(im.device_signal_per_roi >= 0, "device_signal_per_roi", "must be >= 0");
  require_probability(im.p_loss, "p_loss");
  require_probability(im.device_p_loss, "device_p_loss");

  const auto& tp = cfg.twophoton;
  require(tp.gamma_852_mhz > 0, "gamma_852", "must be > 0 MHz");
  require(tp.gamma_two_photon_mhz > 0, "gamma_two_photon", "must be > 0 MHz");
  require(tp.amplitude >= 0, "amplitude", "must be >= 0");
  require(tp.loss_rate_per_ms >= 0, "loss_rate", "must be >= 0");
  require(tp.exposure_ms > 0, "exposure", "must be > 0 ms");

  const auto& mc = cfg.mc;
  require(mc.temperature_uk >= 0, "temperature", "must be >= 0 uK");
  require(mc.approach_speed_um_per_ms > 0, "approach_speed", "must be > 0 um/ms");
  require(mc.timestep_us > 0, "timestep", "must be > 0 us");
  require(mc.n_trials >= 1, "n_trials", "must be >= 1");
  require(mc.ramp_half_span_waists > 0, "ramp_half_span", "must be > 0");

  const auto& pl = cfg.planner;
  require(pl.compression_ms > 0, "compression_time", "must be > 0 ms");
  require(pl.max_slew_mhz_per_ms > 0, "max_slew", "must be > 0 MHz/ms");
  require(pl.x_speed_um_per_ms > 0, "x_speed", "must be > 0 um/ms");
  require(pl.intra_device_spacing_um > 0, "intra_device_spacing", "must be > 0 um");
  require(pl.clearance_um >= 0, "clearance", "must be >= 0 um");
  require(pl.n_slots >= 0, "n_slots", "must be >= 0");

  const auto& af = cfg.autofocus;
  require(af.sigma_space_px > 0, "sigma_space", "must be > 0 px");
  require(af.sigma_range > 0, "sigma_range", "must be > 0");
  require(af.target_fraction > 0 && af.target_fraction <= 1, "target_fraction", "must lie in (0, 1]");
}

Config parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  // Values never contain ';' or '#', so both start a comment anywhere on a line.
  std::string cleaned;
  {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      const auto cut = line.find_first_of(";#");
      cleaned += line.substr(0, cut);
      cleaned += '\n';
    }
  }
  try {
    std::istringstream in(cleaned);
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config syntax error at line {}: {}", e.line(), e.message()));
  }

  Config cfg;
  for (const auto& [section, entries] : tree) {
    if (entries.empty() && !entries.data().empty())
      throw ConfigError(fmt::format("{}: key outside of any section", section));
    bool known_section = false;
    for (const auto& f : schema()) known_section |= section == f.section;
    if (!known_section) throw ConfigError(fmt::format("unknown section [{}]", section));
    for (const auto& [key, value] : entries) {
      const Field* match = nullptr;
      for (const auto& f : schema())
        if (section == f.section && key == f.key) match = &f;
      if (!match) throw ConfigError(fmt::format("unknown key '{}' in section [{}]", key, section));
      match->set(cfg, value.data());
    }
  }
  validate(cfg);
  return cfg;
}

void apply_seed_env(Config& cfg) {
  if (const char* env = std::getenv("ATOMFORGE_SEED"); env && *env) {
    const std::string s = trim(env);
    std::uint64_t x = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || p != s.data() + s.size())
      throw ConfigError(fmt::format("ATOMFORGE_SEED: expected an unsigned integer, got '{}'", s));
    cfg.seed = x;
  }
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("config file not found: {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  Config cfg = parse_config(buf.str());
  apply_seed_env(cfg);
  return cfg;
}

std::string serialize_config(const Config& cfg) {
  std::string out;
  std::string current;
  for (const auto& f : schema()) {
    if (current != f.section) {
      out += fmt::format("{}[{}]\n", out.empty() ? "" : "\n", f.section);
      current = f.section;
    }
    out += fmt::format("{} = {}\n", f.key, f.get(cfg));
  }
  return out;
}

}  // namespace atomforge
