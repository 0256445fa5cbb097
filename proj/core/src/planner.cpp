#include "atomforge/planner.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "atomforge/errors.hpp"
#include "atomforge/parallel.hpp"
#include "atomforge/rng.hpp"
#include "json.hpp"

namespace atomforge::planner {

namespace {

constexpr double kTimeTol = 1e-9;
constexpr double kFreqTol = 1e-9;

void check_slew(const ChirpProfile& c, const PlannerParams& p, const char* what) {
  if (c.peak_slew() > p.max_slew_mhz_per_ms * (1.0 + 1e-12))
    throw ModelError(fmt::format("{}: chirp {} -> {} MHz in {} ms needs {} MHz/ms, above max_slew {}", what,
                                 c.f_start_mhz, c.f_end_mhz, c.duration_ms, c.peak_slew(), p.max_slew_mhz_per_ms));
}

Segment make_move(Axis axis, double f0, double f1, double t0, double duration) {
  const SegmentKind kind = f0 == f1 ? SegmentKind::Hold : SegmentKind::Chirp;
  return {kind, axis, f0, f1, t0, duration};
}

// Pads every live tone with HOLD up to time t.
void extend_to(TrajectoryPlan& plan, double t) {
  for (auto& tone : plan.tones) {
    if (tone.dropped()) continue;
    const double end = tone.end_time_ms();
    if (end < t - kTimeTol) {
      const double f = tone.final_frequency();
      tone.segments.push_back({SegmentKind::Hold, tone.axis, f, f, end, t - end});
    }
  }
  plan.duration_ms = std::max(plan.duration_ms, t);
}

std::vector<ToneTimeline*> live_tones(TrajectoryPlan& plan, Axis axis) {
  std::vector<ToneTimeline*> out;
  for (auto& t : plan.tones)
    if (t.axis == axis && !t.dropped()) out.push_back(&t);
  std::sort(out.begin(), out.end(),
            [](const ToneTimeline* a, const ToneTimeline* b) { return a->final_frequency() < b->final_frequency(); });
  return out;
}

}  // namespace

const char* to_string(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::Hold: return "HOLD";
    case SegmentKind::Chirp: return "CHIRP";
    case SegmentKind::Drop: return "DROP";
  }
  return "?";
}

const char* to_string(Axis axis) { return axis == Axis::X ? "X" : "Y"; }

// ---------------------------------------------------------------------------

double ChirpProfile::frequency(double t) const {
  const double df = f_end_mhz - f_start_mhz;
  const double u = std::clamp(t / duration_ms, 0.0, 1.0);
  if (u <= 0.5) return f_start_mhz + 2.0 * df * u * u;
  return f_end_mhz - 2.0 * df * (1.0 - u) * (1.0 - u);
}

double ChirpProfile::slope(double t) const {
  const double df = f_end_mhz - f_start_mhz;
  const double u = std::clamp(t / duration_ms, 0.0, 1.0);
  return 4.0 * df * (u <= 0.5 ? u : 1.0 - u) / duration_ms;
}

double ChirpProfile::peak_slew() const { return 2.0 * std::abs(f_end_mhz - f_start_mhz) / duration_ms; }

ChirpProfile chirp(double f_start, double f_end, double duration) {
  if (!(duration > 0)) throw ModelError(fmt::format("chirp: duration must be > 0, got {}", duration));
  return {f_start, f_end, duration};
}

double Segment::frequency(double t) const {
  if (kind != SegmentKind::Chirp) return f0_mhz;
  return ChirpProfile{f0_mhz, f1_mhz, duration_ms}.frequency(t - t_start_ms);
}

double ToneTimeline::end_time_ms() const {
  return segments.empty() ? 0.0 : segments.back().t_start_ms + segments.back().duration_ms;
}

bool ToneTimeline::dropped() const { return !segments.empty() && segments.back().kind == SegmentKind::Drop; }

double ToneTimeline::final_frequency() const { return segments.empty() ? 0.0 : segments.back().f1_mhz; }

std::optional<double> ToneTimeline::frequency(double t) const {
  if (segments.empty()) return std::nullopt;
  for (const auto& s : segments) {
    if (s.kind == SegmentKind::Drop && t >= s.t_start_ms) return std::nullopt;
    if (t <= s.t_start_ms + s.duration_ms) return s.frequency(std::max(t, s.t_start_ms));
  }
  return segments.back().f1_mhz;
}

bool TrajectoryPlan::motion_free() const {
  for (const auto& tone : tones)
    for (const auto& s : tone.segments)
      if (s.kind == SegmentKind::Chirp) return false;
  return true;
}

// ---------------------------------------------------------------------------

RowLayout row_layout(const TweezerArray& tw, const ChipGeometry& geom) {
  if (tw.tones_x_mhz.empty() || tw.tones_y_mhz.empty()) throw ModelError("row_layout: both AOD axes need a tone");
  if (tw.tones_x_mhz.size() > 1 && tw.tones_y_mhz.size() > 1)
    throw ModelError("row_layout: only single-row arrays are supported (one axis must carry a single tone)");
  RowLayout r;
  if (tw.tones_x_mhz.size() > 1) {
    r.row_axis = Axis::X;
    r.row_tones_mhz = tw.tones_x_mhz;
    r.transverse_tone_mhz = tw.tones_y_mhz.front();
  } else {
    r.row_axis = Axis::Y;
    r.row_tones_mhz = tw.tones_y_mhz;
    r.transverse_tone_mhz = tw.tones_x_mhz.front();
  }
  r.pitch_mhz = geom.device_pitch_um / tw.aod_scale_um_per_mhz;
  return r;
}

std::vector<double> target_slots(const std::vector<double>& tones, double pitch, int n_atoms, const PlannerParams& p) {
  std::vector<double> slots;
  if (n_atoms <= 0 || tones.empty()) return slots;
  double anchor = tones.front();
  switch (p.anchor) {
    case Anchor::LeftEdge: anchor = tones.front(); break;
    case Anchor::Centered: anchor = 0.5 * (tones.front() + tones.back()) - 0.5 * (n_atoms - 1) * pitch; break;
    case Anchor::DeviceRegistered: anchor = p.device_anchor_mhz.value_or(tones.front()); break;
  }
  for (int j = 0; j < n_atoms; ++j) slots.push_back(anchor + j * pitch);
  return slots;
}

TrajectoryPlan plan_compression(const std::vector<bool>& occupancy, const std::vector<double>& tones, double pitch,
                                const PlannerParams& p, Axis axis) {
  if (occupancy.size() != tones.size())
    throw ModelError(fmt::format("plan_compression: occupancy has {} sites but there are {} tones", occupancy.size(),
                                 tones.size()));
  for (std::size_t i = 1; i < tones.size(); ++i)
    if (!(tones[i] > tones[i - 1])) throw ModelError("plan_compression: tones must be strictly increasing");
  if (!(pitch > 0)) throw ModelError("plan_compression: target pitch must be > 0");

  const int n_atoms = static_cast<int>(std::count(occupancy.begin(), occupancy.end(), true));
  const int n_slots = p.n_slots > 0 ? p.n_slots : static_cast<int>(tones.size());
  if (n_atoms > n_slots)
    throw ModelError(fmt::format("plan_compression: overflow, {} atoms for {} target slots", n_atoms, n_slots));
  const auto slots = target_slots(tones, pitch, n_atoms, p);

  bool moving = false;
  for (std::size_t i = 0, j = 0; i < tones.size(); ++i)
    if (occupancy[i]) moving |= std::abs(slots[j++] - tones[i]) > kFreqTol;
  const double T = moving ? p.compression_ms : 0.0;

  TrajectoryPlan plan;
  for (std::size_t i = 0, j = 0; i < tones.size(); ++i) {
    ToneTimeline tone{static_cast<int>(i), axis, {}};
    if (!occupancy[i]) {
      tone.segments.push_back({SegmentKind::Drop, axis, tones[i], tones[i], 0.0, 0.0});
    } else {
      const double target = slots[j++];
      if (moving && target != tones[i]) check_slew(chirp(tones[i], target, T), p, "plan_compression");
      tone.segments.push_back(make_move(axis, tones[i], target, 0.0, T));
    }
    plan.tones.push_back(std::move(tone));
  }
  plan.duration_ms = T;
  return plan;
}

DeviceMode parse_mode(const std::string& text) {
  if (text == "one-per-device") return DeviceMode::one_per_device();
  const std::string prefix = "n-on-one:";
  if (text.rfind(prefix, 0) == 0) {
    const std::string num = text.substr(prefix.size());
    int k = 0;
    std::size_t used = 0;
    try {
      k = std::stoi(num, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == num.size() && used > 0 && k >= 1) return DeviceMode::n_on_one(k);
  }
  throw ConfigError(fmt::format("mode: expected one-per-device or n-on-one:K with K >= 1, got '{}'", text));
}

int device_capacity(const ChipGeometry& geom, const PlannerParams& p) {
  return static_cast<int>(std::floor(geom.device_length_um / p.intra_device_spacing_um + 1e-9)) + 1;
}

DevicePlan plan_to_devices(const TrajectoryPlan& compressed, const ChipGeometry& geom, const TweezerArray& tw,
                           const PlannerParams& p, DeviceMode mode, double approach_speed) {
  const RowLayout layout = row_layout(tw, geom);
  const double scale = tw.aod_scale_um_per_mhz;
  if (!(approach_speed > 0)) throw ModelError("plan_to_devices: approach speed must be > 0");

  DevicePlan out;
  out.plan = compressed;
  TrajectoryPlan& plan = out.plan;
  for (const auto& t : plan.tones)
    if (t.axis != layout.row_axis)
      throw ModelError("plan_to_devices: compressed plan is not on the configured row axis");
  auto row = live_tones(plan, layout.row_axis);
  const int n_atoms = static_cast<int>(row.size());
  if (n_atoms == 0) return out;

  const Axis transverse_axis = layout.row_axis == Axis::Y ? Axis::X : Axis::Y;
  const int transverse_id = static_cast<int>(plan.tones.size());
  const double approach_um = 0.5 * geom.device_pitch_um;

  if (mode.kind == DeviceMode::Kind::OnePerDevice) {
    // Feasibility first.
    if (layout.row_axis != Axis::Y)
      throw ModelError("plan_to_devices: one-per-device needs the row along Y, across the devices");
    const double gap = 0.5 * (geom.device_pitch_um - geom.device_width_um);
    if (gap < p.clearance_um)
      throw ModelError(fmt::format("plan_to_devices: gap half-width {} um below clearance {} um", gap, p.clearance_um));
    if (n_atoms > geom.n_devices)
      throw ModelError(fmt::format("plan_to_devices: {} atoms for {} devices", n_atoms, geom.n_devices));
    const double device0 = p.device_anchor_mhz.value_or(layout.row_tones_mhz.front()) + 0.5 * layout.pitch_mhz;
    std::vector<int> devices;
    for (const auto* t : row) {
      const double f = t->final_frequency() + 0.5 * layout.pitch_mhz;
      const double idx = (f - device0) / layout.pitch_mhz;
      const int j = static_cast<int>(std::lround(idx));
      if (std::abs(idx - j) > 1e-6 || j < 0 || j >= geom.n_devices)
        throw ModelError(fmt::format("plan_to_devices: tone {} at {} MHz is not registered to a device", t->tone_id,
                                     t->final_frequency()));
      devices.push_back(j);
    }
    const double dx = geom.loading_region_offset_um[0];
    const double dy = approach_um + geom.loading_region_offset_um[1];
    std::optional<ChirpProfile> xmove;
    if (dx != 0) {
      xmove = chirp(layout.transverse_tone_mhz, layout.transverse_tone_mhz + dx / scale, std::abs(dx) / p.x_speed_um_per_ms);
      check_slew(*xmove, p, "plan_to_devices x move");
    }
    const ChirpProfile ymove = chirp(0.0, dy / scale, std::abs(dy) / approach_speed);
    check_slew(ymove, p, "plan_to_devices y move");

    // Transverse tone holds during compression.
    ToneTimeline transverse{transverse_id, transverse_axis, {}};
    if (plan.duration_ms > 0)
      transverse.segments.push_back({SegmentKind::Hold, transverse_axis, layout.transverse_tone_mhz,
                                     layout.transverse_tone_mhz, 0.0, plan.duration_ms});
    else
      transverse.segments.push_back({SegmentKind::Hold, transverse_axis, layout.transverse_tone_mhz,
                                     layout.transverse_tone_mhz, 0.0, 0.0});
    plan.tones.push_back(std::move(transverse));
    extend_to(plan, plan.duration_ms);
    auto& tr = plan.tones.back();

    if (xmove) {
      const double t0 = plan.duration_ms;
      tr.segments.push_back(make_move(transverse_axis, xmove->f_start_mhz, xmove->f_end_mhz, t0, xmove->duration_ms));
      out.x_move_ms = xmove->duration_ms;
      extend_to(plan, t0 + xmove->duration_ms);
    }
    const double t0 = plan.duration_ms;
    row = live_tones(plan, layout.row_axis);
    for (auto* t : row) {
      const double f = t->final_frequency();
      t->segments.push_back(make_move(layout.row_axis, f, f + ymove.f_end_mhz, t0, ymove.duration_ms));
    }
    out.y_move_ms = ymove.duration_ms;
    extend_to(plan, t0 + ymove.duration_ms);
    for (std::size_t i = 0; i < row.size(); ++i) out.targets.push_back({row[i]->tone_id, devices[i], 0.0, false});
    return out;
  }

  // N on one device.
  const int k = mode.k;
  if (layout.row_axis != Axis::X)
    throw ModelError(
        "plan_to_devices: n-on-one needs the row along X, parallel to the devices (put the row tones in tones_x)");
  const int capacity = device_capacity(geom, p);
  if (k > capacity)
    throw ModelError(fmt::format("plan_to_devices: infeasible, {} sites requested but a device holds {} at {} um spacing",
                                 k, capacity, p.intra_device_spacing_um));
  if (k > n_atoms)
    throw ModelError(fmt::format("plan_to_devices: infeasible, {} sites requested but only {} atoms", k, n_atoms));

  const double x_first = row.front()->final_frequency() * scale;
  const double device_start = x_first + geom.loading_region_offset_um[0];
  std::vector<double> targets_mhz;
  for (int j = 0; j < n_atoms; ++j) {
    const double x = j < k ? device_start + j * p.intra_device_spacing_um
                           : device_start + geom.device_length_um + p.park_offset_um + (j - k) * p.intra_device_spacing_um;
    targets_mhz.push_back(x / scale);
    out.targets.push_back({row[j]->tone_id, j < k ? 0 : -1, j < k ? j * p.intra_device_spacing_um : x - device_start,
                           j >= k});
  }
  double x_ms = 0.0;
  for (int j = 0; j < n_atoms; ++j)
    x_ms = std::max(x_ms, std::abs(targets_mhz[j] - row[j]->final_frequency()) * scale / p.x_speed_um_per_ms);
  const double dy = approach_um + geom.loading_region_offset_um[1];
  const ChirpProfile ymove = chirp(layout.transverse_tone_mhz, layout.transverse_tone_mhz + dy / scale,
                                   std::abs(dy) / approach_speed);
  check_slew(ymove, p, "plan_to_devices y move");
  if (x_ms > 0)
    for (int j = 0; j < n_atoms; ++j)
      check_slew(chirp(row[j]->final_frequency(), targets_mhz[j], x_ms), p, "plan_to_devices x move");

  ToneTimeline transverse{transverse_id, transverse_axis, {}};
  transverse.segments.push_back({SegmentKind::Hold, transverse_axis, layout.transverse_tone_mhz,
                                 layout.transverse_tone_mhz, 0.0, plan.duration_ms});
  plan.tones.push_back(std::move(transverse));
  row = live_tones(plan, layout.row_axis);  // push_back may have moved the timelines
  if (x_ms > 0) {
    const double t0 = plan.duration_ms;
    for (int j = 0; j < n_atoms; ++j)
      row[j]->segments.push_back(make_move(layout.row_axis, row[j]->final_frequency(), targets_mhz[j], t0, x_ms));
    out.x_move_ms = x_ms;
    extend_to(plan, t0 + x_ms);
  }
  const double t0 = plan.duration_ms;
  auto& tr = plan.tones.back();
  tr.segments.push_back(make_move(transverse_axis, ymove.f_start_mhz, ymove.f_end_mhz, t0, ymove.duration_ms));
  out.y_move_ms = ymove.duration_ms;
  extend_to(plan, t0 + ymove.duration_ms);
  return out;
}

// ---------------------------------------------------------------------------

PlanCheck check_plan(const TrajectoryPlan& plan, double step_ms) {
  PlanCheck c;
  c.min_separation_mhz = std::numeric_limits<double>::infinity();
  for (const auto& tone : plan.tones) {
    double t = 0.0;
    double f = tone.segments.empty() ? 0.0 : tone.segments.front().f0_mhz;
    for (std::size_t i = 0; i < tone.segments.size(); ++i) {
      const auto& s = tone.segments[i];
      if (std::abs(s.t_start_ms - t) > kTimeTol) {
        c.contiguous = false;
        c.problems.push_back(fmt::format("tone {}: segment {} starts at {} ms, expected {}", tone.tone_id, i, s.t_start_ms, t));
      }
      if (std::abs(s.f0_mhz - f) > kFreqTol) {
        c.continuous = false;
        c.problems.push_back(fmt::format("tone {}: frequency jumps at segment {}", tone.tone_id, i));
      }
      if (s.kind == SegmentKind::Drop && i + 1 != tone.segments.size()) {
        c.drops_terminal = false;
        c.problems.push_back(fmt::format("tone {}: DROP is not the last segment", tone.tone_id));
      }
      if (s.kind == SegmentKind::Chirp && s.duration_ms > 0)
        c.max_slew_mhz_per_ms = std::max(c.max_slew_mhz_per_ms, ChirpProfile{s.f0_mhz, s.f1_mhz, s.duration_ms}.peak_slew());
      t = s.t_start_ms + s.duration_ms;
      f = s.f1_mhz;
    }
  }

  // Sampled ordering check per axis, in the initial frequency order.
  const long long n_steps = plan.duration_ms > 0 ? static_cast<long long>(std::ceil(plan.duration_ms / step_ms)) : 0;
  for (Axis axis : {Axis::X, Axis::Y}) {
    std::vector<const ToneTimeline*> tones;
    for (const auto& t : plan.tones)
      if (t.axis == axis && !t.segments.empty()) tones.push_back(&t);
    std::sort(tones.begin(), tones.end(), [](const ToneTimeline* a, const ToneTimeline* b) {
      return a->segments.front().f0_mhz < b->segments.front().f0_mhz;
    });
    std::vector<double> live;
    for (long long i = 0; i <= n_steps; ++i) {
      const double t = std::min(plan.duration_ms, i * step_ms);
      live.clear();
      for (const auto* tone : tones)
        if (auto f = tone->frequency(t)) live.push_back(*f);
      for (std::size_t j = 1; j < live.size(); ++j) {
        const double sep = live[j] - live[j - 1];
        c.min_separation_mhz = std::min(c.min_separation_mhz, sep);
        if (!(sep > 0) && c.ordered) {
          c.ordered = false;
          c.problems.push_back(fmt::format("axis {}: tones cross or touch at t = {} ms", to_string(axis), t));
        }
      }
    }
  }
  return c;
}

std::string plan_to_json(const TrajectoryPlan& plan) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& tone : plan.tones) {
    nlohmann::ordered_json segs = nlohmann::ordered_json::array();
    for (const auto& s : tone.segments) {
      nlohmann::ordered_json js;
      js["kind"] = to_string(s.kind);
      js["axis"] = to_string(s.axis);
      js["f0_mhz"] = s.f0_mhz;
      js["f1_mhz"] = s.f1_mhz;
      js["t_ms"] = s.duration_ms;
      segs.push_back(std::move(js));
    }
    nlohmann::ordered_json jt;
    jt["tone_id"] = tone.tone_id;
    jt["segments"] = std::move(segs);
    arr.push_back(std::move(jt));
  }
  return arr.dump(2);
}

std::vector<bool> parse_occupancy(const std::string& bits) {
  std::vector<bool> occ;
  for (char ch : bits) {
    if (ch != '0' && ch != '1')
      throw ConfigError(fmt::format("occupancy: expected a string of 0 and 1, got '{}'", bits));
    occ.push_back(ch == '1');
  }
  if (occ.empty()) throw ConfigError("occupancy: empty pattern");
  return occ;
}

// ---------------------------------------------------------------------------

PipelineStats simulate_pipeline(const RateTable& rates, const PipelineOptions& opt, std::uint64_t seed,
                                unsigned threads) {
  if (opt.n_sites < 1) throw ModelError("simulate_pipeline: n_sites must be >= 1");
  if (opt.n_shots < 1) throw ModelError("simulate_pipeline: n_shots must be >= 1");
  if (opt.device_weight && !(*opt.device_weight >= 0 && *opt.device_weight <= 1))
    throw ModelError("simulate_pipeline: device weight must lie in [0, 1]");
  const auto n = static_cast<std::size_t>(opt.n_sites);
  const auto shots = static_cast<std::size_t>(opt.n_shots);

  // Per shot and slot: 0 = empty, 1 = assigned but lost in imaging,
  // 2 = survived imaging but lost later, 3 = filled in image 2.
  std::vector<std::uint8_t> slot_state(shots * n, 0);
  std::vector<std::uint8_t> loaded(shots * n, 0);
  parallel_for(shots, threads, [&](std::size_t s) {
    Rng rng = make_rng(seed, stream_key({stream_tag::kPipeline, s}));
    std::size_t slot = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double u_load = uniform01(rng);
      const double u_img = uniform01(rng);
      const double u_rear = uniform01(rng);
      const double u_dev = uniform01(rng);
      if (u_load >= rates.load_prob) continue;
      loaded[s * n + i] = 1;
      std::uint8_t state = 1;
      if (u_img < rates.imaging_survival) {
        state = 2;
        const bool kept = u_rear < rates.rearrange_survival && (!opt.device_weight || u_dev < *opt.device_weight);
        if (kept) state = 3;
      }
      slot_state[s * n + slot++] = state;
    }
  });

  PipelineStats st;
  st.n_sites = opt.n_sites;
  st.n_shots = opt.n_shots;
  st.p_site_image1.assign(n, 0.0);
  st.p_loaded.assign(n, 0.0);
  st.p_raw.assign(n, 0.0);
  st.p_corrected.assign(n, 0.0);
  st.stderr_raw.assign(n, 0.0);
  std::vector<double> assigned(n, 0.0);
  std::vector<double> survived_imaging(n, 0.0);
  double image1 = 0.0;
  double image2 = 0.0;
  for (std::size_t s = 0; s < shots; ++s)
    for (std::size_t k = 0; k < n; ++k) {
      st.p_site_image1[k] += loaded[s * n + k];
      image1 += loaded[s * n + k];
      const auto state = slot_state[s * n + k];
      if (state == 0) continue;
      assigned[k] += 1;
      if (state >= 2) survived_imaging[k] += 1;
      if (state == 3) {
        st.p_raw[k] += 1;
        image2 += 1;
      }
    }
  const double N = static_cast<double>(shots);
  for (std::size_t k = 0; k < n; ++k) {
    st.p_site_image1[k] /= N;
    st.p_loaded[k] = assigned[k] / N;
    st.p_raw[k] /= N;
    st.stderr_raw[k] = std::sqrt(st.p_raw[k] * (1.0 - st.p_raw[k]) / N);
    const double s_img = assigned[k] > 0 ? survived_imaging[k] / assigned[k] : 0.0;
    st.p_corrected[k] = s_img > 0 ? st.p_raw[k] / s_img : 0.0;
  }
  st.mean_image1 = image1 / N;
  st.mean_image2 = image2 / N;
  return st;
}

}  // namespace atomforge::planner
