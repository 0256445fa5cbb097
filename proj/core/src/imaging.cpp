#include "atomforge/imaging.hpp"

#include <boost/math/distributions/poisson.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "atomforge/errors.hpp"
#include "atomforge/rng.hpp"

namespace atomforge::imaging {

namespace {

constexpr double kReferenceExposureMs = 40.0;
constexpr std::uint64_t kRowStreamBase = 1ull << 32;

// Device stripes run across the full frame height. On device they sit on the
// ROI centers; in the loading region the row is displaced by half a pitch and
// the stripes fall between sites.
int stripe_width(const ImagingParams& p) { return std::max(1, p.roi_size_px / 2); }

bool in_stripe(int x, const Frame& f, const ImagingParams& p, Region region) {
  const int w = stripe_width(p);
  const double shift = region == Region::OnDevice ? 0.0 : 0.5 * p.site_pitch_px;
  for (const auto& roi : f.rois) {
    const double center = roi.x0 + 0.5 * roi.size + shift;
    const double lo = center - 0.5 * w;
    if (x >= lo && x + 1 <= lo + w) return true;
  }
  return false;
}

std::vector<double> psf_weights(const ImagingParams& p) {
  const int n = p.roi_size_px;
  std::vector<double> w(static_cast<std::size_t>(n) * n);
  const double c = 0.5 * n;
  double total = 0.0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double dx = x + 0.5 - c;
      const double dy = y + 0.5 - c;
      const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * p.psf_sigma_px * p.psf_sigma_px));
      w[static_cast<std::size_t>(y) * n + x] = v;
      total += v;
    }
  for (auto& v : w) v /= total;
  return w;
}

// Fraction of the exposure each site emits for.
std::vector<double> emission_fractions(std::size_t n_sites, double p_loss, std::uint64_t seed,
                                       std::uint64_t frame_index) {
  std::vector<double> out(n_sites, 1.0);
  if (p_loss <= 0.0) return out;
  for (std::size_t s = 0; s < n_sites; ++s) {
    Rng rng = make_rng(seed, stream_key({stream_tag::kImaging, frame_index, s}));
    const double u_loss = uniform01(rng);
    const double u_frac = uniform01(rng);
    if (u_loss < p_loss) out[s] = u_frac;
  }
  return out;
}

std::vector<double> expected_with_fractions(const Frame& layout, const std::vector<bool>& occupancy,
                                            const std::vector<double>& fractions, double exposure_ms,
                                            const ImagingParams& params, const EmissionModel& model) {
  if (occupancy.size() != layout.rois.size())
    throw ModelError(fmt::format("render_frame: occupancy has {} sites, frame has {} ROIs", occupancy.size(),
                                 layout.rois.size()));
  if (!(exposure_ms >= 0)) throw ModelError("render_frame: exposure must be >= 0");
  const double scale = exposure_ms / kReferenceExposureMs;
  const double roi_px = static_cast<double>(params.roi_size_px) * params.roi_size_px;
  const double bg_px = model.background_per_roi / roi_px * scale;
  const double dev_px = model.device_background_per_roi / (params.roi_size_px * stripe_width(params)) * scale;

  std::vector<double> mean(static_cast<std::size_t>(layout.width) * layout.height, bg_px);
  if (dev_px > 0) {
    for (int x = 0; x < layout.width; ++x) {
      if (!in_stripe(x, layout, params, model.region)) continue;
      for (int y = 0; y < layout.height; ++y) mean[static_cast<std::size_t>(y) * layout.width + x] += dev_px;
    }
  }
  const auto psf = psf_weights(params);
  for (std::size_t s = 0; s < layout.rois.size(); ++s) {
    if (!occupancy[s]) continue;
    const auto& roi = layout.rois[s];
    const double signal = model.signal_per_roi * scale * fractions[s];
    for (int y = 0; y < roi.size; ++y)
      for (int x = 0; x < roi.size; ++x)
        mean[static_cast<std::size_t>(roi.y0 + y) * layout.width + roi.x0 + x] +=
            signal * psf[static_cast<std::size_t>(y) * roi.size + x];
  }
  return mean;
}

}  // namespace

Frame empty_frame(int n_sites, const ImagingParams& p) {
  if (n_sites < 0) throw ModelError("empty_frame: n_sites must be >= 0");
  Frame f;
  f.width = 2 * p.margin_px + std::max(0, n_sites - 1) * p.site_pitch_px + p.roi_size_px;
  f.height = 2 * p.margin_px + p.roi_size_px;
  f.counts.assign(static_cast<std::size_t>(f.width) * f.height, 0);
  for (int s = 0; s < n_sites; ++s) f.rois.push_back({s, p.margin_px + s * p.site_pitch_px, p.margin_px, p.roi_size_px});
  return f;
}

void check_rois(const Frame& f) {
  if (f.counts.size() != static_cast<std::size_t>(f.width) * f.height)
    throw ModelError("frame: pixel count does not match width * height");
  for (std::size_t i = 0; i < f.rois.size(); ++i) {
    const auto& a = f.rois[i];
    if (a.size < 1 || a.x0 < 0 || a.y0 < 0 || a.x0 + a.size > f.width || a.y0 + a.size > f.height)
      throw ModelError(fmt::format("frame: ROI {} out of bounds", a.site));
    for (std::size_t j = 0; j < i; ++j) {
      const auto& b = f.rois[j];
      const bool apart = a.x0 + a.size <= b.x0 || b.x0 + b.size <= a.x0 || a.y0 + a.size <= b.y0 ||
                         b.y0 + b.size <= a.y0;
      if (!apart) throw ModelError(fmt::format("frame: ROIs {} and {} overlap", b.site, a.site));
    }
  }
}

EmissionModel emission_model(const ImagingParams& p, Region region) {
  EmissionModel m;
  m.region = region;
  m.background_per_roi = p.background_per_roi;
  m.device_background_per_roi = p.device_background_per_roi;
  if (region == Region::OnDevice) {
    m.signal_per_roi = p.device_signal_per_roi;
    m.p_loss = p.device_p_loss;
  } else {
    m.signal_per_roi = p.signal_per_roi;
    m.p_loss = p.p_loss;
  }
  return m;
}

std::vector<double> expected_counts(const Frame& layout, const std::vector<bool>& occupancy, double exposure_ms,
                                    const ImagingParams& params, const EmissionModel& model) {
  return expected_with_fractions(layout, occupancy, std::vector<double>(layout.rois.size(), 1.0), exposure_ms,
                                 params, model);
}

Frame imaging_survival(const std::vector<bool>& occupancy, double exposure_ms, const ImagingParams& params,
                       const EmissionModel& model, double p_loss, std::uint64_t seed, std::uint64_t frame_index) {
  if (!(p_loss >= 0.0 && p_loss <= 1.0)) throw ModelError("imaging_survival: p_loss must lie in [0, 1]");
  Frame f = empty_frame(static_cast<int>(occupancy.size()), params);
  f.exposure_ms = exposure_ms;
  f.seed = seed;
  const auto fractions = emission_fractions(occupancy.size(), p_loss, seed, frame_index);
  const auto mean = expected_with_fractions(f, occupancy, fractions, exposure_ms, params, model);
  for (int y = 0; y < f.height; ++y) {
    Rng rng = make_rng(seed, stream_key({stream_tag::kImaging, frame_index, kRowStreamBase + y}));
    for (int x = 0; x < f.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * f.width + x;
      if (mean[i] <= 0.0) continue;
      std::poisson_distribution<long long> draw(mean[i]);
      f.counts[i] = static_cast<std::uint16_t>(std::min<long long>(draw(rng), 65535));
    }
  }
  return f;
}

Frame render_frame(const std::vector<bool>& occupancy, double exposure_ms, const ImagingParams& params,
                   const EmissionModel& model, std::uint64_t seed, std::uint64_t frame_index) {
  return imaging_survival(occupancy, exposure_ms, params, model, model.p_loss, seed, frame_index);
}

Frame render_frame(const std::vector<bool>& occupancy, double exposure_ms, const ImagingParams& params,
                   std::uint64_t seed, std::uint64_t frame_index) {
  return render_frame(occupancy, exposure_ms, params, emission_model(params, Region::FreeSpace), seed, frame_index);
}

// ---------------------------------------------------------------------------

int roi_sum(const Frame& f, const Roi& roi) {
  int s = 0;
  for (int y = roi.y0; y < roi.y0 + roi.size; ++y) {
    const std::uint16_t* row = f.counts.data() + static_cast<std::size_t>(y) * f.width + roi.x0;
    for (int x = 0; x < roi.size; ++x) s += row[x];
  }
  return s;
}

OccupancyMatrix decode_occupancy(const Frame& f, double threshold) {
  const auto t0 = std::chrono::steady_clock::now();
  OccupancyMatrix m;
  m.occupied.resize(f.rois.size());
  m.roi_sums.resize(f.rois.size());
  for (std::size_t i = 0; i < f.rois.size(); ++i) {
    m.roi_sums[i] = roi_sum(f, f.rois[i]);
    m.occupied[i] = m.roi_sums[i] > threshold;
  }
  m.decode_ns = std::chrono::duration<double, std::nano>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

// ---------------------------------------------------------------------------

namespace {

double poisson_cdf(double mean, int k) {
  if (k < 0) return 0.0;
  if (mean <= 0.0) return 1.0;
  return boost::math::cdf(boost::math::poisson_distribution<double>(mean), k);
}

double poisson_sf(double mean, int k) {
  if (k < 0) return 1.0;
  if (mean <= 0.0) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::poisson_distribution<double>(mean), k));
}

double log_poisson(double mean, int k) {
  if (mean <= 0.0) return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  return k * std::log(mean) - mean - std::lgamma(k + 1.0);
}

}  // namespace

double threshold_fidelity(double background_mean, double signal_mean, int threshold) {
  const double miss = poisson_cdf(signal_mean, threshold);
  const double false_alarm = poisson_sf(background_mean, threshold);
  return 1.0 - 0.5 * (miss + false_alarm);
}

ThresholdChoice optimal_threshold(double background_mean, double signal_mean, int max_threshold) {
  if (max_threshold < 0)
    max_threshold = static_cast<int>(std::ceil(signal_mean + 10.0 * std::sqrt(signal_mean) + 10.0));
  ThresholdChoice best{0, -1.0};
  for (int t = 0; t <= max_threshold; ++t) {
    const double f = threshold_fidelity(background_mean, signal_mean, t);
    if (f > best.fidelity) best = {t, f};
  }
  return best;
}

HistogramFit fit_histogram(const std::vector<int>& sums, int max_iterations) {
  HistogramFit out;
  out.fidelity = std::numeric_limits<double>::quiet_NaN();
  if (sums.size() < 2) return out;
  for (int v : sums)
    if (v < 0) throw ModelError("fit_histogram: ROI sums must be >= 0");

  // The EM only needs the value histogram.
  std::map<int, double> hist;
  for (int v : sums) hist[v] += 1.0;
  const double n = static_cast<double>(sums.size());

  std::vector<int> sorted = sums;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const int median = sorted[sorted.size() / 2];
  double lo_sum = 0, lo_n = 0, hi_sum = 0, hi_n = 0;
  for (const auto& [v, c] : hist) {
    if (v <= median) {
      lo_sum += v * c;
      lo_n += c;
    } else {
      hi_sum += v * c;
      hi_n += c;
    }
  }
  if (hi_n == 0) {
    // Upper half is tied with the median: split below it instead.
    lo_sum = lo_n = hi_sum = hi_n = 0;
    for (const auto& [v, c] : hist) {
      if (v < median) {
        lo_sum += v * c;
        lo_n += c;
      } else {
        hi_sum += v * c;
        hi_n += c;
      }
    }
  }
  const double mean_all = (lo_sum + hi_sum) / n;
  double ll_single = 0.0;
  for (const auto& [v, c] : hist) ll_single += c * log_poisson(mean_all, v);
  if (lo_n == 0 || hi_n == 0) {
    out.background_mean = out.signal_mean = mean_all;
    out.background_weight = 1.0;
    out.log_likelihood = ll_single;
    return out;
  }

  double lb = lo_sum / lo_n;
  double ls = hi_sum / hi_n;
  double ws = hi_n / n;
  double ll = -std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < max_iterations; ++iter) {
    double sb = 0, nb = 0, ss = 0, ns = 0, ll_new = 0;
    for (const auto& [v, c] : hist) {
      const double a = std::log1p(-ws) + log_poisson(lb, v);
      const double b = std::log(ws) + log_poisson(ls, v);
      const double m = std::max(a, b);
      const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
      const double rs = std::exp(b - lse);
      ll_new += c * lse;
      ns += c * rs;
      ss += c * rs * v;
      nb += c * (1.0 - rs);
      sb += c * (1.0 - rs) * v;
    }
    const double lb_new = nb > 0 ? sb / nb : 0.0;
    const double ls_new = ns > 0 ? ss / ns : 0.0;
    const double ws_new = std::clamp(ns / n, 1e-12, 1.0 - 1e-12);
    const double change =
        std::max({std::abs(lb_new - lb), std::abs(ls_new - ls), std::abs(ws_new - ws)});
    lb = lb_new;
    ls = ls_new;
    ws = ws_new;
    const bool done = change < 1e-10 || std::abs(ll_new - ll) < 1e-13 * std::abs(ll_new);
    ll = ll_new;
    if (done) break;
  }
  if (ls < lb) {
    std::swap(ls, lb);
    ws = 1.0 - ws;
  }
  out.background_mean = lb;
  out.signal_mean = ls;
  out.signal_weight = ws;
  out.background_weight = 1.0 - ws;
  out.iterations = iter + 1;
  out.log_likelihood = ll;

  // BIC: two extra parameters over the single Poisson.
  const bool better = 2.0 * (ll - ll_single) > 2.0 * std::log(n);
  out.bimodal = better && ls > lb && std::min(ws, 1.0 - ws) > 1e-3;
  if (out.bimodal) {
    const auto choice = optimal_threshold(lb, ls);
    out.threshold = choice.threshold;
    out.fidelity = choice.fidelity;
  }
  return out;
}

}  // namespace atomforge::imaging
