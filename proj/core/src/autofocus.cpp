#include "atomforge/autofocus.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "atomforge/errors.hpp"
#include "atomforge/parallel.hpp"

namespace atomforge::autofocus {

namespace {

std::vector<double> spatial_kernel(double sigma, int radius) {
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1) * (2 * radius + 1));
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      k[static_cast<std::size_t>(dy + radius) * (2 * radius + 1) + dx + radius] =
          std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
  return k;
}

// Shared loop for both filters; range_weight(diff) = 1 gives a plain blur.
template <typename RangeWeight>
Image weighted_filter(const Image& img, double sigma_space, RangeWeight&& range_weight) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_space));
  const auto k = spatial_kernel(sigma_space, radius);
  const int side = 2 * radius + 1;
  Image out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double c = img.at(x, y);
      double wsum = 0.0;
      double dsum = 0.0;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= img.height) continue;
        for (int dx = -radius; dx <= radius; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= img.width) continue;
          const double d = img.at(xx, yy) - c;
          const double w = k[static_cast<std::size_t>(dy + radius) * side + dx + radius] * range_weight(d);
          wsum += w;
          dsum += w * d;
        }
      }
      out.at(x, y) = c + dsum / wsum;
    }
  return out;
}

}  // namespace

Image bilateral_filter(const Image& img, double sigma_space, double sigma_range) {
  if (!(sigma_space > 0) || !(sigma_range > 0)) throw ModelError("bilateral_filter: sigmas must be > 0");
  const double inv = 1.0 / (2.0 * sigma_range * sigma_range);
  return weighted_filter(img, sigma_space, [inv](double d) { return std::exp(-d * d * inv); });
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma < 0) throw ModelError("gaussian_blur: sigma must be >= 0");
  if (sigma == 0) return img;
  return weighted_filter(img, sigma, [](double) { return 1.0; });
}

double laplacian_score(const Image& img) {
  if (img.width < 3 || img.height < 3)
    throw ModelError(fmt::format("laplacian_score: image must be at least 3x3, got {}x{}", img.width, img.height));
  double s = 0.0;
  for (int y = 1; y + 1 < img.height; ++y)
    for (int x = 1; x + 1 < img.width; ++x) {
      const double l = 4.0 * img.at(x, y) - img.at(x - 1, y) - img.at(x + 1, y) - img.at(x, y - 1) - img.at(x, y + 1);
      s += l * l;
    }
  return s;
}

Image crop(const Image& img, const Subregion& r) {
  if (r.x0 < 0 || r.y0 < 0 || r.width < 1 || r.height < 1 || r.x0 + r.width > img.width ||
      r.y0 + r.height > img.height)
    throw ModelError(fmt::format("crop: region {}x{}+{}+{} outside {}x{} image", r.width, r.height, r.x0, r.y0,
                                 img.width, img.height));
  Image out(r.width, r.height);
  for (int y = 0; y < r.height; ++y)
    for (int x = 0; x < r.width; ++x) out.at(x, y) = img.at(r.x0 + x, r.y0 + y);
  return out;
}

double total_variation(const Image& img) {
  double tv = 0.0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      if (x + 1 < img.width) tv += std::abs(img.at(x + 1, y) - img.at(x, y));
      if (y + 1 < img.height) tv += std::abs(img.at(x, y + 1) - img.at(x, y));
    }
  return tv;
}

FocusScan analyze_scan(const std::vector<double>& z, const std::vector<double>& scores, double target_fraction,
                       ScanSide side) {
  if (z.size() != scores.size()) throw ModelError("analyze_scan: z and score lengths differ");
  if (z.size() < 5) throw ModelError(fmt::format("scan_focus: need at least 5 z positions, got {}", z.size()));
  for (std::size_t i = 1; i < z.size(); ++i)
    if (!(z[i] > z[i - 1])) throw ModelError("scan_focus: z positions must be strictly increasing");
  for (double s : scores)
    if (!std::isfinite(s)) throw ModelError("scan_focus: non-finite score");
  if (!(target_fraction > 0 && target_fraction <= 1)) throw ModelError("scan_focus: target_fraction must lie in (0, 1]");

  FocusScan out;
  out.z_um = z;
  out.scores = scores;
  out.target_fraction = target_fraction;
  out.best_index = static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
  out.best_z_um = z[out.best_index];
  out.out_of_range = out.best_index == 0 || out.best_index + 1 == z.size();

  const double target = target_fraction * scores[out.best_index];
  const int step = side == ScanSide::Below ? -1 : 1;
  out.recommended_z_um = out.best_z_um;
  out.target_reached = false;
  for (int i = static_cast<int>(out.best_index); i >= 0 && i < static_cast<int>(z.size()); i += step) {
    if (scores[i] <= target) {
      out.target_reached = true;
      if (i == static_cast<int>(out.best_index)) break;
      const int j = i - step;  // previous point, above target
      const double t = (scores[j] - target) / (scores[j] - scores[i]);
      out.recommended_z_um = z[j] + t * (z[i] - z[j]);
      break;
    }
    out.recommended_z_um = z[i];
  }
  return out;
}

Image device_pattern(int width, int height, Rng& rng) {
  Image img(width, height, 20.0);
  std::uniform_int_distribution<int> n_stripes(3, 6);
  std::uniform_int_distribution<int> stripe_w(1, 3);
  std::uniform_real_distribution<double> level(60.0, 160.0);
  const int n = n_stripes(rng);
  for (int s = 0; s < n; ++s) {
    std::uniform_int_distribution<int> pos(0, width - 3);
    const int x0 = pos(rng);
    const int w = stripe_w(rng);
    const double v = level(rng);
    std::uniform_int_distribution<int> top(0, height / 3);
    const int y0 = top(rng);
    const int y1 = height - 1 - top(rng);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x < std::min(width, x0 + w); ++x) img.at(x, y) = v;
  }
  return img;
}

Image SyntheticImager::capture(double z_um, std::uint64_t shot) const {
  Image img = gaussian_blur(sharp, blur_px_per_um * std::abs(z_um - focus_z_um));
  if (photons_per_count > 0) {
    Rng rng = make_rng(seed, stream_key({stream_tag::kAutofocus, shot}));
    for (auto& v : img.pixels) {
      std::poisson_distribution<long long> draw(std::max(0.0, v) * photons_per_count);
      v = static_cast<double>(draw(rng)) / photons_per_count;
    }
  }
  return img;
}

double focus_score(const Image& img, const AutofocusParams& p, const std::optional<Subregion>& region) {
  const Image filtered = bilateral_filter(img, p.sigma_space_px, p.sigma_range);
  return laplacian_score(region ? crop(filtered, *region) : filtered);
}

FocusScan scan_focus(const std::vector<double>& z, const SyntheticImager& imager, const AutofocusParams& p,
                     const std::optional<Subregion>& region, unsigned threads) {
  if (z.size() < 5) throw ModelError(fmt::format("scan_focus: need at least 5 z positions, got {}", z.size()));
  std::vector<double> scores(z.size());
  parallel_for(z.size(), threads, [&](std::size_t i) { scores[i] = focus_score(imager.capture(z[i], i), p, region); });
  return analyze_scan(z, scores, p.target_fraction, p.side);
}

}  // namespace atomforge::autofocus
