#include "doctest.h"

#include <boost/math/distributions/poisson.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "atomforge/analysis.hpp"
#include "atomforge/errors.hpp"
#include "atomforge/frame_io.hpp"
#include "atomforge/imaging.hpp"
#include "atomforge/rng.hpp"

using namespace atomforge;
namespace fs = std::filesystem;

namespace {

// Exact-tail fidelity summed term by term, independent of the library path.
double brute_fidelity(double bg, double sig, int t) {
  double p_sig_le = 0.0;
  double p_bg_le = 0.0;
  double term_s = std::exp(-sig);
  double term_b = std::exp(-bg);
  for (int k = 0; k <= t; ++k) {
    if (k > 0) {
      term_s *= sig / k;
      term_b *= bg / k;
    }
    p_sig_le += term_s;
    p_bg_le += term_b;
  }
  return 1.0 - 0.5 * (p_sig_le + (1.0 - p_bg_le));
}

fs::path temp_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("atomforge_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_SUITE("imaging") {
  TEST_CASE("frame layout holds disjoint in-bounds ROIs") {
    const ImagingParams p;
    const auto f = imaging::empty_frame(9, p);
    CHECK(f.rois.size() == 9);
    CHECK_NOTHROW(imaging::check_rois(f));
    CHECK(f.width == 2 * p.margin_px + 8 * p.site_pitch_px + p.roi_size_px);
  }

  TEST_CASE("overlapping ROIs are rejected") {
    auto f = imaging::empty_frame(2, ImagingParams{});
    f.rois[1].x0 = f.rois[0].x0 + 1;
    CHECK_THROWS_AS(imaging::check_rois(f), ModelError);
    f = imaging::empty_frame(2, ImagingParams{});
    f.rois[1].x0 = f.width - 1;
    CHECK_THROWS_AS(imaging::check_rois(f), ModelError);
  }

  TEST_CASE("rendering is reproducible and seed-dependent") {
    const ImagingParams p;
    const std::vector<bool> occ{true, false, true, true};
    const auto a = imaging::render_frame(occ, 40.0, p, 3, 0);
    const auto b = imaging::render_frame(occ, 40.0, p, 3, 0);
    const auto c = imaging::render_frame(occ, 40.0, p, 3, 1);
    CHECK(a == b);
    CHECK(a.counts != c.counts);
  }

  TEST_CASE("expected counts scale with exposure") {
    const ImagingParams p;
    const auto layout = imaging::empty_frame(3, p);
    const auto m = imaging::emission_model(p, imaging::Region::FreeSpace);
    const auto e40 = imaging::expected_counts(layout, {true, false, true}, 40.0, p, m);
    const auto e20 = imaging::expected_counts(layout, {true, false, true}, 20.0, p, m);
    for (std::size_t i = 0; i < e40.size(); ++i) CHECK(e20[i] == doctest::Approx(0.5 * e40[i]));
    double roi0 = 0.0;
    const auto& r = layout.rois[0];
    for (int y = r.y0; y < r.y0 + r.size; ++y)
      for (int x = r.x0; x < r.x0 + r.size; ++x) roi0 += e40[static_cast<std::size_t>(y) * layout.width + x];
    CHECK(roi0 == doctest::Approx(p.signal_per_roi + p.background_per_roi));
  }

  TEST_CASE("decode reads occupancy from ROI sums") {
    const ImagingParams p;
    const std::vector<bool> occ{true, false, true, false, false, true};
    const auto f = imaging::render_frame(occ, 40.0, p, 12, 0);
    const auto m = imaging::decode_occupancy(f, 9.0);
    CHECK(m.occupied == occ);
    for (std::size_t s = 0; s < occ.size(); ++s) CHECK(m.roi_sums[s] == imaging::roi_sum(f, f.rois[s]));
  }

  TEST_CASE("lost atoms emit less") {
    const ImagingParams p;
    const auto m = imaging::emission_model(p, imaging::Region::FreeSpace);
    std::vector<bool> occ(40, true);
    long kept = 0;
    long lossy = 0;
    for (int f = 0; f < 20; ++f) {
      for (int s : imaging::decode_occupancy(imaging::imaging_survival(occ, 40.0, p, m, 0.0, 5, f), 0).roi_sums) kept += s;
      for (int s : imaging::decode_occupancy(imaging::imaging_survival(occ, 40.0, p, m, 1.0, 5, f), 0).roi_sums) lossy += s;
    }
    CHECK(lossy < kept);
  }

  TEST_CASE("threshold fidelity agrees with the exact tails") {
    for (int t = 0; t < 20; ++t) CHECK(std::abs(imaging::threshold_fidelity(2.0, 25.0, t) - brute_fidelity(2.0, 25.0, t)) < 1e-12);
    const auto best = imaging::optimal_threshold(2.0, 25.0);
    for (int t = 0; t < 60; ++t) CHECK(best.fidelity >= brute_fidelity(2.0, 25.0, t) - 1e-15);
  }

  TEST_CASE("histogram fit of a clean bimodal sample") {
    Rng rng = make_rng(1, 1);
    std::poisson_distribution<int> bg(2.0);
    std::poisson_distribution<int> sig(27.0);
    std::vector<int> sums;
    for (int i = 0; i < 4000; ++i) sums.push_back(i % 2 ? sig(rng) : bg(rng));
    const auto fit = imaging::fit_histogram(sums);
    REQUIRE(fit.bimodal);
    CHECK(fit.background_mean == doctest::Approx(2.0).epsilon(0.05));
    CHECK(fit.signal_mean == doctest::Approx(27.0).epsilon(0.02));
    CHECK(fit.signal_weight == doctest::Approx(0.5).epsilon(0.05));
    CHECK(fit.fidelity > 0.99);
  }

  TEST_CASE("unimodal data is reported as such") {
    Rng rng = make_rng(2, 2);
    std::poisson_distribution<int> bg(4.0);
    std::vector<int> sums;
    for (int i = 0; i < 3000; ++i) sums.push_back(bg(rng));
    const auto fit = imaging::fit_histogram(sums);
    CHECK_FALSE(fit.bimodal);
    CHECK(std::isnan(fit.fidelity));
  }
}

TEST_SUITE("analysis") {
  TEST_CASE("averaging is exact and order independent") {
    const ImagingParams p;
    std::vector<imaging::Frame> frames;
    for (int f = 0; f < 7; ++f) frames.push_back(imaging::render_frame({true, false, true}, 40.0, p, 9, f));
    const auto a = analysis::average_frames(frames, 1);
    std::reverse(frames.begin(), frames.end());
    const auto b = analysis::average_frames(frames, 3);
    CHECK(a.pixels == b.pixels);
    double s = 0;
    for (const auto& f : frames) s += f.counts[5];
    CHECK(a.pixels[5] == s / 7.0);
    CHECK(a.n_frames == 7);
  }

  TEST_CASE("mismatched frames are rejected") {
    const ImagingParams p;
    std::vector<imaging::Frame> frames{imaging::render_frame({true}, 40.0, p, 1, 0),
                                       imaging::render_frame({true, true}, 40.0, p, 1, 1)};
    CHECK_THROWS_AS(analysis::average_frames(frames), ModelError);
    CHECK_THROWS_AS(analysis::average_frames({}), ModelError);
  }

  TEST_CASE("background subtraction keeps pixels non-negative") {
    analysis::AveragedImage img;
    img.width = 2;
    img.height = 1;
    img.pixels = {3.0, 1.0};
    auto bg = img;
    bg.pixels = {1.0, 2.0};
    bg.n_frames = 4;
    const auto out = analysis::subtract_background(img, bg);
    CHECK(out.offset == 1.0);
    CHECK(out.pixels == std::vector<double>{3.0, 0.0});
    CHECK(out.background_frames == 4);
  }

  TEST_CASE("overlay scale rules") {
    analysis::AveragedImage atom;
    atom.width = 2;
    atom.height = 1;
    atom.pixels = {1.0, 2.0};
    auto dev = atom;
    dev.pixels = {8.0, 0.0};
    const auto peak = analysis::overlay_devices(atom, dev, analysis::ScaleRule::MatchPeak);
    CHECK(peak.scale == 4.0);
    CHECK(peak.composite.pixels == std::vector<double>{12.0, 8.0});
    const auto norm = analysis::overlay_devices(atom, dev, analysis::ScaleRule::MatchNorm);
    CHECK(norm.scale == doctest::Approx(8.0 / std::sqrt(5.0)));
    atom.pixels = {0.0, 0.0};
    CHECK(analysis::overlay_devices(atom, dev).scale == 1.0);
  }
}

TEST_SUITE("io") {
  TEST_CASE("frame round trip") {
    const auto dir = temp_dir("frame");
    const auto f = imaging::render_frame({true, false, true}, 40.0, ImagingParams{}, 4, 2);
    io::write_frame(dir / "a.raw", f);
    CHECK(fs::exists(dir / "a.json"));
    CHECK(fs::file_size(dir / "a.raw") == 2 * f.counts.size());
    CHECK(io::read_frame(dir / "a.raw") == f);
  }

  TEST_CASE("image round trip keeps provenance") {
    const auto dir = temp_dir("image");
    analysis::AveragedImage img;
    img.width = 3;
    img.height = 2;
    img.pixels = {0.1, 1.5, 2.25, 3.0, -0.5, 1e-9};
    img.n_frames = 12;
    img.background_frames = 5;
    img.offset = 0.5;
    img.scale = 1.25;
    img.exposure_ms = 40.0;
    io::write_image(dir / "i.raw", img);
    CHECK(io::read_image(dir / "i.raw") == img);
  }

  TEST_CASE("bad files are io errors") {
    const auto dir = temp_dir("bad");
    CHECK_THROWS_AS(io::read_frame(dir / "missing.raw"), IoError);
    const auto f = imaging::render_frame({true}, 40.0, ImagingParams{}, 4, 2);
    io::write_frame(dir / "t.raw", f);
    fs::resize_file(dir / "t.raw", 10);
    CHECK_THROWS_AS(io::read_frame(dir / "t.raw"), IoError);
  }

  TEST_CASE("raw listing is sorted") {
    const auto dir = temp_dir("list");
    for (const char* n : {"b.raw", "a.raw", "c.txt"}) std::ofstream(dir / n) << "x";
    const auto files = io::list_raw_files(dir);
    REQUIRE(files.size() == 2);
    CHECK(files[0].filename() == "a.raw");
  }

  TEST_CASE("pgm header") {
    const auto dir = temp_dir("pgm");
    io::write_pgm(dir / "x.pgm", 2, 2, {0.0, 1.0, 2.0, 4.0});
    std::ifstream in(dir / "x.pgm", std::ios::binary);
    std::string magic;
    in >> magic;
    CHECK(magic == "P5");
    CHECK(fs::file_size(dir / "x.pgm") > 4);
  }
}
