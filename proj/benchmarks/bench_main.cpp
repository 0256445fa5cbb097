#include <benchmark/benchmark.h>

#include "atomforge/autofocus.hpp"
#include "atomforge/imaging.hpp"
#include "atomforge/montecarlo.hpp"
#include "atomforge/planner.hpp"
#include "atomforge/spectroscopy.hpp"

using namespace atomforge;

// Occupancy decode on one camera frame; this sits on the real-time path
// between image 1 and the rearrangement.
static void BM_DecodeOccupancy(benchmark::State& state) {
  const ImagingParams p;
  std::vector<bool> occ(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < occ.size(); i += 2) occ[i] = true;
  const auto frame = imaging::render_frame(occ, 40.0, p, 1, 0);
  for (auto _ : state) benchmark::DoNotOptimize(imaging::decode_occupancy(frame, p.threshold));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DecodeOccupancy)->Arg(9)->Arg(100)->Arg(1000);

static void BM_ChirpSample(benchmark::State& state) {
  const auto c = planner::chirp(80.0, 115.0, 1.0);
  double t = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(c.frequency(t));
    t = t < 1.0 ? t + 1e-6 : 0.0;
  }
}
BENCHMARK(BM_ChirpSample);

static void BM_PlanCompression(benchmark::State& state) {
  const Config cfg;
  const auto layout = planner::row_layout(cfg.tweezer, cfg.chip);
  const auto occ = planner::parse_occupancy("101101011");
  for (auto _ : state)
    benchmark::DoNotOptimize(
        planner::plan_compression(occ, layout.row_tones_mhz, layout.pitch_mhz, cfg.planner, layout.row_axis));
}
BENCHMARK(BM_PlanCompression);

static void BM_MonteCarloTrial(benchmark::State& state) {
  const Config cfg;
  const auto sc = montecarlo::make_scenario(cfg);
  const montecarlo::TransferModel model(sc, montecarlo::transfer_wave(cfg.chip, cfg.tweezer, sc.focal_offset_nm),
                                        cfg.tweezer.waist_um);
  std::uint64_t i = 0;
  for (auto _ : state) {
    Rng rng = make_rng(cfg.seed, stream_key({stream_tag::kMonteCarlo, i++}));
    benchmark::DoNotOptimize(model.run_trial(rng));
  }
}
BENCHMARK(BM_MonteCarloTrial)->Unit(benchmark::kMicrosecond);

static void BM_HistogramFit(benchmark::State& state) {
  const ImagingParams p;
  std::vector<int> sums;
  for (int f = 0; f < 1000; ++f) {
    std::vector<bool> occ(10);
    for (int s = 0; s < 10; ++s) occ[s] = (s + f) % 2;
    const auto d = imaging::decode_occupancy(imaging::render_frame(occ, 40.0, p, 3, f), p.threshold);
    sums.insert(sums.end(), d.roi_sums.begin(), d.roi_sums.end());
  }
  for (auto _ : state) benchmark::DoNotOptimize(imaging::fit_histogram(sums));
}
BENCHMARK(BM_HistogramFit)->Unit(benchmark::kMillisecond);

static void BM_FocusScore(benchmark::State& state) {
  Rng rng = make_rng(1, 1);
  const auto img = autofocus::device_pattern(128, 96, rng);
  const AutofocusParams params;
  for (auto _ : state) benchmark::DoNotOptimize(autofocus::focus_score(img, params));
}
BENCHMARK(BM_FocusScore)->Unit(benchmark::kMillisecond);

static void BM_MixtureFit(benchmark::State& state) {
  spectroscopy::MixtureModel m;
  m.weights = {0.29, 0.66, 0.05};
  m.centers_mhz = {-60.0, -40.0, -25.0};
  m.width_mhz = 8.0;
  spectroscopy::SurvivalCurve c;
  c.detunings_mhz = spectroscopy::linspace(-100.0, 0.0, 81);
  for (double d : c.detunings_mhz) c.survival.push_back(spectroscopy::mixture_survival(d, m));
  for (auto _ : state) benchmark::DoNotOptimize(spectroscopy::fit_mixture(c, m.centers_mhz, m.width_mhz));
}
BENCHMARK(BM_MixtureFit)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
