#include "doctest.h"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "atomforge/config.hpp"
#include "atomforge/errors.hpp"
#include "atomforge/parallel.hpp"
#include "atomforge/rng.hpp"

using namespace atomforge;

namespace {
std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}
}  // namespace

TEST_SUITE("config") {
  TEST_CASE("shipped default.cfg parses to the built-in defaults") {
    const Config cfg = parse_config(slurp(ATOMFORGE_SOURCE_DIR "/configs/default.cfg"));
    CHECK(cfg == Config{});
    CHECK(cfg.chip.film_thickness_nm == 330.0);
    CHECK(cfg.chip.device_pitch_um == 11.0);
    CHECK(cfg.chip.device_width_um == doctest::Approx(1.1));
    CHECK(cfg.chip.device_length_um == 63.0);
  }

  TEST_CASE("serialize round trip") {
    Config c;
    c.seed = 1234567;
    c.chip.film_thickness_nm = 340.0;
    c.tweezer.tones_x_mhz = {90.0, 95.5};
    c.tweezer.tones_y_mhz = {100.0};
    c.planner.device_anchor_mhz = 81.25;
    c.autofocus.side = ScanSide::Above;
    c.optics.envelope = Envelope::Gaussian;
    CHECK(parse_config(serialize_config(c)) == c);
  }

  TEST_CASE("unknown keys and sections are rejected") {
    CHECK_THROWS_AS(parse_config("[chip]\nfilm_thicknes = 330\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[nonsense]\nx = 1\n"), ConfigError);
  }

  TEST_CASE("malformed values and violated invariants") {
    CHECK_THROWS_AS(parse_config("[chip]\nfilm_thickness = abc\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[chip]\nfilm_index = 0.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[rates]\nload_prob = 1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[mc]\ntemperature = -1\n"), ConfigError);
  }

  TEST_CASE("inline comments are ignored") {
    const Config c = parse_config("[chip]\nfilm_thickness = 340 ; nm\n# whole line\n");
    CHECK(c.chip.film_thickness_nm == 340.0);
  }

  TEST_CASE("missing file is a config error") {
    CHECK_THROWS_AS(load_config("/nonexistent/file.cfg"), ConfigError);
  }

  TEST_CASE("ATOMFORGE_SEED overrides the seed") {
    Config c;
    c.seed = 5;
    setenv("ATOMFORGE_SEED", "77", 1);
    apply_seed_env(c);
    unsetenv("ATOMFORGE_SEED");
    CHECK(c.seed == 77);
    setenv("ATOMFORGE_SEED", "seventy", 1);
    CHECK_THROWS_AS(apply_seed_env(c), ConfigError);
    unsetenv("ATOMFORGE_SEED");
  }
}

TEST_SUITE("config") {
  TEST_CASE("rng streams are reproducible and distinct") {
    Rng a = make_rng(42, stream_key({stream_tag::kImaging, 3, 7}));
    Rng b = make_rng(42, stream_key({stream_tag::kImaging, 3, 7}));
    Rng c = make_rng(42, stream_key({stream_tag::kImaging, 7, 3}));
    const auto x = a();
    CHECK(x == b());
    CHECK(x != c());
    CHECK(stream_key({1, 2}) != stream_key({2, 1}));
  }

  TEST_CASE("parallel_for fills every slot once for any thread count") {
    for (unsigned t : {1u, 2u, 3u, 8u}) {
      std::vector<int> hits(101, 0);
      parallel_for(hits.size(), t, [&](std::size_t i) { hits[i] += 1; });
      CHECK(std::count(hits.begin(), hits.end(), 1) == 101);
    }
  }

  TEST_CASE("parallel_for propagates worker exceptions") {
    CHECK_THROWS_AS(parallel_for(10, 4, [](std::size_t i) {
                      if (i == 7) throw ModelError("boom");
                    }),
                    ModelError);
  }
}
