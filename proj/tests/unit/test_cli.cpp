#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "atomforge/cli.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using atomforge::cli::dispatch;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("atomforge_cli_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("exit codes and error lines") {
    const auto d = scratch("errors").string();
    auto r = run({"plan", "--mode", "sideways", "--out", d});
    CHECK(r.code == 2);
    const auto j = nlohmann::json::parse(r.err);
    CHECK(j["error"] == "config");
    CHECK(j["code"] == 2);

    CHECK(run({"plan", "--occupancy", "101", "--out", d}).code == 3);
    CHECK(run({"fit-blowout", "--input", "/nonexistent.csv", "--out", d}).code == 4);
    CHECK(run({"lattice", "--config", "/nonexistent.cfg", "--out", d}).code == 2);
    CHECK(run({"no-such-command"}).code == 2);
    CHECK(run({"--help"}).code == 0);
  }

  TEST_CASE("manifest records the run") {
    const auto d = scratch("manifest");
    REQUIRE(run({"lattice", "--points", "301", "--seed", "5", "--out", d.string()}).code == 0);
    const auto m = nlohmann::json::parse(slurp(d / "manifest.json"));
    CHECK(m["seed"] == 5);
    CHECK(m["config_hash"].get<std::string>().rfind("sha256:", 0) == 0);
    CHECK(m["outputs"] == nlohmann::json::array({"lattice.csv", "maxima.csv"}));
    CHECK(m["command_line"][1] == "lattice");
    CHECK(m.contains("wall_time_s"));
    CHECK(m.contains("version"));
  }

  TEST_CASE("config file seed, env seed and --seed") {
    const auto d = scratch("seed");
    fs::create_directories(d);
    std::ofstream(d / "c.cfg") << "[run]\nseed = 11\n";
    const auto cfg = (d / "c.cfg").string();
    const auto out = (d / "o").string();
    auto seed_of = [&] { return nlohmann::json::parse(slurp(d / "o" / "manifest.json"))["seed"].get<int>(); };
    REQUIRE(run({"pipeline", "--shots", "10", "--config", cfg, "--out", out}).code == 0);
    CHECK(seed_of() == 11);
    setenv("ATOMFORGE_SEED", "12", 1);
    REQUIRE(run({"pipeline", "--shots", "10", "--config", cfg, "--out", out}).code == 0);
    CHECK(seed_of() == 12);
    REQUIRE(run({"pipeline", "--shots", "10", "--config", cfg, "--seed", "13", "--out", out}).code == 0);
    CHECK(seed_of() == 13);
    unsetenv("ATOMFORGE_SEED");
  }

  TEST_CASE("csv outputs carry the documented headers") {
    const auto d = scratch("headers");
    REQUIRE(run({"lattice", "--points", "301", "--out", d.string()}).code == 0);
    CHECK(slurp(d / "lattice.csv").rfind("z_nm,intensity_ratio,stark_shift_mhz\n", 0) == 0);
    REQUIRE(run({"simulate-loading", "--trials", "100", "--offsets", "200", "--out", d.string()}).code == 0);
    CHECK(slurp(d / "loading.csv").rfind("offset_nm,w_z1,w_z2,w_z3,", 0) == 0);
  }
}
