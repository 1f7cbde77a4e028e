#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pdmp/config.hpp"
#include "pdmp/io.hpp"
#include "pdmp/primal.hpp"
#include "pdmp/rng.hpp"
#include "pdmp/simulate.hpp"

using namespace pdmp;
namespace fs = std::filesystem;

namespace {
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / fs::path("pdmp_io_test");
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = a + (b - a) * i / (n - 1);
  return out;
}
}  // namespace

TEST_CASE("config parsing") {
  const std::string text =
      "# top comment\n"
      "[sim]\n"
      "paths = 40        # trailing comment\n"
      "step = 0.25\n"
      "label = fast run\n"
      "on = true\n"
      "grid = 1, 2.5, 3\n"
      "[other]\n"
      "paths = 7\n";
  const auto cfg = Config::parse_string(text, "inline.cfg");
  CHECK(cfg.get_int("sim.paths") == 40);
  CHECK(cfg.get_int("other.paths") == 7);
  CHECK(cfg.get_double("sim.step") == doctest::Approx(0.25));
  CHECK(cfg.get_str("sim.label") == "fast run");
  CHECK(cfg.get_bool("sim.on", false));
  CHECK(cfg.get_list("sim.grid", {}) == std::vector<double>{1.0, 2.5, 3.0});
  CHECK(cfg.get_double("sim.missing", 9.5) == doctest::Approx(9.5));
  CHECK(cfg.origin() == "inline.cfg");

  CHECK_THROWS_WITH_AS(static_cast<void>(cfg.get_double("sim.nope")),
                       doctest::Contains("sim.nope"), std::runtime_error);
  CHECK_THROWS_WITH_AS(static_cast<void>(cfg.get_int("sim.step")),
                       doctest::Contains("sim.step"), std::runtime_error);
  CHECK_THROWS_AS(Config::parse_string("[sim]\nvalue\n"), std::runtime_error);
  CHECK_THROWS_AS(Config::parse_string("[unterminated\n"), std::runtime_error);

  // Hash is content-sensitive and stable.
  CHECK(cfg.content_hash() == Config::parse_string(text).content_hash());
  CHECK(cfg.content_hash() != Config::parse_string(text + "\n[x]\ny = 1\n").content_hash());
}

TEST_CASE("config file round trip") {
  TempDir tmp;
  const auto p = tmp.path / "a.cfg";
  std::ofstream(p) << "[s]\nk = 3\n";
  const auto cfg = Config::parse_file(p.string());
  CHECK(cfg.get_int("s.k") == 3);
  CHECK(cfg.origin() == p.string());
  CHECK_THROWS_AS(Config::parse_file((tmp.path / "missing.cfg").string()), std::runtime_error);
}

TEST_CASE("decimal formatting round-trips doubles") {
  Rng rng(derive_seed(61, "fmt", 0));
  for (int i = 0; i < 1000; ++i) {
    const double v = std::ldexp(rng.normal(), static_cast<int>(rng.next_u64() % 40) - 20);
    CHECK(std::stod(io::fmt(v)) == v);
  }
  CHECK(io::fmt(0.1).find(',') == std::string::npos);
}

TEST_CASE("value grid round trip through csv plus sidecar") {
  TempDir tmp;
  auto lattice = LatticeSpec::leading_modes(linspace(0.0, 1.0, 3), {{-1.0, 0.0, 1.0}}, 4);
  ValueGrid grid(lattice, 2);
  Rng rng(derive_seed(61, "grid", 0));
  for (int ti = 0; ti < grid.time_points(); ++ti)
    for (int fi = 0; fi < grid.feature_points(); ++fi)
      for (int m = 0; m < 2; ++m) grid.at(ti, fi, m) = rng.normal();

  const auto csv = (tmp.path / "grid.csv").string();
  const auto json = (tmp.path / "grid.json").string();
  io::write_value_grid(csv, json, grid, {0.5, 0.1, 0.01}, 4);
  const auto back = io::read_value_grid(csv, json);
  CHECK(back.time_points() == grid.time_points());
  CHECK(back.mode_count() == grid.mode_count());
  CHECK(back.max_abs_diff(grid) == 0.0);

  // Interpolation still works on the reloaded grid.
  Eigen::VectorXd q(1);
  q << 0.4;
  CHECK(back.value_features(0.3, q, 1) == doctest::Approx(grid.value_features(0.3, q, 1)));

  // Writing twice yields identical bytes.
  const auto csv2 = (tmp.path / "grid2.csv").string();
  const auto json2 = (tmp.path / "grid2.json").string();
  io::write_value_grid(csv2, json2, grid, {0.5, 0.1, 0.01}, 4);
  CHECK(slurp(csv) == slurp(csv2));
  CHECK(slurp(json) == slurp(json2));
}

TEST_CASE("trajectory csv uses comma separation and a header") {
  TempDir tmp;
  ToyParams p;
  p.mode_rates = {1.0, 1.0};
  p.mode_costs = {0.1, 0.2};
  p.controls = {0.0};
  p.horizon = 0.5;
  const auto m = make_toy(p);
  Rng rng(derive_seed(61, "traj", 0));
  const auto traj =
      simulate(m, 0.0, m.zero_field(), 0, OpenLoopPolicy::constant(0.0), rng);

  const auto path = (tmp.path / "traj.csv").string();
  io::write_trajectory_csv(path, m, traj);
  std::ifstream in(path);
  std::string header;
  REQUIRE(std::getline(in, header));
  CHECK(header.find("t,") == 0);
  CHECK(header.find(';') == std::string::npos);
  std::string row;
  REQUIRE(std::getline(in, row));
  CHECK(row.find(',') != std::string::npos);
}

TEST_CASE("manifest serialization") {
  TempDir tmp;
  io::RunManifest man;
  man.command = "value";
  man.config_origin = "x.cfg";
  man.config_hash = 42;
  man.seed = 7;
  man.version = "pdmpctl 0.1.0";
  man.wall_seconds = 1.5;
  man.outputs = {"value_grid.csv"};
  const auto path = (tmp.path / "manifest.json").string();
  io::write_manifest(path, man);
  const auto text = slurp(path);
  CHECK(text.find("run_manifest/1") != std::string::npos);
  CHECK(text.find("value_grid.csv") != std::string::npos);
  CHECK(text.find("\"seed\"") != std::string::npos);
}
