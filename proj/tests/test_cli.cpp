#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "heatlab/config.hpp"
#include "heatlab/experiments.hpp"

using namespace heatlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::current_path() / "test_cli_out" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

ExperimentConfig shipped_default() { return load_config(fs::path(HEATLAB_SOURCE_DIR) / "configs/default.json"); }

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(HEATLAB_CLI_PATH) + " " + args + " >" + (log / "stdout").string() + " 2>" +
                          (log / "stderr").string();
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

bool contains(const std::vector<std::string>& v, const std::string& needle) {
  for (const auto& s : v) {
    if (s.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("spectrum of the 1D zero potential matches the closed-form tridiagonal eigenvalues") {
  const fs::path out = scratch("spectrum");
  ExperimentConfig c = shipped_default();
  const RunResult r = run("spectrum", c, out);
  REQUIRE(r.status == kExitOk);
  std::ifstream f(out / "spectrum.csv");
  std::string line;
  std::getline(f, line);
  CHECK(line == "k,lambda");
  const double h = 1.0 / c.grid.cells;
  int rows = 0;
  double worst = 0;
  while (std::getline(f, line)) {
    const auto comma = line.find(',');
    const double k = std::stod(line.substr(0, comma));
    const double lambda = std::stod(line.substr(comma + 1));
    const double s = std::sin(k * std::numbers::pi * h / 2);
    const double exact = 4 / (h * h) * s * s;
    worst = std::max(worst, std::abs(lambda - exact) / exact);
    ++rows;
  }
  CHECK(rows == c.grid.cells - 1);
  CHECK(worst <= 1e-10);
}

TEST_CASE("identical config and seed give byte-identical JSON") {
  ExperimentConfig c = shipped_default();
  c.seed = 11;
  for (const std::string sub : {"spectrum", "semigroup", "forward", "observability"}) {
    const fs::path a = scratch(sub + "_a");
    const fs::path b = scratch(sub + "_b");
    const RunResult ra = run(sub, c, a);
    const RunResult rb = run(sub, c, b, 3);
    REQUIRE(ra.status == rb.status);
    REQUIRE(ra.artifacts.size() == rb.artifacts.size());
    for (const auto& p : ra.artifacts) {
      if (p.extension() != ".json") continue;
      CHECK_MESSAGE(slurp(p) == slurp(b / p.filename()), p.filename().string());
    }
  }
}

TEST_CASE("an invalid window is rejected with exit 2 naming the invariant") {
  ExperimentConfig c = shipped_default();
  c.window.t0 = 0.7;
  const RunResult r = run("forward", c, scratch("bad_window"));
  CHECK(r.status == kExitValidation);
  CHECK(contains(r.messages, "t0 < t_star violated"));
  CHECK(r.artifacts.empty());

  const fs::path dir = scratch("bad_window_cli");
  nlohmann::json j = to_json(c);
  std::ofstream(dir / "config.json") << j.dump(2);
  CHECK(cli("forward --config " + (dir / "config.json").string() + " --out " + (dir / "out").string(), dir) ==
        kExitValidation);
  CHECK(slurp(dir / "stderr").find("t0 < t_star violated") != std::string::npos);
}

TEST_CASE("the shipped configs validate cleanly") {
  CHECK(validate(shipped_default()).empty());
  CHECK(validate(ExperimentConfig{}).empty());
  CHECK(validate(load_config(fs::path(HEATLAB_SOURCE_DIR) / "configs/planar.json")).empty());
}

TEST_CASE("s outside (0, 1/2) is reported") {
  ExperimentConfig c = shipped_default();
  c.stability.s = 0.6;
  const auto v = validate(c);
  CHECK(contains(v, "s in (0, 1/2)"));
}

TEST_CASE("2 vartheta sigma^2 >= 1 is an admissibility violation") {
  ExperimentConfig c = shipped_default();
  c.sigma = 1.0;
  c.vartheta = 0.6;
  const auto v = validate(c);
  CHECK(contains(v, "admissibility: 2 vartheta sigma^2 < 1 violated"));
  CHECK(contains(v, "= 1.2"));
  c.vartheta = 0.4;
  CHECK(validate(c).empty());
}

TEST_CASE("unknown keys and malformed values are config errors") {
  CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"grid": {"dims": 2}})")), config_error);
  CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"seed": "seven"})")), config_error);
  ExperimentConfig c;
  c.seed = -1;
  CHECK(contains(validate(c), "seed must be nonnegative"));
}

TEST_CASE("config round trip through JSON") {
  const ExperimentConfig c = load_config(fs::path(HEATLAB_SOURCE_DIR) / "configs/planar.json");
  CHECK(to_json(parse_config(to_json(c))) == to_json(c));
}

TEST_CASE("unknown subcommand is a usage error") {
  CHECK(run("frobnicate", ExperimentConfig{}, scratch("unknown")).status == kExitUsage);
  const fs::path dir = scratch("unknown_cli");
  CHECK(cli("frobnicate --out " + (dir / "out").string(), dir) == kExitUsage);
  CHECK(cli("spectrum --threads 0", dir) == kExitUsage);
}

TEST_CASE("command-line seed overrides the environment and the config") {
  const fs::path dir = scratch("seed");
  REQUIRE(cli("spectrum --seed 5 --out " + (dir / "a").string(), dir) == kExitOk);
  REQUIRE(cli("validate", dir) == kExitOk);
  const auto j = nlohmann::json::parse(slurp(dir / "a" / "spectrum.json"));
  CHECK(j.at("seed") == 5);
  CHECK(cli("spectrum --out " + (dir / "b").string(), dir) == kExitOk);
  CHECK(nlohmann::json::parse(slurp(dir / "b" / "spectrum.json")).at("seed") == 0);
  ::setenv("HEATLAB_SEED", "9", 1);
  CHECK(cli("spectrum --out " + (dir / "c").string(), dir) == kExitOk);
  CHECK(cli("spectrum --seed 4 --out " + (dir / "d").string(), dir) == kExitOk);
  ::unsetenv("HEATLAB_SEED");
  CHECK(nlohmann::json::parse(slurp(dir / "c" / "spectrum.json")).at("seed") == 9);
  CHECK(nlohmann::json::parse(slurp(dir / "d" / "spectrum.json")).at("seed") == 4);
}
