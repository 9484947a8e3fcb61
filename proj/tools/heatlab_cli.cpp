#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "heatlab/config.hpp"
#include "heatlab/experiments.hpp"

namespace {

std::string subcommand_list() {
  std::string s;
  for (const auto& name : heatlab::subcommands()) s += (s.empty() ? "" : ", ") + name;
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral heat-equation experiments: audits and plot data"};
  std::string subcommand;
  std::string config_path;
  std::optional<std::int64_t> seed;
  std::string out;
  int threads = 1;
  app.add_option("subcommand", subcommand, "one of: " + subcommand_list() + ", validate")->required();
  app.add_option("--config", config_path, "JSON config file (defaults apply when omitted)");
  app.add_option("--seed", seed, "master seed (overrides HEATLAB_SEED and the config)");
  app.add_option("--out", out, "output directory (overrides the config)");
  app.add_option("--threads", threads, "worker threads for independent ensemble members")
      ->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return heatlab::kExitUsage;
  }

  heatlab::ExperimentConfig config;
  try {
    if (!config_path.empty()) config = heatlab::load_config(config_path);
    if (const char* env = std::getenv("HEATLAB_SEED"); env != nullptr && *env != '\0') {
      std::size_t used = 0;
      const std::string text(env);
      config.seed = std::stoll(text, &used);
      if (used != text.size()) throw heatlab::config_error("HEATLAB_SEED is not an integer");
    }
  } catch (const heatlab::config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return heatlab::kExitValidation;
  } catch (const std::logic_error&) {
    std::cerr << "config error: HEATLAB_SEED is not an integer\n";
    return heatlab::kExitValidation;
  }
  if (seed) config.seed = *seed;
  if (!out.empty()) config.output = out;

  if (subcommand == "validate") {
    const auto v = heatlab::validate(config);
    for (const auto& m : v) std::cerr << "violation: " << m << '\n';
    if (v.empty()) std::cout << "config is valid\n";
    return v.empty() ? heatlab::kExitOk : heatlab::kExitValidation;
  }

  const heatlab::RunResult r = heatlab::run(subcommand, config, config.output, threads);
  for (const auto& m : r.messages) {
    std::cerr << (r.status == heatlab::kExitValidation ? "violation: " : "error: ") << m << '\n';
  }
  if (r.status == heatlab::kExitUsage) std::cerr << "subcommands: " << subcommand_list() << ", validate\n";
  for (const auto& a : r.anomalies) std::cerr << "anomaly: " << a << '\n';
  for (const auto& p : r.artifacts) std::cout << p.string() << '\n';
  return r.status;
}
