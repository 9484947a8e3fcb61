#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "heatlab/config.hpp"

namespace heatlab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitAnomaly = 3;
inline constexpr int kExitUsage = 64;

/// spectrum, semigroup, forward, distinguish, reconstruct, observability, quc, chain.
const std::vector<std::string>& subcommands();

struct RunResult {
  int status = kExitOk;
  std::vector<std::filesystem::path> artifacts;
  std::vector<std::string> messages;   // validation errors or failure reason
  std::vector<std::string> anomalies;  // mathematical anomalies flagged by the audits
};

/// Validates the config, runs the subcommand and writes its artifacts into
/// `out`. Artifacts depend only on (config, config.seed): JSON with sorted
/// keys, CSV with a header row. `threads` parallelizes independent ensemble
/// members without changing any output.
RunResult run(const std::string& subcommand, const ExperimentConfig& config, const std::filesystem::path& out,
              int threads = 1);

/// Writes `j` with two-space indentation and a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// Header row then one row per entry, numbers printed with 17 significant digits.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

/// Plot-ready long format: columns x, y, series.
struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};
void write_plot_csv(const std::filesystem::path& path, const std::vector<PlotSeries>& series);

}  // namespace heatlab
