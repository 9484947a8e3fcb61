#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "heatlab/forward.hpp"
#include "heatlab/mesh.hpp"
#include "heatlab/observability.hpp"
#include "heatlab/spectral.hpp"

namespace heatlab {

struct GridSpec {
  int dim = 1;
  int cells = 64;
  std::vector<std::pair<double, double>> extents;  // empty: unit box
};

struct PotentialSpec {
  std::string kind = "zero";  // zero | constant | rough
  double amplitude = 1.0;     // constant value or spike amplitude
  int count = 4;
  double gamma = 1.0;
  std::int64_t seed = 0;
};

struct MaskSpecs {
  RegionSpec omega = region::Box{{0.0, 0.0}, {0.5, 1.0}};
  RegionSpec gamma0 = region::Faces{{Face::x_low}};
  RegionSpec gamma1 = region::Faces{{Face::x_high}};
  RegionSpec omega0 = region::Ball{{0.5, 0.5}, 0.2};
};

struct EnsembleSpec {
  Index samples = 20;
  Index modes = 10;
  int time_steps = 200;
  int probes = 3;
};

/// Per-subcommand parameters; every field has a default.
struct ExperimentParams {
  Index spectrum_modes = 0;  // 0: full spectrum
  std::vector<double> semigroup_times{0.01, 0.1, 1.0};
  std::vector<double> distinguish_deltas{0.5, 1.0, 2.0};
  int reconstruct_knots = 50;
  double reconstruct_tau = 1e-12;
  std::vector<double> stability_lambdas{10, 20, 40, 80, 160, 320};
  std::vector<double> quc_rhos{0.005, 0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5};
  std::vector<double> three_ball_radii{0.05, 0.1};
  std::string exponent_side = "small-ball";
  std::vector<double> chain_deltas{0.1, 0.05, 0.025};
  int chain_pairs = 20;
};

struct ExperimentConfig {
  GridSpec grid;
  PotentialSpec potential;
  std::optional<double> vartheta;
  std::optional<double> sigma;  // Sobolev constant override; computed when absent
  MaskSpecs masks;
  TimeWindow window;
  StabilityConfig stability;
  EnsembleSpec ensemble;
  ExperimentParams params;
  std::int64_t seed = 0;  // master seed, must be nonnegative
  std::string output = "out";

  /// Builds the grid; throws config_error on a malformed spec.
  Grid build_grid() const;
  Potential build_potential(const Grid& grid) const;
  /// StabilityConfig with dim, diameter and window filled from the grid spec.
  StabilityConfig stability_for(const Grid& grid) const;
};

/// Parses a JSON config tree; missing keys keep their defaults and unknown
/// keys are rejected. Throws config_error.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const ExperimentConfig& config);
nlohmann::json region_to_json(const RegionSpec& spec);
RegionSpec region_from_json(const nlohmann::json& j);

/// All broken invariants; an empty list means the config is valid.
std::vector<std::string> validate(const ExperimentConfig& config);

}  // namespace heatlab
