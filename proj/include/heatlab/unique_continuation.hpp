#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "heatlab/audit.hpp"
#include "heatlab/mesh.hpp"
#include "heatlab/observability.hpp"
#include "heatlab/spectral.hpp"

namespace heatlab {

/// ln(16/5) / ln(18/5).
inline const double kDefaultVarsigma = std::log(16.0 / 5.0) / std::log(18.0 / 5.0);

/// Discrete solution of (Lap_h + V) u = 0 with Dirichlet data `boundary`.
struct HarmonicSample {
  Field u;
  Eigen::VectorXd boundary;
  double residual = 0;  // relative residual of the linear solve
};

/// Sparse LU of -Lap_h - V, reused across boundary data.
class HarmonicSolver {
 public:
  /// Throws solver_error naming the near-zero eigenvalue of -Lap_h - V when
  /// the system is singular.
  HarmonicSolver(const Grid& grid, const Potential& v);
  ~HarmonicSolver();
  HarmonicSolver(HarmonicSolver&&) noexcept;
  HarmonicSolver& operator=(HarmonicSolver&&) noexcept;

  HarmonicSample solve(const Eigen::VectorXd& boundary) const;

  /// Smallest-magnitude eigenvalue of -Lap_h - V (inverse iteration).
  double smallest_eigenvalue() const { return smallest_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  double smallest_ = 0;
};

/// Relative residual above which a solve is rejected.
inline constexpr double kHarmonicResidualTolerance = 1e-10;

HarmonicSample harmonic_sample(const Grid& grid, const Potential& v, const Eigen::VectorXd& boundary);
HarmonicSample harmonic_sample(const Grid& grid, const Potential& v,
                               const std::function<double(const Point&)>& boundary);
HarmonicSample harmonic_sample(const Grid& grid, const Potential& v, std::uint64_t seed);

/// Boundary values sum_{m <= modes} (a_m cos(2 pi m s) + b_m sin(2 pi m s)) / m
/// with s the normalized perimeter position and standard normal a_m, b_m.
Eigen::VectorXd random_boundary_data(const Grid& grid, std::uint64_t seed, int modes = 6);

/// Member i is drawn from split_seed(seed, 2, i).
std::vector<HarmonicSample> harmonic_ensemble(const Grid& grid, const Potential& v, Index count,
                                              std::uint64_t seed);

/// ||(Lap_h + V) u||_{Lp(Omega)} with p the dual Lebesgue exponent.
double harmonic_defect(const HarmonicSample& s, const Potential& v);

/// Smallest distance between a node of inner and a node outside outer
/// (interior nodes not in outer, and the box boundary).
double mask_distance(const Grid& grid, const Mask& inner, const Mask& outer);

/// Fitted c = ||grad u||_{w0} / (||(Lap_h + V) u||_Lp + d^-1 ||u||_{w1}) per sample.
/// Throws config_error unless w0 is contained in w1 with mask distance >= d.
AuditReport caccioppoli_check(const std::vector<HarmonicSample>& ensemble, const Potential& v,
                              const Mask& omega0, const Mask& omega1, double d);

enum class ExponentSide : std::uint8_t { large_ball, small_ball };

ExponentSide parse_exponent_side(const std::string& name);
std::string to_string(ExponentSide side);

/// Fitted c = r^2 ||u||_{B2r} / (||u||_{B3r}^e1 ||u||_{Br}^e2), with
/// (e1, e2) = (varsigma, 1 - varsigma) on the large-ball side and swapped on
/// the small-ball side. Requires B(x0, 3r) inside the domain. Zero samples are
/// skipped and flagged; ||u||_{Br} = 0 with ||u||_{B2r} > 0 is an anomaly.
AuditReport three_ball_check(const Grid& grid, const std::vector<Eigen::VectorXd>& ensemble,
                             const Point& x0, double r, double varsigma = kDefaultVarsigma,
                             ExponentSide side = ExponentSide::small_ball);

/// eta_delta = c0 exp(-c1 delta^-n), c0 = s exp(-2^(n-1/2) |ln s|),
/// c1 = 2^(n/2-1/2) |ln s| D^n.
struct PropagationConstants {
  double varsigma = kDefaultVarsigma;
  int dim = 1;
  double diameter = 1;
  double c0 = 0;
  double c1 = 0;

  static PropagationConstants make(double varsigma, int dim, double diameter);

  double log_eta(double delta) const { return std::log(c0) - c1 * std::pow(delta, -dim); }
  double eta(double delta) const { return std::exp(log_eta(delta)); }
  /// nu = n + 2 + (n + 2 + s) ln 4 / ln 2 + 2 / (1 - varsigma).
  double nu(double s) const;
};

/// Sequence of balls linking x to y through the kept sub-cubes.
///
/// The bounding cube Q has side D = diam(Omega) and the box center as its
/// center; it is split into k^n sub-cubes with k = floor(D / (sqrt(n) delta)) + 1.
/// Kept cubes meet the closure of {dist(., boundary) >= 4 delta}. The path
/// runs x -> centers of the breadth-first cube path -> y, and the centers are
/// the successive exit points from B(center, delta) along it.
struct Chain {
  double delta = 0;
  int dim = 1;
  int cubes_per_axis = 0;
  Index cube_count = 0;  // m_delta
  double cube_side = 0;
  Point origin{};  // lower corner of Q
  std::vector<Index> kept;        // I_delta, flat cube indices
  std::vector<Index> cube_path;   // cubes visited from x to y
  std::vector<Point> centers;     // x_0 = x, ..., x_{p+1} = y
  Index p_delta = 0;

  /// Broken invariants, empty when the chain is valid.
  std::vector<std::string> violations(const Grid& grid) const;
};

/// delta_0 for a box: its smallest half-width (Omega^delta is connected below it).
double connectivity_radius(const Grid& grid);

/// Throws config_error when x or y lies outside Omega^{4 delta}, delta >= delta_0 / 4
/// or the kept cubes of x and y are not connected. Invariant failures throw
/// std::logic_error.
Chain build_chain(const Grid& grid, double delta, const Point& x, const Point& y);
Chain build_chain(const Grid& grid, double delta, const Point& x, const Point& y, double delta0);

nlohmann::json to_json(const Chain& chain);

/// Per-link constants delta^2 ||u||_{B(x_{j+1}, delta)} / ||u||_{B(x_j, delta)}^varsigma,
/// and the end-to-end exponent ln ||u||_{B(y,delta)} / ln ||u||_{B(x,delta)}
/// against eta_delta (scalar `gamma_hat`, violation when below eta_delta).
/// The field is normalized to unit L2 norm first.
AuditReport propagate_smallness(const Grid& grid, const Eigen::VectorXd& u, const Chain& chain,
                                double varsigma = kDefaultVarsigma);

/// For each u and rho: ||u|| against H_rho ||u||_w + rho^s ||u||_H1 in log
/// form. Scalars: fitted constant per rho (max over samples), nu; sample
/// metadata carries log epsilon of the Young split epsilon = rho^{(s+nu)(1-eta_{rho/8})}.
AuditReport global_quc_audit(const Grid& grid, const std::vector<Eigen::VectorXd>& ensemble,
                             const Mask& omega, const std::vector<double>& rhos,
                             const StabilityFunctions& fns, double varsigma = kDefaultVarsigma);

}  // namespace heatlab
