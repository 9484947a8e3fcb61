#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "heatlab/audit.hpp"
#include "heatlab/spectral.hpp"

namespace heatlab {

/// Observation window 0 < t0 < t_star < t_frak with 0 < epsilon < t_star - t0.
struct TimeWindow {
  double t0 = 0.1;
  double t_star = 0.6;
  double epsilon = 0.1;
  double t_frak = 1.0;

  /// Human-readable list of broken invariants; empty when valid.
  std::vector<std::string> violations() const;
  /// Throws config_error naming the first broken invariant.
  void validate() const;
  /// End of the boundary-input support, t_star - epsilon.
  double input_end() const { return t_star - epsilon; }
};

/// Uniform knots t_i = i dt, i = 0..steps.
struct TimeGrid {
  double dt = 0;
  int steps = 0;

  static TimeGrid span(double t_end, int steps);
  Index knots() const { return steps + 1; }
  double t(Index i) const { return static_cast<double>(i) * dt; }
  double end() const { return t(steps); }
  bool operator==(const TimeGrid& o) const { return dt == o.dt && steps == o.steps; }
};

/// Source F sampled on the knots, piecewise linear in time between knots.
/// Intervals ending at or before support_start contribute nothing, so F can
/// switch on as a step at a knot.
struct SourceTerm {
  Grid grid;
  TimeGrid time;
  Eigen::MatrixXd values;  // nodes x knots
  double support_start = 0;

  void validate() const;
};

/// Dirichlet input phi on a boundary mask, piecewise linear in time, vanishing
/// outside [window_begin, window_end].
struct BoundaryInput {
  Grid grid;
  Mask mask;
  TimeGrid time;
  Eigen::MatrixXd values;  // mask nodes x knots
  double window_begin = 0;
  double window_end = 0;
  double holder_alpha = 1;  // informational: the probes are C^1 in time

  /// Throws config_error on a support violation, or when `gamma0` is given
  /// and the mask is not contained in it.
  void validate(const Mask* gamma0 = nullptr) const;
  /// Values on the full boundary (zero off the mask) at knot i.
  Eigen::VectorXd full_boundary(Index i) const;
};

/// Spectral coefficients c_k(t_i); nodal values are sum_k c_k phi_k.
struct SpaceTimeField {
  TimeGrid time;
  Eigen::MatrixXd coefficients;  // modes x knots

  Eigen::VectorXd nodal(const EigenSystem& eig, Index knot) const;
};

/// Exact integral of e^{-lambda (dt - s)} against the hat functions on
/// [0, dt]: returns (w0, w1) so that the step contribution is
/// dt (w0 F_i + w1 F_{i+1}).
std::pair<double, double> exponential_weights(double mu);

/// c_k(t) = int_0^t e^{-lambda_k (t - s)} F_k(s) ds, F_k = (F(s) | phi_k).
SpaceTimeField solve_duhamel(const EigenSystem& eig, const SourceTerm& source,
                             const TimeGrid& time);

/// Boundary pairing <phi(t_i) | psi_k> = sum_b phi_b psi_k(b) |cell_b| for every knot.
Eigen::MatrixXd boundary_pairing(const EigenSystem& eig, const BoundaryInput& phi);

/// c_k(t) = -int_0^t e^{-lambda_k (t - s)} <phi(s) | psi_k> ds.
SpaceTimeField solve_boundary_driven(const EigenSystem& eig, const BoundaryInput& phi,
                                     const TimeGrid& time);

/// c_k(t) = e^{-lambda_k t} (f | phi_k).
SpaceTimeField semigroup_trajectory(const EigenSystem& eig, const Eigen::VectorXd& f,
                                    const TimeGrid& time);

/// max over interior knots of ||(D_t - Lap_h + V) u - F|| with the central
/// difference D_t and Dirichlet data phi, plus ||u(0)|| and the support
/// violation of phi.
AuditReport residual_report(const EigenSystem& eig, const SpaceTimeField& u,
                            const SourceTerm* source = nullptr,
                            const BoundaryInput* phi = nullptr);

enum class ProbeShape { bump, node_impulse, random_smooth };

ProbeShape parse_probe_shape(const std::string& name);
std::string to_string(ProbeShape shape);

/// C^1 bump 16 ((t - a)(b - t))^2 / (b - a)^4 on [a, b], zero elsewhere.
double bump_profile(double t, double a, double b);
double bump_profile_derivative(double t, double a, double b);

/// Deterministic probe on `gamma0` supported in [t0, t_star - epsilon].
BoundaryInput generate_probe(const Grid& grid, const Mask& gamma0, const TimeWindow& window,
                             const TimeGrid& time, ProbeShape shape, std::uint64_t seed);

}  // namespace heatlab
