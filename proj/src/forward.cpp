#include "heatlab/forward.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <tuple>

#include "heatlab/random.hpp"

namespace heatlab {

std::vector<std::string> TimeWindow::violations() const {
  std::vector<std::string> v;
  if (!(t0 > 0)) v.push_back("window: 0 < t0 violated");
  if (!(t0 < t_star)) v.push_back("window: t0 < t_star violated");
  if (!(t_star < t_frak)) v.push_back("window: t_star < t_frak violated");
  if (!(epsilon > 0)) v.push_back("window: 0 < epsilon violated");
  if (!(epsilon < t_star - t0)) v.push_back("window: epsilon < t_star - t0 violated");
  return v;
}

void TimeWindow::validate() const {
  const auto v = violations();
  if (!v.empty()) throw config_error(v.front());
}

TimeGrid TimeGrid::span(double t_end, int steps) {
  if (!(t_end > 0) || steps < 1) throw config_error("time grid needs t_end > 0 and steps >= 1");
  return {t_end / steps, steps};
}

namespace {

double knot_tolerance(const TimeGrid& tg) { return 1e-9 * tg.dt; }

}  // namespace

void SourceTerm::validate() const {
  if (values.rows() != grid.size() || values.cols() != time.knots()) {
    throw config_error("source values must be nodes x knots");
  }
  if (!values.allFinite()) throw config_error("source has non-finite values");
  for (Index i = 0; i < time.knots(); ++i) {
    if (time.t(i) < support_start - knot_tolerance(time) && values.col(i).cwiseAbs().maxCoeff() > 0) {
      throw config_error("source is nonzero before its support start");
    }
  }
}

void BoundaryInput::validate(const Mask* gamma0) const {
  if (mask.kind != MaskKind::boundary) throw config_error("boundary input needs a boundary mask");
  if (values.rows() != mask.size() || values.cols() != time.knots()) {
    throw config_error("boundary input values must be mask nodes x knots");
  }
  if (!values.allFinite()) throw config_error("boundary input has non-finite values");
  if (gamma0 != nullptr && !mask.subset_of(*gamma0)) {
    throw config_error("boundary input mask is not contained in Gamma0");
  }
  const double tol = knot_tolerance(time);
  for (Index i = 0; i < time.knots(); ++i) {
    const double t = time.t(i);
    if ((t < window_begin - tol || t > window_end + tol) && values.col(i).cwiseAbs().maxCoeff() > 0) {
      throw config_error("boundary input is nonzero outside its support window");
    }
  }
}

Eigen::VectorXd BoundaryInput::full_boundary(Index i) const {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(grid.boundary_size());
  for (Index j = 0; j < mask.size(); ++j) b[mask.indices[j]] = values(j, i);
  return b;
}

Eigen::VectorXd SpaceTimeField::nodal(const EigenSystem& eig, Index knot) const {
  return eig.synthesize(coefficients.col(knot));
}

std::pair<double, double> exponential_weights(double mu) {
  // w1 = int_0^1 s e^{-mu (1-s)} ds = (e^{-mu} - 1 + mu) / mu^2, total = (1 - e^{-mu}) / mu.
  double total;
  double w1;
  if (std::abs(mu) < 0.5) {
    total = mu == 0 ? 1.0 : -std::expm1(-mu) / mu;
    double term = 0.5;
    w1 = 0;
    for (int m = 0; m < 30; ++m) {
      w1 += term;
      term *= -mu / (m + 3);
    }
  } else {
    total = -std::expm1(-mu) / mu;
    w1 = (std::expm1(-mu) + mu) / (mu * mu);
  }
  return {total - w1, w1};
}

namespace {

// Integrates c' = -lambda c + g(t), g piecewise linear on the knots, with
// intervals outside [active_from, active_to] skipped.
Eigen::MatrixXd integrate_modes(const Eigen::VectorXd& lambdas, const Eigen::MatrixXd& g,
                                const TimeGrid& tg, double active_from, double active_to) {
  const Index m = lambdas.size();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(m, tg.knots());
  const double tol = knot_tolerance(tg);
  std::vector<double> decay(m), w0(m), w1(m);
  for (Index k = 0; k < m; ++k) {
    const double mu = lambdas[k] * tg.dt;
    decay[k] = std::exp(-mu);
    std::tie(w0[k], w1[k]) = exponential_weights(mu);
  }
  for (Index i = 0; i < tg.steps; ++i) {
    const bool active = tg.t(i + 1) > active_from + tol && tg.t(i) < active_to - tol;
    for (Index k = 0; k < m; ++k) {
      c(k, i + 1) = decay[k] * c(k, i);
      if (active) c(k, i + 1) += tg.dt * (w0[k] * g(k, i) + w1[k] * g(k, i + 1));
    }
  }
  return c;
}

}  // namespace

SpaceTimeField solve_duhamel(const EigenSystem& eig, const SourceTerm& source, const TimeGrid& time) {
  if (!(source.grid == eig.grid)) throw config_error("source grid does not match the eigensystem");
  if (!(source.time == time)) throw config_error("source knots must coincide with the time grid");
  source.validate();
  const Eigen::MatrixXd fk = eig.grid.cell_volume() * (eig.phis.transpose() * source.values);
  return {time, integrate_modes(eig.lambdas, fk, time, source.support_start,
                                std::numeric_limits<double>::infinity())};
}

Eigen::MatrixXd boundary_pairing(const EigenSystem& eig, const BoundaryInput& phi) {
  Eigen::MatrixXd weighted(phi.mask.size(), eig.modes());
  for (Index j = 0; j < phi.mask.size(); ++j) {
    const Index b = phi.mask.indices[j];
    weighted.row(j) = eig.psis.row(b) * eig.grid.boundary_node(b).measure;
  }
  return weighted.transpose() * phi.values;  // modes x knots
}

SpaceTimeField solve_boundary_driven(const EigenSystem& eig, const BoundaryInput& phi,
                                     const TimeGrid& time) {
  if (!(phi.grid == eig.grid)) throw config_error("boundary input grid does not match the eigensystem");
  if (!(phi.time == time)) throw config_error("boundary input knots must coincide with the time grid");
  phi.validate();
  const Eigen::MatrixXd g = -boundary_pairing(eig, phi);
  return {time, integrate_modes(eig.lambdas, g, time, phi.window_begin, phi.window_end)};
}

SpaceTimeField semigroup_trajectory(const EigenSystem& eig, const Eigen::VectorXd& f,
                                    const TimeGrid& time) {
  const Eigen::VectorXd a = eig.coefficients(f);
  Eigen::MatrixXd c(eig.modes(), time.knots());
  for (Index i = 0; i < time.knots(); ++i) {
    c.col(i) = (a.array() * (-eig.lambdas.array() * time.t(i)).exp()).matrix();
  }
  return {time, c};
}

AuditReport residual_report(const EigenSystem& eig, const SpaceTimeField& u,
                            const SourceTerm* source, const BoundaryInput* phi) {
  const TimeGrid& tg = u.time;
  if (tg.knots() < 3) throw config_error("residual report needs at least 3 knots");
  if (source != nullptr && !(source->time == tg)) throw config_error("source knots differ from the solution knots");
  if (phi != nullptr && !(phi->time == tg)) throw config_error("boundary knots differ from the solution knots");
  const Grid& g = eig.grid;
  AuditReport r("forward-residual");
  double worst = 0;
  for (Index i = 1; i + 1 < tg.knots(); ++i) {
    const Eigen::VectorXd ui = u.nodal(eig, i);
    const Eigen::VectorXd dt = (u.nodal(eig, i + 1) - u.nodal(eig, i - 1)) / (2 * tg.dt);
    Eigen::VectorXd res = dt + apply_operator(g, eig.potential, ui,
                                              phi != nullptr ? phi->full_boundary(i) : Eigen::VectorXd());
    if (source != nullptr) res -= source->values.col(i);
    const double n = l2_norm(g, res);
    worst = std::max(worst, n);
    auto& s = r.add("t=" + std::to_string(tg.t(i)), n, 1.0);
    s.metadata["t"] = tg.t(i);
  }
  double support = 0;
  if (phi != nullptr) {
    for (Index i = 0; i < tg.knots(); ++i) {
      const double t = tg.t(i);
      if (t < phi->window_begin || t > phi->window_end) {
        support = std::max(support, phi->values.col(i).cwiseAbs().maxCoeff());
      }
    }
  }
  r.scalars["max_residual"] = worst;
  r.scalars["initial_norm"] = l2_norm(g, u.nodal(eig, 0));
  r.scalars["boundary_support_violation"] = support;
  return r;
}

ProbeShape parse_probe_shape(const std::string& name) {
  if (name == "bump") return ProbeShape::bump;
  if (name == "node_impulse" || name == "node-impulse") return ProbeShape::node_impulse;
  if (name == "random_smooth" || name == "random-smooth") return ProbeShape::random_smooth;
  throw config_error("unknown probe shape '" + name + "'");
}

std::string to_string(ProbeShape shape) {
  switch (shape) {
    case ProbeShape::bump:
      return "bump";
    case ProbeShape::node_impulse:
      return "node_impulse";
    case ProbeShape::random_smooth:
      return "random_smooth";
  }
  return "bump";
}

double bump_profile(double t, double a, double b) {
  if (t <= a || t >= b) return 0.0;
  const double l = b - a;
  const double q = (t - a) * (b - t);
  return 16 * q * q / (l * l * l * l);
}

double bump_profile_derivative(double t, double a, double b) {
  if (t <= a || t >= b) return 0.0;
  const double l = b - a;
  const double q = (t - a) * (b - t);
  return 32 * q * (a + b - 2 * t) / (l * l * l * l);
}

BoundaryInput generate_probe(const Grid& grid, const Mask& gamma0, const TimeWindow& window,
                             const TimeGrid& time, ProbeShape shape, std::uint64_t seed) {
  window.validate();
  if (gamma0.kind != MaskKind::boundary || gamma0.indices.empty()) {
    throw config_error("probes need a nonempty boundary mask");
  }
  const double a = window.t0;
  const double b = window.input_end();
  Rng rng(seed);
  BoundaryInput p{grid, gamma0, time, Eigen::MatrixXd::Zero(gamma0.size(), time.knots()), a, b, 1.0};

  Eigen::VectorXd space = Eigen::VectorXd::Ones(gamma0.size());
  std::array<double, 3> wiggle{0, 0, 0};
  if (shape == ProbeShape::node_impulse) {
    space.setZero();
    space[static_cast<Index>(rng.below(static_cast<std::uint64_t>(gamma0.size())))] = 1.0;
  } else if (shape == ProbeShape::random_smooth) {
    std::array<double, 3> amp{};
    for (double& x : amp) x = rng.uniform(-1, 1);
    for (double& x : wiggle) x = rng.uniform(-0.3, 0.3);
    for (Index j = 0; j < gamma0.size(); ++j) {
      const BoundaryNode& node = grid.boundary_node(gamma0.indices[j]);
      const int ta = (node.face == Face::x_low || node.face == Face::x_high) ? 1 : 0;
      double s = 0.5;
      if (grid.dim() == 2) {
        const Axis& ax = grid.axis(ta);
        s = (node.coord[ta] - ax.low) / (ax.high - ax.low);
      }
      double v = 1.0 + 0.5 * static_cast<double>(static_cast<int>(node.face));
      for (int m = 0; m < 3; ++m) v += amp[m] * std::cos((m + 1) * std::numbers::pi * s);
      space[j] = v;
    }
  }
  for (Index i = 0; i < time.knots(); ++i) {
    const double t = time.t(i);
    double prof = bump_profile(t, a, b);
    if (prof == 0) continue;
    double mod = 1;
    for (int m = 0; m < 3; ++m) mod += wiggle[m] * std::sin((m + 1) * std::numbers::pi * (t - a) / (b - a));
    p.values.col(i) = space * (prof * mod);
  }
  return p;
}

}  // namespace heatlab
