#include <doctest.h>

#include <cmath>
#include <numbers>

#include "heatlab/observability.hpp"
#include "heatlab/random.hpp"
#include "heatlab/semigroup.hpp"

using namespace heatlab;

namespace {

StabilityConfig config_for(int dim) {
  StabilityConfig c;
  c.dim = dim;
  return c;
}

Mask left_half(const Grid& g) {
  Point hi{};
  Point lo{};
  for (int a = 0; a < g.dim(); ++a) {
    lo[a] = g.axis(a).low;
    hi[a] = g.axis(a).high;
  }
  hi[0] = 0.5 * (g.axis(0).low + g.axis(0).high);
  return make_mask(g, region::Box{lo, hi});
}

}  // namespace

TEST_CASE("low-mode projector") {
  const Grid g = unit_grid(1, 40);
  const EigenSystem e = eigendecompose(g, rough_potential(g, {3, 1.0, 1.0, 2}));
  Rng rng(4);
  const Eigen::VectorXd f = rng.normal_vector(g.size());
  const Eigen::VectorXd lt = shifted_lambdas(e);

  CHECK((project_low(e, f, lt.maxCoeff()) - f).norm() <= 1e-12 * f.norm());
  CHECK(project_low(e, f, 0.5 * lt[0]).norm() == 0);

  for (double lambda : {50.0, 400.0, 2000.0}) {
    const Eigen::VectorXd p = project_low(e, f, lambda);
    CHECK((project_low(e, p, lambda) - p).norm() <= 1e-13 * f.norm() * std::sqrt(g.size()));
    const double total = std::pow(l2_norm(g, f), 2);
    const double parts = std::pow(l2_norm(g, p), 2) + std::pow(l2_norm(g, Eigen::VectorXd(f - p)), 2);
    CHECK(std::abs(total - parts) <= 1e-12 * total);
  }
}

TEST_CASE("spectral norms") {
  const Grid g = unit_grid(1, 30);
  const EigenSystem e = eigendecompose(g, rough_potential(g, {2, 1.0, 0.5, 9}));
  const Eigen::VectorXd phi1 = e.phis.col(0);
  const SpectralNorms n1 = spectral_norms(e, phi1, 1.0);
  CHECK(n1.n == doctest::Approx(2 * std::sqrt(1 + std::abs(e.lambdas[0]))).epsilon(1e-12));

  const SpectralNorms z = spectral_norms(e, Eigen::VectorXd::Zero(g.size()), 1.0);
  CHECK(z.n == 0);
  CHECK(z.n_beta == 0);
  CHECK(z.bracket_beta == 0);

  Rng rng(12);
  const Eigen::VectorXd f = rng.normal_vector(g.size());
  const SpectralNorms half = spectral_norms(e, f, 0.5);
  double second = 0;
  for (Index k = 0; k < e.modes(); ++k) second += (1 + std::abs(e.lambdas[k])) * std::pow(half.coefficients[k], 2);
  CHECK(half.n_beta == doctest::Approx(std::sqrt(second)).epsilon(1e-13));
  for (double beta : {0.25, 1.0, 2.0}) {
    const SpectralNorms s = spectral_norms(e, f, beta);
    CHECK(s.n_beta >= s.bracket_beta);
  }
}

TEST_CASE("stability functions") {
  StabilityConfig c = config_for(2);
  c.beta = 2;
  const StabilityFunctions fns(c);
  CHECK(fns.psi(0.5).value() == doctest::Approx(2.0));
  CHECK(fns.psi(std::exp(4.0)).value() == doctest::Approx(1.0 / 16));
  CHECK_THROWS_AS(fns.psi(0.0), domain_error);
  CHECK_THROWS_AS(fns.big_phi(-1.0), domain_error);

  for (double rho : {0.5, 0.1, 0.01, 1e-4}) {
    const LogMagnitude h = fns.h(rho);
    CHECK(h.loglog == doctest::Approx(c.c_hat * std::pow(rho, -2)).epsilon(1e-15));
  }
  CHECK(fns.h(1e-4).overflowed());

  StabilityConfig q = config_for(2);
  q.s = 0.25;
  const StabilityFunctions fq(q);
  // l = e^{e^4}: (ln ln l)^{-s} = 4^{-1/4}.
  const LogMagnitude l = LogMagnitude::from_loglog(4.0);
  REQUIRE(l > fq.phi_threshold());
  CHECK(fq.big_phi(l).value() == doctest::Approx(std::pow(4.0, -0.25)).epsilon(1e-14));
  CHECK(fq.big_phi(std::numeric_limits<double>::infinity()).is_zero());

  // Small branch: (H + rho^s phi) / l, where rho^s phi(rho) = H.
  const double small = 2.0;
  REQUIRE(LogMagnitude::from_value(small) < fq.phi_threshold());
  CHECK(fq.big_phi(small).value() == doctest::Approx(2 * fq.h(q.rho_hat).value() / small).epsilon(1e-13));
  CHECK(fq.phi_threshold().log > 1);
}

TEST_CASE("stability config validation") {
  StabilityConfig c;
  CHECK(c.violations().empty());
  c.s = 0.5;
  CHECK_THROWS_AS(c.validate(), config_error);
  c = StabilityConfig{};
  c.rho_hat = 0.6;
  CHECK_FALSE(c.violations().empty());
  c = StabilityConfig{};
  // phi(rho_hat) <= e once rho_hat > 1 and c_hat is tiny.
  c.c_hat = 1e-6;
  c.rho_hat = 2;
  c.rho0 = 2;
  CHECK_FALSE(c.violations().empty());
}

TEST_CASE("rho minimization") {
  const StabilityFunctions fns(config_for(2));
  const double rh = fns.config().rho_hat;
  auto direct = [&](double x, double y, double rho) {
    return (fns.h(rho) * LogMagnitude::from_value(x) + LogMagnitude::from_value(std::pow(rho, 0.25) * y)).log;
  };
  auto dense_min = [&](double x, double y) {
    double best = std::numeric_limits<double>::infinity();
    const double lo = std::log(fns.rho_floor());
    const double hi = std::log(rh);
    for (int i = 0; i <= 20000; ++i) best = std::min(best, direct(x, y, std::exp(lo + (hi - lo) * i / 20000.0)));
    return best;
  };

  const TlResult eq = minimize_tl(1.0, 1.0, fns);
  CHECK(eq.minimum.log <= direct(1.0, 1.0, rh / 2) + 1e-12);
  CHECK_THROWS_AS(minimize_tl(2.0, 1.0, fns), domain_error);

  for (double ratio : {1.0, 3.0, 1e2, 1e6, 1e30, 1e200}) {
    const TlResult r = minimize_tl(1.0, ratio, fns);
    CHECK(r.minimum.log <= dense_min(1.0, ratio) + 1e-9);
    CHECK(std::isfinite(r.log_fitted));
    if (ratio > fns.phi_threshold().value()) CHECK(r.large_ratio);
  }

  double prev = -std::numeric_limits<double>::infinity();
  for (double x : {1e-8, 1e-6, 1e-4, 1e-2, 1.0}) {
    const double m = dense_min(x, 1.0);
    CHECK(m >= prev);
    prev = m;
    CHECK(std::abs(minimize_tl(x, 1.0, fns).minimum.log - m) <= 1e-6);
  }

  const AuditReport r = tl_audit({{1, 1}, {1e-3, 1}, {1e-40, 1}}, fns);
  CHECK(r.samples.size() == 3);
  CHECK(std::isfinite(r.scalars.at("fitted_c")));
}

TEST_CASE("sinh lift") {
  const Grid g = unit_grid(1, 24);
  const EigenSystem e = eigendecompose(g, rough_potential(g, {2, 1.0, 1.0, 3}));
  const Eigen::VectorXd lt = shifted_lambdas(e);
  Eigen::VectorXd y(3);
  y << 0.1, 0.5, 0.9;

  const Eigen::VectorXd f = 2.5 * e.phis.col(0);
  const SinhLift w = sinh_lift(e, f, lt[0], y);
  REQUIRE(w.modes.size() == 1);
  const double r = std::sqrt(lt[0]);
  for (Index i = 0; i < y.size(); ++i) {
    const Eigen::VectorXd expect = std::sinh(r * y[i]) / r * 2.5 * e.phis.col(0);
    CHECK((w.values.col(i) - expect).norm() <= 1e-12 * expect.norm());
  }

  // A constant potential cancelling lambda_1 leaves a shifted eigenvalue near 1e-6.
  const EigenSystem e0 = eigendecompose(g, constant_potential(g, 0.0));
  const Potential cancel = constant_potential(g, -e0.lambdas[0]);
  const EigenSystem ez = eigendecompose(g, cancel);
  const SinhLift wz = sinh_lift(ez, ez.phis.col(0), 1e-3, y);
  REQUIRE(wz.modes.size() == 1);
  for (Index i = 0; i < y.size(); ++i) {
    CHECK((wz.values.col(i) - y[i] * ez.phis.col(0)).norm() <= 1e-6 * y[i] * ez.phis.col(0).norm());
  }

  // d^2/dy^2 w = (-Lap_h + V + c1) w per mode, by Richardson-extrapolated second differences.
  const double c1 = spectral_shift(e);
  for (Index k = 0; k < 4; ++k) {
    const Eigen::VectorXd fk = e.phis.col(k);
    auto second = [&](double dy) {
      Eigen::VectorXd ys(3);
      ys << 0.5 - dy, 0.5, 0.5 + dy;
      const SinhLift s = sinh_lift(e, fk, lt[k], ys);
      return Eigen::VectorXd((s.values.col(0) - 2 * s.values.col(1) + s.values.col(2)) / (dy * dy));
    };
    const Eigen::VectorXd d2 = (4 * second(5e-4) - second(1e-3)) / 3;
    Eigen::VectorXd ymid(1);
    ymid << 0.5;
    const Eigen::VectorXd wm = sinh_lift(e, fk, lt[k], ymid).values.col(0);
    const Eigen::VectorXd op = apply_operator(g, e.potential, wm) + c1 * wm;
    CHECK((d2 - op).norm() <= 1e-8 * op.norm());
  }
}

TEST_CASE("low-mode observability") {
  const Grid g = unit_grid(1, 40);
  const EigenSystem e = eigendecompose(g, zero_potential(g));
  const StabilityFunctions fns(config_for(1));
  const Mask half = left_half(g);
  const Mask third = make_mask(g, region::Box{{0, 0}, {0.3, 0}});
  const Mask all = whole_mask(g);
  const std::vector<double> rhos{0.05, 0.1, 0.25, 0.45};
  const double lambda = shifted_lambdas(e)[0];

  Eigen::MatrixXd u(g.size(), 2);
  u.col(0) = e.phis.col(0);
  u.col(1).setZero();
  const AuditReport r = low_mode_observability(e, u, lambda, half, rhos, fns);
  CHECK(r.scalars.at("fitted_max") < 1);
  CHECK(r.samples.back().fitted() == 0);

  const Eigen::MatrixXd ens = low_mode_ensemble(e, 6, 5, 3);
  const double l5 = shifted_lambdas(e)[4];
  const AuditReport small = low_mode_observability(e, ens, l5, third, rhos, fns);
  const AuditReport mid = low_mode_observability(e, ens, l5, half, rhos, fns);
  const AuditReport big = low_mode_observability(e, ens, l5, all, rhos, fns);
  for (std::size_t i = 0; i < small.samples.size(); ++i) {
    CHECK(mid.samples[i].fitted() <= small.samples[i].fitted());
    CHECK(big.samples[i].fitted() <= mid.samples[i].fitted());
  }

  Eigen::MatrixXd bad(g.size(), 1);
  bad.col(0) = e.phis.col(7);
  CHECK_THROWS_AS(low_mode_observability(e, bad, l5, half, rhos, fns), config_error);
}

TEST_CASE("observability functional") {
  const Grid g = unit_grid(1, 40);
  const EigenSystem e = eigendecompose(g, zero_potential(g));
  const StabilityFunctions fns(config_for(1));
  const Mask all = whole_mask(g);
  const TimeGrid tg = TimeGrid::span(1.0, 50);

  const Eigen::VectorXd phi1 = e.phis.col(0);
  const ObservabilityFunctional fun = observability_functional(e, phi1, all, tg, fns);
  const double n = 2 * std::sqrt(1 + e.lambdas[0]);
  double l1 = 0;
  for (Index i = 0; i < tg.knots(); ++i) {
    const double t = tg.t(i);
    // ||T(t) phi_1|| = e^{-lambda_1 t}; the argument of Phi is n e^{lambda_1 t}.
    const double ell = n * std::exp(e.lambdas[0] * t);
    const LogMagnitude thr = fns.phi_threshold();
    const double phi_val = ell > thr.value() ? std::pow(std::log(std::log(ell)), -0.25)
                                             : 2 * fns.h(0.5).value() / ell;
    CHECK(fun.values[static_cast<std::size_t>(i)] == doctest::Approx(n * phi_val).epsilon(1e-10));
    if (i > 0) l1 += 0.5 * tg.dt * (fun.values[static_cast<std::size_t>(i - 1)] + fun.values[static_cast<std::size_t>(i)]);
  }
  CHECK(fun.l1 == doctest::Approx(l1).epsilon(1e-13));

  Rng rng(9);
  const Eigen::VectorXd f = rng.normal_vector(g.size());
  const Mask half = left_half(g);
  const ObservabilityFunctional a = observability_functional(e, f, half, tg, fns);
  const ObservabilityFunctional b = observability_functional(e, Eigen::VectorXd(-3.0 * f), half, tg, fns);
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    CHECK(b.values[i] == doctest::Approx(3 * a.values[i]).epsilon(1e-12));
  }

  const ObservabilityFunctional dec = observability_functional(e, f, all, tg, fns);
  for (std::size_t i = 1; i < dec.observed.size(); ++i) CHECK(dec.observed[i] <= dec.observed[i - 1]);

  // With omega = Omega and the shifted semigroup, the argument of Phi is >= 1.
  const EigenSystem en = eigendecompose(g, constant_potential(g, -5.0));
  const ObservabilityFunctional sh = observability_functional(en, f, all, tg, fns, true);
  for (double obs : sh.observed) CHECK(sh.n / obs >= 1);

  CHECK_THROWS_AS(observability_functional(e, Eigen::VectorXd::Zero(g.size()), all, tg, fns), domain_error);
}

TEST_CASE("observability audit") {
  const Grid g = unit_grid(1, 40);
  const EigenSystem e = eigendecompose(g, rough_potential(g, {3, 1.0, 1.0, 5}));
  const StabilityFunctions fns(config_for(1));
  const TimeGrid tg = TimeGrid::span(1.0, 200);
  const Mask all = whole_mask(g);
  const Mask half = left_half(g);
  const Eigen::MatrixXd ens = low_mode_ensemble(e, 5, 8, 21);

  const ObservabilityAudit dom = observability_audit(e, ens, all, tg, fns);
  CHECK(std::isfinite(dom.c_star));
  CHECK(dom.c_star > 0);

  const ObservabilityAudit a = observability_audit(e, ens, half, tg, fns);
  const ObservabilityAudit b = observability_audit(e, Eigen::MatrixXd(3.0 * ens), half, tg, fns);
  CHECK(std::abs(a.c_star - b.c_star) <= 1e-10 * a.c_star);
  CHECK(a.telescoping.samples.size() == 5 * 12);
  CHECK(a.telescoping.scalars.at("theta") == doctest::Approx(std::sqrt(0.5)));
  for (const AuditSample& s : a.telescoping.samples) CHECK(std::isfinite(s.log_fitted));

  // Single modes with omega = Omega: LHS e^{-lambda_k t}, RHS from the
  // closed-form functional; the audit must reproduce the ratio.
  for (Index k = 0; k < 5; ++k) {
    Eigen::MatrixXd one(g.size(), 1);
    one.col(0) = e.phis.col(k);
    const ObservabilityAudit s = observability_audit(e, one, all, tg, fns);
    const ObservabilityFunctional fun = observability_functional(e, e.phis.col(k), all, tg, fns);
    const double expect = std::exp(-e.lambdas[k] * 1.0) / fun.l1;
    CHECK(s.c_star == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("reconstruction") {
  // On a long interval the tenth mode decays by e^{-10} over t = 1, so single
  // time inversion stays within double precision.
  const Grid g = build_grid(1, {{0, 10}}, {60});
  const EigenSystem e = eigendecompose(g, rough_potential(g, {3, 1.0, 1.0, 8}));
  const Eigen::VectorXd lt = shifted_lambdas(e);
  Rng rng(17);
  const Eigen::VectorXd f = e.phis.leftCols(10) * rng.normal_vector(10);
  const double cutoff = 0.5 * (lt[9] + lt[10]);
  const Mask all = whole_mask(g);

  const std::vector<double> single{1.0};
  const Reconstruction r = reconstruct_initial(e, observation_data(e, f, all, single), all, single, cutoff,
                                               1e-14, 1.0, &f);
  CHECK(r.modes.size() == 10);
  CHECK(*r.error <= 1e-8 * l2_norm(g, f));

  const Mask half = left_half(g);
  std::vector<double> knots;
  for (int i = 1; i <= 50; ++i) knots.push_back(0.02 * i);
  const Eigen::MatrixXd data = observation_data(e, f, half, knots);
  const Reconstruction h = reconstruct_initial(e, data, half, knots, cutoff, 1e-14, 1.0, &f);
  CHECK(h.rank == 10);
  CHECK(*h.error <= 1e-6 * h.kappa * l2_norm(g, f));

  // Relative noise delta moves the coefficients by at most kappa delta.
  Eigen::MatrixXd noise(data.rows(), data.cols());
  for (Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.normal();
  const double delta = 1e-6;
  const Eigen::MatrixXd noisy = data + delta * data.norm() / noise.norm() * noise;
  const Reconstruction n = reconstruct_initial(e, noisy, half, knots, cutoff, 1e-14, 1.0, &f);
  const Eigen::VectorXd a_true = e.coefficients(f).head(10);
  CHECK((n.coefficients - a_true).norm() <= n.kappa * delta * a_true.norm());

  // Tail estimate for data with high modes.
  const Eigen::VectorXd tailed = f + 0.3 * e.phis.col(20);
  const Reconstruction t = reconstruct_initial(e, observation_data(e, tailed, all, single), all, single,
                                               cutoff, 1e-14, 1.0, &tailed);
  const Eigen::VectorXd tail = tailed - project_low(e, tailed, cutoff);
  CHECK(l2_norm(g, tail) <= *t.tail_bound);

  CHECK_THROWS_AS(reconstruct_initial(e, data, half, knots, 0.5 * lt[0], 1e-14, 1.0), config_error);
  CHECK_THROWS_AS(reconstruct_initial(e, Eigen::MatrixXd(), half, {}, cutoff, 1e-14, 1.0), config_error);
}

TEST_CASE("tail bound is exact") {
  const Grid g = unit_grid(1, 40);
  const EigenSystem e = eigendecompose(g, rough_potential(g, {3, 2.0, 1.0, 6}));
  Eigen::MatrixXd ens(g.size(), 30);
  Rng rng(99);
  for (Index c = 0; c < ens.cols(); ++c) ens.col(c) = rng.normal_vector(g.size());
  std::vector<double> lambdas;
  for (int i = 0; i < 20; ++i) lambdas.push_back(std::pow(10.0, -1 + 5.0 * i / 19));
  for (double beta : {0.3, 1.0, 2.5}) {
    const AuditReport r = tail_bound_audit(e, ens, lambdas, beta);
    CHECK(r.violations == 0);
    CHECK(r.samples.size() == 600);
  }
}

TEST_CASE("stability audit") {
  const Grid g = unit_grid(1, 40);
  const EigenSystem e = eigendecompose(g, rough_potential(g, {3, 1.0, 1.0, 10}));
  const StabilityFunctions fns(config_for(1));
  const TimeGrid tg = TimeGrid::span(1.0, 100);
  const Mask half = left_half(g);
  const Eigen::MatrixXd ens = low_mode_ensemble(e, 6, 10, 4);
  const std::vector<double> lambdas{5, 20, 80, 320, 1280};

  const StabilityAudit a = stability_audit(e, ens, half, tg, lambdas, fns);
  CHECK(a.theorem.violations == 0);
  CHECK(a.corollary.violations == 0);
  CHECK(std::isfinite(a.c_fit));
  CHECK(std::isfinite(a.c_corollary));
  CHECK(a.theorem.scalars.at("spread") >= 1);

  const StabilityAudit b = stability_audit(e, Eigen::MatrixXd(3.0 * ens), half, tg, lambdas, fns);
  CHECK(b.c_corollary == doctest::Approx(a.c_corollary).epsilon(1e-10));
  CHECK(b.c_fit == doctest::Approx(a.c_fit).epsilon(1e-10));

  // Single mode above lambda: the tail term alone dominates.
  Eigen::MatrixXd one(g.size(), 1);
  one.col(0) = e.phis.col(3);
  const double lam = 0.5 * shifted_lambdas(e)[3];
  const StabilityAudit s = stability_audit(e, one, half, tg, {lam}, fns);
  CHECK(s.theorem.samples[0].metadata.at("tail_dominates") == 1);
  CHECK(s.theorem.violations == 0);
}
