#include "heatlab/boundary_inverse.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace heatlab {

namespace {

Index knot_of(const TimeGrid& tg, double t) {
  const double x = t / tg.dt;
  const auto i = static_cast<Index>(std::llround(x));
  if (i < 0 || i > tg.steps || std::abs(x - static_cast<double>(i)) > 1e-9) {
    throw config_error("time " + std::to_string(t) + " is not a knot of the time grid");
  }
  return i;
}

Eigen::MatrixXd restrict_rows(const Eigen::MatrixXd& m, const Mask& mask) {
  Eigen::MatrixXd out(mask.size(), m.cols());
  for (Index j = 0; j < mask.size(); ++j) out.row(j) = m.row(mask.indices[j]);
  return out;
}

void require_boundary_mask(const Mask& m, const Grid& g, const char* what) {
  if (m.kind != MaskKind::boundary || m.indices.empty()) {
    throw config_error(std::string(what) + " must be a nonempty boundary mask");
  }
  if (m.indices.back() >= g.boundary_size()) {
    throw config_error(std::string(what) + " indexes past the grid boundary");
  }
}

}  // namespace

MeasurementRecord neumann_measurement(const EigenSystem& eig, const BoundaryInput& phi,
                                      double t_star, const Mask& gamma1, std::string probe_id) {
  require_boundary_mask(gamma1, eig.grid, "Gamma1");
  const Index i = knot_of(phi.time, t_star);
  if (phi.window_end > t_star) {
    throw config_error("probe support extends past t_star");
  }
  const SpaceTimeField u = solve_boundary_driven(eig, phi, phi.time);
  const Eigen::VectorXd flux = restrict_rows(eig.psis, gamma1) * u.coefficients.col(i);
  return {std::move(probe_id), t_star, BoundaryData{eig.grid, gamma1, flux}};
}

double boundary_norm(const BoundaryData& data) {
  double s = 0;
  for (Index j = 0; j < data.mask.size(); ++j) {
    s += data.grid.boundary_node(data.mask.indices[j]).measure * data.values[j] * data.values[j];
  }
  return std::sqrt(s);
}

Eigen::VectorXd SeriesKernel::trace(Index i, Index j) const {
  Eigen::VectorXd out(static_cast<Index>(values.size()));
  for (std::size_t q = 0; q < values.size(); ++q) out[static_cast<Index>(q)] = values[q](i, j);
  return out;
}

SeriesKernel build_series_kernel(const EigenSystem& a, const EigenSystem& b, const Mask& gamma0,
                                 const Mask& gamma1, const Eigen::VectorXd& s_knots, double t_star,
                                 std::optional<Index> k_max) {
  if (!(a.grid == b.grid)) throw config_error("kernel eigensystems live on different grids");
  require_boundary_mask(gamma0, a.grid, "Gamma0");
  require_boundary_mask(gamma1, a.grid, "Gamma1");
  if (s_knots.size() == 0) throw config_error("kernel needs at least one s knot");
  if (s_knots.maxCoeff() >= t_star) throw config_error("kernel knots must lie before t_star");

  const Index kmax = std::min({k_max.value_or(a.modes()), a.modes(), b.modes()});
  SeriesKernel ker{gamma0, gamma1, s_knots, t_star, kmax, {}, 0.0};
  const Eigen::MatrixXd pa0 = restrict_rows(a.psis, gamma0).leftCols(kmax);
  const Eigen::MatrixXd pa1 = restrict_rows(a.psis, gamma1).leftCols(kmax);
  const Eigen::MatrixXd pb0 = restrict_rows(b.psis, gamma0).leftCols(kmax);
  const Eigen::MatrixXd pb1 = restrict_rows(b.psis, gamma1).leftCols(kmax);
  for (Index q = 0; q < s_knots.size(); ++q) {
    const double tau = t_star - s_knots[q];
    const Eigen::VectorXd ea = (-a.lambdas.head(kmax).array() * tau).exp();
    const Eigen::VectorXd eb = (-b.lambdas.head(kmax).array() * tau).exp();
    ker.values.push_back(pa0 * ea.asDiagonal() * pa1.transpose() - pb0 * eb.asDiagonal() * pb1.transpose());
  }
  const double tau_min = t_star - s_knots.maxCoeff();
  for (const EigenSystem* e : {&a, &b}) {
    for (Index k = kmax; k < e->modes(); ++k) {
      ker.truncation_tail += std::exp(-e->lambdas[k] * tau_min) * e->psis.col(k).cwiseAbs2().maxCoeff();
    }
  }
  return ker;
}

ExponentialSumFit extract_dirichlet_series(const Eigen::VectorXd& samples, double s0, double ds,
                                           double t_star, Index m_max) {
  const Index n = samples.size();
  if (m_max < 1) throw config_error("m_max must be >= 1");
  if (n < 2 * m_max + 2) throw config_error("exponential fit needs at least 2 m_max + 2 knots");
  if (!(ds > 0)) throw config_error("knot spacing must be positive");
  ExponentialSumFit fit;
  fit.exponents.resize(0);
  fit.coefficients.resize(0);

  const double smax = samples.cwiseAbs().maxCoeff();
  if (smax == 0) {
    fit.rank_deficient = true;
    fit.notes.push_back("zero signal");
    return fit;
  }
  const Index l = std::max<Index>(m_max, n / 2);
  const Index rows = n - l;
  Eigen::MatrixXd y(rows, l + 1);
  for (Index i = 0; i < rows; ++i) y.row(i) = samples.segment(i, l + 1).transpose();

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(y, Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  Index rank = 0;
  while (rank < sv.size() && sv[rank] > 1e-8 * sv[0]) ++rank;
  if (rank > m_max) {
    fit.notes.push_back("numerical rank " + std::to_string(rank) + " exceeds m_max; truncated");
    rank = m_max;
  }
  const Eigen::MatrixXd v = svd.matrixV().leftCols(rank);
  const Eigen::MatrixXd v1 = v.topRows(l);
  const Eigen::MatrixXd v2 = v.bottomRows(l);
  const Eigen::MatrixXd pencil = v1.completeOrthogonalDecomposition().solve(v2);
  Eigen::EigenSolver<Eigen::MatrixXd> es(pencil, false);

  std::vector<double> mus;
  for (Index k = 0; k < rank; ++k) {
    const std::complex<double> z = es.eigenvalues()[k];
    if (std::abs(z.imag()) > 1e-8 * std::abs(z) || z.real() <= 0) {
      fit.notes.push_back("dropped non-real or non-positive pencil root");
      continue;
    }
    mus.push_back(std::log(z.real()) / ds);
  }
  std::sort(mus.begin(), mus.end());
  std::vector<double> merged;
  std::vector<int> counts;
  for (double mu : mus) {
    if (!merged.empty()) {
      const double ref = merged.back() / counts.back();
      if (std::abs(mu - ref) <= 1e-6 * std::max(std::abs(mu), std::abs(ref))) {
        merged.back() += mu;
        ++counts.back();
        continue;
      }
    }
    merged.push_back(mu);
    counts.push_back(1);
  }
  const Index m = static_cast<Index>(merged.size());
  fit.exponents.resize(m);
  for (Index k = 0; k < m; ++k) fit.exponents[k] = merged[k] / counts[k];

  // g(s_j) = sum_k a_k e^{-mu_k (t* - s_j)}; Vandermonde least squares for a_k.
  Eigen::MatrixXd vander(n, m);
  for (Index j = 0; j < n; ++j) {
    const double s = s0 + static_cast<double>(j) * ds;
    for (Index k = 0; k < m; ++k) vander(j, k) = std::exp(-fit.exponents[k] * (t_star - s));
  }
  fit.coefficients = m > 0 ? Eigen::VectorXd(vander.colPivHouseholderQr().solve(samples))
                           : Eigen::VectorXd();
  fit.residual = m > 0 ? (vander * fit.coefficients - samples).cwiseAbs().maxCoeff() : smax;
  fit.rank_deficient = m < m_max;
  return fit;
}

Eigen::MatrixXd procrustes(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw config_error("Procrustes needs families of equal shape");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a * b.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

namespace {

Index numerical_rank(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0) return 0;
  Index r = 0;
  while (r < s.size() && s[r] > 1e-10 * s[0]) ++r;
  return r;
}

}  // namespace

AlignmentResult orthogonal_alignment(const Eigen::MatrixXd& fam_a, const Eigen::MatrixXd& fam_b,
                                     double tol) {
  AlignmentResult r;
  if (fam_a.cols() != fam_b.cols()) {
    r.reason = "families are sampled on different point sets";
    return r;
  }
  r.rank_a = numerical_rank(fam_a);
  r.rank_b = numerical_rank(fam_b);
  if (fam_a.rows() != fam_b.rows() || r.rank_a != r.rank_b) {
    r.reason = "rank mismatch: m1 = " + std::to_string(fam_a.rows()) + " (rank " +
               std::to_string(r.rank_a) + "), m2 = " + std::to_string(fam_b.rows()) + " (rank " +
               std::to_string(r.rank_b) + ")";
    return r;
  }
  const Eigen::MatrixXd ga = fam_a.transpose() * fam_a;
  const Eigen::MatrixXd gb = fam_b.transpose() * fam_b;
  const double scale = std::max(1.0, ga.cwiseAbs().maxCoeff());
  r.cross_violation = (ga - gb).cwiseAbs().maxCoeff();
  if (r.cross_violation > tol * scale) {
    r.reason = "cross-product identity violated by " + std::to_string(r.cross_violation);
    return r;
  }
  r.p = procrustes(fam_a, fam_b);
  r.residual = (fam_a - r.p * fam_b).cwiseAbs().maxCoeff();
  r.orthogonality_defect =
      (r.p.transpose() * r.p - Eigen::MatrixXd::Identity(r.p.rows(), r.p.cols())).cwiseAbs().maxCoeff();
  const double fscale = std::max(1.0, fam_a.cwiseAbs().maxCoeff());
  if (r.residual > tol * fscale) {
    r.reason = "aligned families differ by " + std::to_string(r.residual);
    return r;
  }
  if (r.orthogonality_defect > 1e-10) {
    r.reason = "alignment is not orthogonal (defect " + std::to_string(r.orthogonality_defect) + ")";
    return r;
  }
  r.ok = true;
  return r;
}

Mask mask_union(const Mask& a, const Mask& b) {
  if (a.kind != b.kind) throw config_error("cannot merge masks of different kinds");
  Mask m{a.kind, {}};
  std::set_union(a.indices.begin(), a.indices.end(), b.indices.begin(), b.indices.end(),
                 std::back_inserter(m.indices));
  return m;
}

double fingerprint_gap(const EigenSystem& a, const EigenSystem& b, const Mask& boundary_mask,
                       Index k_compare) {
  const Eigen::MatrixXd pa = restrict_rows(a.psis, boundary_mask);
  const Eigen::MatrixXd pb = restrict_rows(b.psis, boundary_mask);
  const Index kmax = std::min({k_compare, a.modes(), b.modes()});
  Eigen::VectorXd w(boundary_mask.size());
  for (Index j = 0; j < boundary_mask.size(); ++j) {
    w[j] = a.grid.boundary_node(boundary_mask.indices[j]).measure;
  }
  double gap = 0;
  for (const Cluster& c : a.clusters) {
    if (c.begin >= kmax) break;
    const Index m = std::min(c.size, b.modes() - c.begin);
    const Eigen::MatrixXd fa = pa.middleCols(c.begin, m).transpose();
    const Eigen::MatrixXd fb = pb.middleCols(c.begin, m).transpose();
    const Eigen::MatrixXd diff = fa - procrustes(fa, fb) * fb;
    for (Index r = 0; r < m; ++r) {
      gap = std::max(gap, std::sqrt((diff.row(r).transpose().cwiseAbs2().array() * w.array()).sum()));
    }
  }
  return gap;
}

double measurement_gap(const EigenSystem& a, const EigenSystem& b,
                       const std::vector<BoundaryInput>& probes, double t_star, const Mask& gamma1) {
  double gap = 0;
  for (const BoundaryInput& p : probes) {
    const MeasurementRecord ra = neumann_measurement(a, p, t_star, gamma1);
    const MeasurementRecord rb = neumann_measurement(b, p, t_star, gamma1);
    BoundaryData d = ra.data;
    d.values -= rb.data.values;
    gap = std::max(gap, boundary_norm(d));
  }
  return gap;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n != y.size() || n < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

AuditReport distinguishability_experiment(const EigenSystem& reference,
                                          const std::vector<EigenSystem>& family,
                                          const std::vector<BoundaryInput>& probes,
                                          const TimeWindow& window, const Mask& gamma0,
                                          const Mask& gamma1, Index k_compare) {
  window.validate();
  require_boundary_mask(gamma0, reference.grid, "Gamma0");
  require_boundary_mask(gamma1, reference.grid, "Gamma1");
  for (const BoundaryInput& p : probes) p.validate(&gamma0);
  const Mask both = mask_union(gamma0, gamma1);
  const double r = lebesgue_exponents(reference.grid.dim()).potential;

  AuditReport rep("distinguishability");
  std::vector<double> meas, pot;
  double max_meas = 0, max_spec = 0, max_fp = 0;
  for (std::size_t j = 0; j < family.size(); ++j) {
    const EigenSystem& other = family[j];
    if (!(other.grid == reference.grid)) throw config_error("family member on a different grid");
    const double mg = measurement_gap(reference, other, probes, window.t_star, gamma1);
    const Index k = std::min({k_compare, reference.modes(), other.modes()});
    const double sg = (reference.lambdas.head(k) - other.lambdas.head(k)).cwiseAbs().maxCoeff();
    const double fg = fingerprint_gap(reference, other, both, k_compare);
    const double pg = lp_norm(reference.grid, Eigen::VectorXd(reference.potential - other.potential), r);
    auto& s = rep.add("member " + std::to_string(j), mg, pg);
    s.metadata["measurement_gap"] = mg;
    s.metadata["spectral_gap"] = sg;
    s.metadata["fingerprint_gap"] = fg;
    s.metadata["potential_gap"] = pg;
    meas.push_back(mg);
    pot.push_back(pg);
    max_meas = std::max(max_meas, mg);
    max_spec = std::max(max_spec, sg);
    max_fp = std::max(max_fp, fg);
    if (pg > 0 && mg == 0) rep.anomalies.push_back("member " + std::to_string(j) + ": distinct potentials, identical measurements");
  }
  rep.scalars["max_measurement_gap"] = max_meas;
  rep.scalars["max_spectral_gap"] = max_spec;
  rep.scalars["max_fingerprint_gap"] = max_fp;
  rep.scalars["pearson"] = pearson(meas, pot);
  rep.scalars["probes"] = static_cast<double>(probes.size());
  return rep;
}

}  // namespace heatlab
