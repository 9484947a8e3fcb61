#include "heatlab/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <mutex>
#include <string>

#include <Eigen/SparseCholesky>
#include <lapacke.h>

#include "heatlab/random.hpp"

namespace heatlab {

LebesgueExponents lebesgue_exponents(int dim) {
  if (dim < 1 || dim > 2) {
    throw config_error("only dimensions 1 and 2 are supported");
  }
  return {};
}

double Potential::norm() const {
  return lp_norm(grid, values, lebesgue_exponents(grid.dim()).potential);
}

Potential zero_potential(const Grid& grid) {
  return {grid, Eigen::VectorXd::Zero(grid.size())};
}

Potential constant_potential(const Grid& grid, double c) {
  return {grid, Eigen::VectorXd::Constant(grid.size(), c)};
}

Potential add_ball(const Potential& v, const region::Ball& ball, double amplitude) {
  Potential out = v;
  for (Index i : make_mask(v.grid, ball).indices) out.values[i] += amplitude;
  return out;
}

Potential rough_potential(const Grid& grid, const RoughSpec& spec) {
  const double r = lebesgue_exponents(grid.dim()).potential;
  if (spec.gamma < 0 || spec.gamma > grid.dim() / r) {
    throw config_error("rough potential exponent gamma must lie in [0, dim/r] = [0, " +
                       std::to_string(grid.dim() / r) + "]");
  }
  if (spec.count < 0) throw config_error("rough potential spike count must be >= 0");
  Potential v = zero_potential(grid);
  const double h = std::pow(grid.cell_volume(), 1.0 / grid.dim());
  const double scale = std::pow(h, -spec.gamma);
  Rng rng(spec.seed);
  for (int i = 0; i < spec.count; ++i) {
    const auto node = static_cast<Index>(rng.below(static_cast<std::uint64_t>(grid.size())));
    v.values[node] += rng.uniform(0.5 * spec.amplitude, spec.amplitude) * scale;
  }
  return v;
}

namespace {

void require_same_grid(const Grid& grid, const Eigen::VectorXd& v) {
  if (v.size() != grid.size()) {
    throw config_error("potential does not live on this grid");
  }
}

template <class Emit>
void stencil(const Grid& grid, Emit emit) {
  const int nx = grid.axis(0).interior_count();
  for (Index i = 0; i < grid.size(); ++i) {
    const auto mi = grid.multi_index(i);
    for (int a = 0; a < grid.dim(); ++a) {
      const double w = 1.0 / (grid.axis(a).h * grid.axis(a).h);
      const Index stride = a == 0 ? 1 : nx;
      const int n = grid.axis(a).interior_count();
      emit(i, i, 2 * w);
      if (mi[a] > 0) emit(i, i - stride, -w);
      if (mi[a] < n - 1) emit(i, i + stride, -w);
    }
  }
}

}  // namespace

Eigen::MatrixXd assemble_operator(const Grid& grid, const Potential& v) {
  if (!(v.grid == grid)) throw config_error("potential grid does not match the operator grid");
  require_same_grid(grid, v.values);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(grid.size(), grid.size());
  stencil(grid, [&](Index i, Index j, double w) { a(i, j) += w; });
  a.diagonal() += v.values;
  return a;
}

Eigen::SparseMatrix<double> assemble_sparse(const Grid& grid, const Potential& v) {
  if (!(v.grid == grid)) throw config_error("potential grid does not match the operator grid");
  require_same_grid(grid, v.values);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(grid.size()) * (1 + 2 * grid.dim()));
  stencil(grid, [&](Index i, Index j, double w) { t.emplace_back(i, j, w); });
  for (Index i = 0; i < grid.size(); ++i) t.emplace_back(i, i, v.values[i]);
  Eigen::SparseMatrix<double> a(grid.size(), grid.size());
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

Eigen::VectorXd apply_operator(const Grid& grid, const Eigen::VectorXd& potential,
                               const Eigen::VectorXd& u, const Eigen::VectorXd& boundary) {
  require_same_grid(grid, potential);
  require_same_grid(grid, u);
  const bool has_boundary = boundary.size() > 0;
  if (has_boundary && boundary.size() != grid.boundary_size()) {
    throw config_error("boundary values must have one entry per boundary node");
  }
  const int nx = grid.axis(0).interior_count();
  Eigen::VectorXd out = potential.cwiseProduct(u);
  for (Index i = 0; i < grid.size(); ++i) {
    const auto mi = grid.multi_index(i);
    for (int a = 0; a < grid.dim(); ++a) {
      const double w = 1.0 / (grid.axis(a).h * grid.axis(a).h);
      const Index stride = a == 0 ? 1 : nx;
      const int n = grid.axis(a).interior_count();
      const int tangential = a == 0 ? mi[1] : mi[0];
      double lo = 0;
      double hi = 0;
      if (mi[a] > 0) {
        lo = u[i - stride];
      } else if (has_boundary) {
        lo = boundary[grid.boundary_index(a == 0 ? Face::x_low : Face::y_low, tangential)];
      }
      if (mi[a] < n - 1) {
        hi = u[i + stride];
      } else if (has_boundary) {
        hi = boundary[grid.boundary_index(a == 0 ? Face::x_high : Face::y_high, tangential)];
      }
      out[i] += w * (2 * u[i] - lo - hi);
    }
  }
  return out;
}

Eigen::VectorXd EigenSystem::coefficients(const Eigen::VectorXd& f) const {
  if (f.size() != grid.size()) throw config_error("field length does not match the eigensystem grid");
  return grid.cell_volume() * (phis.transpose() * f);
}

Eigen::VectorXd EigenSystem::synthesize(const Eigen::VectorXd& coeffs) const {
  if (coeffs.size() != modes()) throw config_error("coefficient count does not match the mode count");
  return phis * coeffs;
}

std::vector<Cluster> cluster_eigenvalues(const Eigen::VectorXd& lambdas, double tol) {
  std::vector<Cluster> out;
  Index k = 0;
  while (k < lambdas.size()) {
    Cluster c{k, 1};
    while (c.begin + c.size < lambdas.size()) {
      const Index j = c.begin + c.size;
      if (std::abs(lambdas[j] - lambdas[j - 1]) > tol * (1 + std::abs(lambdas[j - 1]))) break;
      ++c.size;
    }
    out.push_back(c);
    k += c.size;
  }
  return out;
}

namespace {

// Flip so that the largest-magnitude entry is positive. Near-ties (mirror
// symmetric modes) go to the lowest index so round-off cannot pick the sign.
void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  const double m = v.cwiseAbs().maxCoeff();
  for (Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) >= m * (1 - 1e-6)) {
      if (v[i] < 0) v = -v;
      return;
    }
  }
}

// Rotate a degenerate block to a basis that depends only on its span:
// interpolate at pivot rows chosen by column-pivoted QR, then orthonormalize.
void canonicalize(Eigen::Ref<Eigen::MatrixXd> block, double weight) {
  const Index m = block.cols();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(block.transpose());
  const auto& perm = qr.colsPermutation().indices();
  Eigen::MatrixXd s(m, m);
  for (Index j = 0; j < m; ++j) s.row(j) = block.row(perm[j]);
  Eigen::MatrixXd b = block * s.inverse();
  for (Index j = 0; j < m; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (Index i = 0; i < j; ++i) b.col(j) -= weight * b.col(i).dot(b.col(j)) * b.col(i);
    }
    b.col(j) /= std::sqrt(weight * b.col(j).squaredNorm());
    fix_sign(b.col(j));
  }
  block = b;
}

}  // namespace

namespace {

// Symmetric eigensolve through LAPACK; eigenvectors overwrite a.
bool lapack_eigensolve(Eigen::MatrixXd& a, Eigen::VectorXd& w) {
  const auto n = static_cast<lapack_int>(a.rows());
  return LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, a.data(), n, w.data()) == 0;
}

// Some BLAS builds select kernels that return wrong results on the host CPU.
// Solve a fixed symmetric problem once and check the residual without BLAS.
bool lapack_is_reliable() {
  static std::once_flag once;
  static bool reliable = false;
  std::call_once(once, [] {
    const Index n = 320;
    Eigen::MatrixXd a(n, n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) a(i, j) = std::cos(0.37 * static_cast<double>(i * j % 97)) + (i == j ? 3.0 * i : 0.0);
    }
    a = (0.5 * (a + a.transpose())).eval();
    Eigen::MatrixXd z = a;
    Eigen::VectorXd w(n);
    if (lapack_eigensolve(z, w)) {
      const double res = (a.lazyProduct(z) - z * w.asDiagonal()).norm();
      const double orth = (z.transpose().lazyProduct(z) - Eigen::MatrixXd::Identity(n, n)).norm();
      reliable = res <= 1e-9 * a.norm() && orth <= 1e-9;
    }
    if (!reliable) {
      std::cerr << "heatlab: LAPACK eigensolver failed its self-check; using the Eigen solver"
                   " (for OpenBLAS, setting OPENBLAS_CORETYPE may restore the fast path)\n";
    }
  });
  return reliable;
}

}  // namespace

EigenSystem eigendecompose(const Grid& grid, const Potential& v, std::optional<Index> k_max) {
  Eigen::MatrixXd a = assemble_operator(grid, v);
  const Index n = grid.size();
  Eigen::VectorXd w(n);
  if (lapack_is_reliable()) {
    if (!lapack_eigensolve(a, w)) throw solver_error("dsyevd failed");
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
    if (solver.info() != Eigen::Success) throw solver_error("symmetric eigensolver did not converge");
    w = solver.eigenvalues();
    a = solver.eigenvectors();
  }
  const double weight = grid.cell_volume();
  EigenSystem es;
  es.grid = grid;
  es.potential = v.values;
  es.lambdas = w;
  es.phis = a / std::sqrt(weight);
  es.clusters = cluster_eigenvalues(es.lambdas);
  for (const Cluster& c : es.clusters) {
    if (c.size == 1) {
      fix_sign(es.phis.col(c.begin));
    } else {
      canonicalize(es.phis.middleCols(c.begin, c.size), weight);
    }
  }
  if (k_max) {
    if (*k_max < 1) throw config_error("k_max must be >= 1");
    const Index k = std::min(*k_max, n);
    es.lambdas.conservativeResize(k);
    es.phis.conservativeResize(Eigen::NoChange, k);
    es.clusters = cluster_eigenvalues(es.lambdas);
  }
  es.psis.resize(grid.boundary_size(), es.modes());
  for (Index b = 0; b < grid.boundary_size(); ++b) {
    const BoundaryNode& node = grid.boundary_node(b);
    es.psis.row(b) = -es.phis.row(node.adjacent) / node.h_normal;
  }
  return es;
}

double sobolev_ratio(const Grid& grid, const Eigen::VectorXd& w) {
  const Eigen::VectorXd kw = apply_operator(grid, Eigen::VectorXd::Zero(grid.size()), w);
  const double energy = grid.cell_volume() * w.dot(kw);
  if (!(energy > 0)) return 0.0;
  return w.cwiseAbs().maxCoeff() / std::sqrt(energy);
}

SobolevEstimate sobolev_constant(const Grid& grid, const SobolevOptions& options) {
  const Eigen::SparseMatrix<double> k = assemble_sparse(grid, zero_potential(grid));
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(k);
  if (solver.info() != Eigen::Success) throw solver_error("Dirichlet Laplacian factorization failed");

  SobolevEstimate est;
  auto ascend = [&](Eigen::VectorXd w) {
    double best = sobolev_ratio(grid, w);
    Index node = 0;
    for (int step = 0; step < options.max_steps; ++step) {
      w.cwiseAbs().maxCoeff(&node);
      Eigen::VectorXd e = Eigen::VectorXd::Zero(grid.size());
      e[node] = 1.0;
      Eigen::VectorXd next = solver.solve(e);
      const double r = sobolev_ratio(grid, next);
      if (r <= best * (1 + 1e-14)) {
        best = std::max(best, r);
        break;
      }
      best = r;
      w = std::move(next);
    }
    w.cwiseAbs().maxCoeff(&node);
    if (best > est.sigma) {
      est.sigma = best;
      est.argmax_node = node;
    }
  };

  const EigenSystem ground = eigendecompose(grid, zero_potential(grid), 1);
  est.ratio_at_ground_state = sobolev_ratio(grid, ground.phis.col(0));
  ascend(ground.phis.col(0));
  for (int s = 0; s < options.random_starts; ++s) {
    Rng rng(split_seed(options.seed, 0, static_cast<std::uint64_t>(s)));
    ascend(rng.normal_vector(grid.size()));
  }
  return est;
}

AdmissibilityCertificate check_admissible(const Potential& v, std::optional<double> vartheta,
                                          double sigma) {
  if (!(sigma > 0)) throw domain_error("Sobolev constant must be positive");
  AdmissibilityCertificate c;
  c.sigma = sigma;
  c.vartheta = vartheta.value_or(0.45 / (sigma * sigma));
  if (!(c.vartheta > 0)) throw domain_error("vartheta must be positive");
  c.potential_norm = v.norm();
  c.product_check = 2 * c.vartheta * sigma * sigma;
  c.certified = c.potential_norm <= c.vartheta && c.product_check < 1;
  return c;
}

double WeylFit::lower(Index k) const { return std::pow(static_cast<double>(k), exponent) / c0 - c1; }
double WeylFit::upper(Index k) const { return c0 * std::pow(static_cast<double>(k), exponent) + c1; }

WeylFit weyl_fit(const Eigen::VectorXd& lambdas, int dim) {
  if (lambdas.size() < 10) throw config_error("Weyl fit needs at least 10 eigenvalues");
  const double e = 2.0 / dim;
  const Index n = lambdas.size();
  Eigen::VectorXd ke(n);
  for (Index k = 0; k < n; ++k) ke[k] = std::pow(static_cast<double>(k + 1), e);

  auto violation = [&](double c0) {
    double m = -std::numeric_limits<double>::infinity();
    for (Index k = 0; k < n; ++k) {
      m = std::max({m, ke[k] / c0 - lambdas[k], lambdas[k] - c0 * ke[k]});
    }
    return m;
  };

  const double scale = 1 + lambdas.cwiseAbs().maxCoeff();
  // violation() is convex in c0, hence unimodal in log c0.
  double lo = 0;
  double hi = std::log(1e6 * std::max(1.0, (lambdas.cwiseAbs().array() / ke.array()).maxCoeff()));
  const double g = (std::sqrt(5.0) - 1) / 2;
  for (int it = 0; it < 200; ++it) {
    const double a = hi - g * (hi - lo);
    const double b = lo + g * (hi - lo);
    if (violation(std::exp(a)) <= violation(std::exp(b))) {
      hi = b;
    } else {
      lo = a;
    }
  }
  const double c0_star = std::exp(0.5 * (lo + hi));
  const double floor = 1e-12 * scale;
  const double target = std::max(violation(c0_star), floor) + 1e-12 * scale;

  // Smallest c0 >= 1 reaching the target: violation() is nonincreasing on [1, c0_star].
  WeylFit fit;
  fit.exponent = e;
  if (violation(1.0) <= target) {
    fit.c0 = 1.0;
  } else {
    double a = 1.0;
    double b = std::max(1.0, c0_star);
    for (int it = 0; it < 200 && b - a > 1e-15 * b; ++it) {
      const double m = 0.5 * (a + b);
      (violation(m) <= target ? b : a) = m;
    }
    fit.c0 = b;
  }
  fit.c1 = std::max(violation(fit.c0), floor);
  // Absorb rounding so that both inequalities hold as evaluated by lower()/upper().
  for (int pass = 0; pass < 4; ++pass) {
    double worst = 0;
    for (Index k = 0; k < n; ++k) {
      worst = std::max({worst, fit.lower(k + 1) - lambdas[k], lambdas[k] - fit.upper(k + 1)});
    }
    if (worst <= 0) break;
    fit.c1 += worst + 4 * std::numeric_limits<double>::epsilon() * scale;
  }
  return fit;
}

WeylFit weyl_fit(const EigenSystem& eig) { return weyl_fit(eig.lambdas, eig.grid.dim()); }

AuditReport weyl_audit(const EigenSystem& eig, const WeylFit& fit) {
  AuditReport r("weyl-bound");
  r.scalars["c0"] = fit.c0;
  r.scalars["c1"] = fit.c1;
  r.scalars["exponent"] = fit.exponent;
  for (Index k = 0; k < eig.modes(); ++k) {
    const double lo = fit.lower(k + 1);
    const double hi = fit.upper(k + 1);
    const double lam = eig.lambdas[k];
    // lhs/rhs is the position of lambda_k inside [lower, upper]; a value in [0, 1] means both hold.
    auto& s = r.add("k=" + std::to_string(k + 1), std::max(lam - lo, 0.0), hi - lo);
    s.metadata["lambda"] = lam;
    s.metadata["lower"] = lo;
    s.metadata["upper"] = hi;
    if (lam < lo || lam > hi) ++r.violations;
  }
  return r;
}

Fingerprint boundary_fingerprint(const EigenSystem& eig, const Mask& boundary_mask) {
  if (boundary_mask.kind != MaskKind::boundary) {
    throw config_error("fingerprint needs a boundary mask");
  }
  if (boundary_mask.indices.empty()) {
    throw config_error("fingerprint mask has zero measure");
  }
  Fingerprint fp{eig.lambdas, boundary_mask, Eigen::MatrixXd(boundary_mask.size(), eig.modes())};
  for (Index j = 0; j < boundary_mask.size(); ++j) {
    const Index b = boundary_mask.indices[j];
    if (b < 0 || b >= eig.grid.boundary_size()) {
      throw config_error("fingerprint mask index outside the grid boundary");
    }
    fp.psi.row(j) = eig.psis.row(b);
  }
  return fp;
}

}  // namespace heatlab
