#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "heatlab/audit.hpp"
#include "heatlab/forward.hpp"
#include "heatlab/spectral.hpp"

namespace heatlab {

struct MeasurementRecord {
  std::string probe_id;
  double t_star = 0;
  BoundaryData data;  // outward flux of u(phi) at t_star on Gamma1
};

/// gamma_1 u_V(phi)(t_star) on Gamma1, mode by mode. t_star must be a knot of
/// phi's time grid and phi must vanish after t_star.
MeasurementRecord neumann_measurement(const EigenSystem& eig, const BoundaryInput& phi,
                                      double t_star, const Mask& gamma1,
                                      std::string probe_id = {});

/// Weighted boundary L2 norm sum_b |cell_b| v_b^2 over the record's mask.
double boundary_norm(const BoundaryData& data);

/// K(xi, eta, s) = sum_k e^{-lambda^A_k (t* - s)} psi^A_k(xi) psi^A_k(eta) - (same for B).
struct SeriesKernel {
  Mask xi;
  Mask eta;
  Eigen::VectorXd s_knots;
  double t_star = 0;
  Index k_max = 0;
  std::vector<Eigen::MatrixXd> values;  // one |xi| x |eta| slab per knot
  double truncation_tail = 0;           // bound on the dropped modes at the latest knot

  /// K(xi_i, eta_j, s) over all knots.
  Eigen::VectorXd trace(Index i, Index j) const;
};

SeriesKernel build_series_kernel(const EigenSystem& a, const EigenSystem& b, const Mask& gamma0,
                                 const Mask& gamma1, const Eigen::VectorXd& s_knots, double t_star,
                                 std::optional<Index> k_max = std::nullopt);

/// g(s) = sum_k a_k e^{-mu_k (t* - s)}.
struct ExponentialSumFit {
  Eigen::VectorXd exponents;     // ascending
  Eigen::VectorXd coefficients;  // a_k
  double residual = 0;           // max misfit over the knots
  bool rank_deficient = false;   // fewer terms than requested
  std::vector<std::string> notes;

  Index terms() const { return exponents.size(); }
};

/// Matrix pencil on uniform knots s_0 + j ds. Singular values below 1e-8 of
/// the largest are dropped and exponents within 1e-6 (relative) are merged.
ExponentialSumFit extract_dirichlet_series(const Eigen::VectorXd& samples, double s0, double ds,
                                           double t_star, Index m_max);

/// Orthogonal Procrustes: P = U V^T from the SVD of A B^T, minimizing ||A - P B||_F.
Eigen::MatrixXd procrustes(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct AlignmentResult {
  bool ok = false;
  Eigen::MatrixXd p;
  std::string reason;
  Index rank_a = 0;
  Index rank_b = 0;
  double cross_violation = 0;      // max |A^T A - B^T B|
  double residual = 0;             // max |A - P B|
  double orthogonality_defect = 0;  // max |P^T P - I|
};

/// Families are rows sampled on a common point set. Fails when the numerical
/// ranks or row counts differ, or when sum_k a_k(x) a_k(y) = sum_k b_k(x) b_k(y)
/// is violated beyond `tol`.
AlignmentResult orthogonal_alignment(const Eigen::MatrixXd& fam_a, const Eigen::MatrixXd& fam_b,
                                     double tol = 1e-8);

/// Largest fingerprint difference over the first `k_compare` modes after
/// aligning each eigenvalue cluster of `a` by Procrustes.
double fingerprint_gap(const EigenSystem& a, const EigenSystem& b, const Mask& boundary_mask,
                       Index k_compare);

/// max over probes of the boundary norm of the measurement difference.
double measurement_gap(const EigenSystem& a, const EigenSystem& b,
                       const std::vector<BoundaryInput>& probes, double t_star, const Mask& gamma1);

Mask mask_union(const Mask& a, const Mask& b);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Reference potential against a family: per member the measurement gap, the
/// spectral gap max_{k <= K} |l1_k - l2_k|, the aligned fingerprint gap on
/// Gamma0 u Gamma1, and ||V1 - V2||_r; the report scalar "pearson" correlates
/// the measurement gaps with the potential gaps.
AuditReport distinguishability_experiment(const EigenSystem& reference,
                                          const std::vector<EigenSystem>& family,
                                          const std::vector<BoundaryInput>& probes,
                                          const TimeWindow& window, const Mask& gamma0,
                                          const Mask& gamma1, Index k_compare = 10);

}  // namespace heatlab
