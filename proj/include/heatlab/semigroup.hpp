#pragma once

#include <complex>

#include <Eigen/Dense>

#include "heatlab/audit.hpp"
#include "heatlab/spectral.hpp"

namespace heatlab {

/// sup_{r > 0} r e^{-r}.
inline const double kSupRhoExp = std::exp(-1.0);

/// e^{-lambda_k z} (f | phi_k) for every mode. Throws domain_error when Re z < 0.
Eigen::VectorXcd semigroup_coefficients(const EigenSystem& eig, std::complex<double> z,
                                        const Eigen::VectorXd& f);

/// T(t) f for real t >= 0.
Eigen::VectorXd apply_semigroup(const EigenSystem& eig, double t, const Eigen::VectorXd& f);
/// T(z) f on the closed right half-plane.
Eigen::VectorXcd apply_semigroup(const EigenSystem& eig, std::complex<double> z,
                                 const Eigen::VectorXd& f);

/// d^m/dz^m T(z) f = sum (-lambda_k)^m e^{-lambda_k z} (f | phi_k) phi_k. Needs Re z > 0.
Eigen::VectorXcd semigroup_derivative(const EigenSystem& eig, std::complex<double> z,
                                      const Eigen::VectorXd& f, int m);

/// Weighted L2 norm of a complex nodal field.
double l2_norm(const Grid& grid, const Eigen::VectorXcd& u);

/// max(0, -lambda_1): the growth exponent of ||T(t)||.
double growth_constant(const EigenSystem& eig);

struct SemigroupReports {
  AuditReport law{"semigroup-law"};
  AuditReport growth{"semigroup-growth"};
  AuditReport derivative{"semigroup-derivative"};
  AuditReport residual{"heat-residual"};
};

/// Checks T(t1)T(t2) = T(t1+t2), the growth bound e^{c1 Re z}, the derivative
/// bound (c0/Re z + 1) e^{c1 Re z} on the lattice Re z in {t1, t2, t1+t2},
/// Im z in {0, 0.5, 1}, and the heat residual (d/dt - Lap_h + V) T(t1) f.
SemigroupReports semigroup_property_report(const EigenSystem& eig, const Eigen::VectorXd& f,
                                           double t1, double t2);

}  // namespace heatlab
