#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "heatlab/audit.hpp"
#include "heatlab/forward.hpp"
#include "heatlab/log_magnitude.hpp"
#include "heatlab/spectral.hpp"

namespace heatlab {

/// Analytic parameters of the stability estimates.
struct StabilityConfig {
  double s = 0.25;
  double beta = 1.0;
  double rho0 = 0.5;
  double rho_hat = 0.5;
  double c_hat = 0.05;
  double diameter = 1.0;
  int dim = 1;  // exponent n in H_rho = exp(exp(c_hat rho^-n))
  TimeWindow window;
  double varsigma = std::log(16.0 / 5.0) / std::log(18.0 / 5.0);
  std::map<std::string, double> fitted;

  std::vector<std::string> violations() const;
  void validate() const;
};

/// Margin added to -lambda_1 when shifting the spectrum to positivity.
inline constexpr double kShiftMargin = 1e-6;

/// c1 = max(0, -lambda_1) + margin, so that lambda_k + c1 > 0.
double spectral_shift(const EigenSystem& eig);
Eigen::VectorXd shifted_lambdas(const EigenSystem& eig);

/// Sum over shifted eigenvalues <= lambda of (f | phi_k) phi_k.
Eigen::VectorXd project_low(const EigenSystem& eig, const Eigen::VectorXd& f, double lambda);

struct SpectralNorms {
  double n = 0;             // N(f)
  double n_beta = 0;        // (1 + |lambda|)^{2 beta} weights
  double bracket_beta = 0;  // shifted lambda^{2 beta} weights
  Eigen::VectorXd coefficients;
};

SpectralNorms spectral_norms(const EigenSystem& eig, const Eigen::VectorXd& f, double beta);

/// H_rho, phi(rho), L_rho, Phi(l) and Psi(r), all carried in log form.
class StabilityFunctions {
 public:
  explicit StabilityFunctions(StabilityConfig config);

  const StabilityConfig& config() const { return config_; }

  LogMagnitude h(double rho) const;
  LogMagnitude phi(double rho) const;
  /// H_rho ||u||_{L2(omega)} + rho^s ||u||_{H1}.
  LogMagnitude l(double rho, const Grid& grid, const Eigen::VectorXd& u, const Mask& omega) const;
  /// Phi at l > 0; l = +inf gives zero.
  LogMagnitude big_phi(const LogMagnitude& l) const;
  LogMagnitude big_phi(double l) const;
  LogMagnitude psi(double r) const;
  /// phi(rho_hat), the switch point of Phi.
  LogMagnitude phi_threshold() const { return phi(config_.rho_hat); }
  /// Smallest rho at which exp(c_hat rho^-n) stays representable.
  double rho_floor() const;

 private:
  StabilityConfig config_;
};

struct TlResult {
  double rho = 0;
  LogMagnitude minimum;
  LogMagnitude bound;  // Y Phi(Y / X)
  double log_fitted = 0;
  bool large_ratio = false;  // Y / X > phi(rho_hat)
};

/// Minimizes H_rho X + rho^s Y over (0, rho_hat) by golden section on log rho.
TlResult minimize_tl(double x, double y, const StabilityFunctions& fns);
AuditReport tl_audit(const std::vector<std::pair<double, double>>& pairs, const StabilityFunctions& fns);

struct SinhLift {
  Eigen::VectorXd y;
  Eigen::VectorXd shifted;  // shifted eigenvalues of the included modes
  std::vector<Index> modes;
  Eigen::VectorXd coefficients;
  Eigen::MatrixXd values;  // nodes x y
};

/// w(x, y) = sum over included modes of sinh(sqrt(l) y) / sqrt(l) a_k phi_k(x).
SinhLift sinh_lift(const EigenSystem& eig, const Eigen::VectorXd& f, double lambda,
                   const Eigen::VectorXd& y);

/// ||u|| against exp(2 sqrt(lambda)) L_rho(u) for each column u and rho.
AuditReport low_mode_observability(const EigenSystem& eig, const Eigen::MatrixXd& ensemble,
                                   double lambda, const Mask& omega, const std::vector<double>& rhos,
                                   const StabilityFunctions& fns);

struct ObservabilityFunctional {
  double n = 0;
  std::vector<double> times;
  std::vector<double> observed;  // ||T(t) f||_{L2(omega)}
  std::vector<double> values;    // I(f)(t)
  std::vector<bool> zero_observation;
  double l1 = 0;
};

/// I(f)(t) = N(f) Phi(N(f) / ||T(t) f||_{L2(omega)}); L1 norm by trapezoid.
/// `shifted` evaluates the semigroup of V + c1.
double functional_at(const EigenSystem& eig, const Eigen::VectorXd& f, const Mask& omega, double t,
                     const StabilityFunctions& fns, bool shifted = false);
ObservabilityFunctional observability_functional(const EigenSystem& eig, const Eigen::VectorXd& f,
                                                 const Mask& omega, const TimeGrid& time,
                                                 const StabilityFunctions& fns, bool shifted = false);

/// Geometric sequence t_j = t_frak theta^j, theta = 2 sqrt(epsilon).
struct TelescopingOptions {
  double epsilon = 0.125;
  int steps = 12;
};

struct ObservabilityAudit {
  AuditReport main{"observability"};
  AuditReport telescoping{"telescoping-step"};
  double c_star = 0;
};

ObservabilityAudit observability_audit(const EigenSystem& eig, const Eigen::MatrixXd& ensemble,
                                       const Mask& omega, const TimeGrid& time,
                                       const StabilityFunctions& fns,
                                       const TelescopingOptions& telescoping = {});

/// T(t) f restricted to omega at each time, one column per time.
Eigen::MatrixXd observation_data(const EigenSystem& eig, const Eigen::VectorXd& f, const Mask& omega,
                                 const std::vector<double>& times);

struct Reconstruction {
  Eigen::VectorXd f_hat;
  Eigen::VectorXd coefficients;
  std::vector<Index> modes;
  Eigen::VectorXd singular_values;
  Index rank = 0;
  double kappa = 0;
  double residual = 0;
  std::optional<double> error;       // ||f_hat - f|| when the truth is known
  std::optional<double> tail_bound;  // lambda^-beta [f]_beta when the truth is known
};

/// Least-squares fit of the low-mode coefficients to space-time data on omega,
/// with singular values below tau * sigma_max truncated.
Reconstruction reconstruct_initial(const EigenSystem& eig, const Eigen::MatrixXd& data, const Mask& omega,
                                   const std::vector<double>& times, double lambda_cutoff, double tau,
                                   double beta, const Eigen::VectorXd* truth = nullptr);

/// Tail estimate sum over shifted lambda_k >= lambda of a_k^2 <= lambda^-2beta [f]_beta^2.
AuditReport tail_bound_audit(const EigenSystem& eig, const Eigen::MatrixXd& ensemble,
                             const std::vector<double>& lambdas, double beta);

struct StabilityAudit {
  AuditReport theorem{"initial-data-stability"};
  AuditReport corollary{"log-stability"};
  double c_fit = 0;
  double c_corollary = 0;
};

/// Fits one c for ||f|| <= c e^{lambda t} ||I(f)||_1 + lambda^-beta [f]_beta
/// across the lambda grid and one constant for the Psi form.
StabilityAudit stability_audit(const EigenSystem& eig, const Eigen::MatrixXd& ensemble, const Mask& omega,
                               const TimeGrid& time, const std::vector<double>& lambdas,
                               const StabilityFunctions& fns);

/// Columns sum_{k < modes} g_k phi_k with standard normal g_k.
Eigen::MatrixXd low_mode_ensemble(const EigenSystem& eig, Index count, Index modes, std::uint64_t seed);

}  // namespace heatlab
