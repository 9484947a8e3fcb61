#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "heatlab/audit.hpp"
#include "heatlab/mesh.hpp"

namespace heatlab {

/// Raised when the dense eigensolver or a linear solve fails.
class solver_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lebesgue exponents of the Hoelder pairing int V w^2 <= ||V||_r ||w||_{p'}^2
/// (2/p' + 1/r = 1) and the dual exponent p of p'. In the continuum these are
/// r = n/2, p' = 2n/(n-2); on the 1D and 2D surrogate grids the admissible
/// endpoint r = 1, p' = inf, p = 1 is used.
struct LebesgueExponents {
  double potential = 1.0;
  double sobolev = std::numeric_limits<double>::infinity();
  double dual = 1.0;
};

LebesgueExponents lebesgue_exponents(int dim);

struct Potential {
  Grid grid;
  Eigen::VectorXd values;

  /// Discrete ||V||_r with r from lebesgue_exponents.
  double norm() const;
};

Potential zero_potential(const Grid& grid);
Potential constant_potential(const Grid& grid, double c);
/// V + amplitude * 1(ball).
Potential add_ball(const Potential& v, const region::Ball& ball, double amplitude);

/// Spikes a_i * h^-gamma on single nodes at seeded random positions, with
/// a_i uniform in [amplitude/2, amplitude]. ||V||_r stays bounded as h -> 0
/// when gamma <= dim / r; larger gamma is rejected.
struct RoughSpec {
  int count = 4;
  double amplitude = 1.0;
  double gamma = 1.0;
  std::uint64_t seed = 0;
};
Potential rough_potential(const Grid& grid, const RoughSpec& spec);

/// Dense matrix of -Lap_h + diag(V) with homogeneous Dirichlet conditions.
Eigen::MatrixXd assemble_operator(const Grid& grid, const Potential& v);
Eigen::SparseMatrix<double> assemble_sparse(const Grid& grid, const Potential& v);

/// (-Lap_h + V) u, with Dirichlet boundary values taken from `boundary`
/// (one value per boundary node) or zero when `boundary` is empty.
Eigen::VectorXd apply_operator(const Grid& grid, const Eigen::VectorXd& potential,
                               const Eigen::VectorXd& u,
                               const Eigen::VectorXd& boundary = Eigen::VectorXd());

struct Cluster {
  Index begin = 0;
  Index size = 1;
};

/// Dirichlet eigenpairs of -Lap_h + V in ascending order.
///
/// `phis` columns are orthonormal in the cell-volume weighted inner product.
/// `psis(b, k)` is the outward normal flux of phi_k at boundary node b (see
/// trace_neumann_flux). Degenerate clusters are rotated to a canonical basis
/// and every vector has its largest-magnitude entry positive.
struct EigenSystem {
  Grid grid;
  Eigen::VectorXd potential;
  Eigen::VectorXd lambdas;
  Eigen::MatrixXd phis;
  Eigen::MatrixXd psis;
  std::vector<Cluster> clusters;

  Index modes() const { return lambdas.size(); }

  /// (f | phi_k) for every mode.
  Eigen::VectorXd coefficients(const Eigen::VectorXd& f) const;
  Eigen::VectorXd synthesize(const Eigen::VectorXd& coeffs) const;
};

/// Relative clustering tolerance for eigenvalues.
inline constexpr double kClusterTolerance = 1e-8;

EigenSystem eigendecompose(const Grid& grid, const Potential& v,
                           std::optional<Index> k_max = std::nullopt);

/// Groups indices with |l_i - l_{i+1}| <= tol (1 + |l_i|), chained.
std::vector<Cluster> cluster_eigenvalues(const Eigen::VectorXd& lambdas,
                                         double tol = kClusterTolerance);

struct SobolevOptions {
  int random_starts = 20;
  std::uint64_t seed = 7;
  int max_steps = 50;
};

/// Best-effort supremum of ||w||_{p'} / ||grad w||_2 over the discrete H^1_0.
struct SobolevEstimate {
  double sigma = 0;
  double ratio_at_ground_state = 0;
  Index argmax_node = 0;
  bool lower_bound = true;
};

/// ||w||_inf / sqrt(h^d w^T K w) with K = -Lap_h (Dirichlet energy).
double sobolev_ratio(const Grid& grid, const Eigen::VectorXd& w);

/// Node-targeted ascent: from a start w, jump to K^{-1} e_i at the node i
/// where |w| peaks; that vector maximizes the ratio among all w peaking at i,
/// so the ratio never decreases. Repeated from seeded random starts and from
/// the ground state of -Lap_h.
SobolevEstimate sobolev_constant(const Grid& grid, const SobolevOptions& options = {});

struct AdmissibilityCertificate {
  double sigma = 0;
  double vartheta = 0;
  double potential_norm = 0;
  double product_check = 0;  // 2 vartheta sigma^2
  bool certified = false;
};

/// Defaults vartheta to 0.45 / sigma^2. Certified iff ||V||_r <= vartheta and
/// 2 vartheta sigma^2 < 1.
AdmissibilityCertificate check_admissible(const Potential& v, std::optional<double> vartheta,
                                          double sigma);

struct WeylFit {
  double c0 = 1;
  double c1 = 0;
  double exponent = 2;

  double lower(Index k) const;  // k is 1-based
  double upper(Index k) const;
};

/// Minimizes c1 over c0 >= 1, then takes the smallest c0 attaining it.
WeylFit weyl_fit(const Eigen::VectorXd& lambdas, int dim);
WeylFit weyl_fit(const EigenSystem& eig);
AuditReport weyl_audit(const EigenSystem& eig, const WeylFit& fit);

struct Fingerprint {
  Eigen::VectorXd lambdas;
  Mask mask;
  Eigen::MatrixXd psi;  // mask nodes x modes
};

Fingerprint boundary_fingerprint(const EigenSystem& eig, const Mask& boundary_mask);

}  // namespace heatlab
