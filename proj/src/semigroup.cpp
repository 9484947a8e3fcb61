#include "heatlab/semigroup.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace heatlab {

Eigen::VectorXcd semigroup_coefficients(const EigenSystem& eig, std::complex<double> z,
                                        const Eigen::VectorXd& f) {
  if (z.real() < 0) throw domain_error("semigroup needs Re z >= 0");
  const Eigen::VectorXd a = eig.coefficients(f);
  Eigen::VectorXcd c(eig.modes());
  for (Index k = 0; k < eig.modes(); ++k) c[k] = std::exp(-eig.lambdas[k] * z) * a[k];
  return c;
}

Eigen::VectorXd apply_semigroup(const EigenSystem& eig, double t, const Eigen::VectorXd& f) {
  if (t < 0) throw domain_error("semigroup needs t >= 0");
  Eigen::VectorXd a = eig.coefficients(f);
  for (Index k = 0; k < eig.modes(); ++k) a[k] *= std::exp(-eig.lambdas[k] * t);
  return eig.synthesize(a);
}

Eigen::VectorXcd apply_semigroup(const EigenSystem& eig, std::complex<double> z,
                                 const Eigen::VectorXd& f) {
  const Eigen::VectorXcd c = semigroup_coefficients(eig, z, f);
  return eig.phis.cast<std::complex<double>>() * c;
}

Eigen::VectorXcd semigroup_derivative(const EigenSystem& eig, std::complex<double> z,
                                      const Eigen::VectorXd& f, int m) {
  if (m < 0) throw domain_error("derivative order must be >= 0");
  if (!(z.real() > 0)) throw domain_error("semigroup derivative needs Re z > 0");
  Eigen::VectorXcd c = semigroup_coefficients(eig, z, f);
  for (Index k = 0; k < eig.modes(); ++k) c[k] *= std::pow(-eig.lambdas[k], m);
  return eig.phis.cast<std::complex<double>>() * c;
}

double l2_norm(const Grid& grid, const Eigen::VectorXcd& u) {
  return std::sqrt(grid.cell_volume() * u.squaredNorm());
}

double growth_constant(const EigenSystem& eig) {
  return eig.modes() > 0 ? std::max(0.0, -eig.lambdas[0]) : 0.0;
}

namespace {

std::string z_label(std::complex<double> z) {
  std::ostringstream os;
  os << "z=" << z.real() << (z.imag() < 0 ? "-" : "+") << std::abs(z.imag()) << "i";
  return os.str();
}

// Discrete H2 surrogate: L2 norm of the second differences, Lap_h u.
double h2_seminorm(const Grid& grid, const Eigen::VectorXcd& u) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(grid.size());
  const Eigen::VectorXd re = apply_operator(grid, zero, u.real());
  const Eigen::VectorXd im = apply_operator(grid, zero, u.imag());
  return std::sqrt(grid.cell_volume() * (re.squaredNorm() + im.squaredNorm()));
}

}  // namespace

SemigroupReports semigroup_property_report(const EigenSystem& eig, const Eigen::VectorXd& f,
                                           double t1, double t2) {
  if (!(t1 > 0 && t2 > 0)) throw domain_error("semigroup report needs t1, t2 > 0");
  const Grid& g = eig.grid;
  const double nf = l2_norm(g, f);
  const double c1 = growth_constant(eig);
  SemigroupReports out;

  {
    const Eigen::VectorXd a = apply_semigroup(eig, t1, apply_semigroup(eig, t2, f));
    const Eigen::VectorXd b = apply_semigroup(eig, t1 + t2, f);
    auto& s = out.law.add("t1+t2", l2_norm(g, Eigen::VectorXd(a - b)), nf);
    s.metadata["t1"] = t1;
    s.metadata["t2"] = t2;
    if (s.lhs() > 1e-10 * nf) ++out.law.violations;
  }

  out.growth.scalars["c1"] = c1;
  out.derivative.scalars["c0"] = kSupRhoExp;
  out.derivative.scalars["c1"] = c1;
  for (double re : {t1, t2, t1 + t2}) {
    for (double im : {0.0, 0.5, 1.0}) {
      const std::complex<double> z(re, im);
      const double growth = std::exp(c1 * re) * nf;
      auto& sg = out.growth.add(z_label(z), l2_norm(g, apply_semigroup(eig, z, f)), growth);
      sg.metadata["re"] = re;
      sg.metadata["im"] = im;
      if (sg.lhs() > growth * (1 + 1e-12)) ++out.growth.violations;

      const double bound = (kSupRhoExp / re + 1) * growth;
      auto& sd = out.derivative.add(z_label(z), l2_norm(g, semigroup_derivative(eig, z, f, 1)), bound);
      sd.metadata["re"] = re;
      sd.metadata["im"] = im;
      if (sd.lhs() > bound * (1 + 1e-12)) ++out.derivative.violations;

      // H2 surrogate of the W^{2,q} bound: same shape, constant fitted not asserted.
      auto& sh = out.derivative.add("h2 " + z_label(z), h2_seminorm(g, apply_semigroup(eig, z, f)), bound);
      sh.metadata["re"] = re;
      sh.metadata["im"] = im;
      sh.metadata["surrogate"] = 1;
    }
  }

  {
    const Eigen::VectorXd u = apply_semigroup(eig, t1, f);
    const Eigen::VectorXd du = semigroup_derivative(eig, t1, f, 1).real();
    const Eigen::VectorXd res = du + apply_operator(g, eig.potential, u);
    const double lmax = eig.lambdas.cwiseAbs().maxCoeff();
    const double tol = 1e-8 * (1 + lmax) * nf;
    auto& s = out.residual.add("t=t1", l2_norm(g, res), tol);
    s.metadata["t"] = t1;
    s.metadata["lambda_max"] = lmax;
    if (s.lhs() > tol) ++out.residual.violations;
  }
  return out;
}

}  // namespace heatlab
