#include "heatlab/observability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "heatlab/random.hpp"

namespace heatlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double safe_log(double x) { return x > 0 ? std::log(x) : -kInf; }

double loglog_of(double log_value) { return log_value > 0 ? std::log(log_value) : -kInf; }

AuditSample& add_magnitudes(AuditReport& r, std::string label, const LogMagnitude& lhs,
                            const LogMagnitude& rhs) {
  return r.add_log(std::move(label), lhs.log, rhs.log, rhs.loglog);
}

std::string tag(const char* name, Index i) { return std::string(name) + std::to_string(i); }

}  // namespace

std::vector<std::string> StabilityConfig::violations() const {
  std::vector<std::string> v;
  if (!(s > 0 && s < 0.5)) v.push_back("s in (0, 1/2) violated");
  if (!(beta > 0)) v.push_back("beta > 0 violated");
  if (!(rho0 > 0)) v.push_back("rho0 > 0 violated");
  if (!(rho_hat > 0 && rho_hat <= rho0)) v.push_back("rho_hat in (0, rho0] violated");
  if (!(c_hat > 0)) v.push_back("c_hat > 0 violated");
  if (!(diameter > 0)) v.push_back("diameter > 0 violated");
  if (dim < 1) v.push_back("dim >= 1 violated");
  if (!(varsigma > 0 && varsigma < 1)) v.push_back("varsigma in (0, 1) violated");
  for (const std::string& w : window.violations()) v.push_back(w);
  if (v.empty()) {
    // log phi(rho_hat) = -s log rho_hat + exp(c_hat rho_hat^-n) must exceed 1.
    const double log_phi = -s * std::log(rho_hat) + std::exp(c_hat * std::pow(rho_hat, -dim));
    if (!(log_phi > 1)) v.push_back("phi(rho_hat) > e violated");
  }
  return v;
}

void StabilityConfig::validate() const {
  const auto v = violations();
  if (!v.empty()) throw config_error(v.front());
}

double spectral_shift(const EigenSystem& eig) {
  if (eig.modes() == 0) throw config_error("eigensystem has no modes");
  return std::max(0.0, -eig.lambdas[0]) + kShiftMargin;
}

Eigen::VectorXd shifted_lambdas(const EigenSystem& eig) {
  return eig.lambdas.array() + spectral_shift(eig);
}

Eigen::VectorXd project_low(const EigenSystem& eig, const Eigen::VectorXd& f, double lambda) {
  Eigen::VectorXd a = eig.coefficients(f);
  const Eigen::VectorXd lt = shifted_lambdas(eig);
  for (Index k = 0; k < a.size(); ++k) {
    if (lt[k] > lambda) a[k] = 0;
  }
  return eig.synthesize(a);
}

SpectralNorms spectral_norms(const EigenSystem& eig, const Eigen::VectorXd& f, double beta) {
  SpectralNorms out;
  out.coefficients = eig.coefficients(f);
  const Eigen::VectorXd lt = shifted_lambdas(eig);
  double first = 0;
  double second = 0;
  double nb = 0;
  double br = 0;
  for (Index k = 0; k < eig.modes(); ++k) {
    const double a = std::abs(out.coefficients[k]);
    const double w = 1 + std::abs(eig.lambdas[k]);
    first += std::sqrt(w) * a;
    second += w * a * a;
    nb += std::pow(w, 2 * beta) * a * a;
    if (lt[k] > 0) br += std::pow(lt[k], 2 * beta) * a * a;
  }
  out.n = first + std::sqrt(second);
  out.n_beta = std::sqrt(nb);
  out.bracket_beta = std::sqrt(br);
  return out;
}

StabilityFunctions::StabilityFunctions(StabilityConfig config) : config_(std::move(config)) {
  config_.validate();
}

LogMagnitude StabilityFunctions::h(double rho) const {
  if (!(rho > 0)) throw domain_error("H_rho needs rho > 0");
  return LogMagnitude::from_loglog(config_.c_hat * std::pow(rho, -config_.dim));
}

LogMagnitude StabilityFunctions::phi(double rho) const {
  return LogMagnitude::from_log(-config_.s * std::log(rho)) * h(rho);
}

LogMagnitude StabilityFunctions::l(double rho, const Grid& grid, const Eigen::VectorXd& u,
                                   const Mask& omega) const {
  const LogMagnitude observed = h(rho) * LogMagnitude::from_value(l2_norm(grid, u, &omega));
  return observed + LogMagnitude::from_value(std::pow(rho, config_.s) * h1_norm(grid, u));
}

LogMagnitude StabilityFunctions::big_phi(const LogMagnitude& l) const {
  if (l.is_zero()) throw domain_error("Phi needs l > 0");
  if (l > phi_threshold()) {
    if (std::isinf(l.loglog)) return LogMagnitude::zero();
    return LogMagnitude::from_log(-config_.s * std::log(l.loglog));
  }
  const double rh = config_.rho_hat;
  const LogMagnitude k = h(rh) + LogMagnitude::from_value(std::pow(rh, config_.s)) * phi(rh);
  return k / l;
}

LogMagnitude StabilityFunctions::big_phi(double l) const {
  if (!(l > 0)) throw domain_error("Phi needs l > 0");
  return big_phi(std::isinf(l) ? LogMagnitude{kInf, kInf} : LogMagnitude::from_value(l));
}

LogMagnitude StabilityFunctions::psi(double r) const {
  if (!(r > 0)) throw domain_error("Psi needs r > 0");
  if (r <= 1) return LogMagnitude::from_log(-std::log(r));
  return LogMagnitude::from_log(-config_.beta * std::log(std::log(r)));
}

double StabilityFunctions::rho_floor() const {
  return std::min(config_.rho_hat, std::pow(config_.c_hat / 700.0, 1.0 / config_.dim));
}

TlResult minimize_tl(double x, double y, const StabilityFunctions& fns) {
  if (!(x > 0) || !(x <= y)) throw domain_error("minimize_tl needs 0 < X <= Y");
  const double s = fns.config().s;
  auto value = [&](double log_rho) {
    const double rho = std::exp(log_rho);
    return fns.h(rho) * LogMagnitude::from_value(x) + LogMagnitude::from_log(s * log_rho + std::log(y));
  };
  double a = std::log(fns.rho_floor());
  double b = std::log(fns.config().rho_hat);
  const double g = (std::sqrt(5.0) - 1) / 2;
  double c = b - g * (b - a);
  double d = a + g * (b - a);
  LogMagnitude fc = value(c);
  LogMagnitude fd = value(d);
  for (int it = 0; it < 60; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = value(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = value(d);
    }
  }
  TlResult r;
  double best = fc < fd ? c : d;
  LogMagnitude best_value = fc < fd ? fc : fd;
  const double top = std::log(fns.config().rho_hat);
  if (value(top) < best_value) {
    best = top;
    best_value = value(top);
  }
  r.rho = std::exp(best);
  r.minimum = best_value;
  const LogMagnitude ratio = LogMagnitude::from_log(std::log(y) - std::log(x));
  r.large_ratio = ratio > fns.phi_threshold();
  r.bound = LogMagnitude::from_value(y) * fns.big_phi(ratio);
  r.log_fitted = r.minimum.log - r.bound.log;
  return r;
}

AuditReport tl_audit(const std::vector<std::pair<double, double>>& pairs, const StabilityFunctions& fns) {
  AuditReport r("rho-minimization");
  double worst = -kInf;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [x, y] = pairs[i];
    const TlResult t = minimize_tl(x, y, fns);
    AuditSample& s = add_magnitudes(r, tag("pair", static_cast<Index>(i)), t.minimum, t.bound);
    s.metadata["X"] = x;
    s.metadata["Y"] = y;
    s.metadata["rho"] = t.rho;
    s.metadata["large_ratio"] = t.large_ratio ? 1 : 0;
    worst = std::max(worst, t.log_fitted);
  }
  r.scalars["fitted_c"] = std::exp(worst);
  return r;
}

SinhLift sinh_lift(const EigenSystem& eig, const Eigen::VectorXd& f, double lambda, const Eigen::VectorXd& y) {
  SinhLift out;
  out.y = y;
  const Eigen::VectorXd lt = shifted_lambdas(eig);
  const Eigen::VectorXd a = eig.coefficients(f);
  for (Index k = 0; k < eig.modes(); ++k) {
    if (lt[k] <= lambda) out.modes.push_back(k);
  }
  const auto m = static_cast<Index>(out.modes.size());
  out.shifted.resize(m);
  out.coefficients.resize(m);
  Eigen::MatrixXd basis(eig.grid.size(), m);
  Eigen::MatrixXd profile(m, y.size());
  for (Index j = 0; j < m; ++j) {
    const Index k = out.modes[j];
    out.shifted[j] = lt[k];
    out.coefficients[j] = a[k];
    basis.col(j) = eig.phis.col(k) * a[k];
    const double r = std::sqrt(std::max(lt[k], 0.0));
    for (Index i = 0; i < y.size(); ++i) {
      const double z = r * y[i];
      profile(j, i) = z < 1e-4 ? y[i] * (1 + z * z / 6) : std::sinh(z) / r;
    }
  }
  out.values = basis * profile;
  return out;
}

AuditReport low_mode_observability(const EigenSystem& eig, const Eigen::MatrixXd& ensemble, double lambda,
                                   const Mask& omega, const std::vector<double>& rhos,
                                   const StabilityFunctions& fns) {
  if (omega.kind != MaskKind::interior) throw config_error("omega must be an interior mask");
  AuditReport r("low-mode-observability");
  const Grid& g = eig.grid;
  const LogMagnitude growth = LogMagnitude::from_log(2 * std::sqrt(std::max(lambda, 0.0)));
  std::vector<double> fitted;
  for (Index c = 0; c < ensemble.cols(); ++c) {
    const Eigen::VectorXd u = ensemble.col(c);
    const double norm = l2_norm(g, u);
    if (l2_norm(g, Eigen::VectorXd(u - project_low(eig, u, lambda))) > 1e-8 * norm) {
      throw config_error("low-mode sample is not in the range of the projector");
    }
    for (double rho : rhos) {
      const LogMagnitude rhs = growth * fns.l(rho, g, u, omega);
      AuditSample& s = add_magnitudes(r, tag("u", c) + "/rho=" + std::to_string(rho),
                                      LogMagnitude::from_value(norm), rhs);
      s.metadata["rho"] = rho;
      s.metadata["sample"] = static_cast<double>(c);
      fitted.push_back(norm > 0 ? s.fitted() : 0.0);
    }
  }
  if (!fitted.empty()) {
    std::sort(fitted.begin(), fitted.end());
    r.scalars["fitted_min"] = fitted.front();
    r.scalars["fitted_median"] = fitted[fitted.size() / 2];
    r.scalars["fitted_max"] = fitted.back();
  }
  r.scalars["lambda"] = lambda;
  return r;
}

namespace {

Eigen::VectorXd evolve(const EigenSystem& eig, const Eigen::VectorXd& a, double t, bool shifted) {
  const double c1 = shifted ? spectral_shift(eig) : 0.0;
  return eig.synthesize((a.array() * (-(eig.lambdas.array() + c1) * t).exp()).matrix());
}

// ||T(t) f|| from the coefficients (the eigenvectors are orthonormal).
double evolved_norm(const EigenSystem& eig, const Eigen::VectorXd& a, double t, bool shifted) {
  const double c1 = shifted ? spectral_shift(eig) : 0.0;
  return (a.array() * (-(eig.lambdas.array() + c1) * t).exp()).matrix().norm();
}

Eigen::MatrixXd omega_rows(const EigenSystem& eig, const Mask& omega) {
  Eigen::MatrixXd rows(omega.size(), eig.modes());
  for (Index i = 0; i < omega.size(); ++i) rows.row(i) = eig.phis.row(omega.indices[i]);
  return rows;
}

// Evolved coefficients, one column per time, restricted to the modes that are
// above projection roundoff at some time (relative size above 1e-15).
struct EvolvedCoefficients {
  std::vector<Index> modes;
  Eigen::MatrixXd values;
};

EvolvedCoefficients evolved_coefficients(const EigenSystem& eig, const Eigen::VectorXd& a,
                                         const std::vector<double>& times, double c1) {
  const Index m = eig.modes();
  const auto nt = static_cast<Index>(times.size());
  Eigen::MatrixXd full(m, nt);
  std::vector<char> keep(static_cast<std::size_t>(m), 0);
  for (Index j = 0; j < nt; ++j) {
    full.col(j) = (a.array() * (-(eig.lambdas.array() + c1) * times[static_cast<std::size_t>(j)]).exp()).matrix();
    const double cut = 1e-15 * full.col(j).cwiseAbs().maxCoeff();
    for (Index k = 0; k < m; ++k) {
      if (std::abs(full(k, j)) > cut) keep[static_cast<std::size_t>(k)] = 1;
    }
  }
  EvolvedCoefficients out;
  for (Index k = 0; k < m; ++k) {
    if (keep[static_cast<std::size_t>(k)]) out.modes.push_back(k);
  }
  out.values.resize(static_cast<Index>(out.modes.size()), nt);
  for (std::size_t i = 0; i < out.modes.size(); ++i) out.values.row(static_cast<Index>(i)) = full.row(out.modes[i]);
  return out;
}

// u(x_i, t_j) for the omega nodes x_i.
Eigen::MatrixXd observed_values(const EigenSystem& eig, const Mask& omega, const Eigen::VectorXd& a,
                                const std::vector<double>& times, double c1) {
  const EvolvedCoefficients ev = evolved_coefficients(eig, a, times, c1);
  Eigen::MatrixXd rows(omega.size(), static_cast<Index>(ev.modes.size()));
  for (std::size_t k = 0; k < ev.modes.size(); ++k) {
    const Index mode = ev.modes[k];
    for (Index i = 0; i < omega.size(); ++i) rows(i, static_cast<Index>(k)) = eig.phis(omega.indices[i], mode);
  }
  return rows * ev.values;
}

// ||T(t) f||_{L2(omega)} for every t.
std::vector<double> observed_norms(const EigenSystem& eig, const Mask& omega, const Eigen::VectorXd& a,
                                   const std::vector<double>& times, bool shifted) {
  const Eigen::MatrixXd u = observed_values(eig, omega, a, times, shifted ? spectral_shift(eig) : 0.0);
  std::vector<double> out(times.size());
  const double vol = eig.grid.cell_volume();
  for (std::size_t m = 0; m < times.size(); ++m) out[m] = std::sqrt(vol * u.col(static_cast<Index>(m)).squaredNorm());
  return out;
}

double functional_value(const SpectralNorms& norms, double observed, const StabilityFunctions& fns) {
  if (observed == 0) return 0;
  const LogMagnitude ratio = LogMagnitude::from_log(std::log(norms.n) - std::log(observed));
  return (LogMagnitude::from_value(norms.n) * fns.big_phi(ratio)).value();
}

}  // namespace

double functional_at(const EigenSystem& eig, const Eigen::VectorXd& f, const Mask& omega, double t,
                     const StabilityFunctions& fns, bool shifted) {
  const SpectralNorms norms = spectral_norms(eig, f, fns.config().beta);
  if (norms.n == 0) throw domain_error("the observability functional is undefined at f = 0");
  return functional_value(norms, l2_norm(eig.grid, evolve(eig, norms.coefficients, t, shifted), &omega), fns);
}

ObservabilityFunctional observability_functional(const EigenSystem& eig, const Eigen::VectorXd& f,
                                                 const Mask& omega, const TimeGrid& time,
                                                 const StabilityFunctions& fns, bool shifted) {
  if (omega.kind != MaskKind::interior) throw config_error("omega must be an interior mask");
  const SpectralNorms norms = spectral_norms(eig, f, fns.config().beta);
  if (norms.n == 0) throw domain_error("the observability functional is undefined at f = 0");
  ObservabilityFunctional out;
  out.n = norms.n;
  for (Index i = 0; i < time.knots(); ++i) out.times.push_back(time.t(i));
  out.observed = observed_norms(eig, omega, norms.coefficients, out.times, shifted);
  for (double obs : out.observed) {
    out.values.push_back(functional_value(norms, obs, fns));
    out.zero_observation.push_back(obs == 0);
  }
  for (Index i = 0; i + 1 < time.knots(); ++i) {
    out.l1 += 0.5 * time.dt * (out.values[i] + out.values[i + 1]);
  }
  return out;
}

ObservabilityAudit observability_audit(const EigenSystem& eig, const Eigen::MatrixXd& ensemble,
                                       const Mask& omega, const TimeGrid& time,
                                       const StabilityFunctions& fns, const TelescopingOptions& telescoping) {
  const double tf = fns.config().window.t_frak;
  if (std::abs(time.end() - tf) > 1e-9 * tf) throw config_error("time grid must end at t_frak");
  if (!(telescoping.epsilon > 0 && telescoping.epsilon < 0.25)) {
    throw config_error("telescoping epsilon must lie in (0, 1/4)");
  }
  ObservabilityAudit out;
  const double c1 = spectral_shift(eig);
  const double eps = telescoping.epsilon;
  const double theta = 2 * std::sqrt(eps);
  double worst = -kInf;
  std::vector<double> step_worst(static_cast<std::size_t>(telescoping.steps), -kInf);
  for (Index c = 0; c < ensemble.cols(); ++c) {
    const Eigen::VectorXd f = ensemble.col(c);
    const ObservabilityFunctional fun = observability_functional(eig, f, omega, time, fns);
    const Eigen::VectorXd a = eig.coefficients(f);
    const SpectralNorms norms = spectral_norms(eig, f, fns.config().beta);
    const double lhs = evolved_norm(eig, a, tf, false);
    AuditSample& s = out.main.add(tag("f", c), lhs, fun.l1);
    s.metadata["N"] = fun.n;
    s.metadata["I_l1"] = fun.l1;
    s.metadata["zero_observation_knots"] =
        static_cast<double>(std::count(fun.zero_observation.begin(), fun.zero_observation.end(), true));
    if (fun.l1 == 0) out.main.anomalies.push_back(tag("f", c) + ": zero observation functional");
    worst = std::max(worst, s.log_fitted);

    for (int j = 0; j < telescoping.steps; ++j) {
      const double t = tf * std::pow(theta, j);
      const double sj = t * theta;
      const double at = evolved_norm(eig, a, t, true);
      const double as = evolved_norm(eig, a, sj, true);
      const double it = functional_value(norms, observed_norms(eig, omega, a, {t}, true).front(), fns);
      const double log_rhs = 1 / (eps * (t - sj)) + (1 - eps) * safe_log(it) + eps * safe_log(as);
      AuditSample& st = out.telescoping.add_log(tag("f", c) + "/step" + std::to_string(j), safe_log(at),
                                                log_rhs, loglog_of(log_rhs));
      st.metadata["t"] = t;
      st.metadata["s"] = sj;
      st.metadata["I_t"] = it;
      auto& sw = step_worst[static_cast<std::size_t>(j)];
      sw = std::max(sw, st.log_fitted);
    }
  }
  out.c_star = std::exp(worst);
  out.main.scalars["C_star"] = out.c_star;
  out.main.scalars["shift_c1"] = c1;
  out.main.scalars["c_implied"] = std::exp(worst - 10 / tf - c1 * tf);
  out.telescoping.scalars["epsilon"] = eps;
  out.telescoping.scalars["theta"] = theta;
  double all = -kInf;
  for (std::size_t j = 0; j < step_worst.size(); ++j) {
    out.telescoping.scalars["fitted_step_" + std::to_string(j)] = std::exp(step_worst[j]);
    all = std::max(all, step_worst[j]);
  }
  out.telescoping.scalars["fitted_max"] = std::exp(all);
  return out;
}

Eigen::MatrixXd observation_data(const EigenSystem& eig, const Eigen::VectorXd& f, const Mask& omega,
                                 const std::vector<double>& times) {
  if (omega.kind != MaskKind::interior) throw config_error("omega must be an interior mask");
  const Eigen::VectorXd a = eig.coefficients(f);
  Eigen::MatrixXd coeffs(eig.modes(), static_cast<Index>(times.size()));
  for (std::size_t m = 0; m < times.size(); ++m) {
    coeffs.col(static_cast<Index>(m)) = (a.array() * (-eig.lambdas.array() * times[m]).exp()).matrix();
  }
  return omega_rows(eig, omega) * coeffs;
}

Reconstruction reconstruct_initial(const EigenSystem& eig, const Eigen::MatrixXd& data, const Mask& omega,
                                   const std::vector<double>& times, double lambda_cutoff, double tau,
                                   double beta, const Eigen::VectorXd* truth) {
  if (omega.kind != MaskKind::interior) throw config_error("omega must be an interior mask");
  if (data.size() == 0 || times.empty()) throw config_error("reconstruction needs nonempty data");
  if (data.rows() != omega.size() || data.cols() != static_cast<Index>(times.size())) {
    throw config_error("data must be omega nodes x times");
  }
  if (!(tau >= 0 && tau < 1)) throw config_error("truncation level tau must lie in [0, 1)");
  Reconstruction out;
  const Eigen::VectorXd lt = shifted_lambdas(eig);
  for (Index k = 0; k < eig.modes(); ++k) {
    if (lt[k] <= lambda_cutoff) out.modes.push_back(k);
  }
  if (out.modes.empty()) throw config_error("no modes below the reconstruction cutoff");
  const auto m = static_cast<Index>(out.modes.size());
  const Index rows = omega.size();
  Eigen::MatrixXd design(rows * data.cols(), m);
  for (Index t = 0; t < data.cols(); ++t) {
    for (Index j = 0; j < m; ++j) {
      const Index k = out.modes[j];
      const double decay = std::exp(-eig.lambdas[k] * times[static_cast<std::size_t>(t)]);
      for (Index i = 0; i < rows; ++i) design(t * rows + i, j) = decay * eig.phis(omega.indices[i], k);
    }
  }
  const Eigen::Map<const Eigen::VectorXd> rhs(data.data(), data.size());
  Eigen::BDCSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.singular_values = svd.singularValues();
  const double smax = out.singular_values[0];
  Eigen::VectorXd proj = svd.matrixU().transpose() * rhs;
  out.rank = 0;
  for (Index j = 0; j < m; ++j) {
    if (out.singular_values[j] > tau * smax && out.singular_values[j] > 0) {
      proj[j] /= out.singular_values[j];
      ++out.rank;
    } else {
      proj[j] = 0;
    }
  }
  out.kappa = out.rank > 0 ? smax / out.singular_values[out.rank - 1] : kInf;
  out.coefficients = svd.matrixV() * proj;
  out.residual = std::sqrt(eig.grid.cell_volume()) * (design * out.coefficients - rhs).norm();
  Eigen::VectorXd full = Eigen::VectorXd::Zero(eig.modes());
  for (Index j = 0; j < m; ++j) full[out.modes[j]] = out.coefficients[j];
  out.f_hat = eig.synthesize(full);
  if (truth != nullptr) {
    out.error = l2_norm(eig.grid, Eigen::VectorXd(out.f_hat - *truth));
    const double cutoff = std::max(lambda_cutoff, std::numeric_limits<double>::min());
    out.tail_bound = std::pow(cutoff, -beta) * spectral_norms(eig, *truth, beta).bracket_beta;
  }
  return out;
}

AuditReport tail_bound_audit(const EigenSystem& eig, const Eigen::MatrixXd& ensemble,
                             const std::vector<double>& lambdas, double beta) {
  AuditReport r("tail-bound");
  const Eigen::VectorXd lt = shifted_lambdas(eig);
  for (Index c = 0; c < ensemble.cols(); ++c) {
    const SpectralNorms norms = spectral_norms(eig, ensemble.col(c), beta);
    for (double lambda : lambdas) {
      if (!(lambda > 0)) throw config_error("tail bound needs lambda > 0");
      double tail = 0;
      for (Index k = 0; k < eig.modes(); ++k) {
        if (lt[k] >= lambda) tail += norms.coefficients[k] * norms.coefficients[k];
      }
      const double rhs = std::pow(lambda, -2 * beta) * norms.bracket_beta * norms.bracket_beta;
      AuditSample& s = r.add(tag("f", c) + "/lambda=" + std::to_string(lambda), tail, rhs);
      s.metadata["lambda"] = lambda;
      if (tail > rhs * (1 + 1e-12)) ++r.violations;
    }
  }
  return r;
}

StabilityAudit stability_audit(const EigenSystem& eig, const Eigen::MatrixXd& ensemble, const Mask& omega,
                               const TimeGrid& time, const std::vector<double>& lambdas,
                               const StabilityFunctions& fns) {
  const double tf = fns.config().window.t_frak;
  const double beta = fns.config().beta;
  struct Member {
    double norm;
    double l1;
    SpectralNorms norms;
  };
  std::vector<Member> members;
  for (Index c = 0; c < ensemble.cols(); ++c) {
    const Eigen::VectorXd f = ensemble.col(c);
    members.push_back({l2_norm(eig.grid, f), observability_functional(eig, f, omega, time, fns).l1,
                       spectral_norms(eig, f, beta)});
  }
  StabilityAudit out;

  // Smallest c per member and lambda: (||f|| - tail)_+ / (e^{lambda t} ||I||_1).
  double log_fit = -kInf;
  std::vector<double> member_fit(members.size(), -kInf);
  for (std::size_t i = 0; i < members.size(); ++i) {
    const Member& m = members[i];
    if (m.l1 == 0) {
      out.theorem.anomalies.push_back(tag("f", static_cast<Index>(i)) + ": zero observation functional");
      continue;
    }
    for (double lambda : lambdas) {
      if (!(lambda > 0)) throw config_error("stability audit needs lambda > 0");
      const double gap = m.norm - std::pow(lambda, -beta) * m.norms.bracket_beta;
      if (gap <= 0) continue;
      const double need = std::log(gap) - lambda * tf - std::log(m.l1);
      member_fit[i] = std::max(member_fit[i], need);
      log_fit = std::max(log_fit, need);
    }
  }
  out.c_fit = std::exp(log_fit);
  for (std::size_t i = 0; i < members.size(); ++i) {
    const Member& m = members[i];
    for (double lambda : lambdas) {
      const double tail = std::pow(lambda, -beta) * m.norms.bracket_beta;
      const LogMagnitude obs = m.l1 > 0 ? LogMagnitude::from_log(log_fit + lambda * tf + std::log(m.l1))
                                        : LogMagnitude::zero();
      const LogMagnitude rhs = obs + LogMagnitude::from_value(tail);
      AuditSample& s = add_magnitudes(out.theorem, tag("f", static_cast<Index>(i)) + "/lambda=" +
                                                       std::to_string(lambda),
                                      LogMagnitude::from_value(m.norm), rhs);
      s.metadata["lambda"] = lambda;
      s.metadata["tail"] = tail;
      s.metadata["tail_dominates"] = tail >= m.norm ? 1 : 0;
      if (s.log_lhs > s.log_rhs + 1e-12) ++out.theorem.violations;
    }
  }
  double lo = kInf;
  double hi = -kInf;
  for (double v : member_fit) {
    if (std::isfinite(v)) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  out.theorem.scalars["c_fit"] = out.c_fit;
  out.theorem.scalars["spread"] = std::isfinite(lo) ? std::exp(hi - lo) : 1.0;

  std::vector<double> corollary_fit(members.size(), -kInf);
  double log_cor = -kInf;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const Member& m = members[i];
    if (m.l1 == 0 || m.norms.n_beta == 0) continue;
    const LogMagnitude p = fns.psi(m.norms.n_beta / m.l1);
    corollary_fit[i] = std::log(m.norm) - p.log - std::log(m.norms.n_beta);
    log_cor = std::max(log_cor, corollary_fit[i]);
  }
  out.c_corollary = std::exp(log_cor);
  lo = kInf;
  hi = -kInf;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const Member& m = members[i];
    if (!std::isfinite(corollary_fit[i])) {
      out.corollary.anomalies.push_back(tag("f", static_cast<Index>(i)) + ": corollary constant undefined");
      continue;
    }
    lo = std::min(lo, corollary_fit[i]);
    hi = std::max(hi, corollary_fit[i]);
    const double r = m.norms.n_beta / m.l1;
    const LogMagnitude rhs = LogMagnitude::from_log(log_cor + std::log(m.norms.n_beta)) * fns.psi(r);
    AuditSample& s = add_magnitudes(out.corollary, tag("f", static_cast<Index>(i)),
                                    LogMagnitude::from_value(m.norm), rhs);
    s.metadata["psi_argument"] = r;
    s.metadata["N_beta"] = m.norms.n_beta;
    if (s.log_lhs > s.log_rhs + 1e-12) ++out.corollary.violations;
  }
  out.corollary.scalars["c_fit"] = out.c_corollary;
  out.corollary.scalars["spread"] = std::isfinite(lo) ? std::exp(hi - lo) : 1.0;
  return out;
}

Eigen::MatrixXd low_mode_ensemble(const EigenSystem& eig, Index count, Index modes, std::uint64_t seed) {
  if (modes < 1 || modes > eig.modes()) throw config_error("ensemble mode count out of range");
  Eigen::MatrixXd out(eig.grid.size(), count);
  for (Index c = 0; c < count; ++c) {
    Rng rng(split_seed(seed, 1, static_cast<std::uint64_t>(c)));
    out.col(c) = eig.phis.leftCols(modes) * rng.normal_vector(modes);
  }
  return out;
}

}  // namespace heatlab
