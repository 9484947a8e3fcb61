#include "heatlab/audit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace heatlab {

const std::vector<InequalityInfo>& inequality_registry() {
  static const std::vector<InequalityInfo> registry = {
      {"weyl-bound", "bilateral eigenvalue growth c0^-1 k^(2/n) - c1 <= lambda_k <= c0 k^(2/n) + c1"},
      {"semigroup-law", "T(t1) T(t2) f = T(t1 + t2) f"},
      {"semigroup-growth", "||T(z) f|| <= exp(c1 Re z) ||f||"},
      {"semigroup-derivative", "||T'(z) f|| <= (sup(r e^-r) / Re z + 1) exp(c1 Re z) ||f||"},
      {"heat-residual", "(d/dt - Laplacian + V) T(t) f = 0"},
      {"forward-residual", "discrete residual of a source- or boundary-driven solve"},
      {"distinguishability", "boundary measurement gap between two potentials"},
      {"tail-bound", "sum_{lambda_k >= lambda} |a_k|^2 <= lambda^(-2 beta) [f]_beta^2"},
      {"low-mode-observability", "c ||P_lambda u|| <= exp(2 sqrt(lambda)) L_rho(P_lambda u)"},
      {"rho-minimization", "min_rho (H_rho X + rho^s Y) <= c Y Phi(Y / X)"},
      {"observability", "||T(t_end) f|| <= C ||I(f)||_{L1(0, t_end)}"},
      {"telescoping-step", "||T_t f|| <= c exp(1 / (eps (t - s))) I(f)(t)^(1-eps) ||T_s f||^eps"},
      {"initial-data-stability", "||f|| <= c exp(lambda t_end) ||I(f)||_L1 + lambda^-beta [f]_beta"},
      {"log-stability", "||f|| <= c Psi(N_beta(f) / ||I(f)||_L1) N_beta(f)"},
      {"caccioppoli", "c ||grad u||_{w0} <= ||(Laplacian + V) u||_Lp + d^-1 ||u||_{w1}"},
      {"three-ball", "c r^2 ||u||_{B2r} <= ||u||_{B3r}^a ||u||_{Br}^(1-a)"},
      {"smallness-propagation", "||u||_{B(y,delta)} <= c delta^(-2/(1-s)) ||u||_{B(x,delta)}^eta_delta"},
      {"global-unique-continuation", "c ||u|| <= exp(exp(c_hat rho^-n)) ||u||_w + rho^s ||u||_H1"},
  };
  return registry;
}

bool is_registered(std::string_view id) {
  const auto& r = inequality_registry();
  return std::any_of(r.begin(), r.end(), [&](const InequalityInfo& i) { return i.id == id; });
}

double AuditSample::lhs() const { return std::exp(log_lhs); }
double AuditSample::rhs() const { return std::exp(log_rhs); }
double AuditSample::fitted() const { return std::exp(log_fitted); }

AuditReport::AuditReport(std::string inequality_id) : id(std::move(inequality_id)) {
  if (!is_registered(id)) {
    throw std::invalid_argument("unregistered audit id: " + id);
  }
}

namespace {

double safe_log(double x) {
  return x > 0 ? std::log(x) : -std::numeric_limits<double>::infinity();
}

}  // namespace

AuditSample& AuditReport::add(std::string label, double lhs, double rhs) {
  const double lr = safe_log(rhs);
  return add_log(std::move(label), safe_log(lhs), lr,
                 lr > 0 ? std::log(lr) : -std::numeric_limits<double>::infinity());
}

AuditSample& AuditReport::add_log(std::string label, double log_lhs, double log_rhs,
                                  double rhs_loglog) {
  AuditSample s;
  s.label = std::move(label);
  s.log_lhs = log_lhs;
  s.log_rhs = log_rhs;
  s.rhs_loglog = rhs_loglog;
  if (std::isinf(log_lhs) && log_lhs < 0) {
    s.log_fitted = -std::numeric_limits<double>::infinity();
  } else {
    s.log_fitted = log_lhs - log_rhs;
  }
  samples.push_back(std::move(s));
  return samples.back();
}

AuditSummary AuditReport::summary() const {
  AuditSummary out;
  out.count = samples.size();
  out.violations = violations;
  std::vector<double> f;
  for (const auto& s : samples) {
    if (!std::isnan(s.log_fitted)) f.push_back(s.log_fitted);
  }
  if (f.empty()) return out;
  std::sort(f.begin(), f.end());
  out.fitted_min = std::exp(f.front());
  out.fitted_max = std::exp(f.back());
  const std::size_t m = f.size() / 2;
  out.fitted_median = f.size() % 2 ? std::exp(f[m]) : std::exp(0.5 * (f[m - 1] + f[m]));
  return out;
}

nlohmann::json json_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

nlohmann::json to_json(const AuditReport& report) {
  nlohmann::json j;
  j["id"] = report.id;
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : report.samples) {
    nlohmann::json js;
    js["label"] = s.label;
    js["log_lhs"] = json_number(s.log_lhs);
    js["log_rhs"] = json_number(s.log_rhs);
    js["rhs_loglog"] = json_number(s.rhs_loglog);
    js["log_fitted"] = json_number(s.log_fitted);
    js["lhs"] = json_number(s.lhs());
    js["rhs"] = json_number(s.rhs());
    js["fitted"] = json_number(s.fitted());
    nlohmann::json meta = nlohmann::json::object();
    for (const auto& [k, v] : s.metadata) meta[k] = json_number(v);
    js["metadata"] = meta;
    samples.push_back(js);
  }
  j["samples"] = samples;
  nlohmann::json scalars = nlohmann::json::object();
  for (const auto& [k, v] : report.scalars) scalars[k] = json_number(v);
  j["scalars"] = scalars;
  j["anomalies"] = report.anomalies;
  const AuditSummary sum = report.summary();
  j["summary"] = {{"count", sum.count},
                  {"fitted_min", json_number(sum.fitted_min)},
                  {"fitted_median", json_number(sum.fitted_median)},
                  {"fitted_max", json_number(sum.fitted_max)},
                  {"violations", sum.violations}};
  return j;
}

nlohmann::json to_json(const AuditReport& report, const nlohmann::json& config_echo) {
  nlohmann::json j = to_json(report);
  j["config"] = config_echo;
  return j;
}

}  // namespace heatlab
