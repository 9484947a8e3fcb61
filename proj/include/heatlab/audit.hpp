#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace heatlab {

/// One inequality exercised by the audits.
struct InequalityInfo {
  std::string_view id;
  std::string_view description;
};

/// Fixed registry of audit ids. Every AuditReport carries one of these.
const std::vector<InequalityInfo>& inequality_registry();
bool is_registered(std::string_view id);

/// One (lhs, rhs) comparison. All three quantities are stored in log form so
/// that doubly-exponential right-hand sides stay finite; `rhs_loglog` is the
/// authoritative magnitude when `log_rhs` overflows.
struct AuditSample {
  std::string label;
  double log_lhs = 0;
  double log_rhs = 0;
  double rhs_loglog = 0;
  double log_fitted = 0;  // log(lhs / rhs) unless the audit defines its own constant
  std::map<std::string, double> metadata;

  double lhs() const;
  double rhs() const;
  double fitted() const;
};

struct AuditSummary {
  std::size_t count = 0;
  double fitted_min = 0;
  double fitted_median = 0;
  double fitted_max = 0;
  std::size_t violations = 0;
};

struct AuditReport {
  std::string id;
  std::vector<AuditSample> samples;
  std::map<std::string, double> scalars;  // report-level fitted constants and statistics
  std::vector<std::string> anomalies;
  std::size_t violations = 0;

  explicit AuditReport(std::string inequality_id);

  /// Adds a sample with plain positive lhs/rhs.
  AuditSample& add(std::string label, double lhs, double rhs);
  /// Adds a sample given in log form.
  AuditSample& add_log(std::string label, double log_lhs, double log_rhs, double rhs_loglog);

  AuditSummary summary() const;
};

nlohmann::json to_json(const AuditReport& report);
nlohmann::json to_json(const AuditReport& report, const nlohmann::json& config_echo);

/// Non-finite doubles become the strings "inf", "-inf", "nan" so that JSON
/// output stays valid and byte-stable.
nlohmann::json json_number(double x);

}  // namespace heatlab
