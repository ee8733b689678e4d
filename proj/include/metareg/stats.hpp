#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace metareg {

struct CorrelationResult {
  double r = 0.0;
  int n = 0;
  int df = 0;  // n - 2
  double t_stat = 0.0;
  double p_two_tailed = 1.0;
};

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  int df = 0;
  bool degenerate = false;  // zero-variance differences, convention values used
};

struct AnovaResult {
  std::string effect_name;
  double F = 0.0;
  int df_num = 0;
  int df_den = 0;
  double p = 1.0;
};

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

/// Student t cumulative distribution with `df` degrees of freedom.
double t_cdf(double x, int df);

/// F cumulative distribution with (d1, d2) degrees of freedom.
double f_cdf(double x, int d1, int d2);

/// Product-moment correlation. Requires equal lengths >= 3 and nonzero
/// variance in both arguments.
double pearson(const Eigen::Ref<const Eigen::VectorXd>& x,
               const Eigen::Ref<const Eigen::VectorXd>& y);

/// Significance of a correlation r observed on n samples:
/// t = r * sqrt((n-2) / (1-r^2)), two-tailed p with n-2 df.
CorrelationResult corr_significance(double r, int n);

/// Paired two-tailed t-test on the differences a - b.
TTestResult paired_ttest(const Eigen::Ref<const Eigen::VectorXd>& a,
                         const Eigen::Ref<const Eigen::VectorXd>& b);

/// Two-way repeated-measures ANOVA. data[s] is the methods x algorithms
/// matrix measured on fold (subject) s; the design must be complete.
/// Returns effects "method", "algorithm" and "method_x_algorithm", each
/// F-tested against its own interaction-with-subject error term.
std::vector<AnovaResult> rm_anova_2way(const std::vector<Eigen::MatrixXd>& data);

struct FoldEntry {
  int fold = 0;
  std::string tag;
  std::optional<double> r;  // absent when the correlation was undefined
};

struct TagSummary {
  std::string tag;
  int n = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample SD (n-1 denominator); 0 for singletons
  bool singleton = false;
};

struct EvalReport {
  std::vector<FoldEntry> per_fold;
  std::vector<TagSummary> summary;
  nlohmann::json tests = nlohmann::json::array();

  /// CSV body `fold,tag,r` with header; missing r serialized as empty field.
  std::string to_csv() const;
  nlohmann::json summary_json() const;
};

/// Mean and sample SD per tag, tags ordered lexicographically.
EvalReport summarize(std::vector<FoldEntry> per_fold);

}  // namespace metareg
