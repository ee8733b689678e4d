#include "metareg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "metareg/util.hpp"

namespace metareg {

// Modified Lentz evaluation of the continued fraction for I_x(a,b).
static double beta_cont_frac(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double tol = 1e-12;
  constexpr int max_iter = 300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < tol) break;
  }
  return h;
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw DataError("incomplete beta: a, b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  // Symmetry switch keeps the continued fraction in its fast-converging region.
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * beta_cont_frac(a, b, x) / a;
  }
  return 1.0 - front * beta_cont_frac(b, a, 1.0 - x) / b;
}

double t_cdf(double x, int df) {
  if (df < 1) throw DataError("t_cdf: df must be >= 1");
  if (!std::isfinite(x)) return x > 0 ? 1.0 : 0.0;
  const double v = static_cast<double>(df);
  const double ib = regularized_incomplete_beta(v / 2.0, 0.5, v / (v + x * x));
  return x >= 0.0 ? 1.0 - 0.5 * ib : 0.5 * ib;
}

double f_cdf(double x, int d1, int d2) {
  if (d1 < 1 || d2 < 1) throw DataError("f_cdf: degrees of freedom must be >= 1");
  if (!std::isfinite(x)) return x > 0 ? 1.0 : 0.0;
  if (x <= 0.0) return 0.0;
  const double a = static_cast<double>(d1);
  const double b = static_cast<double>(d2);
  return regularized_incomplete_beta(a / 2.0, b / 2.0, a * x / (a * x + b));
}

double pearson(const Eigen::Ref<const Eigen::VectorXd>& x,
               const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (x.size() != y.size()) throw DataError("pearson: length mismatch");
  if (x.size() < 3) throw DataError("pearson: need at least 3 observations");
  const Eigen::VectorXd cx = x.array() - x.mean();
  const Eigen::VectorXd cy = y.array() - y.mean();
  const double nx = cx.norm();
  const double ny = cy.norm();
  if (nx == 0.0 || ny == 0.0) throw DataError("pearson: zero variance");
  const double r = cx.dot(cy) / (nx * ny);
  return std::clamp(r, -1.0, 1.0);
}

CorrelationResult corr_significance(double r, int n) {
  if (n < 4) throw DataError("corr_significance: need n >= 4");
  if (std::fabs(r) > 1.0) throw DataError("corr_significance: |r| > 1");
  CorrelationResult res;
  res.r = r;
  res.n = n;
  res.df = n - 2;
  if (std::fabs(r) == 1.0) {
    res.t_stat = std::numeric_limits<double>::infinity() * (r > 0 ? 1.0 : -1.0);
    res.p_two_tailed = 0.0;
    return res;
  }
  res.t_stat = r * std::sqrt(static_cast<double>(res.df) / (1.0 - r * r));
  res.p_two_tailed = 2.0 * (1.0 - t_cdf(std::fabs(res.t_stat), res.df));
  return res;
}

TTestResult paired_ttest(const Eigen::Ref<const Eigen::VectorXd>& a,
                         const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) throw DataError("paired_ttest: length mismatch");
  const Eigen::Index n = a.size();
  if (n < 2) throw DataError("paired_ttest: need at least 2 pairs");
  const Eigen::VectorXd d = a - b;
  const double mean = d.mean();
  const double ss = (d.array() - mean).square().sum();
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  TTestResult res;
  res.df = static_cast<int>(n - 1);
  if (sd == 0.0) {
    res.degenerate = true;
    if (mean == 0.0) {
      res.t = 0.0;
      res.p = 1.0;
    } else {
      res.t = std::numeric_limits<double>::infinity() * (mean > 0 ? 1.0 : -1.0);
      res.p = 0.0;
    }
    return res;
  }
  res.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  res.p = 2.0 * (1.0 - t_cdf(std::fabs(res.t), res.df));
  return res;
}

std::vector<AnovaResult> rm_anova_2way(const std::vector<Eigen::MatrixXd>& data) {
  const int s = static_cast<int>(data.size());
  if (s < 2) throw DataError("rm_anova_2way: need at least 2 folds");
  const Eigen::Index m = data[0].rows();
  const Eigen::Index a = data[0].cols();
  if (m < 2 || a < 2) throw DataError("rm_anova_2way: need at least 2 levels per factor");
  for (const auto& cell : data) {
    if (cell.rows() != m || cell.cols() != a)
      throw DataError("rm_anova_2way: incomplete design (cell shape mismatch)");
    if (!cell.allFinite()) throw DataError("rm_anova_2way: non-finite cell");
  }

  const double nm = static_cast<double>(m);
  const double na = static_cast<double>(a);
  const double ns = static_cast<double>(s);

  double grand = 0.0;
  for (const auto& cell : data) grand += cell.sum();
  grand /= (ns * nm * na);

  Eigen::VectorXd mean_s(s);
  for (int i = 0; i < s; ++i) mean_s(i) = data[i].mean();
  Eigen::VectorXd mean_m = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd mean_a = Eigen::VectorXd::Zero(a);
  Eigen::MatrixXd mean_ma = Eigen::MatrixXd::Zero(m, a);
  Eigen::MatrixXd mean_sm = Eigen::MatrixXd::Zero(s, m);
  Eigen::MatrixXd mean_sa = Eigen::MatrixXd::Zero(s, a);
  for (int i = 0; i < s; ++i) {
    mean_ma += data[i];
    mean_sm.row(i) = data[i].rowwise().mean().transpose();
    mean_sa.row(i) = data[i].colwise().mean();
  }
  mean_ma /= ns;
  mean_m = mean_ma.rowwise().mean();
  mean_a = mean_ma.colwise().mean().transpose();

  double ss_total = 0.0;
  for (const auto& cell : data) ss_total += (cell.array() - grand).square().sum();

  const double ss_subject = nm * na * (mean_s.array() - grand).square().sum();
  const double ss_method = ns * na * (mean_m.array() - grand).square().sum();
  const double ss_alg = ns * nm * (mean_a.array() - grand).square().sum();

  double ss_ms = 0.0;  // method x subject
  for (int i = 0; i < s; ++i)
    for (Eigen::Index j = 0; j < m; ++j) {
      const double dev = mean_sm(i, j) - mean_s(i) - mean_m(j) + grand;
      ss_ms += dev * dev;
    }
  ss_ms *= na;

  double ss_as = 0.0;  // algorithm x subject
  for (int i = 0; i < s; ++i)
    for (Eigen::Index j = 0; j < a; ++j) {
      const double dev = mean_sa(i, j) - mean_s(i) - mean_a(j) + grand;
      ss_as += dev * dev;
    }
  ss_as *= nm;

  double ss_ma = 0.0;  // method x algorithm
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index l = 0; l < a; ++l) {
      const double dev = mean_ma(j, l) - mean_m(j) - mean_a(l) + grand;
      ss_ma += dev * dev;
    }
  ss_ma *= ns;

  double ss_mas = ss_total - ss_subject - ss_method - ss_alg - ss_ms - ss_as - ss_ma;
  ss_mas = std::max(ss_mas, 0.0);

  auto make = [](const std::string& name, double ss_num, int df_num, double ss_den,
                 int df_den) {
    AnovaResult r;
    r.effect_name = name;
    r.df_num = df_num;
    r.df_den = df_den;
    const double ms_num = ss_num / df_num;
    const double ms_den = ss_den / df_den;
    r.F = ms_den > 0.0 ? std::max(ms_num / ms_den, 0.0) : 0.0;
    r.p = 1.0 - f_cdf(r.F, df_num, df_den);
    return r;
  };

  const int im = static_cast<int>(m), ia = static_cast<int>(a), is = s;
  std::vector<AnovaResult> out;
  out.push_back(make("method", ss_method, im - 1, ss_ms, (im - 1) * (is - 1)));
  out.push_back(make("algorithm", ss_alg, ia - 1, ss_as, (ia - 1) * (is - 1)));
  out.push_back(make("method_x_algorithm", ss_ma, (im - 1) * (ia - 1), ss_mas,
                     (im - 1) * (ia - 1) * (is - 1)));
  return out;
}

EvalReport summarize(std::vector<FoldEntry> per_fold) {
  if (per_fold.empty()) throw DataError("summarize: empty input");
  EvalReport report;
  report.per_fold = std::move(per_fold);
  std::map<std::string, std::vector<double>> by_tag;
  for (const auto& entry : report.per_fold) {
    auto& bucket = by_tag[entry.tag];  // tag present even if all r missing
    if (entry.r) bucket.push_back(*entry.r);
  }
  for (const auto& [tag, values] : by_tag) {
    TagSummary s;
    s.tag = tag;
    s.n = static_cast<int>(values.size());
    if (values.empty()) {
      s.mean = std::numeric_limits<double>::quiet_NaN();
      s.sd = std::numeric_limits<double>::quiet_NaN();
      s.singleton = true;
    } else {
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= values.size();
      s.mean = mean;
      if (values.size() == 1) {
        s.sd = 0.0;
        s.singleton = true;
      } else {
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        s.sd = std::sqrt(ss / (values.size() - 1));
      }
    }
    report.summary.push_back(std::move(s));
  }
  return report;
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "fold,tag,r\n";
  for (const auto& e : per_fold) {
    out << e.fold << ',' << e.tag << ',';
    if (e.r) out << format_double(*e.r);
    out << '\n';
  }
  return out.str();
}

nlohmann::json EvalReport::summary_json() const {
  nlohmann::json tags = nlohmann::json::object();
  for (const auto& s : summary) {
    tags[s.tag] = {{"mean", s.mean}, {"sd", s.sd}, {"n", s.n}, {"singleton", s.singleton}};
  }
  return {{"summary", tags}, {"tests", tests}};
}

}  // namespace metareg
