#include <doctest.h>

#include <cmath>

#include "metareg/stats.hpp"
#include "metareg/util.hpp"

using namespace metareg;

TEST_CASE("t_cdf closed forms") {
  CHECK(t_cdf(0.0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(t_cdf(0.0, 37) == doctest::Approx(0.5).epsilon(1e-12));
  // df=1 is Cauchy: 0.5 + atan(x)/pi.
  CHECK(t_cdf(1.0, 1) == doctest::Approx(0.75).epsilon(1e-10));
  CHECK(t_cdf(-2.5, 1) == doctest::Approx(0.5 + std::atan(-2.5) / M_PI).epsilon(1e-10));
  // df=2: 0.5 + x / (2 sqrt(2 + x^2)).
  for (double x : {-3.0, -0.7, 0.4, 1.5, 6.0}) {
    CHECK(t_cdf(x, 2) == doctest::Approx(0.5 + x / (2.0 * std::sqrt(2.0 + x * x)))
                             .epsilon(1e-10));
  }
  // Spot values cross-checked against an independent implementation.
  CHECK(t_cdf(2.5, 110) == doctest::Approx(0.9930525733535995).epsilon(1e-9));
  CHECK(t_cdf(-3.2, 17) == doctest::Approx(0.0026237783593853).epsilon(1e-9));
}

TEST_CASE("t_cdf symmetry") {
  for (int df : {1, 2, 5, 30, 110, 1000}) {
    for (double x : {0.0, 0.3, 1.7, 4.2}) {
      CHECK(t_cdf(x, df) + t_cdf(-x, df) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("f_cdf values") {
  for (int d : {1, 2, 7, 40}) CHECK(f_cdf(1.0, d, d) == doctest::Approx(0.5).epsilon(1e-10));
  CHECK(f_cdf(2.5, 4, 7) == doctest::Approx(0.8629666302475232).epsilon(1e-9));
  CHECK(f_cdf(0.0, 3, 5) == 0.0);
  CHECK(f_cdf(-1.0, 3, 5) == 0.0);
  // F(1, df) at t^2 matches the two-sided t probability.
  for (int df : {2, 9, 110}) {
    for (double t : {0.5, 1.3, 2.8}) {
      CHECK(f_cdf(t * t, 1, df) ==
            doctest::Approx(2.0 * t_cdf(t, df) - 1.0).epsilon(1e-9));
    }
  }
  CHECK_THROWS_AS(f_cdf(1.0, 0, 3), DataError);
  CHECK_THROWS_AS(t_cdf(1.0, 0), DataError);
}

TEST_CASE("pearson basics") {
  Eigen::VectorXd x(4), y(4);
  x << 1, 2, 3, 4;
  y << 1, 3, 2, 4;
  CHECK(pearson(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pearson(x, y) == doctest::Approx(0.8).epsilon(1e-12));
  Eigen::VectorXd a(3), b(3);
  a << 1, 2, 3;
  b << 3, 2, 1;
  CHECK(pearson(a, b) == doctest::Approx(-1.0).epsilon(1e-12));
  Eigen::VectorXd c = Eigen::VectorXd::Constant(3, 2.0);
  CHECK_THROWS_AS(pearson(a, c), DataError);
  Eigen::VectorXd short_v(2);
  short_v << 1, 2;
  CHECK_THROWS_AS(pearson(short_v, short_v), DataError);
}

TEST_CASE("pearson affine invariance and sign flip") {
  Rng rng(7);
  Eigen::VectorXd x(20), y(20);
  for (int i = 0; i < 20; ++i) {
    x(i) = rng.normal();
    y(i) = 0.5 * x(i) + rng.normal();
  }
  const double base = pearson(x, y);
  CHECK(pearson((3.0 * x.array() + 11.0).matrix(), y) == doctest::Approx(base).epsilon(1e-10));
  CHECK(pearson(x, (0.2 * y.array() - 4.0).matrix()) == doctest::Approx(base).epsilon(1e-10));
  CHECK(pearson((-x.array()).matrix(), y) == doctest::Approx(-base).epsilon(1e-12));
}

TEST_CASE("corr_significance reproduces the reported generalization p-values") {
  // df = n - 2 = 110.
  const CorrelationResult strong = corr_significance(0.2322, 112);
  CHECK(strong.df == 110);
  CHECK(strong.t_stat == doctest::Approx(2.503767).epsilon(1e-5));
  CHECK(strong.p_two_tailed == doctest::Approx(0.013756).epsilon(1e-4));
  CHECK(strong.p_two_tailed > 0.012);
  CHECK(strong.p_two_tailed < 0.016);

  const CorrelationResult weak = corr_significance(0.1068, 112);
  CHECK(weak.p_two_tailed == doctest::Approx(0.262375).epsilon(1e-4));
  CHECK(weak.p_two_tailed > 0.25);
  CHECK(weak.p_two_tailed < 0.29);

  const CorrelationResult zero = corr_significance(0.0, 20);
  CHECK(zero.t_stat == 0.0);
  CHECK(zero.p_two_tailed == doctest::Approx(1.0).epsilon(1e-12));

  const CorrelationResult perfect = corr_significance(1.0, 10);
  CHECK(perfect.p_two_tailed == 0.0);
  CHECK(std::isinf(perfect.t_stat));
}

TEST_CASE("corr_significance p decreases as |r| grows") {
  double last = 1.1;
  for (double r = 0.0; r < 0.95; r += 0.05) {
    const double p = corr_significance(r, 30).p_two_tailed;
    CHECK(p < last + 1e-15);
    if (r > 0) CHECK(p < last);
    last = p;
  }
}

TEST_CASE("paired t-test") {
  Eigen::VectorXd a(3), b(3);
  a << 1, 2, 3;
  b << 0, 0, 0;
  const TTestResult r = paired_ttest(a, b);
  CHECK(r.t == doctest::Approx(3.4641016151).epsilon(1e-9));
  CHECK(r.p == doctest::Approx(0.0741799002).epsilon(1e-8));
  CHECK(r.df == 2);
  CHECK_FALSE(r.degenerate);

  const TTestResult same = paired_ttest(a, a);
  CHECK(same.t == 0.0);
  CHECK(same.p == 1.0);
  CHECK(same.degenerate);

  // Constant nonzero shift: zero-variance differences, convention values.
  const TTestResult shift = paired_ttest((a.array() + 2.0).matrix(), a);
  CHECK(shift.degenerate);
  CHECK(shift.p == 0.0);
  CHECK(std::isinf(shift.t));

  const TTestResult swapped = paired_ttest(b, a);
  CHECK(swapped.t == doctest::Approx(-r.t).epsilon(1e-12));
  CHECK(swapped.p == doctest::Approx(r.p).epsilon(1e-12));
}

namespace {

// Independent brute-force decomposition straight from the textbook cell-mean
// formulas; deliberately written with plain loops.
struct OracleAnova {
  double f_method, f_alg, f_inter;
  double ss_total, ss_parts;
};

OracleAnova oracle_rm_anova(const std::vector<Eigen::MatrixXd>& data) {
  const int s = static_cast<int>(data.size());
  const int m = static_cast<int>(data[0].rows());
  const int a = static_cast<int>(data[0].cols());
  double grand = 0.0;
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < a; ++k) grand += data[i](j, k);
  grand /= s * m * a;

  auto mean_s = [&](int i) { return data[i].sum() / (m * a); };
  auto mean_m = [&](int j) {
    double t = 0;
    for (int i = 0; i < s; ++i)
      for (int k = 0; k < a; ++k) t += data[i](j, k);
    return t / (s * a);
  };
  auto mean_a = [&](int k) {
    double t = 0;
    for (int i = 0; i < s; ++i)
      for (int j = 0; j < m; ++j) t += data[i](j, k);
    return t / (s * m);
  };
  auto mean_sm = [&](int i, int j) { return data[i].row(j).sum() / a; };
  auto mean_sa = [&](int i, int k) { return data[i].col(k).sum() / m; };
  auto mean_ma = [&](int j, int k) {
    double t = 0;
    for (int i = 0; i < s; ++i) t += data[i](j, k);
    return t / s;
  };

  double ss_subj = 0, ss_m = 0, ss_a = 0, ss_ms = 0, ss_as = 0, ss_ma = 0, ss_tot = 0;
  for (int i = 0; i < s; ++i) ss_subj += (mean_s(i) - grand) * (mean_s(i) - grand);
  ss_subj *= m * a;
  for (int j = 0; j < m; ++j) ss_m += (mean_m(j) - grand) * (mean_m(j) - grand);
  ss_m *= s * a;
  for (int k = 0; k < a; ++k) ss_a += (mean_a(k) - grand) * (mean_a(k) - grand);
  ss_a *= s * m;
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < m; ++j) {
      const double d = mean_sm(i, j) - mean_s(i) - mean_m(j) + grand;
      ss_ms += d * d;
    }
  ss_ms *= a;
  for (int i = 0; i < s; ++i)
    for (int k = 0; k < a; ++k) {
      const double d = mean_sa(i, k) - mean_s(i) - mean_a(k) + grand;
      ss_as += d * d;
    }
  ss_as *= m;
  for (int j = 0; j < m; ++j)
    for (int k = 0; k < a; ++k) {
      const double d = mean_ma(j, k) - mean_m(j) - mean_a(k) + grand;
      ss_ma += d * d;
    }
  ss_ma *= s;
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < a; ++k) {
        const double d = data[i](j, k) - grand;
        ss_tot += d * d;
      }
  const double ss_mas = ss_tot - ss_subj - ss_m - ss_a - ss_ms - ss_as - ss_ma;

  OracleAnova o{};
  o.f_method = (ss_m / (m - 1)) / (ss_ms / ((m - 1) * (s - 1)));
  o.f_alg = (ss_a / (a - 1)) / (ss_as / ((a - 1) * (s - 1)));
  o.f_inter = (ss_ma / ((m - 1) * (a - 1))) / (ss_mas / ((m - 1) * (a - 1) * (s - 1)));
  o.ss_total = ss_tot;
  o.ss_parts = ss_subj + ss_m + ss_a + ss_ms + ss_as + ss_ma + ss_mas;
  return o;
}

std::vector<Eigen::MatrixXd> random_tensor(int s, int m, int a, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Eigen::MatrixXd> data;
  for (int i = 0; i < s; ++i) {
    Eigen::MatrixXd cell(m, a);
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < a; ++k) cell(j, k) = rng.normal();
    data.push_back(cell);
  }
  return data;
}

}  // namespace

TEST_CASE("rm_anova_2way matches the brute-force oracle on a random 4x2x3 tensor") {
  const auto data = random_tensor(4, 2, 3, 2024);
  const auto results = rm_anova_2way(data);
  const auto oracle = oracle_rm_anova(data);
  REQUIRE(results.size() == 3);
  CHECK(results[0].effect_name == "method");
  CHECK(results[0].F == doctest::Approx(oracle.f_method).epsilon(1e-9));
  CHECK(results[0].df_num == 1);
  CHECK(results[0].df_den == 3);
  CHECK(results[1].effect_name == "algorithm");
  CHECK(results[1].F == doctest::Approx(oracle.f_alg).epsilon(1e-9));
  CHECK(results[1].df_num == 2);
  CHECK(results[1].df_den == 6);
  CHECK(results[2].F == doctest::Approx(oracle.f_inter).epsilon(1e-9));
  CHECK(oracle.ss_total == doctest::Approx(oracle.ss_parts).epsilon(1e-9));
  for (const auto& r : results) {
    CHECK(r.F >= 0.0);
    CHECK(r.p == doctest::Approx(1.0 - f_cdf(r.F, r.df_num, r.df_den)).epsilon(1e-12));
  }
}

TEST_CASE("rm_anova_2way with the study design gives method df (1,7)") {
  const auto data = random_tensor(8, 2, 5, 99);
  const auto results = rm_anova_2way(data);
  CHECK(results[0].df_num == 1);
  CHECK(results[0].df_den == 7);
  CHECK(results[1].df_num == 4);
  CHECK(results[1].df_den == 28);
}

TEST_CASE("rm_anova_2way on identical methods reports no method effect") {
  auto data = random_tensor(5, 2, 3, 5);
  for (auto& cell : data) cell.row(1) = cell.row(0);
  const auto results = rm_anova_2way(data);
  CHECK(results[0].F == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(results[0].p == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("rm_anova_2way rejects bad designs") {
  CHECK_THROWS_AS(rm_anova_2way({}), DataError);
  CHECK_THROWS_AS(rm_anova_2way(random_tensor(1, 2, 3, 0)), DataError);
  auto ragged = random_tensor(3, 2, 3, 1);
  ragged[1] = Eigen::MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(rm_anova_2way(ragged), DataError);
}

TEST_CASE("summarize") {
  auto report = summarize({{0, "b", 0.2}, {1, "b", 0.4}, {0, "a", 0.7}});
  REQUIRE(report.summary.size() == 2);
  CHECK(report.summary[0].tag == "a");  // lexicographic
  CHECK(report.summary[0].singleton);
  CHECK(report.summary[0].sd == 0.0);
  CHECK(report.summary[1].tag == "b");
  CHECK(report.summary[1].mean == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(report.summary[1].sd == doctest::Approx(0.1414213562).epsilon(1e-8));
  CHECK_FALSE(report.summary[1].singleton);

  const std::string csv = report.to_csv();
  CHECK(csv.rfind("fold,tag,r\n", 0) == 0);

  auto with_missing = summarize({{0, "x", std::nullopt}, {1, "x", 0.5}});
  CHECK(with_missing.summary[0].n == 1);
  CHECK(with_missing.per_fold[0].r == std::nullopt);
  CHECK(with_missing.to_csv().find("0,x,\n") != std::string::npos);
}

TEST_CASE("incomplete beta stays accurate at large df") {
  // Large-df t should approach the normal distribution.
  CHECK(t_cdf(1.96, 1000) == doctest::Approx(0.9749696).epsilon(1e-4));
  CHECK(regularized_incomplete_beta(0.5, 0.5, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
}
