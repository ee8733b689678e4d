#include "metareg/synth.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "metareg/util.hpp"

namespace metareg {

std::array<double, 9> SynthConfig::default_score_distribution() {
  // Triangular: rises to the peak at score 2, falls linearly to a small but
  // nonzero mass at 8.
  std::array<double, 9> w = {1.0, 2.0, 3.0, 2.55, 2.1, 1.65, 1.2, 0.75, 0.3};
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  return w;
}

void SynthConfig::validate() const {
  if (n_subjects < 1) throw ConfigError("synth: n_subjects must be positive");
  if (rois < 2) throw ConfigError("synth: need at least 2 ROIs");
  if (time_points < 3) throw ConfigError("synth: need at least 3 time points");
  if (!(noise_sd > 0.0)) throw ConfigError("synth: noise_sd must be positive");
  if (signal_strength < 0.0 || signal_strength > 1.0)
    throw ConfigError("synth: signal_strength must be in [0,1]");
  double total = 0.0;
  for (double p : score_distribution) {
    if (p < 0.0) throw ConfigError("synth: negative score probability");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-9)
    throw ConfigError("synth: score_distribution must sum to 1");
  for (const auto& [a, b] : signal_pairs) {
    if (a == b) throw ConfigError("synth: signal pair with identical indices");
    if (a < 0 || b < 0 || a >= rois || b >= rois)
      throw ConfigError("synth: signal pair index out of range");
  }
}

namespace {

int draw_score(const std::array<double, 9>& dist, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (int s = 0; s < 9; ++s) {
    acc += dist[static_cast<std::size_t>(s)];
    if (u < acc) return s;
  }
  return 8;
}

std::string subject_name(int index) {
  std::ostringstream out;
  out << "sub" << std::setfill('0') << std::setw(3) << index;
  return out.str();
}

}  // namespace

Dataset generate(const SynthConfig& config) {
  config.validate();
  Dataset ds;
  ds.rois = config.rois;
  ds.subjects.reserve(static_cast<std::size_t>(config.n_subjects));

  for (int i = 0; i < config.n_subjects; ++i) {
    Rng rng(derive_seed(config.seed, "subject_" + std::to_string(i)));
    Subject subject;
    subject.id = subject_name(i);
    subject.site = "s" + std::to_string(i % 3);
    subject.score = draw_score(config.score_distribution, rng);
    subject.age = 18.0 + 5.0 * rng.normal() + config.phenotype_effect * subject.score;
    subject.fiq = 105.0 + 15.0 * rng.normal() + config.phenotype_effect * subject.score;

    // Mixing coefficient of the shared latent component; the noise term is
    // shrunk so a signal channel keeps unit variance at noise_sd = 1.
    const double alpha = config.signal_strength * static_cast<double>(subject.score) / 8.0;
    const double shrink = std::sqrt(std::max(0.0, 1.0 - alpha * alpha));

    const int t = config.time_points;
    Eigen::MatrixXd series(t, config.rois);
    for (int row = 0; row < t; ++row)
      for (int col = 0; col < config.rois; ++col)
        series(row, col) = config.noise_sd * rng.normal();
    for (const auto& [a, b] : config.signal_pairs) {
      Eigen::VectorXd latent(t);
      for (int row = 0; row < t; ++row) latent(row) = rng.normal();
      series.col(a) = alpha * latent + shrink * series.col(a);
      series.col(b) = alpha * latent + shrink * series.col(b);
    }
    subject.series = std::move(series);
    ds.subjects.push_back(std::move(subject));
  }
  return ds;
}

DatasetDescription describe(const Dataset& dataset) {
  if (dataset.subjects.empty()) throw DataError("describe: empty dataset");
  DatasetDescription desc;
  std::map<std::string, std::vector<const Subject*>> by_site;
  for (const auto& s : dataset.subjects) {
    by_site[s.site].push_back(&s);
    desc.score_histogram[static_cast<std::size_t>(s.score)]++;
  }
  for (const auto& [site, members] : by_site) {
    SiteSummary row;
    row.site = site;
    row.n = static_cast<int>(members.size());
    row.time_points = static_cast<int>(members.front()->series.rows());
    double age_sum = 0.0;
    std::vector<double> fiqs;
    for (const auto* s : members) {
      age_sum += s->age;
      if (s->fiq) fiqs.push_back(*s->fiq);
    }
    row.age_mean = age_sum / row.n;
    double age_ss = 0.0;
    for (const auto* s : members) age_ss += (s->age - row.age_mean) * (s->age - row.age_mean);
    row.age_sd = std::sqrt(age_ss / row.n);
    if (fiqs.empty()) {
      row.fiq_mean = std::numeric_limits<double>::quiet_NaN();
      row.fiq_sd = std::numeric_limits<double>::quiet_NaN();
    } else {
      double m = 0.0;
      for (double f : fiqs) m += f;
      m /= static_cast<double>(fiqs.size());
      double ss = 0.0;
      for (double f : fiqs) ss += (f - m) * (f - m);
      row.fiq_mean = m;
      row.fiq_sd = std::sqrt(ss / static_cast<double>(fiqs.size()));
    }
    desc.sites.push_back(std::move(row));
  }
  return desc;
}

std::string DatasetDescription::to_table() const {
  std::ostringstream out;
  out << "site,n,time_points,age_mean,age_sd,fiq_mean,fiq_sd\n";
  auto cell = [](double v) {
    return std::isfinite(v) ? format_double(v) : std::string("-");
  };
  for (const auto& row : sites) {
    out << row.site << ',' << row.n << ',' << row.time_points << ','
        << cell(row.age_mean) << ',' << cell(row.age_sd) << ',' << cell(row.fiq_mean)
        << ',' << cell(row.fiq_sd) << '\n';
  }
  out << "score_histogram";
  for (int count : score_histogram) out << ',' << count;
  out << '\n';
  return out.str();
}

}  // namespace metareg
