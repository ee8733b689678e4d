#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "metareg/dataset.hpp"

namespace metareg {

/// Generator settings for synthetic multi-subject ROI time series whose
/// connectivity at selected ROI pairs scales monotonically with the severity
/// score.
struct SynthConfig {
  int n_subjects = 120;
  int rois = 20;
  int time_points = 200;
  /// P(score = s) for s in 0..8. Defaults to a triangular shape peaked at 2
  /// with score 8 rare.
  std::array<double, 9> score_distribution = default_score_distribution();
  std::vector<std::pair<int, int>> signal_pairs = {{0, 1}, {2, 3}, {4, 5}, {6, 7}};
  double signal_strength = 0.8;  // in [0, 1]
  double noise_sd = 1.0;
  double phenotype_effect = 0.0;  // linear score dependence of age and FIQ
  std::uint64_t seed = 0;

  static std::array<double, 9> default_score_distribution();
  void validate() const;
};

/// Draws subjects deterministically from the seed. Each signal pair shares a
/// latent component mixed with coefficient signal_strength * score / 8, so
/// the pair correlation grows with the score; remaining variance is
/// independent Gaussian noise.
Dataset generate(const SynthConfig& config);

struct SiteSummary {
  std::string site;
  int n = 0;
  int time_points = 0;  // per-subject series length (uniform within a site)
  double age_mean = 0.0;
  double age_sd = 0.0;
  double fiq_mean = 0.0;  // NaN when no subject at the site has FIQ
  double fiq_sd = 0.0;
};

struct DatasetDescription {
  std::vector<SiteSummary> sites;       // ordered by site label
  std::array<int, 9> score_histogram{};  // counts per score 0..8

  /// Fixed column set: site,n,time_points,age_mean,age_sd,fiq_mean,fiq_sd.
  std::string to_table() const;
};

DatasetDescription describe(const Dataset& dataset);

}  // namespace metareg
