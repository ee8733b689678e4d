#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace metareg {

/// One participant: ROI time series plus phenotypes and the severity target.
struct Subject {
  std::string id;
  std::string site;
  Eigen::MatrixXd series;  // time x rois
  double age = 0.0;
  std::optional<double> fiq;  // absent when not recorded
  int score = 0;              // integer severity in [0, 8]
};

struct Dataset {
  std::vector<Subject> subjects;
  int rois = 0;

  const Subject& subject(const std::string& id) const;
  std::vector<std::string> ids() const;
};

/// Subject-level split. The three id lists are pairwise disjoint and cover
/// the dataset.
struct Split {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
};

/// One augmented window of a subject's series.
struct Sample {
  std::string subject_id;
  int window_index = 0;
  Eigen::MatrixXd series;  // window_length x rois
  double label = 0.0;      // threshold label or raw score, set downstream
};

/// Numeric comma-separated matrix, rows = time points, no header.
Eigen::MatrixXd load_series_csv(const std::filesystem::path& path);

/// Loads phenotypes.csv (header id,site,age,fiq,score; empty fiq allowed)
/// plus one series CSV per subject id from series_dir.
Dataset load_dataset(const std::filesystem::path& phenotype_file,
                     const std::filesystem::path& series_dir);

/// Convenience: dir/phenotypes.csv + dir/series/<id>.csv.
Dataset load_dataset_dir(const std::filesystem::path& dir);

/// Writes the same on-disk layout load_dataset_dir ingests. Deterministic:
/// rewriting the same dataset produces byte-identical files.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Seeded subject-level k-fold split. Test buckets partition the ids with
/// sizes differing by at most one; each fold's validation ids are drawn from
/// the non-test remainder at val_fraction of the whole dataset (rounded).
/// Pure function of (dataset ids, k, val_fraction, seed).
std::vector<Split> kfold_split(const Dataset& dataset, int k, double val_fraction,
                               std::uint64_t seed);

/// Sliding windows of `length` rows every `stride` rows. Window i covers
/// rows [i*stride, i*stride + length). Throws if the series is shorter than
/// one window.
std::vector<Eigen::MatrixXd> window(const Eigen::Ref<const Eigen::MatrixXd>& series,
                                    int length, int stride);

/// Windows every listed subject of
/// the dataset; sample labels carry the subject's raw score.
std::vector<Sample> make_samples(const Dataset& dataset,
                                 const std::vector<std::string>& subject_ids,
                                 int length, int stride);

/// Per-subject arithmetic mean of sample predictions.
std::map<std::string, double> aggregate_by_subject(
    const std::vector<std::pair<std::string, double>>& predictions);

}  // namespace metareg
