#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "metareg/dataset.hpp"

namespace metareg {

/// Vectorized functional-connectivity features of one window, length R(R-1)/2.
struct FeatureVector {
  std::string subject_id;
  int window_index = 0;
  Eigen::VectorXd values;
};

/// Time series of one window with replicated phenotype channels appended.
struct SequenceInput {
  std::string subject_id;
  int window_index = 0;
  Eigen::MatrixXd values;  // window_length x (rois + phenotype channels)
};

/// (x - mean) / sd elementwise; all zeros when sd == 0.
Eigen::VectorXd znorm(const Eigen::Ref<const Eigen::VectorXd>& values, double mean,
                      double sd);

/// Pearson correlation matrix between ROI columns. Zero-variance columns get
/// zero correlations (diagonal stays 1). Requires at least 3 time points.
Eigen::MatrixXd connectivity(const Eigen::Ref<const Eigen::MatrixXd>& series);

/// Strictly-upper-triangular entries in row-major order; length R(R-1)/2.
Eigen::VectorXd upper_triangle(const Eigen::Ref<const Eigen::MatrixXd>& mat);

/// Appends one constant column per phenotype value after the ROI columns.
Eigen::MatrixXd attach_phenotypes(const Eigen::Ref<const Eigen::MatrixXd>& series,
                                  const Eigen::Ref<const Eigen::VectorXd>& phenotypes);

/// Phenotype z-normalization statistics, fitted on training subjects only and
/// frozen for validation/test/generalization data. Missing FIQ maps to z = 0.
struct PhenoScaler {
  double age_mean = 0.0;
  double age_sd = 0.0;
  double fiq_mean = 0.0;
  double fiq_sd = 0.0;

  static PhenoScaler fit(const Dataset& dataset, const std::vector<std::string>& train_ids);

  /// [z_age, z_fiq]; population-sd convention, sd == 0 gives 0.
  Eigen::Vector2d transform(double age, std::optional<double> fiq) const;
};

void save_feature_cache(const std::filesystem::path& path,
                        const std::vector<FeatureVector>& features);
std::vector<FeatureVector> load_feature_cache(const std::filesystem::path& path);

}  // namespace metareg
