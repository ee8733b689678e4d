#include "metareg/features.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "metareg/util.hpp"

namespace metareg {

Eigen::VectorXd znorm(const Eigen::Ref<const Eigen::VectorXd>& values, double mean,
                      double sd) {
  if (sd < 0.0) throw DataError("znorm: negative sd");
  if (sd == 0.0) return Eigen::VectorXd::Zero(values.size());
  return (values.array() - mean) / sd;
}

Eigen::MatrixXd connectivity(const Eigen::Ref<const Eigen::MatrixXd>& series) {
  const Eigen::Index t = series.rows();
  const Eigen::Index r = series.cols();
  if (t < 3) throw DataError("connectivity: need at least 3 time points");

  Eigen::MatrixXd centered = series.rowwise() - series.colwise().mean();
  Eigen::VectorXd norms(r);
  std::vector<bool> flat(static_cast<std::size_t>(r), false);
  for (Eigen::Index j = 0; j < r; ++j) {
    norms(j) = centered.col(j).norm();
    // Exactly constant columns, or numerically dead ones, count as flat.
    if (series.col(j).maxCoeff() == series.col(j).minCoeff() || norms(j) < 1e-15)
      flat[static_cast<std::size_t>(j)] = true;
  }

  Eigen::MatrixXd corr = Eigen::MatrixXd::Identity(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = i + 1; j < r; ++j) {
      double value = 0.0;
      if (!flat[static_cast<std::size_t>(i)] && !flat[static_cast<std::size_t>(j)]) {
        value = centered.col(i).dot(centered.col(j)) / (norms(i) * norms(j));
        value = std::clamp(value, -1.0, 1.0);
      }
      corr(i, j) = value;
      corr(j, i) = value;
    }
  }
  return corr;
}

Eigen::VectorXd upper_triangle(const Eigen::Ref<const Eigen::MatrixXd>& mat) {
  const Eigen::Index r = mat.rows();
  if (r != mat.cols()) throw DataError("upper_triangle: matrix must be square");
  Eigen::VectorXd out(r * (r - 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = i + 1; j < r; ++j) out(k++) = mat(i, j);
  return out;
}

Eigen::MatrixXd attach_phenotypes(const Eigen::Ref<const Eigen::MatrixXd>& series,
                                  const Eigen::Ref<const Eigen::VectorXd>& phenotypes) {
  const Eigen::Index t = series.rows();
  const Eigen::Index r = series.cols();
  const Eigen::Index p = phenotypes.size();
  Eigen::MatrixXd out(t, r + p);
  out.leftCols(r) = series;
  for (Eigen::Index j = 0; j < p; ++j) out.col(r + j).setConstant(phenotypes(j));
  return out;
}

PhenoScaler PhenoScaler::fit(const Dataset& dataset,
                             const std::vector<std::string>& train_ids) {
  if (train_ids.empty()) throw DataError("PhenoScaler: empty training id list");
  std::vector<double> ages;
  std::vector<double> fiqs;
  for (const auto& id : train_ids) {
    const Subject& s = dataset.subject(id);
    ages.push_back(s.age);
    if (s.fiq) fiqs.push_back(*s.fiq);
  }
  auto mean_sd = [](const std::vector<double>& v) -> std::pair<double, double> {
    if (v.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
  };
  PhenoScaler scaler;
  std::tie(scaler.age_mean, scaler.age_sd) = mean_sd(ages);
  std::tie(scaler.fiq_mean, scaler.fiq_sd) = mean_sd(fiqs);
  return scaler;
}

Eigen::Vector2d PhenoScaler::transform(double age, std::optional<double> fiq) const {
  Eigen::Vector2d z = Eigen::Vector2d::Zero();
  if (age_sd > 0.0) z(0) = (age - age_mean) / age_sd;
  if (fiq && fiq_sd > 0.0) z(1) = (*fiq - fiq_mean) / fiq_sd;
  return z;
}

void save_feature_cache(const std::filesystem::path& path,
                        const std::vector<FeatureVector>& features) {
  if (features.empty()) throw DataError("save_feature_cache: nothing to save");
  const Eigen::Index dim = features.front().values.size();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write feature cache: " + path.string());
  out << "subject_id,window_index";
  for (Eigen::Index j = 0; j < dim; ++j) out << ",f_" << j;
  out << '\n';
  for (const auto& f : features) {
    if (f.values.size() != dim) throw DataError("save_feature_cache: ragged feature dims");
    out << f.subject_id << ',' << f.window_index;
    for (Eigen::Index j = 0; j < dim; ++j) out << ',' << format_double(f.values(j));
    out << '\n';
  }
}

std::vector<FeatureVector> load_feature_cache(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature cache: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty feature cache");
  std::vector<FeatureVector> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    FeatureVector f;
    std::getline(ss, f.subject_id, ',');
    std::getline(ss, field, ',');
    f.window_index = std::stoi(field);
    std::vector<double> vals;
    while (std::getline(ss, field, ',')) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size())
        throw DataError("feature cache: bad number '" + field + "'");
      vals.push_back(v);
    }
    f.values = Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace metareg
