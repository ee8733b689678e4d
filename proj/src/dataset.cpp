#include "metareg/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "metareg/util.hpp"

namespace fs = std::filesystem;

namespace metareg {

const Subject& Dataset::subject(const std::string& id) const {
  for (const auto& s : subjects)
    if (s.id == id) return s;
  throw DataError("unknown subject id: " + id);
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  out.reserve(subjects.size());
  for (const auto& s : subjects) out.push_back(s.id);
  return out;
}

static std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

static double parse_double(const std::string& text, const std::string& context) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw DataError(context + ": cannot parse number '" + text + "'");
  if (!std::isfinite(value)) throw DataError(context + ": non-finite value");
  return value;
}

Eigen::MatrixXd load_series_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing series file: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields)
      row.push_back(parse_double(f, path.string() + ":" + std::to_string(line_no)));
    if (!rows.empty() && row.size() != rows.front().size())
      throw DataError(path.string() + ": ragged rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path.string() + ": empty series");
  Eigen::MatrixXd mat(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < mat.rows(); ++i)
    for (Eigen::Index j = 0; j < mat.cols(); ++j)
      mat(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return mat;
}

Dataset load_dataset(const fs::path& phenotype_file, const fs::path& series_dir) {
  std::ifstream in(phenotype_file);
  if (!in) throw DataError("cannot open phenotype file: " + phenotype_file.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty phenotype file");
  {
    auto header = split_csv_line(line);
    const std::vector<std::string> expected = {"id", "site", "age", "fiq", "score"};
    if (header != expected)
      throw DataError("phenotype header must be 'id,site,age,fiq,score'");
  }

  Dataset ds;
  std::set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 5)
      throw DataError(phenotype_file.string() + ":" + std::to_string(line_no) +
                      ": expected 5 fields");
    Subject subject;
    subject.id = fields[0];
    subject.site = fields[1];
    if (subject.id.empty()) throw DataError("empty subject id");
    if (!seen.insert(subject.id).second)
      throw DataError("duplicate subject id: " + subject.id);
    const std::string ctx = phenotype_file.string() + ":" + std::to_string(line_no);
    subject.age = parse_double(fields[2], ctx);
    if (!fields[3].empty()) subject.fiq = parse_double(fields[3], ctx);
    const double score = parse_double(fields[4], ctx);
    if (score != std::floor(score) || score < 0.0 || score > 8.0)
      throw DataError(ctx + ": score out of range [0,8] for subject " + subject.id);
    subject.score = static_cast<int>(score);

    subject.series = load_series_csv(series_dir / (subject.id + ".csv"));
    if (subject.series.cols() < 2)
      throw DataError("subject " + subject.id + ": need at least 2 ROI columns");
    if (ds.subjects.empty()) {
      ds.rois = static_cast<int>(subject.series.cols());
    } else if (subject.series.cols() != ds.rois) {
      throw DataError("ROI count mismatch for subject " + subject.id + ": " +
                      std::to_string(subject.series.cols()) + " vs " +
                      std::to_string(ds.rois));
    }
    ds.subjects.push_back(std::move(subject));
  }
  if (ds.subjects.empty()) throw DataError("phenotype file lists no subjects");
  return ds;
}

Dataset load_dataset_dir(const fs::path& dir) {
  return load_dataset(dir / "phenotypes.csv", dir / "series");
}

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir / "series");
  std::ofstream pheno(dir / "phenotypes.csv", std::ios::trunc);
  if (!pheno) throw DataError("cannot write " + (dir / "phenotypes.csv").string());
  pheno << "id,site,age,fiq,score\n";
  for (const auto& s : dataset.subjects) {
    pheno << s.id << ',' << s.site << ',' << format_double(s.age) << ',';
    if (s.fiq) pheno << format_double(*s.fiq);
    pheno << ',' << s.score << '\n';
  }
  for (const auto& s : dataset.subjects) {
    std::ofstream out(dir / "series" / (s.id + ".csv"), std::ios::trunc);
    if (!out) throw DataError("cannot write series file for " + s.id);
    for (Eigen::Index i = 0; i < s.series.rows(); ++i) {
      for (Eigen::Index j = 0; j < s.series.cols(); ++j) {
        if (j) out << ',';
        out << format_double(s.series(i, j));
      }
      out << '\n';
    }
  }
}

std::vector<Split> kfold_split(const Dataset& dataset, int k, double val_fraction,
                               std::uint64_t seed) {
  const std::size_t n = dataset.subjects.size();
  if (k < 2) throw DataError("kfold_split: k must be >= 2");
  if (static_cast<std::size_t>(k) > n)
    throw DataError("kfold_split: k exceeds subject count");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw DataError("kfold_split: val_fraction must be in (0,1)");

  std::vector<std::string> ids = dataset.ids();
  Rng rng(derive_seed(seed, "kfold_split"));
  rng.shuffle(ids);

  // Deal shuffled ids round-robin into k test buckets.
  std::vector<std::vector<std::string>> buckets(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < n; ++i) buckets[i % static_cast<std::size_t>(k)].push_back(ids[i]);

  const std::size_t val_n = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));

  std::vector<Split> splits;
  splits.reserve(static_cast<std::size_t>(k));
  for (int fold = 0; fold < k; ++fold) {
    Split split;
    split.seed = seed;
    split.test = buckets[static_cast<std::size_t>(fold)];
    std::set<std::string> in_test(split.test.begin(), split.test.end());
    std::size_t taken = 0;
    for (const auto& id : ids) {
      if (in_test.count(id)) continue;
      if (taken < val_n) {
        split.val.push_back(id);
        ++taken;
      } else {
        split.train.push_back(id);
      }
    }
    if (split.train.empty())
      throw DataError("kfold_split: empty training set (val_fraction too large)");
    splits.push_back(std::move(split));
  }
  return splits;
}

std::vector<Eigen::MatrixXd> window(const Eigen::Ref<const Eigen::MatrixXd>& series,
                                    int length, int stride) {
  if (length < 1 || stride < 1) throw DataError("window: length and stride must be >= 1");
  const Eigen::Index t = series.rows();
  if (t < length) throw DataError("window: series shorter than window");
  const Eigen::Index count = (t - length) / stride + 1;
  std::vector<Eigen::MatrixXd> out;
  out.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i)
    out.emplace_back(series.middleRows(i * stride, length));
  return out;
}

std::vector<Sample> make_samples(const Dataset& dataset,
                                 const std::vector<std::string>& subject_ids,
                                 int length, int stride) {
  std::vector<Sample> samples;
  for (const auto& id : subject_ids) {
    const Subject& subject = dataset.subject(id);
    auto windows = window(subject.series, length, stride);
    for (std::size_t w = 0; w < windows.size(); ++w) {
      Sample s;
      s.subject_id = id;
      s.window_index = static_cast<int>(w);
      s.series = std::move(windows[w]);
      s.label = static_cast<double>(subject.score);
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

std::map<std::string, double> aggregate_by_subject(
    const std::vector<std::pair<std::string, double>>& predictions) {
  if (predictions.empty()) throw DataError("aggregate_by_subject: empty input");
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& [id, value] : predictions) {
    auto& slot = acc[id];
    slot.first += value;
    slot.second += 1;
  }
  std::map<std::string, double> out;
  for (const auto& [id, slot] : acc) out[id] = slot.first / static_cast<double>(slot.second);
  return out;
}

}  // namespace metareg
