#include "metareg/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "metareg/util.hpp"

namespace fs = std::filesystem;

namespace metareg {

// ---------------------------------------------------------------------------
// Config parsing

namespace {

void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                         const std::string& scope) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key))
      throw ConfigError("config: unknown key '" + key + "' in " + scope);
}

template <typename T>
void read_field(const nlohmann::json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config: bad value for '") + key + "'");
  }
}

TrainConfig parse_train(const nlohmann::json& obj, const std::string& scope,
                        TrainConfig defaults) {
  reject_unknown_keys(obj,
                      {"epochs", "learning_rate", "l2", "dropout_rate", "target_noise_sd",
                       "early_stop_patience", "batch_size"},
                      scope);
  TrainConfig c = defaults;
  read_field(obj, "epochs", c.epochs);
  read_field(obj, "learning_rate", c.learning_rate);
  read_field(obj, "l2", c.l2);
  read_field(obj, "dropout_rate", c.dropout_rate);
  read_field(obj, "target_noise_sd", c.target_noise_sd);
  read_field(obj, "early_stop_patience", c.early_stop_patience);
  read_field(obj, "batch_size", c.batch_size);
  if (c.epochs < 1) throw ConfigError("config: " + scope + ".epochs must be >= 1");
  if (!(c.learning_rate > 0)) throw ConfigError("config: " + scope + ".learning_rate must be positive");
  if (c.l2 < 0) throw ConfigError("config: " + scope + ".l2 must be >= 0");
  if (c.dropout_rate < 0 || c.dropout_rate >= 1)
    throw ConfigError("config: " + scope + ".dropout_rate must be in [0,1)");
  if (c.target_noise_sd < 0)
    throw ConfigError("config: " + scope + ".target_noise_sd must be >= 0");
  if (c.early_stop_patience < 0)
    throw ConfigError("config: " + scope + ".early_stop_patience must be >= 0");
  if (c.batch_size < 0) throw ConfigError("config: " + scope + ".batch_size must be >= 0");
  return c;
}

Grids parse_grids(const nlohmann::json& obj) {
  reject_unknown_keys(obj, {"lr_l2", "svm_box", "svm_scale", "rf_trees", "mlp_hidden",
                            "lstm_hidden"},
                      "grids");
  Grids g;
  read_field(obj, "lr_l2", g.lr_l2);
  read_field(obj, "svm_box", g.svm_box);
  read_field(obj, "svm_scale", g.svm_scale);
  read_field(obj, "rf_trees", g.rf_trees);
  read_field(obj, "lstm_hidden", g.lstm_hidden);
  if (obj.contains("mlp_hidden")) {
    g.mlp_hidden.clear();
    for (const auto& pair : obj.at("mlp_hidden")) {
      if (!pair.is_array() || pair.size() != 2)
        throw ConfigError("config: grids.mlp_hidden entries must be [h1, h2]");
      g.mlp_hidden.push_back(MlpHyper{pair.at(0).get<int>(), pair.at(1).get<int>()});
    }
  }
  auto positive = [](const auto& v, const char* name) {
    if (v.empty()) throw ConfigError(std::string("config: grids.") + name + " is empty");
    for (const auto& x : v)
      if (!(x > 0)) throw ConfigError(std::string("config: grids.") + name + " entries must be positive");
  };
  positive(g.lr_l2, "lr_l2");
  positive(g.svm_box, "svm_box");
  positive(g.svm_scale, "svm_scale");
  positive(g.rf_trees, "rf_trees");
  positive(g.lstm_hidden, "lstm_hidden");
  for (const auto& h : g.mlp_hidden)
    if (h.h1 < 1 || h.h2 < 1) throw ConfigError("config: grids.mlp_hidden sizes must be positive");
  return g;
}

SynthConfig parse_synth(const nlohmann::json& obj, std::uint64_t default_seed) {
  reject_unknown_keys(obj,
                      {"n_subjects", "rois", "time_points", "score_distribution",
                       "signal_pairs", "signal_strength", "noise_sd", "phenotype_effect",
                       "seed"},
                      "synth");
  SynthConfig s;
  s.seed = default_seed;
  read_field(obj, "n_subjects", s.n_subjects);
  read_field(obj, "rois", s.rois);
  read_field(obj, "time_points", s.time_points);
  read_field(obj, "signal_strength", s.signal_strength);
  read_field(obj, "noise_sd", s.noise_sd);
  read_field(obj, "phenotype_effect", s.phenotype_effect);
  read_field(obj, "seed", s.seed);
  if (obj.contains("score_distribution")) {
    const auto& arr = obj.at("score_distribution");
    if (!arr.is_array() || arr.size() != 9)
      throw ConfigError("config: synth.score_distribution needs 9 probabilities");
    for (std::size_t i = 0; i < 9; ++i) s.score_distribution[i] = arr.at(i).get<double>();
  }
  if (obj.contains("signal_pairs")) {
    s.signal_pairs.clear();
    for (const auto& pair : obj.at("signal_pairs")) {
      if (!pair.is_array() || pair.size() != 2)
        throw ConfigError("config: synth.signal_pairs entries must be [i, j]");
      s.signal_pairs.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
    }
  }
  s.validate();
  return s;
}

std::vector<LearnerKind> parse_kinds(const nlohmann::json& arr, const std::string& scope) {
  if (!arr.is_array()) throw ConfigError("config: " + scope + " must be an array");
  std::vector<LearnerKind> kinds;
  for (const auto& k : arr) kinds.push_back(learner_kind_from_string(k.get<std::string>()));
  return kinds;
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: invalid JSON: " + std::string(e.what()));
  }
  return from_json(doc);
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  reject_unknown_keys(doc,
                      {"data_dir", "out_dir", "seed", "k_folds", "val_fraction",
                       "window_length", "window_stride", "thresholds", "base_kinds",
                       "bank_kinds", "clip_predictions", "train", "meta_train", "grids",
                       "generalize_k", "synth"},
                      "top level");
  ExperimentConfig c;
  std::string data_dir, out_dir;
  read_field(doc, "data_dir", data_dir);
  read_field(doc, "out_dir", out_dir);
  c.data_dir = data_dir;
  c.out_dir = out_dir;
  read_field(doc, "seed", c.seed);
  read_field(doc, "k_folds", c.k_folds);
  read_field(doc, "val_fraction", c.val_fraction);
  read_field(doc, "window_length", c.window_length);
  read_field(doc, "window_stride", c.window_stride);
  read_field(doc, "thresholds", c.thresholds);
  read_field(doc, "clip_predictions", c.clip_predictions);
  read_field(doc, "generalize_k", c.generalize_k);
  if (doc.contains("base_kinds")) c.base_kinds = parse_kinds(doc.at("base_kinds"), "base_kinds");
  if (doc.contains("bank_kinds")) c.bank_kinds = parse_kinds(doc.at("bank_kinds"), "bank_kinds");
  if (doc.contains("train")) c.train = parse_train(doc.at("train"), "train", TrainConfig{});
  if (doc.contains("meta_train"))
    c.meta_train = parse_train(doc.at("meta_train"), "meta_train", default_meta_train());
  if (doc.contains("grids")) c.grids = parse_grids(doc.at("grids"));
  c.synth = doc.contains("synth") ? parse_synth(doc.at("synth"), c.seed)
                                  : [&] {
                                      SynthConfig s;
                                      s.seed = c.seed;
                                      return s;
                                    }();
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (data_dir.empty()) throw ConfigError("config: data_dir is required");
  if (k_folds < 2) throw ConfigError("config: k_folds must be >= 2");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw ConfigError("config: val_fraction must be in (0,1)");
  if (window_length < 1) throw ConfigError("config: window_length must be >= 1");
  if (window_stride < 1) throw ConfigError("config: window_stride must be >= 1");
  if (base_kinds.empty()) throw ConfigError("config: base_kinds must not be empty");
  if (generalize_k < 2) throw ConfigError("config: generalize_k must be >= 2");
  ThresholdSet ts{thresholds};
  ts.validate();
  if (!bank_kinds.empty() && bank_kinds.size() != thresholds.size())
    throw ConfigError("config: bank_kinds must have one entry per threshold");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json kinds = nlohmann::json::array();
  for (auto k : base_kinds) kinds.push_back(to_string(k));
  nlohmann::json bank = nlohmann::json::array();
  for (auto k : bank_kinds) bank.push_back(to_string(k));
  nlohmann::json mlp_hidden = nlohmann::json::array();
  for (const auto& h : grids.mlp_hidden) mlp_hidden.push_back({h.h1, h.h2});
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [a, b] : synth.signal_pairs) pairs.push_back({a, b});
  auto train_json = [](const TrainConfig& t) {
    return nlohmann::json{{"epochs", t.epochs},
                          {"learning_rate", t.learning_rate},
                          {"l2", t.l2},
                          {"dropout_rate", t.dropout_rate},
                          {"target_noise_sd", t.target_noise_sd},
                          {"early_stop_patience", t.early_stop_patience},
                          {"batch_size", t.batch_size}};
  };
  return {{"data_dir", data_dir.string()},
          {"out_dir", out_dir.string()},
          {"seed", seed},
          {"k_folds", k_folds},
          {"val_fraction", val_fraction},
          {"window_length", window_length},
          {"window_stride", window_stride},
          {"thresholds", thresholds},
          {"base_kinds", kinds},
          {"bank_kinds", bank},
          {"clip_predictions", clip_predictions},
          {"train", train_json(train)},
          {"meta_train", train_json(meta_train)},
          {"grids",
           {{"lr_l2", grids.lr_l2},
            {"svm_box", grids.svm_box},
            {"svm_scale", grids.svm_scale},
            {"rf_trees", grids.rf_trees},
            {"mlp_hidden", mlp_hidden},
            {"lstm_hidden", grids.lstm_hidden}}},
          {"generalize_k", generalize_k},
          {"synth",
           {{"n_subjects", synth.n_subjects},
            {"rois", synth.rois},
            {"time_points", synth.time_points},
            {"score_distribution", synth.score_distribution},
            {"signal_pairs", pairs},
            {"signal_strength", synth.signal_strength},
            {"noise_sd", synth.noise_sd},
            {"phenotype_effect", synth.phenotype_effect},
            {"seed", synth.seed}}}};
}

MetamodelConfig ExperimentConfig::metamodel_config(LearnerKind kind,
                                                   std::uint64_t task_seed) const {
  MetamodelConfig mm;
  mm.base_kind = kind;
  mm.bank_kinds = bank_kinds;
  mm.thresholds = ThresholdSet{thresholds};
  mm.base_train = train;
  mm.meta_train = meta_train;
  mm.grids = grids;
  mm.seed = task_seed;
  mm.clip_predictions = clip_predictions;
  return mm;
}

// ---------------------------------------------------------------------------
// Output helpers

namespace {

struct PartialMarker {
  fs::path path;
  explicit PartialMarker(const fs::path& dir_or_file) {
    path = dir_or_file;
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream marker(path);
    marker << "in progress\n";
  }
  void done() {
    if (!path.empty()) fs::remove(path);
    path.clear();
  }
};

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_manifest(const fs::path& dir, const ExperimentConfig& config,
                    const std::string& command) {
  const std::string canonical = config.to_json().dump();
  char hash_hex[17];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical)));
  nlohmann::json manifest = {{"artifact", "metareg"},
                             {"artifact_version", "0.1.0"},
                             {"schema_version", 1},
                             {"command", command},
                             {"seed", config.seed},
                             {"config_hash", std::string(hash_hex)},
                             {"config", config.to_json()}};
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

PipelineInfo make_pipeline(const ExperimentConfig& config, const Dataset& ds,
                           const std::vector<std::string>& train_ids) {
  PipelineInfo p;
  p.window_length = config.window_length;
  p.stride = config.window_stride;
  p.rois = ds.rois;
  p.scaler = PhenoScaler::fit(ds, train_ids);
  return p;
}

std::optional<double> entry_r(const std::map<std::string, double>& preds,
                              const std::map<std::string, double>& truth) {
  return correlation_vs_truth(preds, truth);
}

nlohmann::json ttest_json(const std::string& kind, const TTestResult& t, int n_pairs) {
  return {{"name", "paired_ttest"}, {"kind", kind},      {"t", t.t},
          {"p", t.p},               {"df", t.df},        {"n_pairs", n_pairs},
          {"degenerate", t.degenerate}};
}

}  // namespace

// ---------------------------------------------------------------------------
// synth

std::string run_synth(const ExperimentConfig& config, const fs::path& out_override) {
  const fs::path target = out_override.empty() ? config.data_dir : out_override;
  if (target.empty()) throw ConfigError("synth: no output directory configured");
  PartialMarker marker(target / ".partial");
  const Dataset ds = generate(config.synth);
  save_dataset(ds, target);
  const std::string table = describe(ds).to_table();
  marker.done();
  return table;
}

// ---------------------------------------------------------------------------
// crossval

EvalReport run_crossval(const ExperimentConfig& config, int jobs,
                        const fs::path& out_override) {
  const fs::path out = out_override.empty() ? config.out_dir : out_override;
  if (out.empty()) throw ConfigError("crossval: no output directory configured");
  const Dataset ds = load_dataset_dir(config.data_dir);
  const auto splits = kfold_split(ds, config.k_folds, config.val_fraction, config.seed);

  fs::create_directories(out);
  PartialMarker marker(out / ".partial");

  struct Task {
    int fold;
    LearnerKind kind;
  };
  std::vector<Task> tasks;
  for (int f = 0; f < config.k_folds; ++f)
    for (LearnerKind kind : config.base_kinds) tasks.push_back({f, kind});

  struct Outcome {
    std::optional<double> r_meta;
    std::optional<double> r_trad;
  };
  std::vector<Outcome> outcomes(tasks.size());

  parallel_for(tasks.size(), jobs, [&](std::size_t ti) {
    const Task& task = tasks[static_cast<std::size_t>(ti)];
    const Split& split = splits[static_cast<std::size_t>(task.fold)];
    const std::string kind_name = to_string(task.kind);
    try {
      const std::uint64_t task_seed =
          derive_seed(config.seed, "fold_" + std::to_string(task.fold) + "/" + kind_name);
      const MetamodelConfig mm_cfg = config.metamodel_config(task.kind, task_seed);
      const PipelineInfo pipeline = make_pipeline(config, ds, split.train);
      const ViewNeeds needs = views_needed(mm_cfg, true);

      const auto tr = build_sample_views(ds, split.train, pipeline, needs);
      const auto vs = build_sample_views(ds, split.val, pipeline, needs);
      const auto ts = build_sample_views(ds, split.test, pipeline, needs);
      const auto truth = subject_truth(ds, split.test);

      Metamodel model = train_metamodel(tr, vs, mm_cfg, pipeline);
      outcomes[ti].r_meta = entry_r(model.predict(ts), truth);

      auto baseline = train_baseline(task.kind, tr, vs, mm_cfg);
      outcomes[ti].r_trad = entry_r(predict_regressor(*baseline, ts), truth);

      const fs::path model_dir =
          out / "models" / kind_name / ("fold_" + std::to_string(task.fold));
      save_metamodel(model, model_dir);
      write_text(model_dir / "baseline.json", baseline->to_json().dump(2) + "\n");
    } catch (const std::exception& e) {
      throw TrainError("fold " + std::to_string(task.fold) + ", kind " + kind_name +
                       ": " + e.what());
    }
  });

  std::vector<FoldEntry> entries;
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    const std::string kind_name = to_string(tasks[ti].kind);
    entries.push_back({tasks[ti].fold, kind_name + "/metamodel", outcomes[ti].r_meta});
    entries.push_back({tasks[ti].fold, kind_name + "/traditional", outcomes[ti].r_trad});
  }
  std::sort(entries.begin(), entries.end(), [](const FoldEntry& a, const FoldEntry& b) {
    if (a.fold != b.fold) return a.fold < b.fold;
    return a.tag < b.tag;
  });
  EvalReport report = summarize(std::move(entries));

  // Paired comparison per base kind over folds.
  for (LearnerKind kind : config.base_kinds) {
    const std::string kind_name = to_string(kind);
    std::vector<double> meta_r, trad_r;
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
      if (tasks[ti].kind != kind) continue;
      if (outcomes[ti].r_meta && outcomes[ti].r_trad) {
        meta_r.push_back(*outcomes[ti].r_meta);
        trad_r.push_back(*outcomes[ti].r_trad);
      }
    }
    if (meta_r.size() >= 2) {
      const Eigen::Map<const Eigen::VectorXd> a(meta_r.data(),
                                                static_cast<Eigen::Index>(meta_r.size()));
      const Eigen::Map<const Eigen::VectorXd> b(trad_r.data(),
                                                static_cast<Eigen::Index>(trad_r.size()));
      report.tests.push_back(
          ttest_json(kind_name, paired_ttest(a, b), static_cast<int>(meta_r.size())));
    } else {
      report.tests.push_back({{"name", "paired_ttest"},
                              {"kind", kind_name},
                              {"skipped", "needs at least 2 folds with defined r"}});
    }
  }

  // Two-way repeated-measures ANOVA (method x algorithm over folds) needs a
  // complete design and at least two algorithms.
  if (config.base_kinds.size() >= 2) {
    bool complete = true;
    std::vector<Eigen::MatrixXd> tensor(static_cast<std::size_t>(config.k_folds));
    for (auto& m : tensor)
      m = Eigen::MatrixXd::Zero(2, static_cast<Eigen::Index>(config.base_kinds.size()));
    for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
      const auto alg = static_cast<Eigen::Index>(
          std::find(config.base_kinds.begin(), config.base_kinds.end(), tasks[ti].kind) -
          config.base_kinds.begin());
      if (!outcomes[ti].r_trad || !outcomes[ti].r_meta) {
        complete = false;
        break;
      }
      tensor[static_cast<std::size_t>(tasks[ti].fold)](0, alg) = *outcomes[ti].r_trad;
      tensor[static_cast<std::size_t>(tasks[ti].fold)](1, alg) = *outcomes[ti].r_meta;
    }
    if (complete) {
      nlohmann::json effects = nlohmann::json::array();
      for (const auto& e : rm_anova_2way(tensor)) {
        effects.push_back({{"effect", e.effect_name},
                           {"F", e.F},
                           {"df_num", e.df_num},
                           {"df_den", e.df_den},
                           {"p", e.p}});
      }
      report.tests.push_back({{"name", "rm_anova_2way"},
                              {"methods", {"traditional", "metamodel"}},
                              {"effects", effects}});
    } else {
      report.tests.push_back(
          {{"name", "rm_anova_2way"}, {"skipped", "incomplete design (undefined r)"}});
    }
  }

  write_text(out / "report.csv", report.to_csv());
  write_text(out / "summary.json", report.summary_json().dump(2) + "\n");
  write_manifest(out, config, "crossval");
  marker.done();
  return report;
}

// ---------------------------------------------------------------------------
// generalize

namespace {

std::vector<fs::path> fold_model_dirs(const fs::path& kind_dir) {
  std::vector<fs::path> dirs;
  for (int f = 0;; ++f) {
    const fs::path dir = kind_dir / ("fold_" + std::to_string(f));
    if (!fs::exists(dir / "meta.json")) break;
    dirs.push_back(dir);
  }
  if (dirs.empty())
    throw DataError("no stored fold models under " + kind_dir.string());
  return dirs;
}

}  // namespace

EvalReport run_generalize(const ExperimentConfig& config, const fs::path& models_dir,
                          const fs::path& new_data_dir, int method, int jobs,
                          const fs::path& out_override) {
  if (method != 1 && method != 2)
    throw ConfigError("generalize: method must be 1 or 2");
  const fs::path out = out_override.empty() ? config.out_dir : out_override;
  if (out.empty()) throw ConfigError("generalize: no output directory configured");
  const Dataset new_ds = load_dataset_dir(new_data_dir);
  const auto all_ids = new_ds.ids();
  const auto truth = subject_truth(new_ds, all_ids);

  fs::create_directories(out);
  PartialMarker marker(out / ".partial");

  std::vector<FoldEntry> entries;
  nlohmann::json tests = nlohmann::json::array();

  for (LearnerKind kind : config.base_kinds) {
    const std::string kind_name = to_string(kind);
    const auto dirs = fold_model_dirs(models_dir / kind_name);
    std::vector<Metamodel> models;
    models.reserve(dirs.size());
    std::vector<std::unique_ptr<Regressor>> baselines;
    for (const auto& dir : dirs) {
      models.push_back(load_metamodel(dir));
      std::ifstream in(dir / "baseline.json");
      if (!in) throw DataError("missing baseline.json in " + dir.string());
      baselines.push_back(load_regressor(nlohmann::json::parse(in)));
    }

    if (method == 1) {
      std::vector<const Metamodel*> model_ptrs;
      for (const auto& m : models) model_ptrs.push_back(&m);
      EvalReport direct = generalize_direct(model_ptrs, new_ds);
      std::vector<double> meta_r, trad_r;
      for (auto& e : direct.per_fold) {
        entries.push_back({e.fold, kind_name + "/metamodel", e.r});
        if (e.r) meta_r.push_back(*e.r);
      }
      for (const auto& t : direct.tests) {
        nlohmann::json tagged = t;
        tagged["kind"] = kind_name;
        tagged["pipeline"] = "metamodel";
        tests.push_back(std::move(tagged));
      }
      // The stored traditional models predict the same new data through the
      // fold pipelines they were trained with.
      for (std::size_t i = 0; i < baselines.size(); ++i) {
        const ViewNeeds needs{baselines[i]->input_view() == InputView::FeatureVector,
                              baselines[i]->input_view() == InputView::SequenceInput};
        const auto samples =
            build_sample_views(new_ds, all_ids, models[i].pipeline, needs);
        const auto r = entry_r(predict_regressor(*baselines[i], samples), truth);
        entries.push_back({static_cast<int>(i), kind_name + "/traditional", r});
        if (r) trad_r.push_back(*r);
      }
      if (meta_r.size() == trad_r.size() && meta_r.size() >= 2) {
        const Eigen::Map<const Eigen::VectorXd> a(meta_r.data(),
                                                  static_cast<Eigen::Index>(meta_r.size()));
        const Eigen::Map<const Eigen::VectorXd> b(trad_r.data(),
                                                  static_cast<Eigen::Index>(trad_r.size()));
        tests.push_back(ttest_json(kind_name, paired_ttest(a, b),
                                   static_cast<int>(meta_r.size())));
      }
      if (!trad_r.empty() && new_ds.subjects.size() >= 4) {
        double mean = 0.0;
        for (double r : trad_r) mean += r;
        mean /= static_cast<double>(trad_r.size());
        if (std::fabs(mean) < 1.0) {
          const CorrelationResult sig =
              corr_significance(mean, static_cast<int>(new_ds.subjects.size()));
          tests.push_back({{"name", "mean_corr_significance"},
                           {"kind", kind_name},
                           {"pipeline", "traditional"},
                           {"r", sig.r},
                           {"df", sig.df},
                           {"t", sig.t_stat},
                           {"p", sig.p_two_tailed}});
        }
      }
      continue;
    }

    // Method 2: frozen bank from the first stored fold model, fresh
    // meta-level per fold of the new data; traditional baselines retrained on
    // the same new-data splits for the paired comparison.
    const auto new_splits =
        kfold_split(new_ds, config.generalize_k, config.val_fraction, config.seed);
    TrainConfig meta_cfg = config.meta_train;
    meta_cfg.seed = derive_seed(config.seed, kind_name + "/retrain_meta");
    EvalReport retrained =
        generalize_retrain_meta(models.front(), new_splits, new_ds, meta_cfg);
    std::vector<double> meta_r;
    for (auto& e : retrained.per_fold) {
      entries.push_back({e.fold, kind_name + "/metamodel", e.r});
      if (e.r) meta_r.push_back(*e.r);
    }
    for (const auto& t : retrained.tests) {
      nlohmann::json tagged = t;
      tagged["kind"] = kind_name;
      tagged["pipeline"] = "metamodel";
      tests.push_back(std::move(tagged));
    }

    std::vector<double> trad_r;
    std::map<std::string, double> trad_pooled;
    std::vector<std::optional<double>> trad_fold_r(new_splits.size());
    std::mutex pooled_mutex;
    parallel_for(new_splits.size(), jobs, [&](std::size_t f) {
      const Split& split = new_splits[f];
      const std::uint64_t task_seed =
          derive_seed(config.seed, kind_name + "/new_baseline_" + std::to_string(f));
      MetamodelConfig mm_cfg = config.metamodel_config(kind, task_seed);
      PipelineInfo pipeline = models.front().pipeline;  // frozen preprocessing
      const ViewNeeds needs{view_for(kind) == InputView::FeatureVector,
                            view_for(kind) == InputView::SequenceInput};
      const auto tr = build_sample_views(new_ds, split.train, pipeline, needs);
      const auto vs = build_sample_views(new_ds, split.val, pipeline, needs);
      const auto ts = build_sample_views(new_ds, split.test, pipeline, needs);
      auto baseline = train_baseline(kind, tr, vs, mm_cfg);
      const auto preds = predict_regressor(*baseline, ts);
      trad_fold_r[f] = entry_r(preds, truth);
      std::lock_guard<std::mutex> lock(pooled_mutex);
      for (const auto& [id, value] : preds) trad_pooled[id] = value;
    });
    for (std::size_t f = 0; f < new_splits.size(); ++f) {
      entries.push_back({static_cast<int>(f), kind_name + "/traditional_new",
                         trad_fold_r[f]});
      if (trad_fold_r[f]) trad_r.push_back(*trad_fold_r[f]);
    }
    if (meta_r.size() == trad_r.size() && meta_r.size() >= 2) {
      const Eigen::Map<const Eigen::VectorXd> a(meta_r.data(),
                                                static_cast<Eigen::Index>(meta_r.size()));
      const Eigen::Map<const Eigen::VectorXd> b(trad_r.data(),
                                                static_cast<Eigen::Index>(trad_r.size()));
      tests.push_back(
          ttest_json(kind_name, paired_ttest(a, b), static_cast<int>(meta_r.size())));
    }
    const auto pooled_r = correlation_vs_truth(trad_pooled, truth);
    nlohmann::json pooled_test = {{"name", "pooled_corr"},
                                  {"kind", kind_name},
                                  {"pipeline", "traditional_new"},
                                  {"n_subjects", trad_pooled.size()}};
    if (pooled_r && std::fabs(*pooled_r) < 1.0 && trad_pooled.size() >= 4) {
      const CorrelationResult sig =
          corr_significance(*pooled_r, static_cast<int>(trad_pooled.size()));
      pooled_test["r"] = sig.r;
      pooled_test["df"] = sig.df;
      pooled_test["t"] = sig.t_stat;
      pooled_test["p"] = sig.p_two_tailed;
    } else if (pooled_r) {
      pooled_test["r"] = *pooled_r;
    }
    tests.push_back(std::move(pooled_test));
  }

  std::sort(entries.begin(), entries.end(), [](const FoldEntry& a, const FoldEntry& b) {
    if (a.fold != b.fold) return a.fold < b.fold;
    return a.tag < b.tag;
  });
  EvalReport report = summarize(std::move(entries));
  report.tests = std::move(tests);

  write_text(out / "report.csv", report.to_csv());
  write_text(out / "summary.json", report.summary_json().dump(2) + "\n");
  write_manifest(out, config, "generalize_method_" + std::to_string(method));
  marker.done();
  return report;
}

// ---------------------------------------------------------------------------
// predict / describe

void run_predict(const fs::path& models_dir, const fs::path& data_dir,
                 const fs::path& out_csv) {
  const Metamodel model = load_metamodel(models_dir);

  // Prediction needs no true scores; phenotype rows are optional too.
  struct Pheno {
    double age;
    std::optional<double> fiq;
  };
  std::map<std::string, Pheno> phenos;
  const fs::path pheno_file = data_dir / "phenotypes.csv";
  if (fs::exists(pheno_file)) {
    std::ifstream in(pheno_file);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream ss(line);
      std::string id, site, age, fiq;
      std::getline(ss, id, ',');
      std::getline(ss, site, ',');
      std::getline(ss, age, ',');
      std::getline(ss, fiq, ',');
      Pheno p{model.pipeline.scaler.age_mean, std::nullopt};
      try {
        if (!age.empty()) p.age = std::stod(age);
        if (!fiq.empty()) p.fiq = std::stod(fiq);
      } catch (const std::exception&) {
        throw DataError("phenotypes.csv: bad number in row for " + id);
      }
      phenos[id] = p;
    }
  }

  const fs::path series_dir = data_dir / "series";
  if (!fs::exists(series_dir)) throw DataError("missing series directory: " + series_dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(series_dir))
    if (entry.path().extension() == ".csv") ids.push_back(entry.path().stem().string());
  if (ids.empty()) throw DataError("no series files in " + series_dir.string());
  std::sort(ids.begin(), ids.end());

  Dataset ds;
  for (const auto& id : ids) {
    Subject s;
    s.id = id;
    s.site = "unknown";
    s.score = 0;  // unused by prediction
    const auto it = phenos.find(id);
    s.age = it != phenos.end() ? it->second.age : model.pipeline.scaler.age_mean;
    if (it != phenos.end()) s.fiq = it->second.fiq;
    s.series = load_series_csv(series_dir / (id + ".csv"));
    if (ds.rois == 0) ds.rois = static_cast<int>(s.series.cols());
    ds.subjects.push_back(std::move(s));
  }

  PartialMarker marker(fs::path(out_csv.string() + ".partial"));
  ViewNeeds needs;
  for (const auto& b : model.bank) {
    needs.fc |= b->input_view() == InputView::FeatureVector;
    needs.seq |= b->input_view() == InputView::SequenceInput;
  }
  const auto samples = build_sample_views(ds, ds.ids(), model.pipeline, needs);
  const auto preds = model.predict(samples);
  std::ostringstream out;
  out << "subject_id,predicted_score\n";
  for (const auto& [id, value] : preds) out << id << ',' << format_double(value) << '\n';
  write_text(out_csv, out.str());
  marker.done();
}

std::string run_describe(const fs::path& data_dir) {
  return describe(load_dataset_dir(data_dir)).to_table();
}

}  // namespace metareg
