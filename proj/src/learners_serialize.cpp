#include "learners_internal.hpp"
#include "serial_util.hpp"

namespace metareg {

using detail::vec_from_json;

static void check_schema(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("schema_version") || !doc.contains("kind"))
    throw DataError("model json: missing schema_version/kind");
  if (doc.at("schema_version").get<int>() != 1)
    throw DataError("model json: unsupported schema_version");
}

std::unique_ptr<BinaryClassifier> load_classifier(const nlohmann::json& doc) {
  check_schema(doc);
  const std::string kind = doc.at("kind").get<std::string>();
  const auto& params = doc.at("parameters");
  if (kind == "lr") {
    const auto& h = doc.at("hyperparams");
    LrHyper hyper{h.at("l2").get<double>(), h.at("iters").get<int>(),
                  h.at("lr").get<double>()};
    return std::make_unique<LogisticModel>(vec_from_json(params.at("w")),
                                           params.at("b").get<double>(), hyper);
  }
  if (kind == "svm") {
    const auto& h = doc.at("hyperparams");
    SvmHyper hyper{h.at("box").get<double>(), h.at("scale").get<double>(),
                   h.at("epochs").get<int>()};
    return std::make_unique<LinearSvmModel>(vec_from_json(params.at("w")), hyper);
  }
  if (kind == "rf") return detail_forest::forest_from_json(doc);
  if (kind == "mlp") return detail_neural::mlp_from_json(doc);
  if (kind == "lstm") return detail_neural::lstm_from_json(doc);
  if (kind == "constant") {
    const auto& h = doc.at("hyperparams");
    return std::make_unique<ConstantScorer>(
        params.at("score").get<double>(),
        learner_kind_from_string(h.at("base_kind").get<std::string>()),
        input_view_from_string(h.at("view").get<std::string>()));
  }
  throw DataError("model json: unknown classifier kind '" + kind + "'");
}

std::unique_ptr<Regressor> load_regressor(const nlohmann::json& doc) {
  check_schema(doc);
  const std::string kind = doc.at("kind").get<std::string>();
  const auto& params = doc.at("parameters");
  if (kind == "linreg") {
    return std::make_unique<LinearRegModel>(vec_from_json(params.at("w")),
                                            params.at("b").get<double>(),
                                            doc.at("hyperparams").at("l2").get<double>());
  }
  if (kind == "svr") {
    const auto& h = doc.at("hyperparams");
    SvrHyper hyper{h.at("box").get<double>(), h.at("scale").get<double>(),
                   h.at("epsilon").get<double>(), h.at("epochs").get<int>()};
    return std::make_unique<LinearSvrModel>(vec_from_json(params.at("w")), hyper);
  }
  if (kind == "rf_reg") return detail_forest::forest_reg_from_json(doc);
  if (kind == "mlp_reg") return detail_neural::mlp_reg_from_json(doc);
  if (kind == "lstm_reg") return detail_neural::lstm_reg_from_json(doc);
  throw DataError("model json: unknown regressor kind '" + kind + "'");
}

}  // namespace metareg
