#pragma once

#include <memory>

#include <json.hpp>

#include "metareg/learners.hpp"

namespace metareg {

namespace detail_forest {
std::unique_ptr<BinaryClassifier> forest_from_json(const nlohmann::json& doc);
std::unique_ptr<Regressor> forest_reg_from_json(const nlohmann::json& doc);
}  // namespace detail_forest

namespace detail_neural {
std::unique_ptr<BinaryClassifier> mlp_from_json(const nlohmann::json& doc);
std::unique_ptr<BinaryClassifier> lstm_from_json(const nlohmann::json& doc);
std::unique_ptr<Regressor> mlp_reg_from_json(const nlohmann::json& doc);
std::unique_ptr<Regressor> lstm_reg_from_json(const nlohmann::json& doc);
}  // namespace detail_neural

}  // namespace metareg
