#pragma once

#include <string>

#include <json.hpp>

#include "abstain/forecast.hpp"

namespace abstain {

inline std::string model_to_json(const LinearTwoHeadModel& model,
                                 const std::string& method = "") {
  nlohmann::ordered_json j;
  j["lag"] = model.lag;
  j["horizon"] = model.horizon;
  j["t_past"] = model.t_past;
  j["variance_floor"] = model.variance_floor;
  j["beta"] = model.beta;
  j["var_link"] = model.var_link == VarianceLink::clamp ? "clamp" : "softplus";
  if (!method.empty()) j["method"] = method;
  j["normalized"] = model.normalized;
  j["ridge_fallback"] = model.ridge_fallback;
  j["mean_weights"] = model.mean_weights;
  j["var_weights"] = model.var_weights;
  return j.dump();
}

inline LinearTwoHeadModel model_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  LinearTwoHeadModel model;
  model.lag = j.at("lag").get<int>();
  model.horizon = j.at("horizon").get<int>();
  model.t_past = j.value("t_past", 0);
  model.variance_floor = j.at("variance_floor").get<double>();
  model.beta = j.at("beta").get<double>();
  model.var_link =
      j.at("var_link").get<std::string>() == "clamp" ? VarianceLink::clamp : VarianceLink::softplus;
  model.normalized = j.value("normalized", false);
  model.ridge_fallback = j.value("ridge_fallback", false);
  model.mean_weights = j.at("mean_weights").get<std::vector<std::vector<double>>>();
  model.var_weights = j.at("var_weights").get<std::vector<std::vector<double>>>();
  if (static_cast<int>(model.mean_weights.size()) != model.horizon ||
      static_cast<int>(model.var_weights.size()) != model.horizon)
    throw std::invalid_argument("model_from_json: weight shape does not match horizon");
  return model;
}

}  // namespace abstain
