#include "lmtree/json_io.hpp"

namespace lmtree {

using json = nlohmann::json;

json to_json(const ExplorationResult& result) {
  json arms = json::array();
  for (const auto& arm : result.arms) {
    json records = json::array();
    for (const auto& t : arm.records) records.push_back(json::array({t.query_id, t.item_id, t.purchased}));
    arms.push_back({{"price", arm.price},
                    {"trials", arm.trials},
                    {"purchases", arm.purchases},
                    {"records", std::move(records)}});
  }
  return {{"node_id", result.node_id},
          {"best_price", result.best_price},
          {"best_revenue", result.best_revenue},
          {"partial", result.partial},
          {"collected", result.collected},
          {"arms", std::move(arms)}};
}

ExplorationResult exploration_from_json(const json& j) {
  ExplorationResult result;
  result.node_id = j.at("node_id").get<std::string>();
  result.best_price = j.at("best_price").get<double>();
  result.best_revenue = j.at("best_revenue").get<double>();
  result.partial = j.at("partial").get<bool>();
  result.collected = j.at("collected").get<double>();
  for (const auto& ja : j.at("arms")) {
    ArmStats arm;
    arm.price = ja.at("price").get<double>();
    arm.trials = ja.at("trials").get<std::size_t>();
    arm.purchases = ja.at("purchases").get<std::size_t>();
    for (const auto& r : ja.at("records")) {
      arm.records.push_back(
          Trial{r.at(0).get<QueryId>(), r.at(1).get<std::string>(), r.at(2).get<bool>()});
    }
    if (arm.records.size() != arm.trials) {
      throw std::invalid_argument("arm trial count does not match its records");
    }
    result.arms.push_back(std::move(arm));
  }
  return result;
}

json to_json(const SplitProposal& proposal) {
  json j{{"attribute",
          {{"name", proposal.attribute.name},
           {"description", proposal.attribute.description},
           {"kind", to_string(proposal.attribute.kind)}}},
         {"rule_kind", to_string(proposal.rule_kind)},
         {"direction", to_string(proposal.direction)},
         {"rationale", proposal.rationale}};
  if (proposal.threshold) j["threshold"] = *proposal.threshold;
  return j;
}

SplitProposal proposal_from_json(const json& j) {
  SplitProposal proposal;
  const auto& attribute = j.at("attribute");
  proposal.attribute.name = attribute.at("name").get<std::string>();
  proposal.attribute.description = attribute.value("description", std::string{});
  proposal.attribute.kind = attribute_kind_from(attribute.at("kind").get<std::string>());
  proposal.rule_kind = rule_kind_from(j.at("rule_kind").get<std::string>());
  proposal.direction = side_from(j.at("direction").get<std::string>());
  proposal.rationale = j.value("rationale", std::string{});
  if (j.contains("threshold")) proposal.threshold = j.at("threshold").get<double>();
  proposal.validate();
  return proposal;
}

json to_json(const Annotation& annotation) {
  json j{{"item_id", annotation.item_id}, {"attribute", annotation.attribute}};
  if (annotation.present) j["present"] = *annotation.present;
  if (annotation.value) j["value"] = *annotation.value;
  return j;
}

Annotation annotation_from_json(const json& j) {
  Annotation annotation;
  annotation.item_id = j.at("item_id").get<std::string>();
  annotation.attribute = j.at("attribute").get<std::string>();
  if (j.contains("present") && !j.at("present").is_null()) {
    annotation.present = j.at("present").get<bool>();
  }
  if (j.contains("value") && !j.at("value").is_null()) {
    annotation.value = j.at("value").get<double>();
  }
  return annotation;
}

}  // namespace lmtree
