#pragma once

// JSON conversions shared by the policy documents.

#include "json.hpp"
#include "lmtree/analyst.hpp"
#include "lmtree/explore.hpp"

namespace lmtree {

nlohmann::json to_json(const ExplorationResult& result);
ExplorationResult exploration_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SplitProposal& proposal);
SplitProposal proposal_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Annotation& annotation);
Annotation annotation_from_json(const nlohmann::json& j);

}  // namespace lmtree
