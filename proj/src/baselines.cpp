#include "lmtree/baselines.hpp"

#include <set>

#include "json.hpp"
#include "lmtree/json_io.hpp"

namespace lmtree {

using json = nlohmann::json;

std::string_view to_string(Partition partition) {
  switch (partition) {
    case Partition::All:
      return "all";
    case Partition::Category:
      return "category";
    case Partition::Editorial:
      return "editorial";
  }
  return "all";
}

Partition partition_from(std::string_view text) {
  if (text == "all") return Partition::All;
  if (text == "category") return Partition::Category;
  if (text == "editorial") return Partition::Editorial;
  throw BaselineError("unknown partition '" + std::string(text) + "'");
}

namespace {

std::string editorial_label(const Catalog& catalog, const PublicItem& item) {
  // The single whitelisted read of the editorial label in pricing code.
  const auto label = privileged::editorial_category(catalog, item.item_id);
  return label.empty() ? item.category + "/unlabelled" : std::string(label);
}

}  // namespace

std::unordered_map<ItemId, std::string> segment_labels(const Catalog& catalog,
                                                       Partition partition) {
  std::unordered_map<ItemId, std::string> labels;
  labels.reserve(catalog.size());
  for (const auto& item : catalog.items()) {
    switch (partition) {
      case Partition::All:
        labels.emplace(item.item_id, "all");
        break;
      case Partition::Category:
        labels.emplace(item.item_id, item.category);
        break;
      case Partition::Editorial:
        labels.emplace(item.item_id, editorial_label(catalog, item));
        break;
    }
  }
  return labels;
}

std::string FlatPolicy::segment(const PublicItem& item) const {
  switch (partition) {
    case Partition::All:
      return "all";
    case Partition::Category:
      return item.category;
    case Partition::Editorial: {
      auto it = segment_of.find(item.item_id);
      if (it == segment_of.end()) {
        throw BaselineError("no editorial segment recorded for '" + item.item_id + "'");
      }
      return it->second;
    }
  }
  return "all";
}

Money FlatPolicy::price(const PublicItem& item) const {
  const auto label = segment(item);
  auto it = prices.find(label);
  if (it == prices.end()) throw BaselineError("no price for segment '" + label + "'");
  return it->second;
}

FlatPolicy train_category_prices(const Catalog& catalog, std::span<const ItemId> train_items,
                                 QueryStream& stream, Market& market, Partition partition,
                                 const FlatGridConfig& config) {
  if (train_items.empty()) throw BaselineError("no training items");
  auto labels = segment_labels(catalog, partition);

  std::map<std::string, ItemSet> members;
  for (const auto& id : train_items) members[labels.at(id)].insert(id);

  FlatPolicy policy;
  policy.partition = partition;
  policy.config = config;
  const auto grid = make_grid(config.root_baseline, config.arms, config.span);
  for (const auto& [label, items] : members) {
    auto result = run_exploration(label, items, stream, market, grid, config.trials_per_arm);
    if (result.total_trials() == 0) {
      throw BaselineError("segment '" + label + "' received no queries");
    }
    if (result.partial) policy.budget_exhausted = true;
    policy.prices[label] = result.best_price;
    policy.explorations.emplace(label, std::move(result));
  }
  if (partition == Partition::Editorial) policy.segment_of = std::move(labels);
  return policy;
}

FlatPolicy train_single_price(const Catalog& catalog, std::span<const ItemId> train_items,
                              QueryStream& stream, Market& market, const FlatGridConfig& config) {
  return train_category_prices(catalog, train_items, stream, market, Partition::All, config);
}

std::string serialize(const FlatPolicy& policy) {
  json explorations = json::object();
  for (const auto& [label, result] : policy.explorations) explorations[label] = to_json(result);
  json doc{{"schema", "lmtree.flat_policy"},
           {"version", FlatPolicy::kSchemaVersion},
           {"name", policy.name},
           {"partition", to_string(policy.partition)},
           {"config",
            {{"arms", policy.config.arms},
             {"trials_per_arm", policy.config.trials_per_arm},
             {"span", policy.config.span},
             {"root_baseline", policy.config.root_baseline}}},
           {"budget_exhausted", policy.budget_exhausted},
           {"prices", policy.prices},
           {"explorations", std::move(explorations)}};
  if (!policy.segment_of.empty()) {
    // Sorted for a stable document.
    doc["segments"] = std::map<std::string, std::string>(policy.segment_of.begin(),
                                                         policy.segment_of.end());
  }
  return doc.dump(1) + "\n";
}

FlatPolicy deserialize_flat(const std::string& document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw BaselineError(std::string("malformed policy document: ") + e.what());
  }
  if (!doc.is_object() || doc.value("schema", std::string{}) != "lmtree.flat_policy") {
    throw BaselineError("not a flat policy document");
  }
  const int version = doc.value("version", -1);
  if (version != FlatPolicy::kSchemaVersion) {
    throw BaselineError("unsupported policy document version " + std::to_string(version));
  }
  FlatPolicy policy;
  try {
    policy.name = doc.at("name").get<std::string>();
    policy.partition = partition_from(doc.at("partition").get<std::string>());
    const auto& c = doc.at("config");
    policy.config.arms = c.at("arms").get<int>();
    policy.config.trials_per_arm = c.at("trials_per_arm").get<std::size_t>();
    policy.config.span = c.at("span").get<double>();
    policy.config.root_baseline = c.at("root_baseline").get<double>();
    policy.budget_exhausted = doc.at("budget_exhausted").get<bool>();
    policy.prices = doc.at("prices").get<std::map<std::string, Money>>();
    for (const auto& [label, j] : doc.at("explorations").items()) {
      policy.explorations.emplace(label, exploration_from_json(j));
    }
    if (doc.contains("segments")) {
      for (const auto& [id, label] : doc.at("segments").items()) {
        policy.segment_of.emplace(id, label.get<std::string>());
      }
    }
  } catch (const json::exception& e) {
    throw BaselineError(std::string("malformed policy document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw BaselineError(std::string("malformed policy document: ") + e.what());
  }
  return policy;
}

}  // namespace lmtree
