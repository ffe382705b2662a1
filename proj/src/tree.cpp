#include "lmtree/tree.hpp"

#include <algorithm>
#include <deque>
#include <unordered_map>

#include "json.hpp"
#include "lmtree/json_io.hpp"
#include "lmtree/random.hpp"

namespace lmtree {

using json = nlohmann::json;

void GrowConfig::validate() const {
  if (arms < 2) throw TreeError("K must be >= 2");
  if (trials_per_arm < 1) throw TreeError("M must be >= 1");
  if (!(span > 1.0)) throw TreeError("span must be > 1");
  if (!(root_baseline > 0.0)) throw TreeError("root_baseline must be > 0");
  if (max_depth < 0) throw TreeError("max depth must be >= 0");
  if (min_high < 1) throw TreeError("min_high must be >= 1");
  if (min_leaf_items < 1) throw TreeError("min_leaf_items must be >= 1");
}

const TreeNode& PricingTree::node(std::string_view node_id) const {
  auto it = nodes_.find(node_id);
  if (it == nodes_.end()) throw TreeError("unknown node '" + std::string(node_id) + "'");
  return it->second;
}

TreeNode& PricingTree::node(std::string_view node_id) {
  auto it = nodes_.find(node_id);
  if (it == nodes_.end()) throw TreeError("unknown node '" + std::string(node_id) + "'");
  return it->second;
}

std::vector<const TreeNode*> PricingTree::leaves() const {
  std::vector<const TreeNode*> out;
  for (const auto& [id, n] : nodes_) {
    if (n.state == NodeState::Leaf) out.push_back(&n);
  }
  return out;
}

const TreeNode& PricingTree::route_impl(const PublicItem& item, Analyst* analyst,
                                        bool allow_annotate) {
  auto root = roots_.find(item.category);
  if (root == roots_.end()) throw TreeError("no root for category '" + item.category + "'");
  const TreeNode* current = &node(root->second);
  while (current->state == NodeState::Internal) {
    const auto& proposal = *current->split;
    const Annotation* annotation = annotations_.find(item.item_id, proposal.attribute.name);
    if (annotation == nullptr) {
      if (!allow_annotate || analyst == nullptr) {
        throw TreeError("item '" + item.item_id + "' lacks annotation '" +
                        proposal.attribute.name + "'");
      }
      auto fresh = analyst->annotate(std::span<const PublicItem>(&item, 1), proposal.attribute);
      if (fresh.size() != 1) throw AnalystError("annotate returned the wrong number of results");
      annotations_.put(std::move(fresh.front()));
      annotation = annotations_.find(item.item_id, proposal.attribute.name);
    }
    const Side side = apply_rule(*annotation, proposal);
    current = &node(side == Side::High ? current->high_child : current->low_child);
  }
  return *current;
}

const TreeNode& PricingTree::route(const PublicItem& item, Analyst* analyst) {
  return route_impl(item, analyst, true);
}

const TreeNode& PricingTree::route(const PublicItem& item) const {
  // No annotation is added on this path, so the cast never mutates.
  return const_cast<PricingTree*>(this)->route_impl(item, nullptr, false);
}

PricingTree init_roots(std::span<const PublicItem> items) {
  if (items.empty()) throw TreeError("cannot build a tree over an empty library");
  PricingTree tree;
  for (const auto& item : items) {
    if (item.category.empty()) throw TreeError("item '" + item.item_id + "' has no category");
    auto [it, inserted] = tree.roots_.emplace(item.category, item.category);
    if (inserted) {
      TreeNode root;
      root.node_id = item.category;
      root.category = item.category;
      tree.nodes_.emplace(root.node_id, std::move(root));
    }
    tree.nodes_.at(it->second).items.push_back(item.item_id);
  }
  for (auto& [id, n] : tree.nodes_) std::sort(n.items.begin(), n.items.end());
  return tree;
}

bool validate_split(const ExplorationResult& low, const ExplorationResult& high) {
  return low.best_price != high.best_price;
}

namespace {

ExplorationResult explore_node(const TreeNode& n, QueryStream& stream, Market& market,
                               const GrowConfig& config) {
  const ItemSet members(n.items.begin(), n.items.end());
  const auto grid = make_grid(n.grid_baseline, config.arms, config.span);
  return run_exploration(n.node_id, members, stream, market, grid, config.trials_per_arm);
}

// Up to `limit` items, chosen by a seeded shuffle; all of them when limit is 0.
std::vector<PublicItem> sample_items(const std::vector<ItemId>& ids,
                                     const std::unordered_map<std::string, const PublicItem*>& by_id,
                                     std::size_t limit, std::uint64_t seed) {
  std::vector<ItemId> chosen = ids;
  if (limit > 0 && chosen.size() > limit) {
    Rng rng(seed);
    rng.shuffle(std::span<ItemId>(chosen));
    chosen.resize(limit);
    std::sort(chosen.begin(), chosen.end());
  }
  std::vector<PublicItem> out;
  out.reserve(chosen.size());
  for (const auto& id : chosen) out.push_back(*by_id.at(id));
  return out;
}

}  // namespace

void grow(PricingTree& tree, std::span<const PublicItem> items, QueryStream& stream,
          Market& market, Analyst& analyst, const GrowConfig& config) {
  config.validate();
  tree.config_ = config;
  std::unordered_map<std::string, const PublicItem*> by_id;
  for (const auto& item : items) by_id.emplace(item.item_id, &item);
  for (const auto& [id, n] : tree.nodes_) {
    for (const auto& item_id : n.items) {
      if (!by_id.contains(item_id)) throw TreeError("item '" + item_id + "' not supplied to grow");
    }
  }

  std::deque<std::string> queue;
  for (const auto& [category, root_id] : tree.roots_) {
    auto& root = tree.node(root_id);
    root.grid_baseline = config.root_baseline;
    root.exploration = explore_node(root, stream, market, config);
    root.leaf_price = root.exploration.best_price;
    if (root.exploration.partial) tree.budget_exhausted_ = true;
    queue.push_back(root_id);
  }

  while (!queue.empty()) {
    const std::string id = queue.front();
    queue.pop_front();
    // References into nodes_ stay valid across inserts (std::map).
    TreeNode& n = tree.node(id);
    n.state = NodeState::Leaf;
    n.leaf_price = n.exploration.best_price;

    if (n.exploration.partial) {
      n.stop_reason = "budget";
      continue;
    }
    if (n.depth >= config.max_depth) {
      n.stop_reason = "depth";
      continue;
    }

    ContrastSets sets;
    try {
      sets = build_contrast_sets(n.exploration, config.min_high);
    } catch (const EmptyContrastError&) {
      n.stop_reason = "no_contrast";
      continue;
    }
    if (sets.high.empty() || sets.low.empty()) {
      n.stop_reason = "no_contrast";
      continue;
    }

    const auto limit = analyst.sample_limit();
    const auto high = sample_items(sets.high, by_id, limit, derive_seed(config.sample_seed, id + "/H"));
    const auto low = sample_items(sets.low, by_id, limit, derive_seed(config.sample_seed, id + "/L"));
    auto proposal = analyst.propose_split(high, low);
    if (!proposal) {
      n.stop_reason = "no_proposal";
      continue;
    }
    proposal->validate();

    // Annotate every member of the node, not only the contrast samples.
    std::vector<PublicItem> missing;
    for (const auto& item_id : n.items) {
      if (!tree.annotations_.find(item_id, proposal->attribute.name)) {
        missing.push_back(*by_id.at(item_id));
      }
    }
    if (!missing.empty()) {
      auto fresh = analyst.annotate(missing, proposal->attribute);
      if (fresh.size() != missing.size()) {
        throw AnalystError("annotate returned the wrong number of results");
      }
      for (auto& a : fresh) tree.annotations_.put(std::move(a));
    }

    TreeNode low_child, high_child;
    for (const auto& item_id : n.items) {
      const auto* annotation = tree.annotations_.find(item_id, proposal->attribute.name);
      auto& target = apply_rule(*annotation, *proposal) == Side::High ? high_child : low_child;
      target.items.push_back(item_id);
    }

    DiscardedSplit record{id, *proposal, std::nullopt, std::nullopt, ""};
    if (low_child.items.size() < config.min_leaf_items ||
        high_child.items.size() < config.min_leaf_items) {
      record.reason = n.stop_reason = "min_leaf";
      tree.discarded_.push_back(std::move(record));
      continue;
    }

    const char* suffixes[2] = {"/L", "/H"};
    TreeNode* children[2] = {&low_child, &high_child};
    for (int c = 0; c < 2; ++c) {
      auto& child = *children[c];
      child.node_id = id + suffixes[c];
      child.depth = n.depth + 1;
      child.category = n.category;
      child.grid_baseline = n.exploration.best_price;
      child.exploration = explore_node(child, stream, market, config);
      child.leaf_price = child.exploration.best_price;
    }
    record.low_price = low_child.exploration.best_price;
    record.high_price = high_child.exploration.best_price;

    if (low_child.exploration.partial || high_child.exploration.partial) {
      tree.budget_exhausted_ = true;
      record.reason = n.stop_reason = "budget";
      tree.discarded_.push_back(std::move(record));
      continue;
    }
    if (!validate_split(low_child.exploration, high_child.exploration)) {
      record.reason = n.stop_reason = "same_price";
      tree.discarded_.push_back(std::move(record));
      continue;
    }

    n.state = NodeState::Internal;
    n.split = std::move(*proposal);
    n.low_child = low_child.node_id;
    n.high_child = high_child.node_id;
    n.stop_reason.clear();
    queue.push_back(low_child.node_id);
    queue.push_back(high_child.node_id);
    tree.nodes_.emplace(low_child.node_id, std::move(low_child));
    tree.nodes_.emplace(high_child.node_id, std::move(high_child));
  }
}

namespace {

json config_to_json(const GrowConfig& c) {
  return {{"arms", c.arms},
          {"trials_per_arm", c.trials_per_arm},
          {"span", c.span},
          {"root_baseline", c.root_baseline},
          {"max_depth", c.max_depth},
          {"min_high", c.min_high},
          {"min_leaf_items", c.min_leaf_items},
          {"sample_seed", c.sample_seed}};
}

GrowConfig config_from_json(const json& j) {
  GrowConfig c;
  c.arms = j.at("arms").get<int>();
  c.trials_per_arm = j.at("trials_per_arm").get<std::size_t>();
  c.span = j.at("span").get<double>();
  c.root_baseline = j.at("root_baseline").get<double>();
  c.max_depth = j.at("max_depth").get<int>();
  c.min_high = j.at("min_high").get<std::size_t>();
  c.min_leaf_items = j.at("min_leaf_items").get<std::size_t>();
  c.sample_seed = j.at("sample_seed").get<std::uint64_t>();
  return c;
}

}  // namespace

std::string serialize(const PricingTree& tree) {
  if (tree.nodes_.empty()) throw TreeError("cannot serialize an empty tree");
  json nodes = json::array();
  for (const auto& [id, n] : tree.nodes_) {
    json jn{{"node_id", n.node_id},
            {"depth", n.depth},
            {"category", n.category},
            {"items", n.items},
            {"state", n.state == NodeState::Internal ? "internal" : "leaf"},
            {"grid_baseline", n.grid_baseline},
            {"leaf_price", n.leaf_price},
            {"stop_reason", n.stop_reason},
            {"exploration", to_json(n.exploration)}};
    if (n.split) {
      jn["split"] = to_json(*n.split);
      jn["low_child"] = n.low_child;
      jn["high_child"] = n.high_child;
    }
    nodes.push_back(std::move(jn));
  }
  json discarded = json::array();
  for (const auto& d : tree.discarded_) {
    json jd{{"node_id", d.node_id}, {"proposal", to_json(d.proposal)}, {"reason", d.reason}};
    if (d.low_price) jd["low_price"] = *d.low_price;
    if (d.high_price) jd["high_price"] = *d.high_price;
    discarded.push_back(std::move(jd));
  }
  json annotations = json::array();
  for (const auto& a : tree.annotations_.all()) annotations.push_back(to_json(a));
  json doc{{"schema", "lmtree.pricing_tree"},
           {"version", PricingTree::kSchemaVersion},
           {"config", config_to_json(tree.config_)},
           {"budget_exhausted", tree.budget_exhausted_},
           {"roots", tree.roots_},
           {"nodes", std::move(nodes)},
           {"discarded", std::move(discarded)},
           {"annotations", std::move(annotations)}};
  return doc.dump(1) + "\n";
}

PricingTree deserialize(const std::string& document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw TreeError(std::string("malformed tree document: ") + e.what());
  }
  if (!doc.is_object() || doc.value("schema", std::string{}) != "lmtree.pricing_tree") {
    throw TreeError("not a pricing tree document");
  }
  const int version = doc.value("version", -1);
  if (version != PricingTree::kSchemaVersion) {
    throw TreeError("unsupported tree document version " + std::to_string(version));
  }
  PricingTree tree;
  try {
    tree.config_ = config_from_json(doc.at("config"));
    tree.budget_exhausted_ = doc.at("budget_exhausted").get<bool>();
    tree.roots_ = doc.at("roots").get<std::map<std::string, std::string>>();
    for (const auto& jn : doc.at("nodes")) {
      TreeNode n;
      n.node_id = jn.at("node_id").get<std::string>();
      n.depth = jn.at("depth").get<int>();
      n.category = jn.at("category").get<std::string>();
      n.items = jn.at("items").get<std::vector<std::string>>();
      const auto state = jn.at("state").get<std::string>();
      if (state != "internal" && state != "leaf") throw TreeError("bad node state '" + state + "'");
      n.state = state == "internal" ? NodeState::Internal : NodeState::Leaf;
      n.grid_baseline = jn.at("grid_baseline").get<double>();
      n.leaf_price = jn.at("leaf_price").get<double>();
      n.stop_reason = jn.at("stop_reason").get<std::string>();
      n.exploration = exploration_from_json(jn.at("exploration"));
      if (jn.contains("split")) {
        n.split = proposal_from_json(jn.at("split"));
        n.low_child = jn.at("low_child").get<std::string>();
        n.high_child = jn.at("high_child").get<std::string>();
      }
      if ((n.state == NodeState::Internal) != n.split.has_value()) {
        throw TreeError("node '" + n.node_id + "' state and split disagree");
      }
      tree.nodes_.emplace(n.node_id, std::move(n));
    }
    for (const auto& jd : doc.at("discarded")) {
      DiscardedSplit d;
      d.node_id = jd.at("node_id").get<std::string>();
      d.proposal = proposal_from_json(jd.at("proposal"));
      d.reason = jd.at("reason").get<std::string>();
      if (jd.contains("low_price")) d.low_price = jd.at("low_price").get<double>();
      if (jd.contains("high_price")) d.high_price = jd.at("high_price").get<double>();
      tree.discarded_.push_back(std::move(d));
    }
    for (const auto& ja : doc.at("annotations")) tree.annotations_.put(annotation_from_json(ja));
  } catch (const json::exception& e) {
    throw TreeError(std::string("malformed tree document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw TreeError(std::string("malformed tree document: ") + e.what());
  }
  for (const auto& [category, id] : tree.roots_) tree.node(id);
  for (const auto& [id, n] : tree.nodes_) {
    if (n.state == NodeState::Internal) {
      tree.node(n.low_child);
      tree.node(n.high_child);
    }
  }
  return tree;
}

bool operator==(const PricingTree& a, const PricingTree& b) {
  if (a.nodes_.empty() || b.nodes_.empty()) return a.nodes_.empty() == b.nodes_.empty();
  return serialize(a) == serialize(b);
}

}  // namespace lmtree
