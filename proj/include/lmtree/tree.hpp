#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lmtree/analyst.hpp"
#include "lmtree/explore.hpp"
#include "lmtree/market.hpp"

namespace lmtree {

class TreeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GrowConfig {
  int arms = 7;                      // K
  std::size_t trials_per_arm = 300;  // M
  double span = 10.0;
  Money root_baseline = 0.05;
  int max_depth = 3;  // D
  std::size_t min_high = 5;
  std::size_t min_leaf_items = 20;
  /// Seeds the choice of which H/L items go into a size-limited analyst sample.
  std::uint64_t sample_seed = 0;

  void validate() const;
};

enum class NodeState { Leaf, Internal };

struct TreeNode {
  std::string node_id;
  int depth = 0;
  std::string category;
  std::vector<ItemId> items;  // sorted
  NodeState state = NodeState::Leaf;
  std::optional<SplitProposal> split;  // internal only
  std::string low_child;               // internal only
  std::string high_child;              // internal only
  Money grid_baseline = 0.0;           // anchor of this node's grid
  Money leaf_price = 0.0;              // leaf only
  ExplorationResult exploration;
  /// Why the node stopped: "depth", "no_contrast", "no_proposal", "min_leaf",
  /// "same_price", "budget". Empty for internal nodes.
  std::string stop_reason;
};

/// Record of a split that was tried and rejected, kept for reporting.
struct DiscardedSplit {
  std::string node_id;
  SplitProposal proposal;
  std::optional<Money> low_price;
  std::optional<Money> high_price;
  std::string reason;
};

class PricingTree {
 public:
  static constexpr int kSchemaVersion = 1;

  /// Node ids of the roots, one per category, in name order.
  const std::map<std::string, std::string>& roots() const { return roots_; }
  const TreeNode& node(std::string_view node_id) const;
  TreeNode& node(std::string_view node_id);
  const std::map<std::string, TreeNode, std::less<>>& nodes() const { return nodes_; }
  std::vector<const TreeNode*> leaves() const;

  AnnotationStore& annotations() { return annotations_; }
  const AnnotationStore& annotations() const { return annotations_; }

  const std::vector<DiscardedSplit>& discarded() const { return discarded_; }
  bool budget_exhausted() const { return budget_exhausted_; }
  const GrowConfig& config() const { return config_; }

  /// Leaf reached by the item. Annotations missing from the store are
  /// computed through `analyst` (annotate only) and cached; with no analyst a
  /// missing annotation is an error.
  const TreeNode& route(const PublicItem& item, Analyst* analyst);
  /// Read-only routing; throws when an annotation is missing.
  const TreeNode& route(const PublicItem& item) const;

  Money price(const PublicItem& item, Analyst* analyst) { return route(item, analyst).leaf_price; }

  friend PricingTree init_roots(std::span<const PublicItem> items);
  friend void grow(PricingTree& tree, std::span<const PublicItem> items, QueryStream& stream,
                   Market& market, Analyst& analyst, const GrowConfig& config);
  friend std::string serialize(const PricingTree& tree);
  friend PricingTree deserialize(const std::string& document);

  friend bool operator==(const PricingTree& a, const PricingTree& b);

 private:
  const TreeNode& route_impl(const PublicItem& item, Analyst* analyst, bool allow_annotate);

  std::map<std::string, std::string> roots_;  // category -> node id
  std::map<std::string, TreeNode, std::less<>> nodes_;
  AnnotationStore annotations_;
  std::vector<DiscardedSplit> discarded_;
  GrowConfig config_;
  bool budget_exhausted_ = false;
};

/// One root per distinct category holding exactly that category's items.
PricingTree init_roots(std::span<const PublicItem> items);

/// Breadth-first growth. All roots are explored first (categories in name
/// order); each queued node then builds contrast sets from its own trials,
/// asks the analyst for a rule, annotates its items, explores both tentative
/// children on fresh arrivals and keeps the split only when the children's
/// best prices differ. `items` must cover every item in the tree.
void grow(PricingTree& tree, std::span<const PublicItem> items, QueryStream& stream,
          Market& market, Analyst& analyst, const GrowConfig& config);

/// Retain iff the children's best prices differ.
bool validate_split(const ExplorationResult& low, const ExplorationResult& high);

/// Versioned JSON document: config, nodes with trial logs, annotations.
std::string serialize(const PricingTree& tree);
PricingTree deserialize(const std::string& document);

}  // namespace lmtree
