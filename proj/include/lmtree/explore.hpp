#pragma once

#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "lmtree/corpus.hpp"
#include "lmtree/market.hpp"

namespace lmtree {

class ExploreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PriceGrid {
  std::vector<Money> arms;  // ascending
  Money baseline = 0.0;
  double span = 10.0;

  std::size_t size() const { return arms.size(); }
};

/// K prices spaced evenly in log space from baseline/span to baseline*span.
PriceGrid make_grid(Money baseline, int k, double span);

/// Grid from explicit ascending prices (used for hand-built test grids).
PriceGrid grid_from_arms(std::vector<Money> arms);

struct Trial {
  QueryId query_id = 0;
  ItemId item_id;
  bool purchased = false;

  friend bool operator==(const Trial&, const Trial&) = default;
};

struct ArmStats {
  Money price = 0.0;
  std::size_t trials = 0;
  std::size_t purchases = 0;
  std::vector<Trial> records;

  double conversion() const {
    return trials == 0 ? 0.0 : static_cast<double>(purchases) / static_cast<double>(trials);
  }
  Money revenue() const { return price * conversion(); }

  friend bool operator==(const ArmStats&, const ArmStats&) = default;
};

struct ExplorationResult {
  std::string node_id;
  std::vector<ArmStats> arms;
  Money best_price = 0.0;
  Money best_revenue = 0.0;
  /// Fewer than K*M trials were available.
  bool partial = false;
  /// Revenue actually collected during the trials.
  Money collected = 0.0;

  std::size_t total_trials() const;

  friend bool operator==(const ExplorationResult&, const ExplorationResult&) = default;
};

using ItemSet = std::unordered_set<ItemId>;

/// K*M arrivals of node items are taken from the stream; arrival t in that
/// order goes to arm t mod K. Every trial is a real offer on the market.
ExplorationResult run_exploration(std::string node_id, const ItemSet& node_items,
                                  QueryStream& stream, Market& market, const PriceGrid& grid,
                                  std::size_t trials_per_arm);

/// argmax_k price_k * r_k over arms with trials; ties go to the lower price.
/// Throws ExploreError when no arm has any trials.
std::pair<Money, Money> best_arm(const ExplorationResult& result);

}  // namespace lmtree
