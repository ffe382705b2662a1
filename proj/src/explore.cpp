#include "lmtree/explore.hpp"

#include <cmath>
#include <tuple>

namespace lmtree {

PriceGrid make_grid(Money baseline, int k, double span) {
  if (!(baseline > 0.0)) throw ExploreError("grid baseline must be > 0");
  if (k < 2) throw ExploreError("grid needs at least 2 arms");
  if (!(span > 1.0)) throw ExploreError("grid span must be > 1");
  PriceGrid grid;
  grid.baseline = baseline;
  grid.span = span;
  const double lo = std::log(baseline / span);
  const double step = 2.0 * std::log(span) / static_cast<double>(k - 1);
  for (int j = 0; j < k; ++j) grid.arms.push_back(std::exp(lo + step * j));
  // Pin the middle arm (odd K) to the anchor exactly; exp/log round-trips drift.
  if (k % 2 == 1) grid.arms[static_cast<std::size_t>(k / 2)] = baseline;
  return grid;
}

PriceGrid grid_from_arms(std::vector<Money> arms) {
  if (arms.empty()) throw ExploreError("grid needs at least 1 arm");
  for (std::size_t j = 0; j < arms.size(); ++j) {
    if (arms[j] < 0.0) throw ExploreError("negative arm price");
    if (j > 0 && !(arms[j] > arms[j - 1])) throw ExploreError("arms must be strictly increasing");
  }
  PriceGrid grid;
  grid.baseline = arms[arms.size() / 2];
  grid.span = arms.front() > 0.0 ? std::sqrt(arms.back() / arms.front()) : 0.0;
  grid.arms = std::move(arms);
  return grid;
}

std::size_t ExplorationResult::total_trials() const {
  std::size_t n = 0;
  for (const auto& arm : arms) n += arm.trials;
  return n;
}

ExplorationResult run_exploration(std::string node_id, const ItemSet& node_items,
                                  QueryStream& stream, Market& market, const PriceGrid& grid,
                                  std::size_t trials_per_arm) {
  if (node_items.empty()) throw ExploreError("node '" + node_id + "' has no items");
  if (grid.arms.empty()) throw ExploreError("empty price grid");
  const std::size_t k = grid.size();

  ExplorationResult result;
  result.node_id = std::move(node_id);
  result.arms.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    result.arms[j].price = grid.arms[j];
    result.arms[j].records.reserve(trials_per_arm);
  }

  const auto arrivals = stream.take_matching(
      [&](const Arrival& a) { return node_items.contains(a.item_id); }, k * trials_per_arm);
  for (std::size_t t = 0; t < arrivals.size(); ++t) {
    auto& arm = result.arms[t % k];
    const auto outcome = market.offer(arrivals[t], arm.price);
    ++arm.trials;
    if (outcome.purchased) {
      ++arm.purchases;
      result.collected += outcome.price;
    }
    arm.records.push_back(Trial{outcome.query_id, outcome.item_id, outcome.purchased});
  }
  result.partial = arrivals.size() < k * trials_per_arm;

  if (!arrivals.empty()) {
    std::tie(result.best_price, result.best_revenue) = best_arm(result);
  } else {
    result.best_price = grid.baseline;
    result.best_revenue = 0.0;
  }
  return result;
}

std::pair<Money, Money> best_arm(const ExplorationResult& result) {
  const ArmStats* best = nullptr;
  for (const auto& arm : result.arms) {
    if (arm.trials == 0) continue;
    // Strict improvement only: arms are ascending, so ties keep the lower price.
    // The relative slack absorbs rounding in price * rate products.
    if (best == nullptr || arm.revenue() > best->revenue() * (1.0 + 1e-12) + 1e-15) best = &arm;
  }
  if (best == nullptr) throw ExploreError("no arm of '" + result.node_id + "' has trials");
  return {best->price, best->revenue()};
}

}  // namespace lmtree
