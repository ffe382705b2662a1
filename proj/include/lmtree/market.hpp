#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lmtree/corpus.hpp"

namespace lmtree {

class MarketError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A buyer arrival as the pricing agent sees it: which item, never the WTP.
struct Arrival {
  QueryId query_id = 0;
  ItemId item_id;
  std::size_t arrival_index = 0;
};

struct PurchaseOutcome {
  bool purchased = false;
  Money price = 0.0;
  QueryId query_id = 0;
  ItemId item_id;
};

/// Posted-price seller side. Holds the hidden WTP of every query in one pass
/// and answers offers with a binary outcome. A query can be offered once.
class Market {
 public:
  explicit Market(std::span<const Query> queries);

  /// purchased = price <= wtp. Throws MarketError on a negative price, an
  /// unknown query, or a second offer to the same query.
  PurchaseOutcome offer(const Arrival& arrival, Money price);

  Money revenue() const { return revenue_; }
  std::size_t offers() const { return offers_; }
  std::size_t purchases() const { return purchases_; }

  /// Append one JSON line per offer: {query_id, item_id, price, purchased}.
  void set_log(std::ostream* log) { log_ = log; }

 private:
  std::unordered_map<QueryId, Money> wtp_;
  std::unordered_set<QueryId> consumed_;
  Money revenue_ = 0.0;
  std::size_t offers_ = 0;
  std::size_t purchases_ = 0;
  std::ostream* log_ = nullptr;
};

/// Single-consumer arrival stream with a side pool. Arrivals skipped while
/// looking for a particular node's items are parked in the pool and handed
/// out first to later requests, so every arrival is consumed at most once.
class QueryStream {
 public:
  using Predicate = std::function<bool(const Arrival&)>;

  QueryStream(std::vector<Arrival> order, Phase phase);

  /// Shuffled order over the queries, fixed by seed. Throws on empty input.
  static QueryStream from_queries(std::span<const Query> queries, Phase phase,
                                  std::uint64_t seed);

  Phase phase() const { return phase_; }
  std::size_t size() const { return order_.size(); }
  std::size_t remaining() const { return pool_.size() + (order_.size() - cursor_); }

  /// Up to n arrivals matching pred, pooled ones first, each in arrival order.
  std::vector<Arrival> take_matching(const Predicate& pred, std::size_t n);

  /// Next unconsumed arrival (pool first).
  std::optional<Arrival> next();

  /// All unconsumed arrivals in arrival order; leaves the stream empty.
  std::vector<Arrival> drain();

 private:
  std::vector<Arrival> order_;
  std::size_t cursor_ = 0;
  std::vector<Arrival> pool_;  // sorted by arrival_index
  Phase phase_;
};

QueryStream stream_for(const CorpusSplit& split, Phase phase, std::uint64_t seed);

}  // namespace lmtree
