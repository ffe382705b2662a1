#include "lmtree/market.hpp"

#include <ostream>

#include "json.hpp"
#include "lmtree/random.hpp"

namespace lmtree {

Market::Market(std::span<const Query> queries) {
  wtp_.reserve(queries.size());
  for (const auto& q : queries) {
    if (!wtp_.emplace(q.query_id, q.wtp).second) {
      throw MarketError("duplicate query_id " + std::to_string(q.query_id));
    }
  }
}

PurchaseOutcome Market::offer(const Arrival& arrival, Money price) {
  if (!(price >= 0.0)) throw MarketError("negative price offered");
  auto it = wtp_.find(arrival.query_id);
  if (it == wtp_.end()) {
    throw MarketError("unknown query_id " + std::to_string(arrival.query_id));
  }
  if (!consumed_.insert(arrival.query_id).second) {
    throw MarketError("query_id " + std::to_string(arrival.query_id) + " offered twice");
  }
  PurchaseOutcome outcome{price <= it->second, price, arrival.query_id, arrival.item_id};
  ++offers_;
  if (outcome.purchased) {
    ++purchases_;
    revenue_ += price;
  }
  if (log_) {
    *log_ << nlohmann::json{{"query_id", outcome.query_id},
                            {"item_id", outcome.item_id},
                            {"price", outcome.price},
                            {"purchased", outcome.purchased}}
                 .dump()
          << '\n';
  }
  return outcome;
}

QueryStream::QueryStream(std::vector<Arrival> order, Phase phase)
    : order_(std::move(order)), phase_(phase) {
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i].arrival_index = i;
}

QueryStream QueryStream::from_queries(std::span<const Query> queries, Phase phase,
                                      std::uint64_t seed) {
  if (queries.empty()) {
    throw MarketError(std::string("no ") + std::string(to_string(phase)) + " queries");
  }
  std::vector<Arrival> order;
  order.reserve(queries.size());
  for (const auto& q : queries) order.push_back(Arrival{q.query_id, q.item_id, 0});
  Rng rng(derive_seed(seed, std::string("stream/") + std::string(to_string(phase))));
  rng.shuffle(std::span<Arrival>(order));
  return QueryStream(std::move(order), phase);
}

std::vector<Arrival> QueryStream::take_matching(const Predicate& pred, std::size_t n) {
  std::vector<Arrival> taken;
  if (n == 0) return taken;
  if (!pool_.empty()) {
    std::vector<Arrival> kept;
    kept.reserve(pool_.size());
    for (auto& a : pool_) {
      if (taken.size() < n && pred(a)) {
        taken.push_back(std::move(a));
      } else {
        kept.push_back(std::move(a));
      }
    }
    pool_ = std::move(kept);
  }
  while (taken.size() < n && cursor_ < order_.size()) {
    auto& a = order_[cursor_++];
    if (pred(a)) {
      taken.push_back(std::move(a));
    } else {
      pool_.push_back(std::move(a));
    }
  }
  return taken;
}

std::optional<Arrival> QueryStream::next() {
  if (!pool_.empty()) {
    Arrival a = std::move(pool_.front());
    pool_.erase(pool_.begin());
    return a;
  }
  if (cursor_ < order_.size()) return std::move(order_[cursor_++]);
  return std::nullopt;
}

std::vector<Arrival> QueryStream::drain() {
  std::vector<Arrival> rest = std::move(pool_);
  pool_.clear();
  for (; cursor_ < order_.size(); ++cursor_) rest.push_back(std::move(order_[cursor_]));
  return rest;
}

QueryStream stream_for(const CorpusSplit& split, Phase phase, std::uint64_t seed) {
  return QueryStream::from_queries(split.queries(phase), phase, seed);
}

}  // namespace lmtree
