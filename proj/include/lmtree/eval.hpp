#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lmtree/analyst.hpp"
#include "lmtree/baselines.hpp"
#include "lmtree/corpus.hpp"
#include "lmtree/market.hpp"
#include "lmtree/tree.hpp"

namespace lmtree {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Frozen price lookup. Sees public item fields only.
class PricingPolicy {
 public:
  virtual ~PricingPolicy() = default;
  virtual Money price(const PublicItem& item) = 0;
};

class FlatPricing final : public PricingPolicy {
 public:
  explicit FlatPricing(const FlatPolicy& policy) : policy_(policy) {}
  Money price(const PublicItem& item) override { return policy_.price(item); }

 private:
  const FlatPolicy& policy_;
};

/// Routes through the tree; unseen items are annotated lazily via `analyst`.
class TreePricing final : public PricingPolicy {
 public:
  TreePricing(PricingTree& tree, Analyst* analyst) : tree_(tree), analyst_(analyst) {}
  Money price(const PublicItem& item) override { return tree_.price(item, analyst_); }

 private:
  PricingTree& tree_;
  Analyst* analyst_;
};

class ConstantPricing final : public PricingPolicy {
 public:
  explicit ConstantPricing(Money price) : price_(price) {}
  Money price(const PublicItem&) override { return price_; }

 private:
  Money price_;
};

struct EvalResult {
  Money revenue = 0.0;
  std::size_t offers = 0;
  std::size_t purchases = 0;

  double conversion() const {
    return offers == 0 ? 0.0 : static_cast<double>(purchases) / static_cast<double>(offers);
  }
};

/// Offers every remaining arrival of the stream at the policy's price.
EvalResult exploit(PricingPolicy& policy, const Catalog& catalog, QueryStream& stream,
                   Market& market);

/// One frozen pass over the queries in the stream order fixed by `seed`.
/// Each call uses a fresh market. `trace` receives one JSON line per offer.
EvalResult evaluate(PricingPolicy& policy, const Catalog& catalog,
                    std::span<const Query> queries, Phase phase, std::uint64_t seed,
                    std::ostream* trace = nullptr);

/// Revenue of charging every query its own WTP: the sum of query WTPs.
Money oracle_upper_bound(std::span<const Query> queries);

/// 100 * (value / base - 1); nullopt when base is zero.
std::optional<double> pct_change(Money value, Money base);

struct PolicyRevenue {
  std::string name;
  Money train_revenue = 0.0;
  Money test_revenue = 0.0;
  std::size_t segments = 0;
  bool budget_exhausted = false;
};

struct ReportRow {
  PolicyRevenue policy;
  std::optional<double> pct_vs_single;
  std::optional<double> pct_vs_2cat;
  std::optional<double> capture_rate;
};

struct LeafPrice {
  std::string policy;
  std::string segment;
  Money price = 0.0;
  std::size_t items = 0;
};

struct RevenueReport {
  std::string config_hash;
  std::vector<std::pair<std::string, std::string>> metadata;  // ordered key/value
  Money train_upper_bound = 0.0;
  Money test_upper_bound = 0.0;
  std::vector<ReportRow> rows;
  std::vector<LeafPrice> leaf_prices;

  std::string to_csv() const;
  std::string to_text() const;
};

inline constexpr std::string_view kSinglePolicy = "single_price";
inline constexpr std::string_view kCategoryPolicy = "category_2";
inline constexpr std::string_view kEditorialPolicy = "editorial_8";
inline constexpr std::string_view kTreePolicy = "lm_tree";

/// Percentages against the policies named single_price and category_2; both
/// must be present.
RevenueReport build_report(std::vector<PolicyRevenue> policies, Money train_upper_bound,
                           Money test_upper_bound, std::string config_hash,
                           std::vector<std::pair<std::string, std::string>> metadata,
                           std::vector<LeafPrice> leaf_prices = {});

struct SplitShareRow {
  std::string category;
  std::string editorial_category;
  std::size_t items = 0;
  std::size_t high_items = 0;

  double share() const {
    return items == 0 ? 0.0 : static_cast<double>(high_items) / static_cast<double>(items);
  }
};

struct SplitShareTable {
  std::vector<SplitShareRow> rows;  // sorted by (category, editorial)
  std::string note;                 // set when the tree has no root split

  std::string to_csv() const;
  std::string to_text() const;
};

/// For each category whose root split was retained, the share of items (and
/// hence of their queries) routed to the high side, per editorial label.
SplitShareTable split_shares(PricingTree& tree, Analyst* analyst, const Catalog& catalog,
                             std::span<const ItemId> items);

}  // namespace lmtree
