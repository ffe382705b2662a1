#include "lmtree/eval.hpp"

#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>

namespace lmtree {

EvalResult exploit(PricingPolicy& policy, const Catalog& catalog, QueryStream& stream,
                   Market& market) {
  EvalResult result;
  const Money before = market.revenue();
  for (const auto& arrival : stream.drain()) {
    const auto outcome = market.offer(arrival, policy.price(catalog.at(arrival.item_id)));
    ++result.offers;
    result.purchases += outcome.purchased ? 1 : 0;
  }
  result.revenue = market.revenue() - before;
  return result;
}

EvalResult evaluate(PricingPolicy& policy, const Catalog& catalog,
                    std::span<const Query> queries, Phase phase, std::uint64_t seed,
                    std::ostream* trace) {
  Market market(queries);
  market.set_log(trace);
  auto stream = QueryStream::from_queries(queries, phase, seed);
  auto result = exploit(policy, catalog, stream, market);
  // Sum per pass on the market's own accumulator so train and test agree.
  result.revenue = market.revenue();
  return result;
}

Money oracle_upper_bound(std::span<const Query> queries) {
  Money total = 0.0;
  for (const auto& q : queries) total += q.wtp;
  return total;
}

std::optional<double> pct_change(Money value, Money base) {
  if (base == 0.0) return std::nullopt;
  return 100.0 * (value / base - 1.0);
}

RevenueReport build_report(std::vector<PolicyRevenue> policies, Money train_upper_bound,
                           Money test_upper_bound, std::string config_hash,
                           std::vector<std::pair<std::string, std::string>> metadata,
                           std::vector<LeafPrice> leaf_prices) {
  const PolicyRevenue* single = nullptr;
  const PolicyRevenue* category = nullptr;
  for (const auto& p : policies) {
    if (p.name == kSinglePolicy) single = &p;
    if (p.name == kCategoryPolicy) category = &p;
  }
  if (single == nullptr) throw EvalError("report needs the single_price baseline");
  if (category == nullptr) throw EvalError("report needs the category_2 baseline");

  RevenueReport report;
  report.config_hash = std::move(config_hash);
  report.metadata = std::move(metadata);
  report.train_upper_bound = train_upper_bound;
  report.test_upper_bound = test_upper_bound;
  report.leaf_prices = std::move(leaf_prices);
  for (const auto& p : policies) {
    ReportRow row;
    row.policy = p;
    row.pct_vs_single = pct_change(p.test_revenue, single->test_revenue);
    row.pct_vs_2cat = pct_change(p.test_revenue, category->test_revenue);
    if (test_upper_bound > 0.0) row.capture_rate = p.test_revenue / test_upper_bound;
    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

std::string fixed(double value, int digits) {
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%.*f", digits, value);
  return buffer;
}

std::string fixed(const std::optional<double>& value, int digits) {
  return value ? fixed(*value, digits) : "";
}

std::string signed_pct(const std::optional<double>& value) {
  if (!value) return "n/a";
  char buffer[64];
  std::snprintf(buffer, sizeof buffer, "%+.1f%%", *value);
  return buffer;
}

std::string pad(const std::string& text, std::size_t width, bool right) {
  if (text.size() >= width) return text;
  const std::string fill(width - text.size(), ' ');
  return right ? fill + text : text + fill;
}

}  // namespace

std::string RevenueReport::to_csv() const {
  std::ostringstream out;
  out << "# config_hash=" << config_hash << '\n';
  for (const auto& [key, value] : metadata) out << "# " << key << '=' << value << '\n';
  out << "policy,train_revenue,test_revenue,pct_vs_single,pct_vs_2cat,capture_rate,segments,"
         "budget_exhausted\n";
  for (const auto& row : rows) {
    out << row.policy.name << ',' << fixed(row.policy.train_revenue, 6) << ','
        << fixed(row.policy.test_revenue, 6) << ',' << fixed(row.pct_vs_single, 4) << ','
        << fixed(row.pct_vs_2cat, 4) << ',' << fixed(row.capture_rate, 6) << ','
        << row.policy.segments << ',' << (row.policy.budget_exhausted ? "true" : "false")
        << '\n';
  }
  out << "oracle_upper_bound," << fixed(train_upper_bound, 6) << ','
      << fixed(test_upper_bound, 6) << ",,,1.000000,,false\n";
  return out.str();
}

std::string RevenueReport::to_text() const {
  std::ostringstream out;
  out << "Revenue by pricing strategy\n";
  out << "config hash: " << config_hash << '\n';
  for (const auto& [key, value] : metadata) out << key << ": " << value << '\n';
  out << '\n';
  out << pad("policy", 14, false) << pad("train $", 12, true) << pad("test $", 12, true)
      << pad("vs single", 11, true) << pad("vs 2-cat", 11, true) << pad("capture", 9, true)
      << pad("segments", 10, true) << '\n';
  for (const auto& row : rows) {
    std::string name = row.policy.name + (row.policy.budget_exhausted ? "*" : "");
    out << pad(name, 14, false) << pad(fixed(row.policy.train_revenue, 2), 12, true)
        << pad(fixed(row.policy.test_revenue, 2), 12, true)
        << pad(signed_pct(row.pct_vs_single), 11, true)
        << pad(signed_pct(row.pct_vs_2cat), 11, true)
        << pad(row.capture_rate ? fixed(100.0 * *row.capture_rate, 1) + "%" : "n/a", 9, true)
        << pad(std::to_string(row.policy.segments), 10, true) << '\n';
  }
  out << pad("upper bound", 14, false) << pad(fixed(train_upper_bound, 2), 12, true)
      << pad(fixed(test_upper_bound, 2), 12, true) << '\n';
  bool any_flag = false;
  for (const auto& row : rows) any_flag = any_flag || row.policy.budget_exhausted;
  if (any_flag) out << "* query budget exhausted during training\n";
  if (!leaf_prices.empty()) {
    out << "\nLearned prices\n";
    for (const auto& leaf : leaf_prices) {
      out << pad(leaf.policy, 14, false) << pad(leaf.segment, 34, false)
          << pad(fixed(leaf.price, 4), 10, true) << pad(std::to_string(leaf.items), 8, true)
          << " items\n";
    }
  }
  return out.str();
}

SplitShareTable split_shares(PricingTree& tree, Analyst* analyst, const Catalog& catalog,
                             std::span<const ItemId> items) {
  SplitShareTable table;
  std::map<std::pair<std::string, std::string>, SplitShareRow> rows;
  bool any_split = false;
  for (const auto& [category, root_id] : tree.roots()) {
    const auto& root = tree.node(root_id);
    if (root.state != NodeState::Internal) continue;
    any_split = true;
    const auto& proposal = *root.split;
    for (const auto& id : items) {
      const auto& item = catalog.at(id);
      if (item.category != category) continue;
      const Annotation* annotation = tree.annotations().find(id, proposal.attribute.name);
      if (annotation == nullptr) {
        if (analyst == nullptr) throw EvalError("item '" + id + "' lacks an annotation");
        auto fresh = analyst->annotate(std::span<const PublicItem>(&item, 1), proposal.attribute);
        tree.annotations().put(std::move(fresh.at(0)));
        annotation = tree.annotations().find(id, proposal.attribute.name);
      }
      const std::string editorial(privileged::editorial_category(catalog, id));
      auto& row = rows[{category, editorial}];
      row.category = category;
      row.editorial_category = editorial;
      ++row.items;
      row.high_items += apply_rule(*annotation, proposal) == Side::High ? 1 : 0;
    }
  }
  if (!any_split) {
    table.note = "no root split retained; every item shares its category's price";
    return table;
  }
  for (auto& [key, row] : rows) table.rows.push_back(std::move(row));
  return table;
}

std::string SplitShareTable::to_csv() const {
  std::ostringstream out;
  if (!note.empty()) out << "# " << note << '\n';
  out << "category,editorial_category,items,high_items,high_share\n";
  for (const auto& row : rows) {
    out << row.category << ',' << row.editorial_category << ',' << row.items << ','
        << row.high_items << ',' << fixed(row.share(), 6) << '\n';
  }
  return out.str();
}

std::string SplitShareTable::to_text() const {
  std::ostringstream out;
  out << "Share of queries assigned to the high-value leaf\n";
  if (!note.empty()) {
    out << note << '\n';
    return out.str();
  }
  for (const auto& row : rows) {
    out << pad(row.category, 10, false) << pad(row.editorial_category, 34, false)
        << pad(std::to_string(row.items), 7, true)
        << pad(fixed(100.0 * row.share(), 1) + "%", 9, true) << '\n';
  }
  return out.str();
}

}  // namespace lmtree
