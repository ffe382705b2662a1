#include <algorithm>
#include <memory>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"
#include "lmtree/baselines.hpp"
#include "lmtree/eval.hpp"
#include "lmtree/synth.hpp"
#include "lmtree/tree.hpp"

using namespace lmtree;
using namespace testutil;

namespace {

GrowConfig synthetic_config(int depth) {
  GrowConfig c;
  c.arms = 7;
  c.trials_per_arm = 100;
  c.span = 10.0;
  c.root_baseline = 0.1;
  c.max_depth = depth;
  c.sample_seed = 1;
  return c;
}

/// Default synthetic corpus, split, and a tree grown on its train stream.
struct Grown {
  std::vector<ContentItem> items;
  std::unique_ptr<Catalog> catalog;
  CorpusSplit split;
  std::vector<PublicItem> train;
  std::unique_ptr<OracleAnalyst> oracle;
  PricingTree tree;
};

std::unique_ptr<Grown> grow_synthetic(std::uint64_t seed, const GrowConfig& config) {
  auto g = std::make_unique<Grown>();
  g->items = synth_corpus(default_synth_spec(), seed);
  const WtpModel model{0.004, 0.0, 9};
  calibrate_all(g->items, model);
  g->catalog = std::make_unique<Catalog>(g->items);
  g->split = stratified_split(g->items, 0.193, model, seed);
  for (const auto& id : g->split.train_items) g->train.push_back(g->catalog->at(id));
  g->oracle = std::make_unique<OracleAnalyst>(*g->catalog);
  Market market(g->split.train_queries);
  auto stream = stream_for(g->split, Phase::Train, seed);
  g->tree = init_roots(g->train);
  grow(g->tree, g->train, stream, market, *g->oracle, config);
  return g;
}

ExplorationResult result_at(double best) {
  ExplorationResult r;
  r.best_price = best;
  return r;
}

/// Exact best arm for a set of noiseless valuations.
double enumerated_best(const std::vector<double>& arms, const std::vector<double>& values) {
  double best_price = arms.front(), best = -1.0;
  for (double p : arms) {
    double revenue = 0.0;
    for (double v : values) revenue += p <= v ? p : 0.0;
    if (revenue > best * (1.0 + 1e-12)) {
      best = revenue;
      best_price = p;
    }
  }
  return best_price;
}

}  // namespace

TEST_SUITE("tree") {
  TEST_CASE("init_roots on the archive-shaped corpus") {
    const auto items = synth_corpus(archive_shaped_spec(), 1);
    std::vector<PublicItem> views;
    for (const auto& item : items) views.push_back(item.public_view());
    const auto tree = init_roots(views);
    REQUIRE(tree.roots().size() == 2);
    CHECK(tree.node("artikel").items.size() == 1624);
    CHECK(tree.node("news").items.size() == 7315);
    CHECK(tree.leaves().size() == 2);
  }

  TEST_CASE("init_roots partitions by category") {
    std::vector<PublicItem> views = {{"a", "x", "", ""}, {"b", "y", "", ""}, {"c", "z", "", ""}, {"d", "x", "", ""}};
    const auto tree = init_roots(views);
    CHECK(tree.roots().size() == 3);
    CHECK(tree.node("x").items == std::vector<ItemId>{"a", "d"});
    const auto single = init_roots(std::span(views).first(1));
    CHECK(single.roots().size() == 1);
    CHECK_THROWS_AS(init_roots({}), TreeError);
  }

  TEST_CASE("validate_split") {
    CHECK(validate_split(result_at(0.081), result_at(0.148)));
    CHECK_FALSE(validate_split(result_at(0.028), result_at(0.028)));
    const auto same = result_at(0.3);
    CHECK_FALSE(validate_split(same, same));
  }

  TEST_CASE("D=0 gives the category prices") {
    const auto g = grow_synthetic(1, synthetic_config(0));
    CHECK(g->tree.leaves().size() == 2);
    for (const auto* leaf : g->tree.leaves()) CHECK(leaf->stop_reason == "depth");

    Market market(g->split.train_queries);
    auto stream = stream_for(g->split, Phase::Train, 1);
    const auto flat = train_category_prices(*g->catalog, g->split.train_items, stream, market,
                                            Partition::Category, FlatGridConfig{7, 100, 10.0, 0.1});
    for (const auto& [category, root] : g->tree.roots()) {
      CHECK(g->tree.node(root).leaf_price == flat.prices.at(category));
    }
  }

  TEST_CASE("D=1 with the oracle splits on the planted attributes in the right order") {
    const auto g = grow_synthetic(1, synthetic_config(1));
    const auto& artikel = g->tree.node("artikel");
    const auto& news = g->tree.node("news");
    REQUIRE(artikel.state == NodeState::Internal);
    REQUIRE(news.state == NodeState::Internal);
    CHECK(artikel.split->attribute.name == "high_end_gpu");
    CHECK(news.split->attribute.name == "market_value");
    CHECK(news.split->rule_kind == RuleKind::Threshold);

    std::map<ItemId, double> center;
    for (const auto& item : g->items) center[item.item_id] = *item.wtp_center;
    for (const auto* root : {&artikel, &news}) {
      const auto& low = g->tree.node(root->low_child);
      const auto& high = g->tree.node(root->high_child);
      const auto grid = make_grid(root->exploration.best_price, 7, 10.0).arms;
      auto values = [&](const TreeNode& n) {
        std::vector<double> v;
        for (const auto& id : n.items) v.push_back(center.at(id));
        return v;
      };
      const double low_exact = enumerated_best(grid, values(low));
      const double high_exact = enumerated_best(grid, values(high));
      REQUIRE(low_exact != high_exact);
      CHECK((low.leaf_price < high.leaf_price) == (low_exact < high_exact));
      CHECK(high.leaf_price > low.leaf_price);
    }
  }

  TEST_CASE("structural invariants of a grown tree") {
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto g = grow_synthetic(seed, synthetic_config(3));
      const auto& tree = g->tree;

      // Partition: leaves are disjoint and cover the training items.
      std::multiset<ItemId> covered;
      for (const auto* leaf : tree.leaves()) covered.insert(leaf->items.begin(), leaf->items.end());
      CHECK(covered.size() == g->train.size());
      CHECK(std::set<ItemId>(covered.begin(), covered.end()).size() == covered.size());

      for (const auto& [id, n] : tree.nodes()) {
        CHECK(n.depth <= 3);
        if (n.state != NodeState::Internal) continue;
        const auto& low = tree.node(n.low_child);
        const auto& high = tree.node(n.high_child);
        // Anchoring.
        CHECK(low.grid_baseline == n.exploration.best_price);
        CHECK(high.grid_baseline == n.exploration.best_price);
        CHECK(low.leaf_price != high.leaf_price);
        CHECK(n.node_id + "/L" == low.node_id);
        // Honesty: the parent's trials never price its children.
        std::set<QueryId> parent;
        for (const auto& arm : n.exploration.arms) {
          for (const auto& t : arm.records) parent.insert(t.query_id);
        }
        for (const auto* child : {&low, &high}) {
          for (const auto& arm : child->exploration.arms) {
            for (const auto& t : arm.records) CHECK_FALSE(parent.contains(t.query_id));
          }
        }
      }
    }
  }

  TEST_CASE("monotone refinement on the training pass") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      auto grown = grow_synthetic(seed, synthetic_config(3));
      auto flat = grow_synthetic(seed, synthetic_config(0));
      TreePricing tree_policy(grown->tree, grown->oracle.get());
      TreePricing flat_policy(flat->tree, flat->oracle.get());
      const auto a = evaluate(tree_policy, *grown->catalog, grown->split.train_queries, Phase::Train, seed);
      const auto b = evaluate(flat_policy, *flat->catalog, flat->split.train_queries, Phase::Train, seed);
      CHECK(a.revenue >= b.revenue);
    }
  }

  TEST_CASE("routing makes no proposal calls and caches annotations") {
    auto g = grow_synthetic(2, synthetic_config(2));
    auto& oracle = *g->oracle;
    const auto proposals = oracle.proposal_calls();
    const auto annotations = oracle.annotation_calls();

    // Training items are already annotated.
    for (const auto& item : g->train) g->tree.route(item, &oracle);
    CHECK(oracle.annotation_calls() == annotations);

    // Unseen test items are annotated once, then looked up.
    const auto& probe = g->catalog->at(g->split.test_items.front());
    CHECK_THROWS_AS(std::as_const(g->tree).route(probe), TreeError);
    const auto& leaf = g->tree.route(probe, &oracle);
    const auto after_first = oracle.annotation_calls();
    CHECK(after_first > annotations);
    CHECK(&g->tree.route(probe, &oracle) == &leaf);
    CHECK(&std::as_const(g->tree).route(probe) == &leaf);
    CHECK(oracle.annotation_calls() == after_first);
    CHECK(oracle.proposal_calls() == proposals);

    const PublicItem stranger{"x", "podcast", "", ""};
    CHECK_THROWS_WITH_AS(g->tree.route(stranger, &oracle), doctest::Contains("podcast"), TreeError);
  }

  TEST_CASE("serialization round trip") {
    auto g = grow_synthetic(3, synthetic_config(3));
    const auto text = serialize(g->tree);
    const auto back = deserialize(text);
    CHECK(back == g->tree);
    CHECK(serialize(back) == text);
    CHECK(back.leaves().size() == g->tree.leaves().size());
    for (const auto& item : g->train) CHECK(back.route(item).node_id == g->tree.route(item).node_id);

    auto doc = nlohmann::json::parse(text);
    doc["version"] = 99;
    CHECK_THROWS_AS(deserialize(doc.dump()), TreeError);
    CHECK_THROWS_AS(deserialize("{\"nodes\": 3"), TreeError);
    CHECK_THROWS_AS(deserialize("{}"), TreeError);
    CHECK_THROWS_AS(serialize(PricingTree{}), TreeError);
  }

  TEST_CASE("an undersized stream flags budget exhaustion") {
    std::vector<ContentItem> items;
    for (int i = 0; i < 30; ++i) items.push_back(make_item("a" + std::to_string(i), "artikel", 0.01 * (i + 1)));
    const Catalog catalog(items);
    OracleAnalyst oracle(catalog);
    const auto queries = exact_queries(items, 2);  // 60 arrivals, 5 x 100 needed
    Market market(queries);
    auto stream = QueryStream::from_queries(queries, Phase::Train, 1);
    std::vector<PublicItem> views(catalog.items().begin(), catalog.items().end());
    auto tree = init_roots(views);
    auto config = synthetic_config(2);
    config.arms = 5;
    grow(tree, views, stream, market, oracle, config);
    CHECK(tree.budget_exhausted());
    const auto& root = tree.node("artikel");
    CHECK(root.state == NodeState::Leaf);
    CHECK(root.stop_reason == "budget");
    CHECK(root.exploration.partial);
    CHECK(root.leaf_price == root.exploration.best_price);
  }

  TEST_CASE("a split with a child under min_leaf_items is rejected before exploration") {
    auto config = synthetic_config(1);
    config.min_leaf_items = 100000;
    const auto g = grow_synthetic(1, config);
    CHECK(g->tree.leaves().size() == 2);
    REQUIRE_FALSE(g->tree.discarded().empty());
    for (const auto& d : g->tree.discarded()) {
      CHECK(d.reason == "min_leaf");
      CHECK_FALSE(d.low_price.has_value());
    }
  }

  TEST_CASE("grow config errors") {
    auto bad = synthetic_config(1);
    bad.arms = 1;
    CHECK_THROWS_AS(bad.validate(), TreeError);
    bad = synthetic_config(-1);
    CHECK_THROWS_AS(bad.validate(), TreeError);
  }
}
