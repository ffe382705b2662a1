#include "lmtree/pipeline.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lmtree/remote_analyst.hpp"
#include "lmtree/synth.hpp"

namespace lmtree {

using json = nlohmann::json;

Experiment prepare_experiment(const RunConfig& config) {
  config.validate();
  Experiment experiment;
  experiment.config = config;
  std::vector<ContentItem> items;
  if (!config.corpus_path.empty()) {
    auto loaded = load_corpus(config.corpus_path);
    items = std::move(loaded.items);
    experiment.dropped_empty = loaded.dropped_empty;
  } else {
    const auto spec = config.synth_spec == "default" ? default_synth_spec()
                                                     : load_synth_spec(config.synth_spec);
    items = synth_corpus(spec, config.synth_seed);
  }
  if (items.empty()) throw CorpusError("corpus has no usable items");
  calibrate_all(items, config.wtp);
  experiment.split = stratified_split(items, config.test_fraction, config.wtp, config.split_seed);
  experiment.catalog = std::make_unique<Catalog>(std::move(items));
  return experiment;
}

std::unique_ptr<Analyst> make_analyst(const RunConfig& config, const Catalog& catalog) {
  if (config.analyst.backend == "oracle") {
    return std::make_unique<OracleAnalyst>(
        catalog, OracleOptions{config.analyst.oracle_min_gap, config.analyst.oracle_min_ks});
  }
  RemoteOptions options;
  options.base_url = config.analyst.base_url;
  options.model = config.analyst.model;
  const char* key = std::getenv(config.analyst.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw ConfigError("remote analyst needs the " + config.analyst.api_key_env +
                      " environment variable");
  }
  options.api_key = key;
  options.sample_size = config.analyst.sample_size;
  options.body_truncation = config.analyst.body_truncation;
  options.max_retries = config.analyst.max_retries;
  options.requests_per_second = config.analyst.requests_per_second;
  options.max_in_flight = config.analyst.max_in_flight;
  options.timeout_seconds = config.analyst.timeout_seconds;
  options.cache_path = config.analyst.cache_path.empty()
                           ? std::filesystem::path(config.output_dir) / "annotation_cache.jsonl"
                           : std::filesystem::path(config.analyst.cache_path);
  return std::make_unique<RemoteAnalyst>(std::move(options));
}

bool TrainedPolicies::budget_exhausted() const {
  return single.budget_exhausted || category.budget_exhausted || editorial.budget_exhausted ||
         tree.budget_exhausted();
}

namespace {

FlatGridConfig flat_config(const RunConfig& c) {
  return {c.arms, c.trials_per_arm, c.span, c.root_baseline};
}

GrowConfig grow_config(const RunConfig& c) {
  GrowConfig g;
  g.arms = c.arms;
  g.trials_per_arm = c.trials_per_arm;
  g.span = c.span;
  g.root_baseline = c.root_baseline;
  g.max_depth = c.max_depth;
  g.min_high = c.min_high;
  g.min_leaf_items = c.min_leaf_items;
  g.sample_seed = c.split_seed;
  return g;
}

std::vector<PublicItem> public_items(const Catalog& catalog, std::span<const ItemId> ids) {
  std::vector<PublicItem> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(catalog.at(id));
  return out;
}

Money train_flat(FlatPolicy& policy, const Experiment& e, Partition partition) {
  const auto& queries = e.split.train_queries;
  Market market(queries);
  auto stream = stream_for(e.split, Phase::Train, e.config.stream_seed);
  policy = train_category_prices(*e.catalog, e.split.train_items, stream, market, partition,
                                 flat_config(e.config));
  FlatPricing pricing(policy);
  exploit(pricing, *e.catalog, stream, market);
  return market.revenue();
}

}  // namespace

TrainedPolicies train_all(const Experiment& e, Analyst& analyst, std::ostream* trace) {
  TrainedPolicies out;
  out.train_revenue[std::string(kSinglePolicy)] = train_flat(out.single, e, Partition::All);
  out.single.name = kSinglePolicy;
  out.train_revenue[std::string(kCategoryPolicy)] = train_flat(out.category, e, Partition::Category);
  out.category.name = kCategoryPolicy;
  out.train_revenue[std::string(kEditorialPolicy)] =
      train_flat(out.editorial, e, Partition::Editorial);
  out.editorial.name = kEditorialPolicy;

  const auto items = public_items(*e.catalog, e.split.train_items);
  Market market(e.split.train_queries);
  market.set_log(trace);
  auto stream = stream_for(e.split, Phase::Train, e.config.stream_seed);
  out.tree = init_roots(items);
  grow(out.tree, items, stream, market, analyst, grow_config(e.config));
  TreePricing pricing(out.tree, &analyst);
  exploit(pricing, *e.catalog, stream, market);
  out.train_revenue[std::string(kTreePolicy)] = market.revenue();
  return out;
}

namespace {

std::vector<LeafPrice> flat_leaf_prices(const FlatPolicy& policy, const Experiment& e) {
  const auto labels = segment_labels(*e.catalog, policy.partition);
  std::map<std::string, std::size_t> counts;
  for (const auto& id : e.split.train_items) ++counts[labels.at(id)];
  std::vector<LeafPrice> out;
  for (const auto& [segment, price] : policy.prices) {
    out.push_back({policy.name, segment, price, counts[segment]});
  }
  return out;
}

std::string describe_leaf(const PricingTree& tree, const TreeNode& leaf) {
  // Path of rule outcomes from the root, e.g. "artikel | high_end_gpu=yes".
  std::vector<std::string> steps;
  std::string id = leaf.node_id;
  while (true) {
    const auto slash = id.rfind('/');
    if (slash == std::string::npos) break;
    const std::string parent = id.substr(0, slash);
    const auto& p = tree.node(parent);
    const bool high = id.substr(slash) == "/H";
    const auto& split = *p.split;
    std::string step = split.attribute.name;
    if (split.rule_kind == RuleKind::Threshold) {
      std::ostringstream t;
      t << ((split.direction == Side::High) == high ? ">=" : "<") << *split.threshold;
      step += t.str();
    } else {
      step += (split.direction == Side::High) == high ? "=yes" : "=no";
    }
    steps.insert(steps.begin(), step);
    id = parent;
  }
  std::string out = id;
  for (const auto& s : steps) out += " | " + s;
  return out;
}

}  // namespace

EvaluationOutput evaluate_all(const Experiment& e, TrainedPolicies& policies, Analyst* analyst) {
  const auto& test = e.split.test_queries;
  const auto seed = e.config.stream_seed;
  std::vector<PolicyRevenue> rows;
  std::vector<LeafPrice> leaves;
  for (FlatPolicy* p : {&policies.single, &policies.category, &policies.editorial}) {
    FlatPricing pricing(*p);
    const auto result = evaluate(pricing, *e.catalog, test, Phase::Test, seed);
    rows.push_back({p->name, policies.train_revenue.at(p->name), result.revenue, p->prices.size(),
                    p->budget_exhausted});
    auto l = flat_leaf_prices(*p, e);
    leaves.insert(leaves.end(), l.begin(), l.end());
  }
  TreePricing pricing(policies.tree, analyst);
  const auto result = evaluate(pricing, *e.catalog, test, Phase::Test, seed);
  const auto tree_leaves = policies.tree.leaves();
  rows.push_back({std::string(kTreePolicy), policies.train_revenue.at(std::string(kTreePolicy)),
                  result.revenue, tree_leaves.size(), policies.tree.budget_exhausted()});
  for (const auto* leaf : tree_leaves) {
    leaves.push_back({std::string(kTreePolicy), describe_leaf(policies.tree, *leaf),
                      leaf->leaf_price, leaf->items.size()});
  }

  std::vector<std::pair<std::string, std::string>> meta = {
      {"synth_seed", std::to_string(e.config.synth_seed)},
      {"split_seed", std::to_string(e.config.split_seed)},
      {"stream_seed", std::to_string(e.config.stream_seed)},
      {"train_items", std::to_string(e.split.train_items.size())},
      {"test_items", std::to_string(e.split.test_items.size())},
      {"train_queries", std::to_string(e.split.train_queries.size())},
      {"test_queries", std::to_string(e.split.test_queries.size())},
      {"analyst", e.config.analyst.backend}};

  EvaluationOutput out;
  out.report = build_report(std::move(rows), oracle_upper_bound(e.split.train_queries),
                            oracle_upper_bound(test), config_hash(e.config), std::move(meta),
                            std::move(leaves));
  std::vector<ItemId> all_items = e.split.train_items;
  all_items.insert(all_items.end(), e.split.test_items.begin(), e.split.test_items.end());
  std::sort(all_items.begin(), all_items.end());
  out.shares = split_shares(policies.tree, analyst, *e.catalog, all_items);
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_policies(const std::filesystem::path& dir, const TrainedPolicies& policies) {
  const auto pdir = dir / "policies";
  write_text(pdir / (std::string(kSinglePolicy) + ".json"), serialize(policies.single));
  write_text(pdir / (std::string(kCategoryPolicy) + ".json"), serialize(policies.category));
  write_text(pdir / (std::string(kEditorialPolicy) + ".json"), serialize(policies.editorial));
  write_text(pdir / (std::string(kTreePolicy) + ".json"), serialize(policies.tree));
  json summary{{"train_revenue", policies.train_revenue},
               {"budget_exhausted", policies.budget_exhausted()}};
  write_text(dir / "train_summary.json", summary.dump(1) + "\n");
}

TrainedPolicies read_policies(const std::filesystem::path& dir) {
  const auto pdir = dir / "policies";
  TrainedPolicies out;
  out.single = deserialize_flat(read_text(pdir / (std::string(kSinglePolicy) + ".json")));
  out.category = deserialize_flat(read_text(pdir / (std::string(kCategoryPolicy) + ".json")));
  out.editorial = deserialize_flat(read_text(pdir / (std::string(kEditorialPolicy) + ".json")));
  out.tree = deserialize(read_text(pdir / (std::string(kTreePolicy) + ".json")));
  const auto summary = json::parse(read_text(dir / "train_summary.json"));
  out.train_revenue = summary.at("train_revenue").get<std::map<std::string, Money>>();
  return out;
}

}  // namespace lmtree
