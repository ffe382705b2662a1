#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>

#include "lmtree/analyst.hpp"
#include "lmtree/baselines.hpp"
#include "lmtree/config.hpp"
#include "lmtree/corpus.hpp"
#include "lmtree/eval.hpp"
#include "lmtree/tree.hpp"

namespace lmtree {

/// Corpus, catalog and split for one run.
struct Experiment {
  RunConfig config;
  std::unique_ptr<Catalog> catalog;
  CorpusSplit split;
  std::size_t dropped_empty = 0;
};

/// Loads or synthesizes the corpus, calibrates WTP and splits it.
Experiment prepare_experiment(const RunConfig& config);

/// Oracle or remote analyst per config. The remote backend reads its key
/// from the configured environment variable.
std::unique_ptr<Analyst> make_analyst(const RunConfig& config, const Catalog& catalog);

struct TrainedPolicies {
  FlatPolicy single;
  FlatPolicy category;
  FlatPolicy editorial;
  PricingTree tree;
  /// One pass over the training stream: exploration plus frozen-price
  /// exploitation of the arrivals left over. Keyed by policy name.
  std::map<std::string, Money> train_revenue;

  bool budget_exhausted() const;
};

/// Trains the three baselines and the tree, each on its own copy of the
/// training stream (same order). `trace` receives the tree's transactions.
TrainedPolicies train_all(const Experiment& experiment, Analyst& analyst,
                          std::ostream* trace = nullptr);

struct EvaluationOutput {
  RevenueReport report;
  SplitShareTable shares;
};

EvaluationOutput evaluate_all(const Experiment& experiment, TrainedPolicies& policies,
                              Analyst* analyst);

/// Writes policy documents and train_summary.json into dir/policies and dir.
void write_policies(const std::filesystem::path& dir, const TrainedPolicies& policies);
TrainedPolicies read_policies(const std::filesystem::path& dir);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace lmtree
