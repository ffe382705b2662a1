#pragma once

#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lmtree/corpus.hpp"
#include "lmtree/explore.hpp"
#include "lmtree/market.hpp"

namespace lmtree {

class BaselineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Partition { All, Category, Editorial };

std::string_view to_string(Partition partition);
Partition partition_from(std::string_view text);

struct FlatGridConfig {
  int arms = 7;
  std::size_t trials_per_arm = 300;
  double span = 10.0;
  Money root_baseline = 0.05;

  friend bool operator==(const FlatGridConfig&, const FlatGridConfig&) = default;
};

/// Segment label of every catalog item under a partition. The editorial
/// partition is the only pricing code allowed to read the editorial label.
std::unordered_map<ItemId, std::string> segment_labels(const Catalog& catalog,
                                                       Partition partition);

/// One price per segment of a fixed partition.
struct FlatPolicy {
  static constexpr int kSchemaVersion = 1;

  std::string name;
  Partition partition = Partition::All;
  std::map<std::string, Money> prices;
  std::map<std::string, ExplorationResult> explorations;
  /// Item -> segment, filled for the editorial partition only; the other
  /// partitions derive the segment from public fields.
  std::unordered_map<ItemId, std::string> segment_of;
  FlatGridConfig config;
  bool budget_exhausted = false;

  std::string segment(const PublicItem& item) const;
  /// Throws BaselineError for an item whose segment has no price.
  Money price(const PublicItem& item) const;

  friend bool operator==(const FlatPolicy&, const FlatPolicy&) = default;
};

/// Explores each segment of the training items in segment-name order on the
/// shared stream. Segments without any arrival are an error; a segment
/// explored only partially keeps its best observed arm and sets the flag.
FlatPolicy train_category_prices(const Catalog& catalog, std::span<const ItemId> train_items,
                                 QueryStream& stream, Market& market, Partition partition,
                                 const FlatGridConfig& config);

FlatPolicy train_single_price(const Catalog& catalog, std::span<const ItemId> train_items,
                              QueryStream& stream, Market& market, const FlatGridConfig& config);

std::string serialize(const FlatPolicy& policy);
FlatPolicy deserialize_flat(const std::string& document);

}  // namespace lmtree
