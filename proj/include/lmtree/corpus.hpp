#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lmtree {

using Money = double;
using ItemId = std::string;
using QueryId = std::uint64_t;

enum class Phase { Train, Test };

std::string_view to_string(Phase phase);

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Value of a planted attribute on a synthetic item. Existence attributes are
/// stored with numeric == false; their presence in the map is the signal.
struct LatentValue {
  bool numeric = false;
  double value = 0.0;

  friend bool operator==(const LatentValue&, const LatentValue&) = default;
};

using LatentAttributes = std::map<std::string, LatentValue, std::less<>>;

/// What pricing policies are allowed to see of an item.
struct PublicItem {
  ItemId item_id;
  std::string category;
  std::string title;
  std::string body;
};

/// Full library record, including the simulation ground truth.
struct ContentItem {
  ItemId item_id;
  std::string category;
  std::string editorial_category;  // empty when unknown
  std::string title;
  std::string body;
  std::optional<std::int64_t> views;
  std::optional<Money> wtp_center;
  LatentAttributes latent_attributes;

  PublicItem public_view() const { return {item_id, category, title, body}; }

  friend bool operator==(const ContentItem&, const ContentItem&) = default;
};

struct WtpModel {
  double coefficient = 0.004;
  double noise_std = 0.001;
  int queries_per_item = 9;

  /// Throws CorpusError when a field is out of range.
  void validate() const;
};

struct Query {
  QueryId query_id = 0;
  ItemId item_id;
  Money wtp = 0.0;
  std::size_t arrival_index = 0;
  std::optional<std::string> buyer_type;  // carried, never consumed
};

struct CorpusSplit {
  std::vector<ItemId> train_items;
  std::vector<ItemId> test_items;
  std::vector<Query> train_queries;  // in arrival order
  std::vector<Query> test_queries;   // in arrival order

  std::span<const Query> queries(Phase phase) const {
    return phase == Phase::Train ? std::span<const Query>(train_queries)
                                 : std::span<const Query>(test_queries);
  }
  std::span<const ItemId> items(Phase phase) const {
    return phase == Phase::Train ? std::span<const ItemId>(train_items)
                                 : std::span<const ItemId>(test_items);
  }
};

struct LoadResult {
  std::vector<ContentItem> items;
  std::size_t dropped_empty = 0;
};

// Corpus files hold one JSON object per line.
LoadResult parse_corpus(std::istream& in);
LoadResult load_corpus(const std::filesystem::path& path);
void write_corpus(std::ostream& out, std::span<const ContentItem> items);

/// v(i) = coefficient * views(i). Stores the result in item.wtp_center.
/// Items without views keep a pre-set wtp_center; neither present is an error.
Money calibrate_wtp(ContentItem& item, const WtpModel& model);
void calibrate_all(std::span<ContentItem> items, const WtpModel& model);

/// queries_per_item draws per item from Normal(wtp_center, noise_std^2),
/// clamped at zero. Query ids follow the item order of `items`; the returned
/// vector is shuffled into arrival order.
std::vector<Query> generate_queries(std::span<const ContentItem> items,
                                    const WtpModel& model, std::uint64_t seed);

/// Per-category test counts: round(fraction * n) per category, nudged by one
/// in category-name order until they sum to round(fraction * total).
std::map<std::string, std::size_t> stratified_test_counts(
    const std::map<std::string, std::size_t>& category_sizes, double test_fraction);

CorpusSplit stratified_split(std::span<const ContentItem> items, double test_fraction,
                             const WtpModel& model, std::uint64_t seed);

/// One JSON line per item: {"item_id": ..., "split": "train"|"test"}.
void write_split_manifest(std::ostream& out, const CorpusSplit& split);

class Catalog;

/// Ground-truth accessors. Pricing policies must never call these; the
/// barrier audit test pins down every call site.
namespace privileged {
std::string_view editorial_category(const Catalog& catalog, std::string_view item_id);
const LatentAttributes& latent_attributes(const Catalog& catalog, std::string_view item_id);
Money wtp_center(const Catalog& catalog, std::string_view item_id);
}  // namespace privileged

/// The content library as the pricing agent sees it.
class Catalog {
 public:
  explicit Catalog(std::vector<ContentItem> items);

  std::size_t size() const { return public_.size(); }
  std::span<const PublicItem> items() const { return public_; }
  const PublicItem* find(std::string_view item_id) const;
  const PublicItem& at(std::string_view item_id) const;

  /// Distinct coarse categories, sorted.
  std::vector<std::string> categories() const;

 private:
  struct Hidden {
    std::string editorial_category;
    Money wtp_center = 0.0;
    LatentAttributes latent;
  };

  std::size_t index_of(std::string_view item_id) const;

  std::vector<PublicItem> public_;
  std::vector<Hidden> hidden_;
  std::unordered_map<std::string, std::size_t> index_;

  friend std::string_view privileged::editorial_category(const Catalog&, std::string_view);
  friend const LatentAttributes& privileged::latent_attributes(const Catalog&,
                                                               std::string_view);
  friend Money privileged::wtp_center(const Catalog&, std::string_view);
};

}  // namespace lmtree
