#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lmtree/corpus.hpp"
#include "lmtree/explore.hpp"

namespace lmtree {

/// Backend failure (transport, auth, exhausted retries). Distinct from an
/// analyst that simply finds nothing to propose.
class AnalystError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No trial at any arm produced a purchase.
class EmptyContrastError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ContrastSets {
  std::vector<ItemId> high;  // sorted
  std::vector<ItemId> low;   // sorted
  /// Index (0-based) of the lowest arm counted as top half.
  std::size_t h_threshold_arm = 0;
};

/// Splits arms at K/2 (0-based; the middle arm of an odd grid goes to the top
/// half). While |H| < min_high and more than one bottom arm remains, the
/// boundary moves one arm down.
ContrastSets build_contrast_sets(const ExplorationResult& result, std::size_t min_high);

enum class AttributeKind { Existence, Numeric };
enum class RuleKind { Existence, Threshold };
enum class Side { Low, High };

std::string_view to_string(AttributeKind kind);
std::string_view to_string(RuleKind kind);
std::string_view to_string(Side side);
AttributeKind attribute_kind_from(std::string_view text);
RuleKind rule_kind_from(std::string_view text);
Side side_from(std::string_view text);

struct AttributeSpec {
  std::string name;
  std::string description;
  AttributeKind kind = AttributeKind::Existence;

  friend bool operator==(const AttributeSpec&, const AttributeSpec&) = default;
};

struct SplitProposal {
  AttributeSpec attribute;
  RuleKind rule_kind = RuleKind::Existence;
  std::optional<double> threshold;  // threshold rules only
  /// Side that items satisfying the rule go to.
  Side direction = Side::High;
  std::string rationale;

  /// Throws std::invalid_argument when threshold presence and rule kind disagree.
  void validate() const;

  friend bool operator==(const SplitProposal&, const SplitProposal&) = default;
};

/// One extracted value. Existence uses `present`, numeric uses `value`;
/// an empty optional means unknown (extraction failed or not mentioned).
struct Annotation {
  ItemId item_id;
  std::string attribute;
  std::optional<bool> present;
  std::optional<double> value;

  friend bool operator==(const Annotation&, const Annotation&) = default;
};

/// Existence: mentioned -> direction side. Threshold: value >= tau ->
/// direction side. Unknown or failing the rule -> the other side, except that
/// unknown always goes Low.
Side apply_rule(const Annotation& annotation, const SplitProposal& proposal);

/// Annotations keyed by (item_id, attribute name).
class AnnotationStore {
 public:
  const Annotation* find(std::string_view item_id, std::string_view attribute) const;
  void put(Annotation annotation);
  std::size_t size() const { return entries_.size(); }
  std::vector<Annotation> all() const;

  friend bool operator==(const AnnotationStore&, const AnnotationStore&) = default;

 private:
  std::map<std::pair<std::string, std::string>, Annotation> entries_;
};

class Analyst {
 public:
  virtual ~Analyst() = default;

  /// Nullopt when nothing distinguishes the samples. Throws AnalystError on
  /// backend failure.
  virtual std::optional<SplitProposal> propose_split(std::span<const PublicItem> high,
                                                     std::span<const PublicItem> low) = 0;

  /// One Annotation per input item, in input order.
  virtual std::vector<Annotation> annotate(std::span<const PublicItem> items,
                                           const AttributeSpec& attribute) = 0;

  /// Maximum items per side passed to propose_split; 0 means no limit.
  virtual std::size_t sample_limit() const { return 0; }

  virtual std::string name() const = 0;

  std::size_t proposal_calls() const { return proposal_calls_; }
  std::size_t annotation_calls() const { return annotation_calls_; }

 protected:
  std::size_t proposal_calls_ = 0;
  std::size_t annotation_calls_ = 0;
};

struct OracleOptions {
  double min_gap = 0.3;  // existence frequency gap between H and L
  double min_ks = 0.3;   // threshold separation between H and L
};

/// Reads the planted attributes of synthetic items. Deterministic; used for
/// tests and for the synthetic experiments.
class OracleAnalyst final : public Analyst {
 public:
  explicit OracleAnalyst(const Catalog& catalog, OracleOptions options = {});

  std::optional<SplitProposal> propose_split(std::span<const PublicItem> high,
                                             std::span<const PublicItem> low) override;
  std::vector<Annotation> annotate(std::span<const PublicItem> items,
                                   const AttributeSpec& attribute) override;
  std::string name() const override { return "oracle"; }

 private:
  const Catalog& catalog_;
  OracleOptions options_;
};

}  // namespace lmtree
