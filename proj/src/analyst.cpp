#include "lmtree/analyst.hpp"

#include <algorithm>
#include <set>

namespace lmtree {

ContrastSets build_contrast_sets(const ExplorationResult& result, std::size_t min_high) {
  const std::size_t k = result.arms.size();
  if (k == 0) throw EmptyContrastError("node '" + result.node_id + "' has no arms");

  // Highest arm at which each item was bought; items never bought are absent.
  std::map<ItemId, std::size_t> top_purchase;
  for (std::size_t j = 0; j < k; ++j) {
    for (const auto& trial : result.arms[j].records) {
      if (!trial.purchased) continue;
      auto [it, inserted] = top_purchase.emplace(trial.item_id, j);
      if (!inserted) it->second = std::max(it->second, j);
    }
  }
  if (top_purchase.empty()) {
    throw EmptyContrastError("node '" + result.node_id + "' recorded no purchases");
  }

  auto count_high = [&](std::size_t h) {
    std::size_t n = 0;
    for (const auto& [item, j] : top_purchase) n += j >= h ? 1 : 0;
    return n;
  };

  std::size_t h = k / 2;
  if (k == 1) h = 0;
  while (h > 1 && count_high(h) < min_high) --h;

  ContrastSets sets;
  sets.h_threshold_arm = h;
  for (const auto& [item, j] : top_purchase) {
    (j >= h ? sets.high : sets.low).push_back(item);
  }
  return sets;
}

std::string_view to_string(AttributeKind kind) {
  return kind == AttributeKind::Existence ? "existence" : "numeric";
}

std::string_view to_string(RuleKind kind) {
  return kind == RuleKind::Existence ? "existence" : "threshold";
}

std::string_view to_string(Side side) { return side == Side::High ? "high" : "low"; }

AttributeKind attribute_kind_from(std::string_view text) {
  if (text == "existence") return AttributeKind::Existence;
  if (text == "numeric") return AttributeKind::Numeric;
  throw std::invalid_argument("unknown attribute kind '" + std::string(text) + "'");
}

RuleKind rule_kind_from(std::string_view text) {
  if (text == "existence") return RuleKind::Existence;
  if (text == "threshold") return RuleKind::Threshold;
  throw std::invalid_argument("unknown rule kind '" + std::string(text) + "'");
}

Side side_from(std::string_view text) {
  if (text == "high") return Side::High;
  if (text == "low") return Side::Low;
  throw std::invalid_argument("unknown side '" + std::string(text) + "'");
}

void SplitProposal::validate() const {
  if (attribute.name.empty()) throw std::invalid_argument("split attribute has no name");
  if (rule_kind == RuleKind::Threshold && !threshold) {
    throw std::invalid_argument("threshold rule without a threshold");
  }
  if (rule_kind == RuleKind::Existence && threshold) {
    throw std::invalid_argument("existence rule with a threshold");
  }
}

Side apply_rule(const Annotation& annotation, const SplitProposal& proposal) {
  std::optional<bool> satisfied;
  if (proposal.rule_kind == RuleKind::Existence) {
    satisfied = annotation.present;
  } else if (annotation.value && proposal.threshold) {
    satisfied = *annotation.value >= *proposal.threshold;
  }
  if (!satisfied) return Side::Low;
  const Side other = proposal.direction == Side::High ? Side::Low : Side::High;
  return *satisfied ? proposal.direction : other;
}

const Annotation* AnnotationStore::find(std::string_view item_id,
                                        std::string_view attribute) const {
  auto it = entries_.find({std::string(item_id), std::string(attribute)});
  return it == entries_.end() ? nullptr : &it->second;
}

void AnnotationStore::put(Annotation annotation) {
  auto key = std::make_pair(annotation.item_id, annotation.attribute);
  entries_.insert_or_assign(std::move(key), std::move(annotation));
}

std::vector<Annotation> AnnotationStore::all() const {
  std::vector<Annotation> out;
  out.reserve(entries_.size());
  for (const auto& [key, annotation] : entries_) out.push_back(annotation);
  return out;
}

}  // namespace lmtree
