#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "lmtree/analyst.hpp"

namespace lmtree {

namespace {

struct Candidate {
  std::string name;
  double score = 0.0;
  Side direction = Side::High;
  double threshold = 0.0;
};

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string humanize(std::string name) {
  std::replace(name.begin(), name.end(), '_', ' ');
  return name;
}

}  // namespace

OracleAnalyst::OracleAnalyst(const Catalog& catalog, OracleOptions options)
    : catalog_(catalog), options_(options) {}

std::optional<SplitProposal> OracleAnalyst::propose_split(std::span<const PublicItem> high,
                                                          std::span<const PublicItem> low) {
  ++proposal_calls_;
  if (high.empty() || low.empty()) return std::nullopt;

  // Planted attributes seen on either side, split by kind.
  std::set<std::string> existence_names;
  std::set<std::string> numeric_names;
  for (auto side : {high, low}) {
    for (const auto& item : side) {
      for (const auto& [name, value] : privileged::latent_attributes(catalog_, item.item_id)) {
        (value.numeric ? numeric_names : existence_names).insert(name);
      }
    }
  }

  auto frequency = [&](std::span<const PublicItem> items, const std::string& name) {
    std::size_t n = 0;
    for (const auto& item : items) {
      n += privileged::latent_attributes(catalog_, item.item_id).contains(name) ? 1 : 0;
    }
    return static_cast<double>(n) / static_cast<double>(items.size());
  };

  // Existence rules are preferred: take the largest frequency gap.
  std::optional<Candidate> best;
  for (const auto& name : existence_names) {
    const double gap = frequency(high, name) - frequency(low, name);
    if (!best || std::abs(gap) > best->score) {
      best = Candidate{name, std::abs(gap), gap >= 0.0 ? Side::High : Side::Low, 0.0};
    }
  }
  if (best && best->score >= options_.min_gap) {
    SplitProposal proposal;
    proposal.attribute = {best->name, "mentions " + humanize(best->name),
                          AttributeKind::Existence};
    proposal.rule_kind = RuleKind::Existence;
    proposal.direction = best->direction;
    std::ostringstream why;
    why << "frequency gap " << best->score << " between high and low sets";
    proposal.rationale = why.str();
    return proposal;
  }

  // Threshold rules: medians must differ; tau maximizes the gap between the
  // two sides' shares at or above it (Kolmogorov-Smirnov distance).
  best.reset();
  for (const auto& name : numeric_names) {
    std::vector<std::pair<double, int>> values;  // (value, 0 = high, 1 = low)
    std::vector<double> high_values, low_values;
    for (const auto& item : high) {
      const auto& latent = privileged::latent_attributes(catalog_, item.item_id);
      if (auto it = latent.find(name); it != latent.end() && it->second.numeric) {
        values.emplace_back(it->second.value, 0);
        high_values.push_back(it->second.value);
      }
    }
    for (const auto& item : low) {
      const auto& latent = privileged::latent_attributes(catalog_, item.item_id);
      if (auto it = latent.find(name); it != latent.end() && it->second.numeric) {
        values.emplace_back(it->second.value, 1);
        low_values.push_back(it->second.value);
      }
    }
    if (high_values.empty() || low_values.empty()) continue;
    if (median(high_values) == median(low_values)) continue;

    std::sort(values.begin(), values.end());
    const double n_high = static_cast<double>(high.size());
    const double n_low = static_cast<double>(low.size());
    // Running counts below the candidate threshold.
    std::size_t below_high = 0, below_low = 0;
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
      (values[i].second == 0 ? below_high : below_low) += 1;
      if (values[i].first == values[i + 1].first) continue;
      const double tau = 0.5 * (values[i].first + values[i + 1].first);
      const double share_high = (static_cast<double>(high_values.size() - below_high)) / n_high;
      const double share_low = (static_cast<double>(low_values.size() - below_low)) / n_low;
      const double d = share_high - share_low;
      if (!best || std::abs(d) > best->score) {
        best = Candidate{name, std::abs(d), d >= 0.0 ? Side::High : Side::Low, tau};
      }
    }
  }
  if (best && best->score >= options_.min_ks) {
    SplitProposal proposal;
    proposal.attribute = {best->name, humanize(best->name), AttributeKind::Numeric};
    proposal.rule_kind = RuleKind::Threshold;
    proposal.threshold = best->threshold;
    proposal.direction = best->direction;
    std::ostringstream why;
    why << "share at or above threshold differs by " << best->score;
    proposal.rationale = why.str();
    return proposal;
  }
  return std::nullopt;
}

std::vector<Annotation> OracleAnalyst::annotate(std::span<const PublicItem> items,
                                                const AttributeSpec& attribute) {
  std::vector<Annotation> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    ++annotation_calls_;
    const auto& latent = privileged::latent_attributes(catalog_, item.item_id);
    const auto it = latent.find(attribute.name);
    Annotation annotation{item.item_id, attribute.name, std::nullopt, std::nullopt};
    if (attribute.kind == AttributeKind::Existence) {
      annotation.present = it != latent.end();
    } else if (it != latent.end() && it->second.numeric) {
      annotation.value = it->second.value;
    }
    out.push_back(std::move(annotation));
  }
  return out;
}

}  // namespace lmtree
