#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lmtree/corpus.hpp"

namespace lmtree {

class Rng;

struct ViewDistribution {
  enum class Shape { Constant, Lognormal, Pareto, Discrete };

  Shape shape = Shape::Constant;
  double value = 0.0;   // constant
  double median = 1.0;  // lognormal
  double sigma = 0.0;   // lognormal log-scale spread
  double minimum = 1.0; // pareto scale
  double alpha = 2.0;   // pareto tail index
  std::vector<double> values;   // discrete support
  std::vector<double> weights;  // discrete weights (normalized on draw)

  /// Continuous draw; the generator rounds to whole views after multipliers.
  double draw(Rng& rng) const;
};

struct PlantedAttribute {
  enum class Kind { Existence, Numeric };

  std::string name;
  Kind kind = Kind::Existence;
  /// Existence: probability the attribute is present. Numeric: probability the
  /// value falls in high_range (and the multiplier applies).
  double prevalence = 0.0;
  double multiplier = 1.0;
  /// When set, bearers draw views from this instead of the base distribution.
  std::optional<ViewDistribution> views;
  std::pair<double, double> high_range{1000.0, 5000.0};
  std::pair<double, double> low_range{50.0, 900.0};
  /// Sentence inserted verbatim into the body; "{value}" is substituted for
  /// numeric attributes.
  std::string phrase;
};

struct EditorialSpec {
  std::string name;
  std::optional<double> share;
  std::optional<std::size_t> count;
  ViewDistribution views;
};

struct CategorySpec {
  std::string name;
  std::size_t items = 0;
  /// Used when `editorial` is empty.
  std::optional<ViewDistribution> views;
  std::vector<EditorialSpec> editorial;
  std::vector<PlantedAttribute> attributes;
  /// Filler sentences; a generic pool is used when empty.
  std::vector<std::string> filler;
};

struct SynthSpec {
  std::string name;
  std::vector<CategorySpec> categories;

  void validate() const;
};

SynthSpec parse_synth_spec(const std::string& json_text);
SynthSpec load_synth_spec(const std::filesystem::path& path);
std::string synth_spec_to_json(const SynthSpec& spec);

/// Generates items with views, editorial labels, planted attributes and
/// templated text. wtp_center is left empty; run calibrate_wtp afterwards.
std::vector<ContentItem> synth_corpus(const SynthSpec& spec, std::uint64_t seed);

/// Two format categories with editorial sub-categories, heavy-tailed views and
/// one high-value attribute per category (existence for reviews, numeric
/// threshold for news) plus one textually salient attribute without value.
SynthSpec default_synth_spec();

/// Same category and editorial counts as the publisher archive (8,939 items).
SynthSpec archive_shaped_spec();

}  // namespace lmtree
