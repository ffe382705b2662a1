#include "lmtree/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "lmtree/random.hpp"

namespace lmtree {

using json = nlohmann::json;

double ViewDistribution::draw(Rng& rng) const {
  switch (shape) {
    case Shape::Constant:
      return value;
    case Shape::Lognormal:
      return median * std::exp(sigma * rng.normal());
    case Shape::Pareto: {
      double u = rng.uniform();
      while (u <= 0.0) u = rng.uniform();
      return minimum * std::pow(u, -1.0 / alpha);
    }
    case Shape::Discrete: {
      const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
      double u = rng.uniform() * total;
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (u < weights[i]) return values[i];
        u -= weights[i];
      }
      return values.back();
    }
  }
  return value;
}

namespace {

ViewDistribution distribution_from_json(const json& j) {
  ViewDistribution d;
  const auto shape = j.at("dist").get<std::string>();
  if (shape == "constant") {
    d.shape = ViewDistribution::Shape::Constant;
    d.value = j.at("value").get<double>();
  } else if (shape == "lognormal") {
    d.shape = ViewDistribution::Shape::Lognormal;
    d.median = j.at("median").get<double>();
    d.sigma = j.at("sigma").get<double>();
  } else if (shape == "pareto") {
    d.shape = ViewDistribution::Shape::Pareto;
    d.minimum = j.at("min").get<double>();
    d.alpha = j.at("alpha").get<double>();
  } else if (shape == "discrete") {
    d.shape = ViewDistribution::Shape::Discrete;
    d.values = j.at("values").get<std::vector<double>>();
    d.weights = j.at("weights").get<std::vector<double>>();
    if (d.values.empty() || d.values.size() != d.weights.size()) {
      throw CorpusError("discrete distribution needs matching non-empty values/weights");
    }
  } else {
    throw CorpusError("unknown view distribution '" + shape + "'");
  }
  return d;
}

json distribution_to_json(const ViewDistribution& d) {
  switch (d.shape) {
    case ViewDistribution::Shape::Constant:
      return {{"dist", "constant"}, {"value", d.value}};
    case ViewDistribution::Shape::Lognormal:
      return {{"dist", "lognormal"}, {"median", d.median}, {"sigma", d.sigma}};
    case ViewDistribution::Shape::Pareto:
      return {{"dist", "pareto"}, {"min", d.minimum}, {"alpha", d.alpha}};
    case ViewDistribution::Shape::Discrete:
      return {{"dist", "discrete"}, {"values", d.values}, {"weights", d.weights}};
  }
  return {};
}

const std::vector<std::string>& generic_filler() {
  static const std::vector<std::string> pool = {
      "The editorial team spent several days with the product before publishing.",
      "Pricing and availability were confirmed by the manufacturer this week.",
      "Our test system runs a current operating system with all updates applied.",
      "Readers asked us to revisit this topic after the previous coverage.",
      "The package includes the usual documentation and a short quick-start guide.",
      "Several partners announced compatible accessories at the same time.",
      "Firmware updates are expected to address the remaining minor issues.",
      "We compared the results against the numbers from our earlier coverage.",
      "The manufacturer provided a sample for this article on request.",
      "Community feedback on the forum has been largely constructive so far.",
      "The launch event took place alongside a larger industry trade show.",
      "Shipping is scheduled to begin in the coming weeks in most regions.",
  };
  return pool;
}

std::string format_number(double value) {
  std::ostringstream out;
  out << static_cast<long long>(std::llround(value));
  return out.str();
}

std::string render_phrase(const PlantedAttribute& attribute, double value) {
  std::string text = attribute.phrase.empty()
                         ? "This item covers " + attribute.name + "."
                         : attribute.phrase;
  if (attribute.kind == PlantedAttribute::Kind::Numeric) {
    const std::string token = "{value}";
    const auto pos = text.find(token);
    if (pos != std::string::npos) {
      text.replace(pos, token.size(), format_number(value));
    } else {
      text += " (" + format_number(value) + ")";
    }
  }
  return text;
}

// Largest-remainder allocation of n items across shares.
std::vector<std::size_t> allocate(const std::vector<EditorialSpec>& editorial, std::size_t n) {
  std::vector<std::size_t> counts(editorial.size(), 0);
  if (std::all_of(editorial.begin(), editorial.end(),
                  [](const EditorialSpec& e) { return e.count.has_value(); })) {
    for (std::size_t i = 0; i < editorial.size(); ++i) counts[i] = *editorial[i].count;
    return counts;
  }
  double total_share = 0.0;
  for (const auto& e : editorial) total_share += e.share.value_or(0.0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < editorial.size(); ++i) {
    const double exact = static_cast<double>(n) * editorial[i].share.value_or(0.0) / total_share;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[remainders[k].second];
  return counts;
}

}  // namespace

void SynthSpec::validate() const {
  if (categories.empty()) throw CorpusError("synthetic spec has no categories");
  std::size_t total = 0;
  for (const auto& c : categories) {
    if (c.name.empty()) throw CorpusError("synthetic spec category without a name");
    if (c.editorial.empty() && !c.views) {
      throw CorpusError("category '" + c.name + "' needs views or editorial entries");
    }
    if (!c.editorial.empty()) {
      const bool all_counts = std::all_of(c.editorial.begin(), c.editorial.end(),
                                          [](const auto& e) { return e.count.has_value(); });
      if (all_counts) {
        std::size_t sum = 0;
        for (const auto& e : c.editorial) sum += *e.count;
        if (sum != c.items) {
          throw CorpusError("editorial counts of '" + c.name + "' do not sum to items");
        }
      } else {
        for (const auto& e : c.editorial) {
          if (!e.share || *e.share < 0.0) {
            throw CorpusError("editorial entry '" + e.name + "' needs a share or count");
          }
        }
      }
    }
    for (const auto& a : c.attributes) {
      if (a.prevalence < 0.0 || a.prevalence > 1.0) {
        throw CorpusError("attribute '" + a.name + "' prevalence outside [0, 1]");
      }
      if (a.multiplier < 0.0) throw CorpusError("attribute '" + a.name + "' negative multiplier");
    }
    total += c.items;
  }
  if (total == 0) throw CorpusError("synthetic spec has zero items");
}

SynthSpec parse_synth_spec(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw CorpusError(std::string("synthetic spec: ") + e.what());
  }
  SynthSpec spec;
  try {
    spec.name = j.value("name", std::string{"synthetic"});
    for (const auto& jc : j.at("categories")) {
      CategorySpec c;
      c.name = jc.at("name").get<std::string>();
      c.items = jc.at("items").get<std::size_t>();
      if (jc.contains("views")) c.views = distribution_from_json(jc.at("views"));
      for (const auto& je : jc.value("editorial", json::array())) {
        EditorialSpec e;
        e.name = je.at("name").get<std::string>();
        if (je.contains("share")) e.share = je.at("share").get<double>();
        if (je.contains("count")) e.count = je.at("count").get<std::size_t>();
        e.views = distribution_from_json(je.at("views"));
        c.editorial.push_back(std::move(e));
      }
      for (const auto& ja : jc.value("attributes", json::array())) {
        PlantedAttribute a;
        a.name = ja.at("name").get<std::string>();
        const auto kind = ja.value("kind", std::string{"existence"});
        if (kind == "existence") {
          a.kind = PlantedAttribute::Kind::Existence;
        } else if (kind == "numeric") {
          a.kind = PlantedAttribute::Kind::Numeric;
        } else {
          throw CorpusError("attribute '" + a.name + "' has unknown kind '" + kind + "'");
        }
        a.prevalence = ja.at("prevalence").get<double>();
        a.multiplier = ja.value("multiplier", 1.0);
        if (ja.contains("views")) a.views = distribution_from_json(ja.at("views"));
        if (ja.contains("high_range")) {
          a.high_range = ja.at("high_range").get<std::pair<double, double>>();
        }
        if (ja.contains("low_range")) {
          a.low_range = ja.at("low_range").get<std::pair<double, double>>();
        }
        a.phrase = ja.value("phrase", std::string{});
        c.attributes.push_back(std::move(a));
      }
      c.filler = jc.value("filler", std::vector<std::string>{});
      spec.categories.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw CorpusError(std::string("synthetic spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot read synthetic spec " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_synth_spec(buffer.str());
}

std::string synth_spec_to_json(const SynthSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["categories"] = json::array();
  for (const auto& c : spec.categories) {
    json jc{{"name", c.name}, {"items", c.items}};
    if (c.views) jc["views"] = distribution_to_json(*c.views);
    for (const auto& e : c.editorial) {
      json je{{"name", e.name}, {"views", distribution_to_json(e.views)}};
      if (e.share) je["share"] = *e.share;
      if (e.count) je["count"] = *e.count;
      jc["editorial"].push_back(std::move(je));
    }
    for (const auto& a : c.attributes) {
      json ja{{"name", a.name},
              {"kind", a.kind == PlantedAttribute::Kind::Numeric ? "numeric" : "existence"},
              {"prevalence", a.prevalence},
              {"multiplier", a.multiplier},
              {"phrase", a.phrase}};
      if (a.views) ja["views"] = distribution_to_json(*a.views);
      if (a.kind == PlantedAttribute::Kind::Numeric) {
        ja["high_range"] = a.high_range;
        ja["low_range"] = a.low_range;
      }
      jc["attributes"].push_back(std::move(ja));
    }
    if (!c.filler.empty()) jc["filler"] = c.filler;
    j["categories"].push_back(std::move(jc));
  }
  return j.dump(2);
}

std::vector<ContentItem> synth_corpus(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<ContentItem> items;
  for (const auto& category : spec.categories) {
    Rng rng(derive_seed(seed, "synth/" + category.name));

    // Editorial labels by exact quota, then shuffled across the category.
    std::vector<std::size_t> editorial_of;
    if (category.editorial.empty()) {
      editorial_of.assign(category.items, 0);
    } else {
      const auto counts = allocate(category.editorial, category.items);
      for (std::size_t e = 0; e < counts.size(); ++e) editorial_of.insert(editorial_of.end(), counts[e], e);
      rng.shuffle(std::span<std::size_t>(editorial_of));
    }
    const auto& filler = category.filler.empty() ? generic_filler() : category.filler;

    for (std::size_t n = 0; n < category.items; ++n) {
      ContentItem item;
      item.item_id = category.name + "-" + std::to_string(n + 1);
      item.category = category.name;
      const ViewDistribution* base = nullptr;
      if (category.editorial.empty()) {
        base = &*category.views;
      } else {
        const auto& editorial = category.editorial[editorial_of[n]];
        item.editorial_category = category.name + "/" + editorial.name;
        base = &editorial.views;
      }

      double multiplier = 1.0;
      const ViewDistribution* override_views = nullptr;
      std::vector<std::string> phrases;
      for (const auto& attribute : category.attributes) {
        const bool high = rng.bernoulli(attribute.prevalence);
        if (attribute.kind == PlantedAttribute::Kind::Existence) {
          if (!high) continue;
          item.latent_attributes[attribute.name] = LatentValue{false, 1.0};
          phrases.push_back(render_phrase(attribute, 0.0));
        } else {
          const auto& range = high ? attribute.high_range : attribute.low_range;
          const double value = std::round(rng.uniform(range.first, range.second));
          item.latent_attributes[attribute.name] = LatentValue{true, value};
          phrases.push_back(render_phrase(attribute, value));
          if (!high) continue;
        }
        multiplier *= attribute.multiplier;
        if (attribute.views) override_views = &*attribute.views;
      }

      const double raw = (override_views ? override_views : base)->draw(rng);
      const double scaled = override_views ? raw : raw * multiplier;
      item.views = std::max<std::int64_t>(0, std::llround(scaled));

      // Title and body: filler sentences with the attribute phrases spliced in.
      const auto topic = filler[rng.below(filler.size())];
      item.title = category.name + " item " + std::to_string(n + 1);
      std::vector<std::string> sentences;
      const std::size_t filler_count = 3 + rng.below(3);
      for (std::size_t s = 0; s < filler_count; ++s) sentences.push_back(filler[rng.below(filler.size())]);
      for (auto& phrase : phrases) {
        const auto pos = rng.below(sentences.size() + 1);
        sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(pos), std::move(phrase));
      }
      (void)topic;
      std::string body;
      for (const auto& s : sentences) {
        if (!body.empty()) body += ' ';
        body += s;
      }
      item.body = std::move(body);
      items.push_back(std::move(item));
    }
  }
  return items;
}

namespace {

ViewDistribution lognormal(double median, double sigma) {
  ViewDistribution d;
  d.shape = ViewDistribution::Shape::Lognormal;
  d.median = median;
  d.sigma = sigma;
  return d;
}

EditorialSpec editorial(std::string name, double share, double median, double sigma) {
  EditorialSpec e;
  e.name = std::move(name);
  e.share = share;
  e.views = lognormal(median, sigma);
  return e;
}

EditorialSpec editorial_count(std::string name, std::size_t count, double median, double sigma) {
  EditorialSpec e;
  e.name = std::move(name);
  e.count = count;
  e.views = lognormal(median, sigma);
  return e;
}

PlantedAttribute existence(std::string name, double prevalence, double multiplier,
                           std::string phrase) {
  PlantedAttribute a;
  a.name = std::move(name);
  a.kind = PlantedAttribute::Kind::Existence;
  a.prevalence = prevalence;
  a.multiplier = multiplier;
  a.phrase = std::move(phrase);
  return a;
}

PlantedAttribute numeric(std::string name, double prevalence, double multiplier,
                         std::string phrase) {
  PlantedAttribute a = existence(std::move(name), prevalence, multiplier, std::move(phrase));
  a.kind = PlantedAttribute::Kind::Numeric;
  a.high_range = {1000.0, 5000.0};
  a.low_range = {50.0, 900.0};
  return a;
}

std::vector<PlantedAttribute> default_review_attributes() {
  return {existence("high_end_gpu", 0.2, 10.0,
                    "The test bench pairs it with a high-end GPU such as the GeForce RTX 3090."),
          existence("rgb_lighting", 0.3, 1.0,
                    "Addressable RGB lighting can be controlled from the vendor software.")};
}

std::vector<PlantedAttribute> default_news_attributes() {
  return {numeric("market_value", 0.2, 10.0, "The product has a market value of {value} USD."),
          existence("press_release", 0.3, 1.0,
                    "The announcement was distributed as an official press release.")};
}

}  // namespace

SynthSpec default_synth_spec() {
  constexpr double kSpread = 0.15;
  SynthSpec spec;
  spec.name = "archive-shaped-2000";

  CategorySpec artikel;
  artikel.name = "artikel";
  artikel.items = 800;
  artikel.editorial = {editorial("hardware", 0.60, 17, kSpread),
                       editorial("software", 0.15, 4, kSpread),
                       editorial("consumer-electronics", 0.15, 8, kSpread),
                       editorial("sonstiges", 0.10, 4, kSpread)};
  artikel.attributes = default_review_attributes();

  CategorySpec news;
  news.name = "news";
  news.items = 1200;
  news.editorial = {editorial("hardware", 0.40, 4, kSpread),
                    editorial("software", 0.25, 4, kSpread),
                    editorial("allgemein", 0.20, 4, kSpread),
                    editorial("consumer-electronics", 0.15, 4, kSpread)};
  news.attributes = default_news_attributes();

  spec.categories = {std::move(artikel), std::move(news)};
  return spec;
}

SynthSpec archive_shaped_spec() {
  constexpr double kSpread = 0.6;
  SynthSpec spec;
  spec.name = "archive-shaped-8939";

  CategorySpec artikel;
  artikel.name = "artikel";
  artikel.items = 1624;
  artikel.editorial = {editorial_count("hardware", 1371, 17, kSpread),
                       editorial_count("software", 124, 6, kSpread),
                       editorial_count("consumer-electronics", 111, 9, kSpread),
                       editorial_count("sonstiges", 18, 7, kSpread)};
  artikel.attributes = default_review_attributes();

  CategorySpec news;
  news.name = "news";
  news.items = 7315;
  news.editorial = {editorial_count("hardware", 3744, 4, kSpread),
                    editorial_count("software", 1663, 4, kSpread),
                    editorial_count("allgemein", 1209, 4, kSpread),
                    editorial_count("consumer-electronics", 699, 5, kSpread)};
  news.attributes = default_news_attributes();

  spec.categories = {std::move(artikel), std::move(news)};
  return spec;
}

}  // namespace lmtree
