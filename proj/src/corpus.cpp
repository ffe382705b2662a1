#include "lmtree/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_set>

#include "json.hpp"
#include "lmtree/random.hpp"

namespace lmtree {

using json = nlohmann::json;

std::string_view to_string(Phase phase) { return phase == Phase::Train ? "train" : "test"; }

namespace {

std::string required_string(const json& record, const char* field, std::size_t line) {
  auto it = record.find(field);
  if (it == record.end() || it->is_null()) {
    throw CorpusError("line " + std::to_string(line) + ": missing required field '" + field +
                      "'");
  }
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  throw CorpusError("line " + std::to_string(line) + ": field '" + field +
                    "' must be a string");
}

ContentItem item_from_json(const json& record, std::size_t line) {
  if (!record.is_object()) {
    throw CorpusError("line " + std::to_string(line) + ": record is not a JSON object");
  }
  ContentItem item;
  item.item_id = required_string(record, "item_id", line);
  item.category = required_string(record, "category", line);
  item.body = required_string(record, "body", line);
  item.title = record.value("title", std::string{});
  item.editorial_category = record.value("editorial_category", std::string{});
  if (auto it = record.find("views"); it != record.end() && !it->is_null()) {
    const auto views = it->get<std::int64_t>();
    if (views < 0) throw CorpusError("line " + std::to_string(line) + ": negative views");
    item.views = views;
  }
  if (auto it = record.find("wtp_center"); it != record.end() && !it->is_null()) {
    item.wtp_center = it->get<double>();
  }
  if (auto it = record.find("latent_attributes"); it != record.end() && it->is_object()) {
    for (const auto& [name, value] : it->items()) {
      if (value.is_boolean()) {
        if (value.get<bool>()) item.latent_attributes[name] = LatentValue{false, 1.0};
      } else if (value.is_number()) {
        item.latent_attributes[name] = LatentValue{true, value.get<double>()};
      } else {
        throw CorpusError("line " + std::to_string(line) + ": latent attribute '" + name +
                          "' must be boolean or numeric");
      }
    }
  }
  return item;
}

json item_to_json(const ContentItem& item) {
  json record;
  record["item_id"] = item.item_id;
  record["category"] = item.category;
  if (!item.editorial_category.empty()) record["editorial_category"] = item.editorial_category;
  record["title"] = item.title;
  record["body"] = item.body;
  if (item.views) record["views"] = *item.views;
  if (item.wtp_center) record["wtp_center"] = *item.wtp_center;
  if (!item.latent_attributes.empty()) {
    json latent = json::object();
    for (const auto& [name, value] : item.latent_attributes) {
      if (value.numeric) {
        latent[name] = value.value;
      } else {
        latent[name] = true;
      }
    }
    record["latent_attributes"] = std::move(latent);
  }
  return record;
}

}  // namespace

void WtpModel::validate() const {
  if (!(coefficient > 0.0)) throw CorpusError("wtp coefficient must be > 0");
  if (!(noise_std >= 0.0)) throw CorpusError("wtp noise_std must be >= 0");
  if (queries_per_item < 1) throw CorpusError("queries_per_item must be >= 1");
}

LoadResult parse_corpus(std::istream& in) {
  LoadResult result;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw CorpusError("line " + std::to_string(line_no) + ": " + e.what());
    }
    ContentItem item = item_from_json(record, line_no);
    if (!seen.insert(item.item_id).second) {
      throw CorpusError("line " + std::to_string(line_no) + ": duplicate item_id '" +
                        item.item_id + "'");
    }
    if (item.body.find_first_not_of(" \t\r\n") == std::string::npos) {
      ++result.dropped_empty;
      continue;
    }
    result.items.push_back(std::move(item));
  }
  return result;
}

LoadResult load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot read corpus file " + path.string());
  return parse_corpus(in);
}

void write_corpus(std::ostream& out, std::span<const ContentItem> items) {
  for (const auto& item : items) out << item_to_json(item).dump() << '\n';
}

Money calibrate_wtp(ContentItem& item, const WtpModel& model) {
  if (item.views) {
    item.wtp_center = model.coefficient * static_cast<double>(*item.views);
  } else if (!item.wtp_center) {
    throw CorpusError("item '" + item.item_id + "' has neither views nor wtp_center");
  }
  return *item.wtp_center;
}

void calibrate_all(std::span<ContentItem> items, const WtpModel& model) {
  model.validate();
  for (auto& item : items) calibrate_wtp(item, model);
}

std::vector<Query> generate_queries(std::span<const ContentItem> items,
                                    const WtpModel& model, std::uint64_t seed) {
  model.validate();
  const auto per_item = static_cast<std::size_t>(model.queries_per_item);
  std::vector<Query> queries;
  queries.reserve(items.size() * per_item);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    if (!item.wtp_center) {
      throw CorpusError("item '" + item.item_id + "' has no wtp_center; calibrate first");
    }
    Rng rng(derive_seed(seed, item.item_id));
    for (std::size_t j = 0; j < per_item; ++j) {
      Query q;
      q.query_id = static_cast<QueryId>(i * per_item + j);
      q.item_id = item.item_id;
      const double draw = model.noise_std > 0.0
                              ? rng.normal(*item.wtp_center, model.noise_std)
                              : *item.wtp_center;
      q.wtp = std::max(0.0, draw);
      queries.push_back(std::move(q));
    }
  }
  Rng order(derive_seed(seed, "arrival"));
  order.shuffle(std::span<Query>(queries));
  for (std::size_t k = 0; k < queries.size(); ++k) queries[k].arrival_index = k;
  return queries;
}

std::map<std::string, std::size_t> stratified_test_counts(
    const std::map<std::string, std::size_t>& category_sizes, double test_fraction) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw CorpusError("test_fraction must lie strictly between 0 and 1");
  }
  std::size_t total = 0;
  std::map<std::string, std::size_t> counts;
  std::map<std::string, double> residual;  // exact share minus assigned count
  for (const auto& [category, n] : category_sizes) {
    if (n < 2) {
      throw CorpusError("category '" + category + "' has fewer than 2 items; cannot split");
    }
    total += n;
    const double exact = test_fraction * static_cast<double>(n);
    auto k = static_cast<std::size_t>(std::llround(exact));
    k = std::clamp<std::size_t>(k, 1, n - 1);
    counts[category] = k;
    residual[category] = exact - static_cast<double>(k);
  }
  const auto target = static_cast<long long>(std::llround(test_fraction * static_cast<double>(total)));
  long long diff = target;
  for (const auto& [category, k] : counts) diff -= static_cast<long long>(k);

  // First sweep only touches categories whose rounding went the other way, so
  // every category stays within one item of its exact share when possible.
  for (int pass = 0; pass < 2 && diff != 0; ++pass) {
    bool moved = true;
    while (diff != 0 && moved) {
      moved = false;
      for (auto& [category, k] : counts) {
        if (diff == 0) break;
        const std::size_t n = category_sizes.at(category);
        const double r = residual[category];
        if (diff > 0 && k + 1 <= n - 1 && (pass == 1 || r > 0.0)) {
          ++k;
          residual[category] -= 1.0;
          --diff;
          moved = true;
        } else if (diff < 0 && k > 1 && (pass == 1 || r < 0.0)) {
          --k;
          residual[category] += 1.0;
          ++diff;
          moved = true;
        }
      }
      if (pass == 0) break;
    }
  }
  return counts;
}

CorpusSplit stratified_split(std::span<const ContentItem> items, double test_fraction,
                             const WtpModel& model, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_category;
  for (std::size_t i = 0; i < items.size(); ++i) by_category[items[i].category].push_back(i);
  std::map<std::string, std::size_t> sizes;
  for (const auto& [category, members] : by_category) sizes[category] = members.size();
  const auto test_counts = stratified_test_counts(sizes, test_fraction);

  std::vector<bool> is_test(items.size(), false);
  for (auto& [category, members] : by_category) {
    Rng rng(derive_seed(seed, "split/" + category));
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t k = 0; k < test_counts.at(category); ++k) is_test[members[k]] = true;
  }

  CorpusSplit split;
  std::unordered_set<std::string> test_ids;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (is_test[i]) {
      split.test_items.push_back(items[i].item_id);
      test_ids.insert(items[i].item_id);
    } else {
      split.train_items.push_back(items[i].item_id);
    }
  }
  for (auto& q : generate_queries(items, model, derive_seed(seed, "queries"))) {
    auto& bucket = test_ids.contains(q.item_id) ? split.test_queries : split.train_queries;
    q.arrival_index = bucket.size();
    bucket.push_back(std::move(q));
  }
  return split;
}

void write_split_manifest(std::ostream& out, const CorpusSplit& split) {
  for (const auto& id : split.train_items) {
    out << json{{"item_id", id}, {"split", "train"}}.dump() << '\n';
  }
  for (const auto& id : split.test_items) {
    out << json{{"item_id", id}, {"split", "test"}}.dump() << '\n';
  }
}

Catalog::Catalog(std::vector<ContentItem> items) {
  public_.reserve(items.size());
  hidden_.reserve(items.size());
  for (auto& item : items) {
    if (!index_.emplace(item.item_id, public_.size()).second) {
      throw CorpusError("duplicate item_id '" + item.item_id + "'");
    }
    hidden_.push_back(Hidden{std::move(item.editorial_category), item.wtp_center.value_or(0.0),
                             std::move(item.latent_attributes)});
    public_.push_back(PublicItem{std::move(item.item_id), std::move(item.category),
                                 std::move(item.title), std::move(item.body)});
  }
}

std::size_t Catalog::index_of(std::string_view item_id) const {
  auto it = index_.find(std::string(item_id));
  if (it == index_.end()) throw CorpusError("unknown item_id '" + std::string(item_id) + "'");
  return it->second;
}

const PublicItem* Catalog::find(std::string_view item_id) const {
  auto it = index_.find(std::string(item_id));
  return it == index_.end() ? nullptr : &public_[it->second];
}

const PublicItem& Catalog::at(std::string_view item_id) const {
  return public_[index_of(item_id)];
}

std::vector<std::string> Catalog::categories() const {
  std::set<std::string> unique;
  for (const auto& item : public_) unique.insert(item.category);
  return {unique.begin(), unique.end()};
}

namespace privileged {

std::string_view editorial_category(const Catalog& catalog, std::string_view item_id) {
  return catalog.hidden_[catalog.index_of(item_id)].editorial_category;
}

const LatentAttributes& latent_attributes(const Catalog& catalog, std::string_view item_id) {
  return catalog.hidden_[catalog.index_of(item_id)].latent;
}

Money wtp_center(const Catalog& catalog, std::string_view item_id) {
  return catalog.hidden_[catalog.index_of(item_id)].wtp_center;
}

}  // namespace privileged

}  // namespace lmtree
