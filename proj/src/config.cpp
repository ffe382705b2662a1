#include "lmtree/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "lmtree/random.hpp"

namespace lmtree {

using json = nlohmann::json;

void RunConfig::validate() const {
  if (corpus_path.empty() == synth_spec.empty()) {
    throw ConfigError("set exactly one of corpus.path and corpus.synth_spec");
  }
  try {
    wtp.validate();
  } catch (const CorpusError& e) {
    throw ConfigError(std::string("wtp: ") + e.what());
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("split.test_fraction must lie in (0, 1)");
  }
  if (arms < 2) throw ConfigError("exploration.arms must be >= 2");
  if (trials_per_arm < 1) throw ConfigError("exploration.trials_per_arm must be >= 1");
  if (!(span > 1.0)) throw ConfigError("exploration.span must be > 1");
  if (!(root_baseline > 0.0)) throw ConfigError("exploration.root_baseline must be > 0");
  if (max_depth < 0) throw ConfigError("tree.max_depth must be >= 0");
  if (min_high < 1) throw ConfigError("tree.min_high must be >= 1");
  if (min_leaf_items < 1) throw ConfigError("tree.min_leaf_items must be >= 1");
  if (analyst.backend != "oracle" && analyst.backend != "remote") {
    throw ConfigError("analyst.backend must be oracle or remote");
  }
  if (analyst.sample_size < 1) throw ConfigError("analyst.sample_size must be >= 1");
  if (analyst.body_truncation < 1) throw ConfigError("analyst.body_truncation must be >= 1");
  if (analyst.max_retries < 0) throw ConfigError("analyst.max_retries must be >= 0");
  if (!(analyst.requests_per_second > 0.0)) {
    throw ConfigError("analyst.requests_per_second must be > 0");
  }
  if (analyst.max_in_flight < 1) throw ConfigError("analyst.max_in_flight must be >= 1");
  if (!(analyst.timeout_seconds > 0.0)) throw ConfigError("analyst.timeout_seconds must be > 0");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

json to_json(const RunConfig& c) {
  return {
      {"corpus", {{"path", c.corpus_path}, {"synth_spec", c.synth_spec}, {"synth_seed", c.synth_seed}}},
      {"wtp",
       {{"coefficient", c.wtp.coefficient},
        {"noise_std", c.wtp.noise_std},
        {"queries_per_item", c.wtp.queries_per_item}}},
      {"split", {{"test_fraction", c.test_fraction}, {"seed", c.split_seed}, {"stream_seed", c.stream_seed}}},
      {"exploration",
       {{"arms", c.arms},
        {"trials_per_arm", c.trials_per_arm},
        {"span", c.span},
        {"root_baseline", c.root_baseline}}},
      {"tree",
       {{"max_depth", c.max_depth}, {"min_high", c.min_high}, {"min_leaf_items", c.min_leaf_items}}},
      {"analyst",
       {{"backend", c.analyst.backend},
        {"base_url", c.analyst.base_url},
        {"model", c.analyst.model},
        {"api_key_env", c.analyst.api_key_env},
        {"sample_size", c.analyst.sample_size},
        {"body_truncation", c.analyst.body_truncation},
        {"max_retries", c.analyst.max_retries},
        {"requests_per_second", c.analyst.requests_per_second},
        {"max_in_flight", c.analyst.max_in_flight},
        {"timeout_seconds", c.analyst.timeout_seconds},
        {"cache_path", c.analyst.cache_path},
        {"oracle_min_gap", c.analyst.oracle_min_gap},
        {"oracle_min_ks", c.analyst.oracle_min_ks}}},
      {"output_dir", c.output_dir}};
}

namespace {

// Overlays `source` onto `target`, rejecting keys the defaults do not have.
void merge_known(json& target, const json& source, const std::string& path) {
  if (!source.is_object()) throw ConfigError("'" + path + "' must be an object");
  for (const auto& [key, value] : source.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!target.contains(key)) throw ConfigError("unknown config field '" + where + "'");
    if (target[key].is_object()) {
      merge_known(target[key], value, where);
    } else {
      target[key] = value;
    }
  }
}

}  // namespace

RunConfig config_from_json(const json& j) {
  json merged = to_json(RunConfig{});
  merged["corpus"]["synth_spec"] = "";
  merge_known(merged, j, "");
  RunConfig c;
  try {
    const auto& corpus = merged.at("corpus");
    c.corpus_path = corpus.at("path").get<std::string>();
    c.synth_spec = corpus.at("synth_spec").get<std::string>();
    c.synth_seed = corpus.at("synth_seed").get<std::uint64_t>();
    const auto& wtp = merged.at("wtp");
    c.wtp.coefficient = wtp.at("coefficient").get<double>();
    c.wtp.noise_std = wtp.at("noise_std").get<double>();
    c.wtp.queries_per_item = wtp.at("queries_per_item").get<int>();
    const auto& split = merged.at("split");
    c.test_fraction = split.at("test_fraction").get<double>();
    c.split_seed = split.at("seed").get<std::uint64_t>();
    c.stream_seed = split.at("stream_seed").get<std::uint64_t>();
    const auto& ex = merged.at("exploration");
    c.arms = ex.at("arms").get<int>();
    c.trials_per_arm = ex.at("trials_per_arm").get<std::size_t>();
    c.span = ex.at("span").get<double>();
    c.root_baseline = ex.at("root_baseline").get<double>();
    const auto& tree = merged.at("tree");
    c.max_depth = tree.at("max_depth").get<int>();
    c.min_high = tree.at("min_high").get<std::size_t>();
    c.min_leaf_items = tree.at("min_leaf_items").get<std::size_t>();
    const auto& an = merged.at("analyst");
    c.analyst.backend = an.at("backend").get<std::string>();
    c.analyst.base_url = an.at("base_url").get<std::string>();
    c.analyst.model = an.at("model").get<std::string>();
    c.analyst.api_key_env = an.at("api_key_env").get<std::string>();
    c.analyst.sample_size = an.at("sample_size").get<std::size_t>();
    c.analyst.body_truncation = an.at("body_truncation").get<std::size_t>();
    c.analyst.max_retries = an.at("max_retries").get<int>();
    c.analyst.requests_per_second = an.at("requests_per_second").get<double>();
    c.analyst.max_in_flight = an.at("max_in_flight").get<std::size_t>();
    c.analyst.timeout_seconds = an.at("timeout_seconds").get<double>();
    c.analyst.cache_path = an.at("cache_path").get<std::string>();
    c.analyst.oracle_min_gap = an.at("oracle_min_gap").get<double>();
    c.analyst.oracle_min_ks = an.at("oracle_min_ks").get<double>();
    c.output_dir = merged.at("output_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

json apply_overrides(json document, const std::vector<std::string>& overrides) {
  for (const auto& entry : overrides) {
    const auto eq = entry.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + entry + "' is not key=value");
    }
    const std::string key = entry.substr(0, eq);
    const std::string raw = entry.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    json* node = &document;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
      if (part.empty()) throw ConfigError("override key '" + key + "' is malformed");
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      if (!node->contains(part)) (*node)[part] = json::object();
      node = &(*node)[part];
      start = dot + 1;
    }
  }
  return document;
}

std::string config_hash(const RunConfig& config) {
  char buffer[17];
  // output_dir does not change results, so it stays out of the hash.
  json canonical = to_json(config);
  canonical.erase("output_dir");
  canonical["analyst"].erase("cache_path");
  std::snprintf(buffer, sizeof buffer, "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical.dump())));
  return buffer;
}

}  // namespace lmtree
