#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lmtree/corpus.hpp"

namespace lmtree {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AnalystConfig {
  std::string backend = "oracle";  // oracle | remote
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4o-mini";
  std::string api_key_env = "LMTREE_API_KEY";
  std::size_t sample_size = 10;
  std::size_t body_truncation = 1500;
  int max_retries = 3;
  double requests_per_second = 5.0;
  std::size_t max_in_flight = 4;
  double timeout_seconds = 60.0;
  std::string cache_path;  // empty: <output_dir>/annotation_cache.jsonl
  double oracle_min_gap = 0.3;
  double oracle_min_ks = 0.3;
};

struct RunConfig {
  // Exactly one of corpus_path / synth_spec. synth_spec is a spec file path
  // or "default".
  std::string corpus_path;
  std::string synth_spec;
  std::uint64_t synth_seed = 1;

  WtpModel wtp;
  double test_fraction = 0.193;
  std::uint64_t split_seed = 1;
  std::uint64_t stream_seed = 1;

  int arms = 7;
  std::size_t trials_per_arm = 300;
  double span = 10.0;
  Money root_baseline = 0.05;

  int max_depth = 3;
  std::size_t min_high = 5;
  std::size_t min_leaf_items = 20;

  AnalystConfig analyst;
  std::string output_dir = "out";

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
/// Missing fields keep their defaults; unknown fields are an error.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

/// Applies "dotted.key=value" overrides (value parsed as JSON, falling back to
/// a plain string) on top of a config document.
nlohmann::json apply_overrides(nlohmann::json document, const std::vector<std::string>& overrides);

/// Stable hash of the canonical config document, 16 hex digits.
std::string config_hash(const RunConfig& config);

}  // namespace lmtree
