#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lmtree/corpus.hpp"
#include "lmtree/random.hpp"

namespace testutil {

using namespace lmtree;

inline ContentItem make_item(std::string id, std::string category, Money wtp_center,
                             std::string editorial = "", LatentAttributes latent = {}) {
  ContentItem item;
  item.item_id = std::move(id);
  item.category = std::move(category);
  item.editorial_category = std::move(editorial);
  item.title = "title " + item.item_id;
  item.body = "body of " + item.item_id;
  item.wtp_center = wtp_center;
  item.latent_attributes = std::move(latent);
  return item;
}

/// `per_item` noiseless queries per item, in a seeded arrival order.
inline std::vector<Query> exact_queries(const std::vector<ContentItem>& items, int per_item,
                                        std::uint64_t seed = 7) {
  std::vector<Query> out;
  for (const auto& item : items) {
    for (int j = 0; j < per_item; ++j) {
      Query q;
      q.query_id = out.size();
      q.item_id = item.item_id;
      q.wtp = *item.wtp_center;
      out.push_back(q);
    }
  }
  Rng rng(seed);
  rng.shuffle(std::span<Query>(out));
  for (std::size_t i = 0; i < out.size(); ++i) out[i].arrival_index = i;
  return out;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("lmtree_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace testutil
