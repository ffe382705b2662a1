#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "lmtree/corpus.hpp"
#include "lmtree/synth.hpp"

using namespace lmtree;
using namespace testutil;

TEST_SUITE("corpus") {
  TEST_CASE("three valid records load with nothing dropped") {
    std::istringstream in(
        R"({"item_id":"a","category":"news","body":"x","views":3})"
        "\n"
        R"({"item_id":"b","category":"news","body":"y"})"
        "\n"
        R"({"item_id":"c","category":"artikel","body":"z","views":0,"title":"t"})"
        "\n");
    const auto result = parse_corpus(in);
    CHECK(result.items.size() == 3);
    CHECK(result.dropped_empty == 0);
    CHECK(result.items[0].views == 3);
    CHECK_FALSE(result.items[1].views.has_value());
    CHECK(result.items[2].title == "t");
  }

  TEST_CASE("empty bodies are dropped and counted") {
    std::istringstream in(
        R"({"item_id":"a","category":"news","body":"x"})"
        "\n"
        R"({"item_id":"b","category":"news","body":"  "})"
        "\n"
        R"({"item_id":"c","category":"news","body":"z"})"
        "\n");
    const auto result = parse_corpus(in);
    CHECK(result.items.size() == 2);
    CHECK(result.dropped_empty == 1);
  }

  TEST_CASE("load errors") {
    SUBCASE("duplicate id") {
      std::istringstream in(
          R"({"item_id":"a","category":"news","body":"x"})"
          "\n"
          R"({"item_id":"a","category":"news","body":"y"})"
          "\n");
      CHECK_THROWS_AS(parse_corpus(in), CorpusError);
    }
    SUBCASE("missing required field") {
      std::istringstream in(R"({"item_id":"a","body":"x"})");
      CHECK_THROWS_WITH_AS(parse_corpus(in), doctest::Contains("category"), CorpusError);
    }
    SUBCASE("unreadable file") {
      CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.jsonl"), CorpusError);
    }
    SUBCASE("malformed line") {
      std::istringstream in("{not json}\n");
      CHECK_THROWS_WITH_AS(parse_corpus(in), doctest::Contains("line 1"), CorpusError);
    }
  }

  TEST_CASE("archive-shaped file of 8,939 records loads completely") {
    const auto items = synth_corpus(archive_shaped_spec(), 3);
    const auto dir = scratch_dir("corpus_archive");
    std::ostringstream out;
    write_corpus(out, items);
    write_file(dir / "corpus.jsonl", out.str());
    const auto loaded = load_corpus(dir / "corpus.jsonl");
    CHECK(loaded.items.size() == 8939);
    CHECK(loaded.dropped_empty == 0);
    CHECK(loaded.items == items);
  }

  TEST_CASE("write then parse round-trips every field") {
    auto item = make_item("x1", "artikel", 0.02, "artikel/hardware",
                          {{"high_end_gpu", {false, 1.0}}, {"market_value", {true, 1500.0}}});
    item.views = 5;
    std::ostringstream out;
    write_corpus(out, std::vector<ContentItem>{item});
    std::istringstream in(out.str());
    const auto back = parse_corpus(in);
    REQUIRE(back.items.size() == 1);
    CHECK(back.items[0] == item);
  }

  TEST_CASE("calibration follows the view coefficient") {
    WtpModel model;
    ContentItem item;
    item.item_id = "i";
    item.views = 5;
    CHECK(calibrate_wtp(item, model) == doctest::Approx(0.020).epsilon(1e-12));
    item.views = 15;
    CHECK(calibrate_wtp(item, model) == doctest::Approx(0.060).epsilon(1e-12));
    CHECK(*item.wtp_center == doctest::Approx(0.060).epsilon(1e-12));
    item.views = 0;
    CHECK(calibrate_wtp(item, model) == 0.0);
  }

  TEST_CASE("calibration is linear in views") {
    WtpModel model;
    for (std::int64_t v : {1, 7, 123, 4000}) {
      ContentItem a, b;
      a.views = v;
      b.views = 2 * v;
      CHECK(calibrate_wtp(b, model) == doctest::Approx(2.0 * calibrate_wtp(a, model)));
    }
  }

  TEST_CASE("calibration needs views or a preset center") {
    ContentItem bare;
    bare.item_id = "bare";
    CHECK_THROWS_AS(calibrate_wtp(bare, WtpModel{}), CorpusError);
    ContentItem preset;
    preset.wtp_center = 0.3;
    CHECK(calibrate_wtp(preset, WtpModel{}) == 0.3);
  }

  TEST_CASE("wtp model validation") {
    CHECK_NOTHROW(WtpModel{}.validate());
    CHECK_THROWS_AS((WtpModel{0.0, 0.001, 9}.validate()), CorpusError);
    CHECK_THROWS_AS((WtpModel{0.004, -1.0, 9}.validate()), CorpusError);
    CHECK_THROWS_AS((WtpModel{0.004, 0.001, 0}.validate()), CorpusError);
  }

  TEST_CASE("nine queries per item over the archive-sized corpus") {
    auto items = synth_corpus(archive_shaped_spec(), 5);
    calibrate_all(items, WtpModel{});
    const auto queries = generate_queries(items, WtpModel{}, 11);
    CHECK(queries.size() == 80451);
    std::map<std::string, int> per_item;
    for (const auto& q : queries) {
      ++per_item[q.item_id];
      CHECK(q.wtp >= 0.0);
    }
    CHECK(per_item.size() == 8939);
    for (const auto& [id, n] : per_item) CHECK(n == 9);
  }

  TEST_CASE("zero noise reproduces the center exactly") {
    std::vector<ContentItem> items = {make_item("a", "c", 0.02), make_item("b", "c", 0.5)};
    const auto queries = generate_queries(items, WtpModel{0.004, 0.0, 9}, 1);
    for (const auto& q : queries) CHECK(q.wtp == (q.item_id == "a" ? 0.02 : 0.5));
  }

  TEST_CASE("clamped noise at a zero center has the half-normal mean") {
    // E[max(0, X)] for X ~ N(0, s^2) is s / sqrt(2 pi); its standard deviation
    // is s * sqrt(1/2 - 1/(2 pi)).
    const double s = 0.001;
    const double mean = s / std::sqrt(2.0 * std::numbers::pi);
    const double sd = s * std::sqrt(0.5 - 1.0 / (2.0 * std::numbers::pi));
    const int n = 10000;
    std::vector<ContentItem> items = {make_item("zero", "c", 0.0)};
    const auto queries = generate_queries(items, WtpModel{0.004, s, n}, 99);
    double sum = 0.0;
    for (const auto& q : queries) {
      REQUIRE(q.wtp >= 0.0);
      sum += q.wtp;
    }
    const double observed = sum / n;
    CHECK(mean == doctest::Approx(0.000399).epsilon(0.001));
    CHECK(std::abs(observed - mean) <= 3.0 * sd / std::sqrt(static_cast<double>(n)));
  }

  TEST_CASE("query generation is deterministic per seed") {
    auto items = synth_corpus(default_synth_spec(), 2);
    calibrate_all(items, WtpModel{});
    const auto a = generate_queries(items, WtpModel{}, 5);
    const auto b = generate_queries(items, WtpModel{}, 5);
    const auto c = generate_queries(items, WtpModel{}, 6);
    REQUIRE(a.size() == b.size());
    bool same = true, differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      same = same && a[i].query_id == b[i].query_id && a[i].wtp == b[i].wtp;
      differs = differs || a[i].query_id != c[i].query_id;
    }
    CHECK(same);
    CHECK(differs);
  }

  TEST_CASE("split reproduces the archive train/test sizes") {
    auto items = synth_corpus(archive_shaped_spec(), 1);
    calibrate_all(items, WtpModel{});
    const auto split = stratified_split(items, 1729.0 / 8939.0, WtpModel{}, 4);
    CHECK(split.train_items.size() == 7210);
    CHECK(split.test_items.size() == 1729);
    CHECK(split.train_queries.size() == 64890);
    CHECK(split.test_queries.size() == 15561);
  }

  TEST_CASE("single category split is exact") {
    std::vector<ContentItem> items;
    for (int i = 0; i < 10; ++i) items.push_back(make_item("i" + std::to_string(i), "c", 0.1));
    const auto split = stratified_split(items, 0.2, WtpModel{}, 1);
    CHECK(split.train_items.size() == 8);
    CHECK(split.test_items.size() == 2);
  }

  TEST_CASE("per-category test counts for an 80/20 corpus at 0.25") {
    // Independent check: each category rounds on its own and the totals
    // already agree, so no adjustment may happen.
    const std::map<std::string, std::size_t> sizes{{"a", 80}, {"b", 20}};
    const auto counts = stratified_test_counts(sizes, 0.25);
    CHECK(counts.at("a") == 20);
    CHECK(counts.at("b") == 5);
  }

  TEST_CASE("stratified counts hit the global total and stay within one item") {
    const std::map<std::string, std::size_t> sizes{{"a", 7}, {"b", 7}, {"c", 7}, {"d", 13}};
    for (double f : {0.193, 0.3, 0.5, 0.77}) {
      const auto counts = stratified_test_counts(sizes, f);
      std::size_t total = 0, n = 0;
      for (const auto& [cat, k] : counts) {
        total += k;
        n += sizes.at(cat);
        CHECK(std::abs(static_cast<double>(k) - f * static_cast<double>(sizes.at(cat))) <= 1.0);
      }
      CHECK(total == static_cast<std::size_t>(std::llround(f * static_cast<double>(n))));
    }
  }

  TEST_CASE("every category keeps at least one test item, even above the global total") {
    const std::map<std::string, std::size_t> sizes{{"a", 7}, {"b", 7}, {"c", 7}, {"d", 13}};
    const auto counts = stratified_test_counts(sizes, 0.1);  // round(3.4) = 3 < 4 categories
    for (const auto& [cat, k] : counts) CHECK(k == 1);
  }

  TEST_CASE("split is a partition with per-category proportions") {
    auto items = synth_corpus(default_synth_spec(), 8);
    calibrate_all(items, WtpModel{});
    const auto split = stratified_split(items, 0.193, WtpModel{}, 8);
    std::set<std::string> train(split.train_items.begin(), split.train_items.end());
    std::set<std::string> test(split.test_items.begin(), split.test_items.end());
    CHECK(train.size() + test.size() == items.size());
    for (const auto& id : test) CHECK_FALSE(train.contains(id));

    std::map<std::string, std::pair<int, int>> per_category;  // (total, test)
    for (const auto& item : items) {
      auto& [total, in_test] = per_category[item.category];
      ++total;
      in_test += test.contains(item.item_id) ? 1 : 0;
    }
    for (const auto& [cat, counts] : per_category) {
      CHECK(std::abs(counts.second - 0.193 * counts.first) <= 1.0);
    }
    for (const auto& q : split.train_queries) CHECK(train.contains(q.item_id));
    for (const auto& q : split.test_queries) CHECK(test.contains(q.item_id));
  }

  TEST_CASE("split errors") {
    std::vector<ContentItem> items = {make_item("a", "big", 0.1), make_item("b", "big", 0.1),
                                      make_item("c", "lonely", 0.1)};
    CHECK_THROWS_AS(stratified_split(items, 0.5, WtpModel{}, 1), CorpusError);
    items.pop_back();
    CHECK_THROWS_AS(stratified_split(items, 0.0, WtpModel{}, 1), CorpusError);
    CHECK_THROWS_AS(stratified_split(items, 1.0, WtpModel{}, 1), CorpusError);
  }

  TEST_CASE("split manifest and reruns are byte-identical") {
    auto items = synth_corpus(default_synth_spec(), 3);
    calibrate_all(items, WtpModel{});
    std::ostringstream a, b;
    write_split_manifest(a, stratified_split(items, 0.2, WtpModel{}, 9));
    write_split_manifest(b, stratified_split(items, 0.2, WtpModel{}, 9));
    CHECK(a.str() == b.str());
    CHECK(a.str().find(R"("split":"test")") != std::string::npos);
  }

  TEST_CASE("catalog exposes public fields and sorted categories") {
    std::vector<ContentItem> items = {make_item("a", "news", 0.1, "news/hw"),
                                      make_item("b", "artikel", 0.2, "artikel/hw")};
    Catalog catalog(items);
    CHECK(catalog.size() == 2);
    CHECK(catalog.categories() == std::vector<std::string>{"artikel", "news"});
    CHECK(catalog.at("b").category == "artikel");
    CHECK(catalog.find("zzz") == nullptr);
    CHECK_THROWS_AS(catalog.at("zzz"), CorpusError);
    CHECK(privileged::wtp_center(catalog, "b") == 0.2);
    CHECK(privileged::editorial_category(catalog, "a") == "news/hw");
  }
}
