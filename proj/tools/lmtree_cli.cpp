// lmtree: synthesize corpora, train the pricing policies, evaluate them.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "CLI11.hpp"
#include "json.hpp"
#include "lmtree/pipeline.hpp"
#include "lmtree/remote_analyst.hpp"
#include "lmtree/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace lmtree;

namespace {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kBudgetExhausted = 3, kAnalystFailure = 4 };

struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;
  std::string out;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("-c,--config", args.path, "Run config (JSON)")->required();
  cmd->add_option("--set", args.overrides, "Override a field, e.g. --set tree.max_depth=0");
  cmd->add_option("-o,--out", args.out, "Output directory (overrides output_dir)");
}

RunConfig resolve_config(const ConfigArgs& args) {
  std::ifstream in(args.path);
  if (!in) throw ConfigError("cannot read config " + args.path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + args.path + ": " + e.what());
  }
  // Relative corpus and spec paths in the file resolve against the file.
  const auto base = fs::path(args.path).parent_path();
  for (const char* key : {"path", "synth_spec"}) {
    if (!doc.contains("corpus") || !doc["corpus"].contains(key)) continue;
    const auto value = doc["corpus"][key].get<std::string>();
    if (value.empty() || value == "default" || fs::path(value).is_absolute()) continue;
    doc["corpus"][key] = (base / value).lexically_normal().string();
  }
  auto overrides = args.overrides;
  if (!args.out.empty()) overrides.push_back("output_dir=" + json(args.out).dump());
  doc = apply_overrides(std::move(doc), overrides);
  return config_from_json(doc);
}

void write_effective_config(const RunConfig& config) {
  json doc = to_json(config);
  doc["config_hash"] = config_hash(config);
  write_text(fs::path(config.output_dir) / "effective_config.json", doc.dump(2) + "\n");
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n == 0 ? 0.0 : (n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]));
}

int cmd_synth(const std::string& spec_path, std::uint64_t seed, const std::string& out,
              bool dump_spec) {
  const auto spec = spec_path == "default" ? default_synth_spec() : load_synth_spec(spec_path);
  if (dump_spec) {
    std::cout << synth_spec_to_json(spec) << '\n';
    return kOk;
  }
  const auto items = synth_corpus(spec, seed);
  std::ostringstream body;
  write_corpus(body, items);
  write_text(out, body.str());

  // Shape summary: per-category counts, median views, top-decile view share.
  std::map<std::string, std::vector<double>> views;
  std::vector<double> all;
  for (const auto& item : items) {
    views[item.category].push_back(static_cast<double>(item.views.value_or(0)));
    all.push_back(static_cast<double>(item.views.value_or(0)));
  }
  std::sort(all.rbegin(), all.rend());
  const double total = std::accumulate(all.begin(), all.end(), 0.0);
  const auto decile = std::max<std::size_t>(1, all.size() / 10);
  const double top = std::accumulate(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(decile), 0.0);
  std::printf("wrote %zu items to %s\n", items.size(), out.c_str());
  std::printf("%-12s %8s %12s %12s\n", "category", "items", "median views", "mean views");
  for (const auto& [category, v] : views) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    std::printf("%-12s %8zu %12.1f %12.2f\n", category.c_str(), v.size(), median(v), mean);
  }
  std::printf("top 10%% of items hold %.1f%% of views\n", total > 0 ? 100.0 * top / total : 0.0);
  return kOk;
}

int cmd_train(const RunConfig& config) {
  const auto experiment = prepare_experiment(config);
  const fs::path dir(config.output_dir);
  fs::create_directories(dir);
  write_effective_config(config);
  std::ostringstream manifest;
  write_split_manifest(manifest, experiment.split);
  write_text(dir / "split_manifest.jsonl", manifest.str());

  auto analyst = make_analyst(config, *experiment.catalog);
  std::ofstream trace(dir / "train_trace.jsonl", std::ios::binary);
  auto policies = train_all(experiment, *analyst, &trace);
  write_policies(dir, policies);

  std::printf("train items %zu, test items %zu, dropped empty %zu\n",
              experiment.split.train_items.size(), experiment.split.test_items.size(),
              experiment.dropped_empty);
  for (const auto& [name, revenue] : policies.train_revenue) {
    std::printf("%-14s train revenue %.4f\n", name.c_str(), revenue);
  }
  std::printf("policies written to %s\n", (dir / "policies").string().c_str());
  if (policies.budget_exhausted()) {
    std::printf("query budget exhausted during training\n");
    return kBudgetExhausted;
  }
  return kOk;
}

int cmd_eval(const RunConfig& config) {
  const auto experiment = prepare_experiment(config);
  const fs::path dir(config.output_dir);
  write_effective_config(config);
  auto policies = read_policies(dir);
  auto analyst = make_analyst(config, *experiment.catalog);
  const auto output = evaluate_all(experiment, policies, analyst.get());
  write_text(dir / "report.csv", output.report.to_csv());
  write_text(dir / "report.txt", output.report.to_text());
  write_text(dir / "split_shares.csv", output.shares.to_csv());
  write_text(dir / "split_shares.txt", output.shares.to_text());
  // Lazily annotated test items are now cached in the tree.
  write_text(dir / "policies" / (std::string(kTreePolicy) + ".json"), serialize(policies.tree));
  std::cout << output.report.to_text() << '\n' << output.shares.to_text();
  return policies.budget_exhausted() ? kBudgetExhausted : kOk;
}

int cmd_report(const std::string& dir) {
  std::cout << read_text(fs::path(dir) / "report.txt") << '\n'
            << read_text(fs::path(dir) / "split_shares.txt");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive pricing trees for pay-per-crawl content"};
  app.require_subcommand(1);

  std::string spec_path;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  bool dump_spec = false;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("-s,--spec", spec_path, "Spec file, or 'default'")->required();
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("-o,--out", synth_out, "Corpus file to write");
  synth->add_flag("--dump-spec", dump_spec, "Print the resolved spec and exit");

  ConfigArgs train_args, eval_args, run_args;
  auto* train = app.add_subcommand("train", "Split the corpus and train all four policies");
  add_config_options(train, train_args);
  auto* eval = app.add_subcommand("eval", "Evaluate trained policies on the test stream");
  add_config_options(eval, eval_args);
  auto* run = app.add_subcommand("run", "train followed by eval");
  add_config_options(run, run_args);

  std::string report_dir;
  auto* report = app.add_subcommand("report", "Print the report of an evaluated run");
  report->add_option("dir", report_dir, "Output directory of the run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (synth->parsed()) {
      if (!dump_spec && synth_out.empty()) throw ConfigError("synth needs --out");
      return cmd_synth(spec_path, synth_seed, synth_out, dump_spec);
    }
    if (train->parsed()) return cmd_train(resolve_config(train_args));
    if (eval->parsed()) return cmd_eval(resolve_config(eval_args));
    if (run->parsed()) {
      const auto config = resolve_config(run_args);
      const int trained = cmd_train(config);
      const int evaluated = cmd_eval(config);
      return std::max(trained, evaluated);
    }
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const CorpusError& e) {
    std::cerr << "corpus error: " << e.what() << '\n';
    return kConfigError;
  } catch (const AnalystError& e) {
    std::cerr << "analyst error: " << e.what() << '\n';
    return kAnalystFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
