#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "lmtree/remote_analyst.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"

namespace lmtree {

using json = nlohmann::json;

RateLimiter::RateLimiter(double per_second, double burst)
    : rate_(per_second), capacity_(std::max(1.0, burst)), tokens_(capacity_), last_(Clock::now()) {}

void RateLimiter::acquire() {
  std::unique_lock lock(mutex_);
  while (true) {
    const auto now = Clock::now();
    tokens_ = std::min(capacity_,
                       tokens_ + rate_ * std::chrono::duration<double>(now - last_).count());
    last_ = now;
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
    lock.unlock();
    std::this_thread::sleep_for(wait);
    lock.lock();
  }
}

std::string truncate_utf8(const std::string& text, std::size_t limit) {
  if (text.size() <= limit) return text;
  std::size_t cut = limit;
  // Step back over continuation bytes (10xxxxxx) to a sequence boundary.
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  return text.substr(0, cut);
}

namespace {

json extract_json_object(const std::string& content) {
  const auto open = content.find('{');
  const auto close = content.rfind('}');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw std::invalid_argument("no JSON object in analyst answer");
  }
  try {
    return json::parse(content.substr(open, close - open + 1));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("analyst answer is not JSON: ") + e.what());
  }
}

std::string describe_items(std::span<const PublicItem> items, std::size_t truncation) {
  std::ostringstream out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    out << "[" << i + 1 << "] " << items[i].title << "\n"
        << truncate_utf8(items[i].body, truncation) << "\n\n";
  }
  return out.str();
}

const char* kProposalSystem =
    "You analyse content that AI crawlers pay to access. You receive items that "
    "sold at high prices and items that sold only at low prices. Find the single "
    "textual attribute that best separates them. Answer with one JSON object and "
    "nothing else.";

const char* kAnnotationSystem =
    "You extract one attribute from a text. Answer with one JSON object and nothing else.";

}  // namespace

std::optional<SplitProposal> parse_proposal_content(const std::string& content) {
  const json j = extract_json_object(content);
  if (!j.is_object()) throw std::invalid_argument("analyst answer is not an object");
  auto name_it = j.find("attribute_name");
  if (name_it == j.end()) throw std::invalid_argument("answer lacks attribute_name");
  if (name_it->is_null() || (name_it->is_string() && name_it->get<std::string>().empty())) {
    return std::nullopt;
  }
  if (!name_it->is_string()) throw std::invalid_argument("attribute_name must be a string");

  SplitProposal proposal;
  proposal.attribute.name = name_it->get<std::string>();
  proposal.attribute.description =
      j.value("attribute_description", std::string{proposal.attribute.name});
  try {
    proposal.rule_kind = rule_kind_from(j.at("rule_kind").get<std::string>());
    proposal.direction = side_from(j.value("direction", std::string{"high"}));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("bad proposal field: ") + e.what());
  }
  proposal.attribute.kind = proposal.rule_kind == RuleKind::Threshold ? AttributeKind::Numeric
                                                                       : AttributeKind::Existence;
  if (proposal.rule_kind == RuleKind::Threshold) {
    auto t = j.find("threshold");
    if (t == j.end() || !t->is_number()) {
      throw std::invalid_argument("threshold rule without a numeric threshold");
    }
    proposal.threshold = t->get<double>();
  }
  proposal.rationale = j.value("rationale", std::string{});
  proposal.validate();
  return proposal;
}

RemoteAnalyst::RemoteAnalyst(RemoteOptions options)
    : options_(std::move(options)),
      limiter_(options_.requests_per_second, static_cast<double>(options_.max_in_flight)) {
  const auto scheme_end = options_.base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw AnalystError("base_url must start with http:// or https://");
  }
  const auto path_start = options_.base_url.find('/', scheme_end + 3);
  host_ = options_.base_url.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : options_.base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  const std::string suffix = "/chat/completions";
  path_ = prefix.size() >= suffix.size() &&
                  prefix.compare(prefix.size() - suffix.size(), suffix.size(), suffix) == 0
              ? prefix
              : prefix + suffix;
  load_cache();
}

void RemoteAnalyst::load_cache() {
  if (options_.cache_path.empty()) return;
  std::ifstream in(options_.cache_path);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      Annotation a;
      a.item_id = j.at("item_id").get<std::string>();
      a.attribute = j.at("attribute").get<std::string>();
      if (j.contains("present") && !j["present"].is_null()) a.present = j["present"].get<bool>();
      if (j.contains("value") && !j["value"].is_null()) a.value = j["value"].get<double>();
      cache_.put(std::move(a));
    } catch (const json::exception&) {
      // A torn last line from an interrupted run; skip it.
    }
  }
}

void RemoteAnalyst::append_cache(const Annotation& annotation) {
  std::lock_guard lock(cache_mutex_);
  cache_.put(annotation);
  if (options_.cache_path.empty()) return;
  std::ofstream out(options_.cache_path, std::ios::app);
  json j{{"item_id", annotation.item_id}, {"attribute", annotation.attribute}};
  j["present"] = annotation.present ? json(*annotation.present) : json(nullptr);
  j["value"] = annotation.value ? json(*annotation.value) : json(nullptr);
  out << j.dump() << '\n';
}

RemoteAnalyst::CallResult RemoteAnalyst::chat(const std::string& system,
                                              const std::string& user) {
  httplib::Client client(host_);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(options_.timeout_seconds));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

  const json body{{"model", options_.model},
                  {"temperature", 0},
                  {"messages",
                   json::array({{{"role", "system"}, {"content", system}},
                                {{"role", "user"}, {"content", user}}})}};
  const std::string payload = body.dump();

  CallResult result;
  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(options_.backoff * (1 << (attempt - 1)));
    limiter_.acquire();
    {
      std::lock_guard lock(stats_mutex_);
      ++http_requests_;
    }
    auto response = client.Post(path_, headers, payload, "application/json");
    if (!response) {
      result.error = "transport error: " + httplib::to_string(response.error());
      continue;
    }
    if (response->status == 429 || response->status >= 500) {
      result.error = "HTTP " + std::to_string(response->status);
      continue;
    }
    if (response->status != 200) {
      // Auth and request errors do not improve with retries.
      result.status = CallStatus::Transport;
      result.error = "HTTP " + std::to_string(response->status) + ": " + response->body;
      return result;
    }
    try {
      const auto j = json::parse(response->body);
      result.content = j.at("choices").at(0).at("message").at("content").get<std::string>();
      result.status = CallStatus::Ok;
      return result;
    } catch (const json::exception& e) {
      // A 200 without the expected envelope counts as a malformed answer.
      result.status = CallStatus::Ok;
      result.content.clear();
      return result;
    }
  }
  result.status = CallStatus::Transport;
  return result;
}

std::optional<SplitProposal> RemoteAnalyst::propose_split(std::span<const PublicItem> high,
                                                          std::span<const PublicItem> low) {
  ++proposal_calls_;
  if (high.empty() || low.empty()) return std::nullopt;
  const auto h = high.first(std::min(high.size(), options_.sample_size));
  const auto l = low.first(std::min(low.size(), options_.sample_size));
  std::ostringstream user;
  user << "Items that sold at HIGH prices:\n\n"
       << describe_items(h, options_.body_truncation)
       << "Items that sold only at LOW prices:\n\n"
       << describe_items(l, options_.body_truncation)
       << "What textual attribute distinguishes the high-price items from the low-price "
          "items? Prefer an attribute that is either mentioned or not mentioned "
          "(rule_kind \"existence\"). If only a numeric quantity separates them, use "
          "rule_kind \"threshold\" with the cut-off in \"threshold\"; items with a value "
          "at or above it go to \"direction\". Reply as\n"
          "{\"attribute_name\": \"snake_case_name\", \"attribute_description\": \"...\", "
          "\"rule_kind\": \"existence\"|\"threshold\", \"threshold\": number or null, "
          "\"direction\": \"high\"|\"low\", \"rationale\": \"...\"}\n"
          "Use \"attribute_name\": null if nothing distinguishes the groups.";

  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    const auto call = chat(kProposalSystem, user.str());
    if (call.status == CallStatus::Transport) {
      throw AnalystError("analyst backend failure: " + call.error);
    }
    try {
      return parse_proposal_content(call.content);
    } catch (const std::invalid_argument&) {
      // Malformed answer: ask again.
    }
  }
  return std::nullopt;
}

std::optional<Annotation> RemoteAnalyst::annotate_one(const PublicItem& item,
                                                      const AttributeSpec& attribute,
                                                      bool& transport_failure) {
  std::ostringstream user;
  user << "Attribute: " << attribute.name << " (" << attribute.description << ")\n";
  if (attribute.kind == AttributeKind::Existence) {
    user << "Is this attribute mentioned in the text? Reply as {\"present\": true|false}.\n\n";
  } else {
    user << "What value does the text give for this attribute? Reply as "
            "{\"value\": number} or {\"value\": null} if the text gives none.\n\n";
  }
  user << item.title << "\n" << truncate_utf8(item.body, options_.body_truncation);

  for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
    const auto call = chat(kAnnotationSystem, user.str());
    if (call.status == CallStatus::Transport) {
      transport_failure = true;
      return std::nullopt;
    }
    try {
      const json j = extract_json_object(call.content);
      Annotation a{item.item_id, attribute.name, std::nullopt, std::nullopt};
      if (attribute.kind == AttributeKind::Existence) {
        if (!j.contains("present") || !j["present"].is_boolean()) continue;
        a.present = j["present"].get<bool>();
      } else {
        if (!j.contains("value")) continue;
        if (j["value"].is_number()) {
          a.value = j["value"].get<double>();
        } else if (!j["value"].is_null()) {
          continue;
        }
      }
      return a;
    } catch (const std::invalid_argument&) {
      // Malformed answer: ask again.
    }
  }
  return std::nullopt;
}

std::vector<Annotation> RemoteAnalyst::annotate(std::span<const PublicItem> items,
                                                const AttributeSpec& attribute) {
  std::vector<Annotation> out(items.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < items.size(); ++i) {
    ++annotation_calls_;
    std::lock_guard lock(cache_mutex_);
    if (const auto* cached = cache_.find(items[i].item_id, attribute.name)) {
      out[i] = *cached;
      ++cache_hits_;
    } else {
      pending.push_back(i);
    }
  }
  if (pending.empty()) return out;

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> transport_failures{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < pending.size(); k = next++) {
      const auto i = pending[k];
      bool transport = false;
      auto a = annotate_one(items[i], attribute, transport);
      if (a) {
        append_cache(*a);
        out[i] = std::move(*a);
      } else {
        // Unknown: routes to the low side and is not cached.
        out[i] = Annotation{items[i].item_id, attribute.name, std::nullopt, std::nullopt};
        if (transport) ++transport_failures;
      }
    }
  };
  const auto threads = std::min(options_.max_in_flight, pending.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  if (transport_failures == pending.size()) {
    throw AnalystError("analyst backend failure: every annotation request failed");
  }
  return out;
}

}  // namespace lmtree
