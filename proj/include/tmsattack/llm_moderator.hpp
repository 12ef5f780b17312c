#pragma once

// Prompt reconstruction from session logs, a text-completion client
// interface, response parsing, and offline replay scoring.

#include <cstdlib>
#include <memory>
#include <regex>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "tmsattack/core.hpp"
#include "tmsattack/session_log.hpp"

namespace tmsattack::llm {

inline constexpr std::size_t kFullMemory = 0;
inline constexpr double kSumTolerance = 0.5;

struct ReplayConfig {
  std::size_t memory_rounds = kFullMemory;  // 0 lists every earlier round
  bool include_chat = true;
  int perspective_player = 2;
  int retry_limit = 2;
  bool keep_prompts = false;

  void validate() const {
    if (perspective_player < 1 || perspective_player > static_cast<int>(kHumans)) {
      throw ValidationError("perspective_player must be 1..3");
    }
    if (retry_limit < 0) throw ValidationError("retry_limit must be non-negative");
  }
};

/// Parses "full" or a positive round count.
inline std::size_t parse_memory(const std::string& s) {
  if (s == "full") return kFullMemory;
  std::size_t used = 0;
  long k = 0;
  try {
    k = std::stol(s, &used);
  } catch (const std::exception&) {
    throw ValidationError("memory must be 'full' or a positive integer, got '" + s + "'");
  }
  if (used != s.size() || k < 1) throw ValidationError("memory must be 'full' or a positive integer, got '" + s + "'");
  return static_cast<std::size_t>(k);
}

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

inline std::string build_system_prompt() {
  return "In this game, we are studying the allocation of appraisal of people in team games.  You will be placed "
         "in a team of 4 individuals who will provide you with answers to some unknown question at every round.  "
         "In each round, your goal is to allocate 100 points among your performance depending on who you think is "
         "correct.  Your score for the round will be the sum of points allocated to the team members with the "
         "correct answer.  For eg. If Player 1 answered option 1, Player 2 answered option 2, Player 3 answered "
         "option 1 and Player 4 answered option 4, And you distributed your points as [25,30,20,25], and the "
         "correct answer is option 1, you will receive 25 + 30 = 55 points for the round.  You will also have "
         "access to a chatlog that represents a discussion between the participants.  After each round, you will "
         "receive feedback for the points you have assigned, and you will find out which of your teammates is "
         "correct and which ones were not.  In order to help you decide how to allocate points, you will be "
         "provided these results before every round. Specifically, I will give you a sentence about who was "
         "correct and who was wrong in each round. It is your job to maximize your team score.\n"
         "\n"
         "It is possible that one or more teammates are behaving maliciously and might give a wrong answer "
         "consistently on purpose. It is your job to identify such teammates by not allocating points to them.\n"
         "\n"
         "There are 25 rounds.  In each round, you will be given the chatlogs of the players, and their "
         "preference for the final answer. and the historical performance.";
}

inline constexpr std::string_view kClosingInstruction =
    "Given all this information, you need to allocate 100 points between these players.  Remember, you must "
    "return a python list of 4 numbers and a logical resoning in a RFC8259 compliant JSON response following "
    "this format without deviation: {\"Score_allocation\": [Python list of four numbers summing up to 100, each "
    "number representing the amount of points bet on player 1,2,3 and 4 respectively.], \"Reasoning\": \"A "
    "string explaining your reasoning for distributing the points this way\"} Do not include any additional "
    "text under any circumstance.";

inline std::string correctness_line(const RoundRecord& r) {
  std::string line = "In round number " + std::to_string(r.round_index) + ",";
  for (std::size_t i = 0; i < kAgents; ++i) {
    line += " Player " + std::to_string(i + 1) + " was " + (r.correctness[i] ? "Correct" : "Wrong");
    line += i + 1 < kAgents ? "," : ".";
  }
  return line;
}

inline std::string speaker_alias(const SessionLog& log, const ChatMessage& m) {
  if (!m.alias.empty()) return m.alias;
  if (m.speaker >= 1 && m.speaker <= static_cast<int>(kHumans)) return log.player_aliases[m.speaker - 1];
  return {};
}

/// Prompt for round k (1-based) as seen by the configured perspective player.
/// Only rounds before k contribute to the history section.
inline std::string build_user_prompt(const SessionLog& log, int k, const ReplayConfig& cfg) {
  cfg.validate();
  if (k < 1 || k > static_cast<int>(log.rounds.size())) {
    throw ValidationError("round " + std::to_string(k) + " is not recorded in the log");
  }
  const RoundRecord& cur = log.rounds[k - 1];
  std::string out = "This is round number " + std::to_string(k) + "/" + std::to_string(kRoundsPerGame) + ".\n\n";

  out += "PREVIOUS ROUNDS INFORMATION:\n";
  const int oldest = cfg.memory_rounds == kFullMemory ? 1 : std::max(1, k - static_cast<int>(cfg.memory_rounds));
  for (int r = k - 1; r >= oldest; --r) out += correctness_line(log.rounds[r - 1]) + "\n";
  out += "\n";

  out += "CURRENT ROUND INFORMATION:\n";
  for (std::size_t i = 0; i < kAgents; ++i) {
    const int opt = cur.individual_answers[i];
    const std::string& text = cur.options[static_cast<std::size_t>(opt)];
    out += "    ";
    out += i == 0 ? "In the current round, Player 1" : "Player " + std::to_string(i + 1);
    if (i == kAiIndex) out += " (AI)";
    out += " answered " + text + ", which was option number " + std::to_string(opt + 1) + ".\n";
  }
  out += "    \n";

  if (cfg.include_chat) {
    out += "CHAT LOG:\n";
    for (const auto& m : cur.chat) {
      out += "Player " + std::to_string(m.speaker) + " (" + speaker_alias(log, m) + "): " + m.text + "\n";
    }
    out += "\n";
  }
  out += "\n";

  const auto p = static_cast<std::size_t>(cfg.perspective_player - 1);
  out += "If you are player " + std::to_string(cfg.perspective_player) + ". Before the chat, your confidence level was " +
         std::to_string(cur.confidences_pre[p]) +
         " (7 means you are very confident, 1 means you are very unconfident.), and after the chat, your confidence "
         "level was " +
         std::to_string(cur.confidences_post[p]) + ".  ";
  out += kClosingInstruction;
  return out;
}

// ---------------------------------------------------------------------------
// Responses
// ---------------------------------------------------------------------------

struct ModeratorResponse {
  PointAllocation score_allocation;
  std::string reasoning;
};

namespace detail {

// End offset (exclusive) of the balanced object starting at `begin`, or npos.
inline std::size_t object_end(std::string_view text, std::size_t begin) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = begin; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

}  // namespace detail

/// First parseable JSON object embedded in free text.
inline json first_object(std::string_view text) {
  for (std::size_t i = text.find('{'); i != std::string_view::npos; i = text.find('{', i + 1)) {
    const std::size_t end = detail::object_end(text, i);
    if (end == std::string_view::npos) continue;
    json j = json::parse(text.substr(i, end - i), nullptr, false);
    if (!j.is_discarded() && j.is_object()) return j;
  }
  throw ParseError("response contains no JSON object");
}

inline ModeratorResponse parse_response(std::string_view text) {
  const json j = first_object(text);
  const auto it = j.find("Score_allocation");
  if (it == j.end()) throw ParseError("response has no Score_allocation field");
  if (!it->is_array()) throw ParseError("Score_allocation must be a list");
  if (it->size() != kAgents) {
    throw ParseError("Score_allocation must have 4 entries, got " + std::to_string(it->size()));
  }
  std::array<double, kAgents> w{};
  double sum = 0.0;
  for (std::size_t i = 0; i < kAgents; ++i) {
    const json& v = (*it)[i];
    if (!v.is_number()) throw ParseError("Score_allocation entries must be numbers");
    w[i] = v.get<double>();
    if (!std::isfinite(w[i]) || w[i] < 0.0) throw ParseError("Score_allocation entries must be non-negative");
    sum += w[i];
  }
  if (std::abs(sum - kPointsPerAllocation) > kSumTolerance) {
    throw ParseError("Score_allocation sums to " + std::to_string(sum) + ", expected 100");
  }
  ModeratorResponse r;
  r.score_allocation = largest_remainder(w);
  if (auto rs = j.find("Reasoning"); rs != j.end() && rs->is_string()) r.reasoning = rs->get<std::string>();
  return r;
}

// ---------------------------------------------------------------------------
// Clients
// ---------------------------------------------------------------------------

class CompletionClient {
 public:
  virtual ~CompletionClient() = default;
  virtual std::string complete(const std::string& system_prompt, const std::string& user_prompt) = 0;
  virtual std::string name() const = 0;
  virtual bool uses_network() const { return false; }
};

enum class MockStrategy { uniform, best_agent, accuracy_proportional };

inline std::string_view to_string(MockStrategy s) {
  switch (s) {
    case MockStrategy::uniform: return "uniform";
    case MockStrategy::best_agent: return "best_agent";
    case MockStrategy::accuracy_proportional: return "accuracy_proportional";
  }
  return "uniform";
}

inline MockStrategy parse_mock_strategy(std::string_view s) {
  if (s == "uniform") return MockStrategy::uniform;
  if (s == "best_agent") return MockStrategy::best_agent;
  if (s == "accuracy_proportional") return MockStrategy::accuracy_proportional;
  throw ValidationError("unknown mock strategy '" + std::string(s) + "'");
}

/// Success/failure counts per agent recovered from the history lines of a
/// user prompt; the mock sees exactly what a hosted model would see.
inline TeamHistory history_from_prompt(const std::string& prompt) {
  static const std::regex line_re(R"(In round number \d+, Player 1 was (Correct|Wrong), Player 2 was (Correct|Wrong), Player 3 was (Correct|Wrong), Player 4 was (Correct|Wrong)\.)");
  TeamHistory h;
  for (auto it = std::sregex_iterator(prompt.begin(), prompt.end(), line_re); it != std::sregex_iterator(); ++it) {
    for (std::size_t i = 0; i < kAgents; ++i) h[i].record((*it)[i + 1].str() == "Correct");
  }
  return h;
}

/// Deterministic offline stand-in for a hosted model.
class MockClient : public CompletionClient {
 public:
  explicit MockClient(MockStrategy strategy, std::uint64_t seed = 0) : strategy_(strategy), seed_(seed) {}

  PointAllocation allocate(const TeamHistory& h) const {
    switch (strategy_) {
      case MockStrategy::uniform:
        return PointAllocation::uniform();
      case MockStrategy::best_agent: {
        std::size_t best = 0;
        for (std::size_t i = 1; i < kAgents; ++i) {
          if (empirical_accuracy(h[i], true) > empirical_accuracy(h[best], true)) best = i;
        }
        PointAllocation a{{0, 0, 0, 0}};
        a.points[best] = kPointsPerAllocation;
        return a;
      }
      case MockStrategy::accuracy_proportional: {
        std::array<double, kAgents> w{};
        for (std::size_t i = 0; i < kAgents; ++i) w[i] = empirical_accuracy(h[i], true);
        return largest_remainder(w);
      }
    }
    return PointAllocation::uniform();
  }

  std::string complete(const std::string&, const std::string& user_prompt) override {
    const PointAllocation a = allocate(history_from_prompt(user_prompt));
    json j;
    j["Score_allocation"] = a.points;
    j["Reasoning"] = std::string("mock ") + std::string(to_string(strategy_)) + " allocation (seed " +
                     std::to_string(seed_) + ")";
    return j.dump();
  }

  std::string name() const override { return "mock:" + std::string(to_string(strategy_)); }

 private:
  MockStrategy strategy_;
  std::uint64_t seed_;
};

struct ExternalClientConfig {
  std::string name = "external";
  std::string endpoint;  // base URL, e.g. https://api.openai.com/v1
  std::string model = "gpt-4o-mini";
  double temperature = 0.0;
  int timeout_seconds = 60;

  /// Fills unset fields from TMSATTACK_LLM_ENDPOINT and TMSATTACK_LLM_MODEL.
  static ExternalClientConfig from_environment(ExternalClientConfig cfg) {
    if (cfg.endpoint.empty()) {
      const char* e = std::getenv("TMSATTACK_LLM_ENDPOINT");
      cfg.endpoint = e != nullptr ? e : "https://api.openai.com/v1";
    }
    if (const char* m = std::getenv("TMSATTACK_LLM_MODEL"); m != nullptr) cfg.model = m;
    return cfg;
  }
};

inline ExternalClientConfig external_config_from_environment() {
  return ExternalClientConfig::from_environment(ExternalClientConfig{});
}

/// OpenAI-compatible chat-completions client. The key is read from
/// TMSATTACK_LLM_API_KEY at request time and never stored in reports.
class ExternalClient : public CompletionClient {
 public:
  explicit ExternalClient(ExternalClientConfig cfg) : cfg_(std::move(cfg)) {
    const auto scheme = cfg_.endpoint.find("://");
    if (scheme == std::string::npos) throw ValidationError("endpoint must include a scheme: " + cfg_.endpoint);
    const auto slash = cfg_.endpoint.find('/', scheme + 3);
    host_ = cfg_.endpoint.substr(0, slash);
    base_path_ = slash == std::string::npos ? "" : cfg_.endpoint.substr(slash);
    while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
  }

  std::string complete(const std::string& system_prompt, const std::string& user_prompt) override {
    httplib::Client client(host_);
    client.set_read_timeout(cfg_.timeout_seconds, 0);
    client.set_connection_timeout(cfg_.timeout_seconds, 0);
    httplib::Headers headers;
    if (const char* key = std::getenv("TMSATTACK_LLM_API_KEY"); key != nullptr) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    const json body = {{"model", cfg_.model},
                       {"temperature", cfg_.temperature},
                       {"messages",
                        json::array({{{"role", "system"}, {"content", system_prompt}},
                                     {{"role", "user"}, {"content", user_prompt}}})}};
    auto res = client.Post(base_path_ + "/chat/completions", headers, body.dump(), "application/json");
    if (!res) throw Error("LLM request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error("LLM request returned HTTP " + std::to_string(res->status));
    const json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) throw ParseError("LLM reply is not JSON");
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("LLM reply has no message content: ") + e.what());
    }
  }

  std::string name() const override { return cfg_.name + ":" + cfg_.model; }
  bool uses_network() const override { return true; }

 private:
  ExternalClientConfig cfg_;
  std::string host_;
  std::string base_path_;
};

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

enum class ParseStatus { ok, retried, fallback };

inline std::string_view to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::ok: return "ok";
    case ParseStatus::retried: return "retried";
    case ParseStatus::fallback: return "fallback";
  }
  return "ok";
}

struct ReplayRound {
  int round = 0;
  PointAllocation allocation;
  CorrectnessVector correctness;
  double score = 0.0;
  ParseStatus status = ParseStatus::ok;
  int attempts = 0;
  std::string last_error;
  std::string user_prompt;  // only with keep_prompts
};

struct ReplaySummary {
  double cumulative = 0.0;
  double mean_rounds_1_10 = 0.0;
  double mean_rounds_11_25 = 0.0;
  int fallbacks = 0;
};

struct ReplayResult {
  std::string session_id;
  std::string client;
  std::vector<ReplayRound> rounds;
  ReplaySummary summary;
};

/// One row of the influence matrix scored against the correctness vector.
inline double allocation_score(const PointAllocation& a, const CorrectnessVector& p) {
  double s = 0.0;
  for (std::size_t i = 0; i < kAgents; ++i) {
    if (p[i]) s += a.points[i];
  }
  return s / kPointsPerAllocation;
}

inline ReplayResult replay_session(const SessionLog& log, const ReplayConfig& cfg, CompletionClient& client) {
  cfg.validate();
  ReplayResult out;
  out.session_id = log.session_id;
  out.client = client.name();
  const std::string system_prompt = build_system_prompt();
  double early = 0.0;
  double late = 0.0;
  int n_early = 0;
  int n_late = 0;
  for (int k = 1; k <= static_cast<int>(log.rounds.size()); ++k) {
    ReplayRound rr;
    rr.round = k;
    rr.correctness = log.rounds[k - 1].correctness;
    const std::string prompt = build_user_prompt(log, k, cfg);
    if (cfg.keep_prompts) rr.user_prompt = prompt;
    bool parsed = false;
    for (int attempt = 0; attempt <= cfg.retry_limit && !parsed; ++attempt) {
      ++rr.attempts;
      try {
        rr.allocation = parse_response(client.complete(system_prompt, prompt)).score_allocation;
        parsed = true;
      } catch (const std::exception& e) {
        rr.last_error = e.what();
      }
    }
    if (!parsed) {
      rr.allocation = PointAllocation::uniform();
      rr.status = ParseStatus::fallback;
      ++out.summary.fallbacks;
    } else if (rr.attempts > 1) {
      rr.status = ParseStatus::retried;
    }
    rr.score = allocation_score(rr.allocation, rr.correctness);
    out.summary.cumulative += rr.score;
    if (k <= kBaselineRounds) {
      early += rr.score;
      ++n_early;
    } else {
      late += rr.score;
      ++n_late;
    }
    out.rounds.push_back(std::move(rr));
  }
  out.summary.mean_rounds_1_10 = n_early > 0 ? early / n_early : 0.0;
  out.summary.mean_rounds_11_25 = n_late > 0 ? late / n_late : 0.0;
  return out;
}

inline json to_json(const ReplayResult& r) {
  json rounds = json::array();
  for (const auto& rr : r.rounds) {
    json j = {{"round", rr.round},
              {"allocation", rr.allocation.points},
              {"correctness", rr.correctness.entries},
              {"score", rr.score},
              {"parse_status", to_string(rr.status)},
              {"attempts", rr.attempts}};
    if (!rr.last_error.empty()) j["last_error"] = rr.last_error;
    rounds.push_back(std::move(j));
  }
  return {{"session_id", r.session_id},
          {"client", r.client},
          {"rounds", rounds},
          {"summary",
           {{"cumulative", r.summary.cumulative},
            {"mean_rounds_1_10", r.summary.mean_rounds_1_10},
            {"mean_rounds_11_25", r.summary.mean_rounds_11_25},
            {"fallbacks", r.summary.fallbacks}}}};
}

/// Per-round table: round, allocation, correctness, score, parse_status.
inline std::string replay_csv(const ReplayResult& r) {
  std::string out = "round,alloc_1,alloc_2,alloc_3,alloc_4,correct_1,correct_2,correct_3,correct_4,score,parse_status\n";
  char buf[32];
  for (const auto& rr : r.rounds) {
    out += std::to_string(rr.round);
    for (int p : rr.allocation.points) out += "," + std::to_string(p);
    for (bool c : rr.correctness.entries) out += c ? ",1" : ",0";
    std::snprintf(buf, sizeof buf, ",%.6f,", rr.score);
    out += buf;
    out += std::string(to_string(rr.status)) + "\n";
  }
  return out;
}

}  // namespace tmsattack::llm
