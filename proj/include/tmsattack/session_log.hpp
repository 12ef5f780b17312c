#pragma once

// Session log schema, question bank, and their line-delimited JSON encoding.

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tmsattack/core.hpp"

namespace tmsattack {

using nlohmann::json;

inline constexpr std::string_view kSessionLogSchema = "tmsattack.session_log.v1";

// ---------------------------------------------------------------------------
// Questions
// ---------------------------------------------------------------------------

struct Question {
  std::string id;
  std::string text;
  std::array<std::string, kOptionsPerQuestion> options;
  int answer_index = 0;
  Difficulty difficulty = Difficulty::easy;

  void validate() const {
    if (id.empty()) throw ValidationError("question without id");
    if (answer_index < 0 || answer_index >= kOptionsPerQuestion) {
      throw ValidationError("question " + id + ": answer_index out of range");
    }
  }
};

inline void to_json(json& j, const Question& q) {
  j = json{{"id", q.id},
           {"text", q.text},
           {"options", q.options},
           {"answer_index", q.answer_index},
           {"difficulty", std::string(to_string(q.difficulty))}};
}

inline void from_json(const json& j, Question& q) {
  j.at("id").get_to(q.id);
  j.at("text").get_to(q.text);
  const auto& opts = j.at("options");
  if (!opts.is_array() || opts.size() != kOptionsPerQuestion) {
    throw ValidationError("question " + q.id + ": exactly 4 options required");
  }
  for (std::size_t i = 0; i < kOptionsPerQuestion; ++i) opts[i].get_to(q.options[i]);
  j.at("answer_index").get_to(q.answer_index);
  q.difficulty = parse_difficulty(j.at("difficulty").get<std::string>());
}

class QuestionBank {
 public:
  QuestionBank() = default;
  QuestionBank(std::vector<Question> questions, std::string version)
      : questions_(std::move(questions)), version_(std::move(version)) {
    validate();
  }

  static QuestionBank from_json_text(const std::string& text, std::string version = "") {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw ParseError(std::string("question bank: ") + e.what());
    }
    if (!j.is_array()) throw ParseError("question bank must be an array");
    std::vector<Question> qs;
    try {
      for (const auto& item : j) qs.push_back(item.get<Question>());
    } catch (const json::exception& e) {
      throw ParseError(std::string("question bank: ") + e.what());
    }
    if (version.empty()) version = "sha:" + fingerprint(text);
    return QuestionBank(std::move(qs), std::move(version));
  }

  static QuestionBank load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open question bank " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
  }

  /// Placeholder questions for simulation, where only the answer key matters.
  static QuestionBank synthetic(int per_difficulty) {
    std::vector<Question> qs;
    for (Difficulty d : kDifficulties) {
      for (int k = 0; k < per_difficulty; ++k) {
        Question q;
        q.id = std::string(to_string(d)) + "-" + std::to_string(k + 1);
        q.text = "Synthetic " + std::string(to_string(d)) + " question " + std::to_string(k + 1);
        for (int o = 0; o < kOptionsPerQuestion; ++o) q.options[o] = "Option " + std::string(1, char('A' + o));
        q.answer_index = k % kOptionsPerQuestion;
        q.difficulty = d;
        qs.push_back(std::move(q));
      }
    }
    return QuestionBank(std::move(qs), "synthetic-" + std::to_string(per_difficulty));
  }

  void validate() const {
    std::map<std::string, int> seen;
    for (const auto& q : questions_) {
      q.validate();
      if (seen[q.id]++ > 0) throw ValidationError("duplicate question id " + q.id);
    }
    if (questions_.empty()) throw ValidationError("question bank is empty");
  }

  const std::vector<Question>& questions() const { return questions_; }
  const std::string& version() const { return version_; }

  std::vector<std::size_t> indices_for(Difficulty d) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < questions_.size(); ++i) {
      if (questions_[i].difficulty == d) out.push_back(i);
    }
    return out;
  }

  std::string to_json_text() const { return json(questions_).dump(2) + "\n"; }

  /// FNV-1a over the raw text, hex encoded.
  static std::string fingerprint(std::string_view text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
  }

 private:
  std::vector<Question> questions_;
  std::string version_;
};

// ---------------------------------------------------------------------------
// Log records
// ---------------------------------------------------------------------------

enum class AttackerMode { none, cognitive, ml };

inline std::string_view to_string(AttackerMode m) {
  switch (m) {
    case AttackerMode::none: return "none";
    case AttackerMode::cognitive: return "cognitive";
    case AttackerMode::ml: return "ml";
  }
  return "none";
}

inline AttackerMode parse_attacker_mode(std::string_view s) {
  if (s == "none") return AttackerMode::none;
  if (s == "cognitive") return AttackerMode::cognitive;
  if (s == "ml") return AttackerMode::ml;
  throw ValidationError("unknown attacker mode '" + std::string(s) + "'");
}

enum class AiAction { truth, lie, baseline_truth, baseline_lie };

inline std::string_view to_string(AiAction a) {
  switch (a) {
    case AiAction::truth: return "truth";
    case AiAction::lie: return "lie";
    case AiAction::baseline_truth: return "baseline-truth";
    case AiAction::baseline_lie: return "baseline-lie";
  }
  return "truth";
}

inline AiAction parse_ai_action(std::string_view s) {
  if (s == "truth") return AiAction::truth;
  if (s == "lie") return AiAction::lie;
  if (s == "baseline-truth") return AiAction::baseline_truth;
  if (s == "baseline-lie") return AiAction::baseline_lie;
  throw ValidationError("unknown ai_action '" + std::string(s) + "'");
}

inline bool is_truthful(AiAction a) { return a == AiAction::truth || a == AiAction::baseline_truth; }
inline bool is_baseline(AiAction a) { return a == AiAction::baseline_truth || a == AiAction::baseline_lie; }

struct ChatMessage {
  int speaker = 1;  // player slot 1..3
  std::string alias;
  std::string text;
  double timestamp = 0.0;  // seconds since the discussion phase opened

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct PlannerDecision {
  int round = 0;
  AttackerMode mode = AttackerMode::none;
  AiAction action = AiAction::truth;
  double value_truth = 0.0;
  double value_lie = 0.0;
  bool forced = false;
  int answer_index = 0;

  friend bool operator==(const PlannerDecision&, const PlannerDecision&) = default;
};

struct RoundRecord {
  int round_index = 0;
  Difficulty difficulty = Difficulty::easy;
  std::string question_id;
  std::string question_text;
  std::array<std::string, kOptionsPerQuestion> options;
  int correct_option = 0;
  std::array<int, kAgents> individual_answers{};
  std::array<int, kHumans> confidences_pre{1, 1, 1};
  std::array<int, kHumans> confidences_post{1, 1, 1};
  std::vector<ChatMessage> chat;
  AiAction ai_action = AiAction::baseline_truth;
  std::array<PointAllocation, kHumans> allocations{};
  CorrectnessVector correctness;
  double score = 0.0;
  std::optional<PlannerDecision> decision;
  std::vector<std::string> defaults_applied;

  InfluenceMatrix influence() const { return matrix_from_allocations(allocations); }

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct SessionLog {
  std::string session_id;
  std::string team_id;
  AttackerMode attacker_mode = AttackerMode::none;
  std::uint64_t seed = 0;
  std::vector<RoundRecord> rounds;
  std::string question_bank_version;
  std::array<std::string, kHumans> player_aliases;

  friend bool operator==(const SessionLog&, const SessionLog&) = default;
};

/// Outcome histories of all four agents over the first `rounds_before` rounds.
inline TeamHistory history_before(const SessionLog& log, std::size_t rounds_before) {
  TeamHistory h;
  for (std::size_t k = 0; k < std::min(rounds_before, log.rounds.size()); ++k) {
    record_round(h, log.rounds[k].correctness);
  }
  return h;
}

// ---------------------------------------------------------------------------
// JSON encoding
// ---------------------------------------------------------------------------

inline void to_json(json& j, const ChatMessage& m) {
  j = json{{"speaker", m.speaker}, {"alias", m.alias}, {"text", m.text}, {"timestamp", m.timestamp}};
}

inline void from_json(const json& j, ChatMessage& m) {
  j.at("speaker").get_to(m.speaker);
  m.alias = j.value("alias", std::string());
  j.at("text").get_to(m.text);
  m.timestamp = j.value("timestamp", 0.0);
}

inline void to_json(json& j, const PlannerDecision& d) {
  j = json{{"round", d.round},
           {"mode", std::string(to_string(d.mode))},
           {"action", std::string(to_string(d.action))},
           {"action_values", {{"truth", d.value_truth}, {"lie", d.value_lie}}},
           {"forced", d.forced},
           {"answer_index", d.answer_index}};
}

inline void from_json(const json& j, PlannerDecision& d) {
  j.at("round").get_to(d.round);
  d.mode = parse_attacker_mode(j.at("mode").get<std::string>());
  d.action = parse_ai_action(j.at("action").get<std::string>());
  j.at("action_values").at("truth").get_to(d.value_truth);
  j.at("action_values").at("lie").get_to(d.value_lie);
  j.at("forced").get_to(d.forced);
  j.at("answer_index").get_to(d.answer_index);
}

inline void to_json(json& j, const RoundRecord& r) {
  json allocations = json::array();
  for (const auto& a : r.allocations) allocations.push_back(a.points);
  std::array<bool, kAgents> correctness = r.correctness.entries;
  j = json{{"round_index", r.round_index},
           {"difficulty", std::string(to_string(r.difficulty))},
           {"question_id", r.question_id},
           {"question_text", r.question_text},
           {"options", r.options},
           {"correct_option", r.correct_option},
           {"individual_answers", r.individual_answers},
           {"confidences_pre", r.confidences_pre},
           {"confidences_post", r.confidences_post},
           {"chat", r.chat},
           {"ai_action", std::string(to_string(r.ai_action))},
           {"allocations", allocations},
           {"correctness", correctness},
           {"score", r.score}};
  if (r.decision) j["decision"] = *r.decision;
  if (!r.defaults_applied.empty()) j["defaults_applied"] = r.defaults_applied;
}

inline void from_json(const json& j, RoundRecord& r) {
  j.at("round_index").get_to(r.round_index);
  r.difficulty = parse_difficulty(j.at("difficulty").get<std::string>());
  j.at("question_id").get_to(r.question_id);
  r.question_text = j.value("question_text", std::string());
  if (j.contains("options")) j.at("options").get_to(r.options);
  j.at("correct_option").get_to(r.correct_option);
  j.at("individual_answers").get_to(r.individual_answers);
  j.at("confidences_pre").get_to(r.confidences_pre);
  j.at("confidences_post").get_to(r.confidences_post);
  r.chat = j.value("chat", std::vector<ChatMessage>{});
  r.ai_action = parse_ai_action(j.at("ai_action").get<std::string>());
  const auto& allocs = j.at("allocations");
  if (!allocs.is_array() || allocs.size() != kHumans) throw DimensionError("allocations needs 3 rows");
  for (std::size_t k = 0; k < kHumans; ++k) allocs[k].get_to(r.allocations[k].points);
  std::array<bool, kAgents> correctness{};
  j.at("correctness").get_to(correctness);
  r.correctness.entries = correctness;
  j.at("score").get_to(r.score);
  if (j.contains("decision")) r.decision = j.at("decision").get<PlannerDecision>();
  r.defaults_applied = j.value("defaults_applied", std::vector<std::string>{});
}

inline void to_json(json& j, const SessionLog& s) {
  j = json{{"schema", std::string(kSessionLogSchema)},
           {"session_id", s.session_id},
           {"team_id", s.team_id},
           {"attacker_mode", std::string(to_string(s.attacker_mode))},
           {"seed", s.seed},
           {"question_bank_version", s.question_bank_version},
           {"player_aliases", s.player_aliases},
           {"rounds", s.rounds}};
}

inline void from_json(const json& j, SessionLog& s) {
  j.at("session_id").get_to(s.session_id);
  j.at("team_id").get_to(s.team_id);
  s.attacker_mode = parse_attacker_mode(j.at("attacker_mode").get<std::string>());
  j.at("seed").get_to(s.seed);
  s.question_bank_version = j.value("question_bank_version", std::string());
  if (j.contains("player_aliases")) j.at("player_aliases").get_to(s.player_aliases);
  j.at("rounds").get_to(s.rounds);
}

inline std::string to_json_line(const SessionLog& log) { return json(log).dump() + "\n"; }

inline SessionLog parse_session_line(std::string_view line) {
  try {
    return json::parse(line).get<SessionLog>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("session log: ") + e.what());
  } catch (const DimensionError& e) {
    throw ParseError(std::string("session log: ") + e.what());
  } catch (const ValidationError& e) {
    throw ParseError(std::string("session log: ") + e.what());
  }
}

inline std::vector<SessionLog> parse_session_lines(std::istream& in) {
  std::vector<SessionLog> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_session_line(line));
  }
  return out;
}

inline std::vector<SessionLog> read_session_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return parse_session_lines(in);
}

inline void write_session_file(const std::string& path, const std::vector<SessionLog>& logs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  for (const auto& log : logs) out << to_json_line(log);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

struct Violation {
  std::string kind;
  int round_index = 0;
  std::string message;
};

/// Re-derives every invariant of a log; an empty result means the log is valid.
inline std::vector<Violation> validate_session_log(const SessionLog& log) {
  std::vector<Violation> out;
  auto add = [&](std::string kind, int round, std::string message) {
    out.push_back({std::move(kind), round, std::move(message)});
  };

  if (log.rounds.size() > static_cast<std::size_t>(kRoundsPerGame)) {
    add("round_count", 0, "more than 25 rounds");
  }
  int previous = 0;
  for (const auto& r : log.rounds) {
    const int k = r.round_index;
    if (k != previous + 1) {
      add("round_index", k, "round indices must increase by one from 1, saw " + std::to_string(k) +
                                " after " + std::to_string(previous));
    }
    previous = k;

    if (r.correct_option < 0 || r.correct_option >= kOptionsPerQuestion) {
      add("answer_range", k, "correct_option out of range");
    }
    bool answers_in_range = true;
    for (int a : r.individual_answers) answers_in_range = answers_in_range && a >= 0 && a < kOptionsPerQuestion;
    if (!answers_in_range) add("answer_range", k, "individual answer out of range");
    for (std::size_t h = 0; h < kHumans; ++h) {
      if (r.confidences_pre[h] < 1 || r.confidences_pre[h] > 7 || r.confidences_post[h] < 1 ||
          r.confidences_post[h] > 7) {
        add("confidence_range", k, "confidence outside 1..7 for player " + std::to_string(h + 1));
      }
    }

    bool allocations_ok = true;
    for (std::size_t h = 0; h < kHumans; ++h) {
      if (!r.allocations[h].is_valid()) {
        allocations_ok = false;
        add("allocation", k, "allocation of player " + std::to_string(h + 1) + " is not 100 non-negative points");
      }
    }

    for (std::size_t i = 0; i < kAgents; ++i) {
      if (r.correctness[i] != (r.individual_answers[i] == r.correct_option)) {
        add("correctness", k, "correctness of agent " + std::to_string(i + 1) + " disagrees with answers");
      }
    }

    if (allocations_ok) {
      const double expected = round_score(r.influence(), r.correctness);
      if (std::abs(expected - r.score) > 1e-9) {
        add("score", k, "score " + std::to_string(r.score) + " but allocations give " + std::to_string(expected));
      }
    }

    const bool attack_round = log.attacker_mode != AttackerMode::none && k > kBaselineRounds;
    if (attack_round == is_baseline(r.ai_action)) {
      add("ai_action_phase", k,
          std::string("action '") + std::string(to_string(r.ai_action)) + "' not allowed in this round");
    }
    if (is_truthful(r.ai_action) != (r.individual_answers[kAiIndex] == r.correct_option)) {
      add("ai_action_answer", k, "AI answer disagrees with its recorded action");
    }
    if (r.decision) {
      if (r.decision->round != k || r.decision->action != r.ai_action ||
          r.decision->answer_index != r.individual_answers[kAiIndex]) {
        add("decision", k, "planner decision disagrees with the round record");
      }
    }
  }
  return out;
}

/// Parses and validates one log line; unreadable text raises ParseError.
inline std::vector<Violation> validate_session_log_text(std::string_view line) {
  return validate_session_log(parse_session_line(line));
}

}  // namespace tmsattack
