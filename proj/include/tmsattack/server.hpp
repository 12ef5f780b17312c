#pragma once

// Live game service: session state machine with phase barriers, timeouts,
// chat relay and phase-scoped player views, plus an HTTP frontend.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "tmsattack/adversary.hpp"
#include "tmsattack/rng.hpp"
#include "tmsattack/session_log.hpp"
#include "tmsattack/simulation.hpp"

namespace tmsattack::server {

enum class Phase { lobby, difficulty, individual, discussion, feedback, finished };

inline std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::lobby: return "lobby";
    case Phase::difficulty: return "difficulty";
    case Phase::individual: return "individual";
    case Phase::discussion: return "discussion";
    case Phase::feedback: return "feedback";
    case Phase::finished: return "finished";
  }
  return "lobby";
}

enum class ErrorKind {
  unknown_session,
  unknown_player,
  session_full,
  wrong_phase,
  duplicate_submission,
  invalid_payload,
};

inline std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::unknown_session: return "unknown_session";
    case ErrorKind::unknown_player: return "unknown_player";
    case ErrorKind::session_full: return "session_full";
    case ErrorKind::wrong_phase: return "wrong_phase";
    case ErrorKind::duplicate_submission: return "duplicate_submission";
    case ErrorKind::invalid_payload: return "invalid_payload";
  }
  return "invalid_payload";
}

class ServiceError : public Error {
 public:
  ServiceError(ErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

/// Seconds before a phase closes with defaults for missing players; 0 waits forever.
struct Timeouts {
  double difficulty = 60.0;
  double individual = 120.0;
  double discussion = 240.0;
  double feedback = 60.0;

  double for_phase(Phase p) const {
    switch (p) {
      case Phase::difficulty: return difficulty;
      case Phase::individual: return individual;
      case Phase::discussion: return discussion;
      case Phase::feedback: return feedback;
      default: return 0.0;
    }
  }
};

struct ServiceConfig {
  Timeouts timeouts;
  std::size_t chat_limit = 300;
  double ai_truth_rate = 0.75;
  adversary::PlannerConfig planner;
  cognitive::FitConfig attacker_fit{10.0, 0.5, 0.5};
  std::shared_ptr<const ml::MlpParams> model;
  std::string log_dir;  // finished logs are appended here when set
};

struct Event {
  std::uint64_t seq = 0;
  int round = 0;
  Phase phase = Phase::lobby;
  std::string type;
  json data;
};

inline json to_json(const Event& e) {
  return {{"seq", e.seq}, {"round", e.round}, {"phase", to_string(e.phase)}, {"type", e.type}, {"data", e.data}};
}

struct JoinResult {
  int slot = 0;
  std::string alias;
  std::string token;
};

struct SubmitAck {
  bool accepted = true;
  bool advanced = false;
  Phase phase = Phase::lobby;
  int round = 0;
};

struct ChatAck {
  bool truncated = false;
  std::size_t length = 0;
};

namespace detail {

inline const std::array<std::string_view, 12> kColors{"DarkOrange", "DarkOrchid", "Blue",  "Crimson",
                                                      "Teal",       "Goldenrod",  "Coral", "SeaGreen",
                                                      "SlateBlue",  "Tomato",     "Olive", "Orchid"};
inline const std::array<std::string_view, 12> kAnimals{"Owl",   "Bear",  "Tiger", "Fox",   "Heron", "Otter",
                                                       "Lynx",  "Badger", "Crane", "Moose", "Wolf",  "Hare"};

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double steady_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

}  // namespace detail

/// One game: a single-writer state machine. All mutation goes through the
/// owning GameService, which serializes events per session.
class Session {
 public:
  Session(std::string id, AttackerMode mode, std::uint64_t seed, std::shared_ptr<const QuestionBank> bank,
          const ServiceConfig& cfg, double now)
      : id_(std::move(id)),
        mode_(mode),
        seed_(seed),
        bank_(std::move(bank)),
        cfg_(cfg),
        question_rng_(make_rng(seed, 0, sim::kQuestionStream)),
        ai_rng_(make_rng(seed, 0, sim::kAiStream)),
        lie_rng_(make_rng(seed, 0, sim::kLieStream)),
        default_rng_(make_rng(seed, 0, sim::kAnswerStream)),
        alias_rng_(make_rng(seed, 0, sim::kProfileStream)),
        questions_(*bank_, question_rng_),
        attacker_(mode, cfg.planner, cfg.model.get(), cfg.attacker_fit),
        phase_started_(now) {
    log_.session_id = id_;
    log_.team_id = id_;
    log_.attacker_mode = mode;
    log_.seed = seed;
    log_.question_bank_version = bank_->version();
  }

  const std::string& id() const { return id_; }
  Phase phase() const { return phase_; }
  int round() const { return round_; }
  AttackerMode mode() const { return mode_; }
  std::size_t players() const { return players_.size(); }
  const SessionLog& log() const { return log_; }
  const std::vector<Event>& events() const { return events_; }
  std::uint64_t last_seq() const { return events_.empty() ? 0 : events_.back().seq; }
  const RoundRecord& current() const { return cur_; }

  JoinResult join(std::string alias, std::string token, double now) {
    if (phase_ != Phase::lobby || players_.size() >= kHumans) {
      throw ServiceError(ErrorKind::session_full, "session " + id_ + " is full");
    }
    alias = detail::trim(std::move(alias));
    if (alias.empty()) alias = generate_alias();
    players_.push_back({alias, token});
    const int slot = static_cast<int>(players_.size());
    log_.player_aliases[static_cast<std::size_t>(slot - 1)] = alias;
    emit("player_joined", {{"slot", slot}, {"alias", alias}});
    if (players_.size() == kHumans) start_round(1, now);
    return {slot, alias, token};
  }

  /// Slot of the player holding `token`, or 0.
  int slot_of(const std::string& token) const {
    for (std::size_t i = 0; i < players_.size(); ++i) {
      if (players_[i].token == token) return static_cast<int>(i + 1);
    }
    return 0;
  }

  SubmitAck submit(int slot, const json& payload, double now) {
    const auto h = static_cast<std::size_t>(slot - 1);
    if (phase_ == Phase::lobby || phase_ == Phase::finished) {
      throw ServiceError(ErrorKind::wrong_phase, "no submissions accepted in phase " + std::string(to_string(phase_)));
    }
    if (payload.contains("phase") && payload["phase"] != to_string(phase_)) {
      throw ServiceError(ErrorKind::wrong_phase, "submission for phase " + payload["phase"].dump() +
                                                     " but session is in " + std::string(to_string(phase_)));
    }
    if (submitted_[h]) {
      throw ServiceError(ErrorKind::duplicate_submission,
                         "player " + std::to_string(slot) + " already submitted in " + std::string(to_string(phase_)));
    }
    try {
      switch (phase_) {
        case Phase::difficulty:
          votes_[h] = parse_difficulty(payload.at("difficulty").get<std::string>());
          break;
        case Phase::individual: {
          const int option = payload.at("option").get<int>();
          const int confidence = payload.at("confidence").get<int>();
          if (option < 0 || option >= kOptionsPerQuestion) throw ValidationError("option must be 0..3");
          if (confidence < 1 || confidence > 7) throw ValidationError("confidence must be 1..7");
          cur_.individual_answers[h] = option;
          cur_.confidences_pre[h] = confidence;
          break;
        }
        case Phase::discussion: {
          const auto& raw = payload.at("allocation");
          if (!raw.is_array() || raw.size() != kAgents) throw ValidationError("allocation must have 4 entries");
          PointAllocation a;
          for (std::size_t i = 0; i < kAgents; ++i) {
            if (!raw[i].is_number_integer()) throw ValidationError("allocation entries must be integers");
            a.points[i] = raw[i].get<int>();
          }
          a.validate();
          const int confidence = payload.value("confidence", cur_.confidences_pre[h]);
          if (confidence < 1 || confidence > 7) throw ValidationError("confidence must be 1..7");
          cur_.allocations[h] = a;
          cur_.confidences_post[h] = confidence;
          break;
        }
        case Phase::feedback:
          break;
        default:
          break;
      }
    } catch (const json::exception& e) {
      throw ServiceError(ErrorKind::invalid_payload, std::string("malformed payload: ") + e.what());
    } catch (const ValidationError& e) {
      throw ServiceError(ErrorKind::invalid_payload, e.what());
    }
    submitted_[h] = true;
    emit("submitted", {{"slot", slot}});
    SubmitAck ack;
    if (all_submitted()) {
      advance(now);
      ack.advanced = true;
    }
    ack.phase = phase_;
    ack.round = round_;
    return ack;
  }

  ChatAck chat(int slot, std::string text, double now) {
    if (phase_ != Phase::discussion) {
      throw ServiceError(ErrorKind::wrong_phase, "chat is only open during discussion");
    }
    text = detail::trim(std::move(text));
    if (text.empty()) throw ServiceError(ErrorKind::invalid_payload, "empty chat message");
    ChatAck ack;
    if (text.size() > cfg_.chat_limit) {
      text.resize(cfg_.chat_limit);
      ack.truncated = true;
    }
    ack.length = text.size();
    ChatMessage m{slot, players_[static_cast<std::size_t>(slot - 1)].alias, text, now - phase_started_};
    cur_.chat.push_back(m);
    emit("chat", {{"speaker", m.speaker}, {"alias", m.alias}, {"text", m.text}, {"timestamp", m.timestamp},
                  {"truncated", ack.truncated}});
    return ack;
  }

  /// Closes the current phase with defaults when its timeout has elapsed.
  bool tick(double now) {
    const double limit = cfg_.timeouts.for_phase(phase_);
    if (limit <= 0.0 || now - phase_started_ < limit) return false;
    for (std::size_t h = 0; h < kHumans; ++h) {
      if (submitted_[h]) continue;
      apply_default(h);
      submitted_[h] = true;
    }
    advance(now);
    return true;
  }

  /// Everything player `slot` may see right now.
  json view(int slot) const {
    const auto h = static_cast<std::size_t>(slot - 1);
    json v = {{"session_id", id_},
              {"phase", to_string(phase_)},
              {"round", round_},
              {"rounds_total", kRoundsPerGame},
              {"slot", slot},
              {"seq", last_seq()},
              {"submitted", phase_ == Phase::lobby || phase_ == Phase::finished ? false : submitted_[h]}};
    json players = json::array();
    for (std::size_t i = 0; i < players_.size(); ++i) players.push_back({{"slot", i + 1}, {"alias", players_[i].alias}});
    v["players"] = players;
    v["waiting_on"] = phase_ == Phase::lobby ? static_cast<int>(kHumans - players_.size()) : pending_count();

    json past = json::array();
    double cumulative = 0.0;
    for (const auto& r : log_.rounds) {
      cumulative += r.score;
      past.push_back({{"round", r.round_index},
                      {"correct_option", r.correct_option},
                      {"correctness", r.correctness.entries},
                      {"score", r.score}});
    }
    v["history"] = past;

    if (phase_ == Phase::difficulty && submitted_[h]) v["my_vote"] = to_string(votes_[h]);
    if (phase_ == Phase::individual || phase_ == Phase::discussion || phase_ == Phase::feedback) {
      v["question"] = {{"id", cur_.question_id},
                       {"text", cur_.question_text},
                       {"options", cur_.options},
                       {"difficulty", to_string(cur_.difficulty)}};
    }
    if (phase_ == Phase::individual && submitted_[h]) {
      v["my_answer"] = {{"option", cur_.individual_answers[h]}, {"confidence", cur_.confidences_pre[h]}};
    }
    if (phase_ == Phase::discussion || phase_ == Phase::feedback) {
      v["answers"] = cur_.individual_answers;
      v["my_confidence_pre"] = cur_.confidences_pre[h];
      json chat = json::array();
      for (const auto& m : cur_.chat) {
        chat.push_back({{"speaker", m.speaker}, {"alias", m.alias}, {"text", m.text}, {"timestamp", m.timestamp}});
      }
      v["chat"] = chat;
    }
    if (phase_ == Phase::discussion && submitted_[h]) v["my_allocation"] = cur_.allocations[h].points;
    if (phase_ == Phase::feedback) {
      v["feedback"] = feedback_payload();
      v["my_allocation"] = cur_.allocations[h].points;
    }
    v["cumulative_score"] = cumulative + (phase_ == Phase::feedback ? cur_.score : 0.0);
    return v;
  }

 private:
  struct Player {
    std::string alias;
    std::string token;
  };

  std::string generate_alias() {
    for (;;) {
      std::uniform_int_distribution<std::size_t> c(0, detail::kColors.size() - 1);
      std::uniform_int_distribution<std::size_t> a(0, detail::kAnimals.size() - 1);
      std::string alias = std::string(detail::kColors[c(alias_rng_)]) + " " + std::string(detail::kAnimals[a(alias_rng_)]);
      bool taken = false;
      for (const auto& p : players_) taken = taken || p.alias == alias;
      if (!taken) return alias;
    }
  }

  void emit(std::string type, json data) {
    events_.push_back({++seq_, round_, phase_, std::move(type), std::move(data)});
  }

  bool all_submitted() const { return submitted_[0] && submitted_[1] && submitted_[2]; }
  int pending_count() const {
    int n = 0;
    for (bool s : submitted_) n += s ? 0 : 1;
    return n;
  }

  void enter(Phase p, double now) {
    phase_ = p;
    phase_started_ = now;
    submitted_ = {false, false, false};
  }

  void start_round(int k, double now) {
    round_ = k;
    cur_ = RoundRecord{};
    cur_.round_index = k;
    enter(Phase::difficulty, now);
    emit("phase", {{"phase", "difficulty"}});
  }

  void apply_default(std::size_t h) {
    const std::string who = std::to_string(h + 1);
    switch (phase_) {
      case Phase::difficulty:
        votes_[h] = Difficulty::hard;
        cur_.defaults_applied.push_back("difficulty:player" + who);
        break;
      case Phase::individual: {
        std::uniform_int_distribution<int> pick(0, kOptionsPerQuestion - 1);
        cur_.individual_answers[h] = pick(default_rng_);
        cur_.confidences_pre[h] = 1;
        cur_.defaults_applied.push_back("individual:player" + who);
        break;
      }
      case Phase::discussion:
        cur_.allocations[h] = PointAllocation::uniform();
        cur_.confidences_post[h] = cur_.confidences_pre[h];
        cur_.defaults_applied.push_back("allocation:player" + who);
        break;
      case Phase::feedback:
        cur_.defaults_applied.push_back("feedback:player" + who);
        break;
      default:
        break;
    }
  }

  json feedback_payload() const {
    return {{"correct_option", cur_.correct_option},
            {"correctness", cur_.correctness.entries},
            {"round_score", cur_.score}};
  }

  void advance(double now) {
    switch (phase_) {
      case Phase::difficulty: {
        cur_.difficulty = sim::plurality_vote(votes_);
        const Question& q = questions_.next(cur_.difficulty);
        cur_.question_id = q.id;
        cur_.question_text = q.text;
        cur_.options = q.options;
        cur_.correct_option = q.answer_index;
        question_ = q;
        enter(Phase::individual, now);
        emit("phase", {{"phase", "individual"},
                       {"difficulty", to_string(cur_.difficulty)},
                       {"question", {{"id", q.id}, {"text", q.text}, {"options", q.options}}}});
        break;
      }
      case Phase::individual: {
        std::array<bool, kHumans> humans{};
        std::array<int, kHumans> answers{};
        for (std::size_t h = 0; h < kHumans; ++h) {
          answers[h] = cur_.individual_answers[h];
          humans[h] = answers[h] == cur_.correct_option;
          cur_.confidences_post[h] = cur_.confidences_pre[h];
        }
        const TeamHistory history = history_before(log_, log_.rounds.size());
        if (attacker_.attacking(round_)) {
          PlannerDecision d = attacker_.decide(log_, humans);
          cur_.ai_action = d.action;
          d.answer_index = adversary::select_answer(is_truthful(d.action), question_, answers, history, lie_rng_);
          cur_.individual_answers[kAiIndex] = d.answer_index;
          cur_.decision = d;
        } else {
          cur_.ai_action = round_ <= kBaselineRounds ? adversary::baseline_action(round_, ai_rng_, cfg_.ai_truth_rate)
                                                     : adversary::fixed_rate_action(ai_rng_, cfg_.ai_truth_rate);
          cur_.individual_answers[kAiIndex] =
              adversary::select_answer(is_truthful(cur_.ai_action), question_, answers, history, lie_rng_);
        }
        for (std::size_t i = 0; i < kAgents; ++i) cur_.correctness[i] = cur_.individual_answers[i] == cur_.correct_option;
        enter(Phase::discussion, now);
        emit("phase", {{"phase", "discussion"}, {"answers", cur_.individual_answers}});
        break;
      }
      case Phase::discussion:
        cur_.score = round_score(cur_.influence(), cur_.correctness);
        enter(Phase::feedback, now);
        emit("phase", {{"phase", "feedback"}, {"feedback", feedback_payload()}});
        break;
      case Phase::feedback:
        log_.rounds.push_back(cur_);
        if (round_ == kRoundsPerGame) {
          finish(now);
        } else {
          start_round(round_ + 1, now);
        }
        break;
      default:
        break;
    }
  }

  void finish(double now) {
    enter(Phase::finished, now);
    const auto violations = validate_session_log(log_);
    double total = 0.0;
    for (const auto& r : log_.rounds) total += r.score;
    emit("phase", {{"phase", "finished"}, {"cumulative_score", total}, {"log_valid", violations.empty()}});
    if (!cfg_.log_dir.empty()) {
      std::ofstream out(cfg_.log_dir + "/" + id_ + ".jsonl", std::ios::app);
      out << to_json_line(log_);
    }
  }

  std::string id_;
  AttackerMode mode_;
  std::uint64_t seed_;
  std::shared_ptr<const QuestionBank> bank_;
  const ServiceConfig& cfg_;
  Rng question_rng_;
  Rng ai_rng_;
  Rng lie_rng_;
  Rng default_rng_;
  Rng alias_rng_;
  sim::QuestionSampler questions_;
  adversary::Attacker attacker_;

  Phase phase_ = Phase::lobby;
  int round_ = 0;
  double phase_started_ = 0.0;
  std::vector<Player> players_;
  std::array<bool, kHumans> submitted_{};
  std::array<Difficulty, kHumans> votes_{};
  RoundRecord cur_;
  Question question_;
  SessionLog log_;
  std::vector<Event> events_;
  std::uint64_t seq_ = 0;
};

/// Registry of sessions. Each session has its own lock, so sessions proceed
/// in parallel while events within one session are applied in arrival order.
class GameService {
 public:
  using Clock = std::function<double()>;

  explicit GameService(ServiceConfig cfg = {}, Clock clock = detail::steady_seconds)
      : cfg_(std::move(cfg)), clock_(std::move(clock)), token_rng_(std::random_device{}()) {}

  const ServiceConfig& config() const { return cfg_; }

  std::string create_session(AttackerMode mode, std::uint64_t seed, std::shared_ptr<const QuestionBank> bank) {
    if (!bank) throw ServiceError(ErrorKind::invalid_payload, "no question bank");
    try {
      bank->validate();
    } catch (const ValidationError& e) {
      throw ServiceError(ErrorKind::invalid_payload, std::string("invalid question bank: ") + e.what());
    }
    for (Difficulty d : kDifficulties) {
      if (bank->indices_for(d).size() < static_cast<std::size_t>(kRoundsPerGame)) {
        throw ServiceError(ErrorKind::invalid_payload, "question bank needs 25 questions per difficulty");
      }
    }
    if (mode == AttackerMode::ml && !cfg_.model) {
      throw ServiceError(ErrorKind::invalid_payload, "ml attacker needs a trained model");
    }
    std::lock_guard lock(registry_mutex_);
    const std::uint64_t n = ++created_;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%08llx", static_cast<unsigned long long>(derive_seed(seed, n) & 0xffffffffULL));
    std::string id = "s" + std::to_string(n) + "-" + buf;
    auto entry = std::make_shared<Entry>(id, mode, seed, std::move(bank), cfg_, clock_());
    sessions_.emplace(id, entry);
    return id;
  }

  std::string create_session(std::string_view mode, std::uint64_t seed, std::shared_ptr<const QuestionBank> bank) {
    AttackerMode m;
    try {
      m = parse_attacker_mode(mode);
    } catch (const ValidationError& e) {
      throw ServiceError(ErrorKind::invalid_payload, e.what());
    }
    return create_session(m, seed, std::move(bank));
  }

  JoinResult join(const std::string& id, const std::string& alias) {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    auto r = e->session.join(alias, new_token(), clock_());
    e->changed.notify_all();
    return r;
  }

  /// Restores a slot after a dropped connection.
  int rejoin(const std::string& id, const std::string& token) {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    return slot_or_throw(*e, token);
  }

  SubmitAck submit(const std::string& id, const std::string& token, const json& payload) {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    auto ack = e->session.submit(slot_or_throw(*e, token), payload, clock_());
    e->changed.notify_all();
    return ack;
  }

  ChatAck chat(const std::string& id, const std::string& token, const std::string& text) {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    auto ack = e->session.chat(slot_or_throw(*e, token), text, clock_());
    e->changed.notify_all();
    return ack;
  }

  json state(const std::string& id, const std::string& token) {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    return e->session.view(slot_or_throw(*e, token));
  }

  /// Events after `since`, waiting up to `wait_seconds` for new ones.
  json events(const std::string& id, const std::string& token, std::uint64_t since, double wait_seconds = 0.0) {
    auto e = find(id);
    std::unique_lock lock(e->mutex);
    slot_or_throw(*e, token);
    if (wait_seconds > 0.0) {
      e->changed.wait_for(lock, std::chrono::duration<double>(wait_seconds),
                          [&] { return e->session.last_seq() > since; });
    }
    json out = json::array();
    for (const auto& ev : e->session.events()) {
      if (ev.seq > since) out.push_back(to_json(ev));
    }
    return out;
  }

  /// Applies elapsed timeouts in every session; returns how many phases closed.
  int tick() {
    std::vector<std::shared_ptr<Entry>> all;
    {
      std::lock_guard lock(registry_mutex_);
      for (auto& [id, e] : sessions_) all.push_back(e);
    }
    int closed = 0;
    for (auto& e : all) {
      std::lock_guard lock(e->mutex);
      if (e->session.tick(clock_())) {
        ++closed;
        e->changed.notify_all();
      }
    }
    return closed;
  }

  /// Copy of a session's log (operators and tests only; never sent to players).
  SessionLog session_log(const std::string& id) {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    return e->session.log();
  }

  Phase phase(const std::string& id) {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    return e->session.phase();
  }

  int round(const std::string& id) {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    return e->session.round();
  }

  /// Read-only access under the session lock, for audits.
  template <typename F>
  auto inspect(const std::string& id, F&& f) {
    auto e = find(id);
    std::lock_guard lock(e->mutex);
    return f(static_cast<const Session&>(e->session));
  }

 private:
  struct Entry {
    Entry(std::string id, AttackerMode mode, std::uint64_t seed, std::shared_ptr<const QuestionBank> bank,
          const ServiceConfig& cfg, double now)
        : session(std::move(id), mode, seed, std::move(bank), cfg, now) {}
    std::mutex mutex;
    std::condition_variable changed;
    Session session;
  };

  std::shared_ptr<Entry> find(const std::string& id) {
    std::lock_guard lock(registry_mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw ServiceError(ErrorKind::unknown_session, "unknown session " + id);
    return it->second;
  }

  static int slot_or_throw(const Entry& e, const std::string& token) {
    const int slot = e.session.slot_of(token);
    if (slot == 0) throw ServiceError(ErrorKind::unknown_player, "token does not belong to this session");
    return slot;
  }

  std::string new_token() {
    std::lock_guard lock(registry_mutex_);
    char buf[33];
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(token_rng_()),
                  static_cast<unsigned long long>(token_rng_()));
    return buf;
  }

  ServiceConfig cfg_;
  Clock clock_;
  std::mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t created_ = 0;
  std::mt19937_64 token_rng_;
};

// ---------------------------------------------------------------------------
// HTTP frontend
// ---------------------------------------------------------------------------

inline int http_status(ErrorKind k) {
  switch (k) {
    case ErrorKind::unknown_session: return 404;
    case ErrorKind::unknown_player: return 403;
    case ErrorKind::session_full:
    case ErrorKind::wrong_phase:
    case ErrorKind::duplicate_submission: return 409;
    case ErrorKind::invalid_payload: return 400;
  }
  return 400;
}

inline json to_json(const SubmitAck& a) {
  return {{"accepted", a.accepted}, {"advanced", a.advanced}, {"phase", to_string(a.phase)}, {"round", a.round}};
}

/// JSON-over-HTTP endpoints. Client to server traffic is plain POSTs; server
/// to client broadcasts are delivered by long-polling the events endpoint.
class HttpFrontend {
 public:
  HttpFrontend(GameService& service, std::shared_ptr<const QuestionBank> bank, AttackerMode default_mode)
      : service_(service), bank_(std::move(bank)), default_mode_(default_mode) {
    routes();
  }

  ~HttpFrontend() { stop(); }

  httplib::Server& raw() { return http_; }

  /// Binds and serves until stop(); also runs the timeout ticker.
  bool listen(const std::string& host, int port) {
    running_ = true;
    ticker_ = std::thread([this] {
      while (running_) {
        service_.tick();
        std::this_thread::sleep_for(std::chrono::milliseconds(250));
      }
    });
    return http_.listen(host, port);
  }

  int bind_any_port(const std::string& host) { return http_.bind_to_any_port(host); }

  void serve_bound() {
    running_ = true;
    ticker_ = std::thread([this] {
      while (running_) {
        service_.tick();
        std::this_thread::sleep_for(std::chrono::milliseconds(250));
      }
    });
    http_.listen_after_bind();
  }

  void stop() {
    running_ = false;
    http_.stop();
    if (ticker_.joinable()) ticker_.join();
  }

 private:
  static void reply(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <typename F>
  void guarded(httplib::Response& res, F&& f) {
    try {
      f();
    } catch (const ServiceError& e) {
      reply(res, {{"error", to_string(e.kind())}, {"message", e.what()}}, http_status(e.kind()));
    } catch (const json::exception& e) {
      reply(res, {{"error", "invalid_payload"}, {"message", e.what()}}, 400);
    } catch (const ValidationError& e) {
      reply(res, {{"error", "invalid_payload"}, {"message", e.what()}}, 400);
    } catch (const std::exception& e) {
      reply(res, {{"error", "internal"}, {"message", e.what()}}, 500);
    }
  }

  static json body_of(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    json j = json::parse(req.body);
    if (!j.is_object()) throw ServiceError(ErrorKind::invalid_payload, "request body must be an object");
    return j;
  }

  void routes() {
    http_.Get("/api/health", [](const httplib::Request&, httplib::Response& res) { reply(res, {{"ok", true}}); });

    http_.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json b = body_of(req);
        const std::string mode = b.value("mode", std::string(to_string(default_mode_)));
        const auto seed = b.value("seed", std::uint64_t{1});
        reply(res, {{"session_id", service_.create_session(mode, seed, bank_)}}, 201);
      });
    });

    http_.Post(R"(/api/sessions/([^/]+)/join)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json b = body_of(req);
        const auto r = service_.join(req.matches[1], b.value("alias", std::string{}));
        reply(res, {{"slot", r.slot}, {"alias", r.alias}, {"token", r.token}});
      });
    });

    http_.Post(R"(/api/sessions/([^/]+)/rejoin)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json b = body_of(req);
        reply(res, {{"slot", service_.rejoin(req.matches[1], b.at("token").get<std::string>())}});
      });
    });

    http_.Post(R"(/api/sessions/([^/]+)/submit)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json b = body_of(req);
        reply(res, to_json(service_.submit(req.matches[1], b.at("token").get<std::string>(), b.value("payload", json::object()))));
      });
    });

    http_.Post(R"(/api/sessions/([^/]+)/chat)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const json b = body_of(req);
        const auto ack = service_.chat(req.matches[1], b.at("token").get<std::string>(), b.at("text").get<std::string>());
        json out = {{"accepted", true}, {"truncated", ack.truncated}, {"length", ack.length}};
        if (ack.truncated) out["notice"] = "message truncated to " + std::to_string(ack.length) + " characters";
        reply(res, out);
      });
    });

    http_.Get(R"(/api/sessions/([^/]+)/state)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { reply(res, service_.state(req.matches[1], req.get_param_value("token"))); });
    });

    http_.Get(R"(/api/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const std::uint64_t since = req.has_param("since") ? std::stoull(req.get_param_value("since")) : 0;
        const double wait = req.has_param("wait") ? std::min(30.0, std::stod(req.get_param_value("wait"))) : 0.0;
        reply(res, {{"events", service_.events(req.matches[1], req.get_param_value("token"), since, wait)}});
      });
    });
  }

  GameService& service_;
  std::shared_ptr<const QuestionBank> bank_;
  AttackerMode default_mode_;
  httplib::Server http_;
  std::atomic<bool> running_{false};
  std::thread ticker_;
};

}  // namespace tmsattack::server
