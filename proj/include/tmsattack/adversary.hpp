#pragma once

// Model-based adversarial AI assistant. The planner decides, once the human
// answers of a round are known, whether the AI reports the correct answer or a
// lie, by expectimax over the humans' future correctness.

#include <bit>
#include <optional>
#include <unordered_map>

#include "tmsattack/cognitive_model.hpp"
#include "tmsattack/core.hpp"
#include "tmsattack/ml_model.hpp"
#include "tmsattack/rng.hpp"
#include "tmsattack/session_log.hpp"

namespace tmsattack::adversary {

enum class Action { lie = 0, truth = 1 };

inline std::string_view to_string(Action a) { return a == Action::truth ? "truth" : "lie"; }

enum class PlannerMode { cognitive, ml };

inline PlannerMode planner_mode_for(AttackerMode m) {
  if (m == AttackerMode::cognitive) return PlannerMode::cognitive;
  if (m == AttackerMode::ml) return PlannerMode::ml;
  throw MisuseError("attacker mode 'none' has no planner");
}

inline AttackerMode attacker_mode_of(PlannerMode m) {
  return m == PlannerMode::cognitive ? AttackerMode::cognitive : AttackerMode::ml;
}

/// Discount on lie rewards, 1 / (1 + exp(-c1 (rho - rho0))) with
/// rho = n_s / (n_f + 1) over the AI's cumulative record.
struct SigmoidWeight {
  double c1 = 1.0;
  double rho0 = 2.0;

  double operator()(int ai_successes, int ai_failures) const {
    const double rho = static_cast<double>(ai_successes) / (ai_failures + 1.0);
    return 1.0 / (1.0 + std::exp(-c1 * (rho - rho0)));
  }
};

struct PlannerConfig {
  PlannerMode mode = PlannerMode::ml;
  int horizon = 0;  // 0: to the end of the game (cognitive) or 5 rounds (ml)
  double gamma = 1.0;
  SigmoidWeight sigmoid;
  bool laplace_smoothing = true;  // human-outcome probabilities
  std::size_t ml_window = ml::kDefaultWindow;
  double baseline_truth_rate = 0.75;

  void validate() const {
    if (horizon < 0) throw ValidationError("planner horizon must be >= 1 (0 selects the default)");
    if (gamma != 1.0) throw ValidationError("planner discount is fixed at 1");
    if (ml_window < 1 || ml_window > 12) throw ValidationError("ML planner window must be in 1..12");
    if (!(baseline_truth_rate >= 0.0 && baseline_truth_rate <= 1.0)) {
      throw ValidationError("baseline truth rate must be a probability");
    }
  }

  int default_horizon() const { return mode == PlannerMode::ml ? 5 : kRoundsPerGame; }

  /// Rounds considered from `round` on, the current one included.
  int effective_horizon(int round) const {
    const int h = horizon > 0 ? horizon : default_horizon();
    return std::max(0, std::min(h, kRoundsPerGame + 1 - round));
  }
};

// ---------------------------------------------------------------------------
// State
// ---------------------------------------------------------------------------

/// Planner view of a team before round `round` is played: cumulative counts
/// per agent plus each agent's most recent outcomes (bit 0 = last round).
struct PlannerState {
  int round = 1;
  std::array<int, kAgents> successes{};
  std::array<int, kAgents> failures{};
  std::array<std::uint32_t, kAgents> recent{};
  std::size_t window = ml::kDefaultWindow;

  static PlannerState from_history(const TeamHistory& history, int round,
                                   std::size_t window = ml::kDefaultWindow) {
    PlannerState s;
    s.round = round;
    s.window = window;
    for (std::size_t i = 0; i < kAgents; ++i) {
      const auto& out = history[i].outcomes;
      if (static_cast<int>(out.size()) != round - 1) {
        throw ValidationError("history length disagrees with the round number");
      }
      s.successes[i] = history[i].successes();
      s.failures[i] = history[i].failures();
      for (std::size_t k = 0; k < std::min(window, out.size()); ++k) {
        if (out[out.size() - 1 - k]) s.recent[i] |= 1U << k;
      }
    }
    return s;
  }

  int elapsed() const { return round - 1; }
  std::size_t window_length() const { return std::min<std::size_t>(window, static_cast<std::size_t>(elapsed())); }
  std::uint32_t window_mask() const { return (1U << window_length()) - 1U; }
  int window_successes(std::size_t agent) const { return std::popcount(recent[agent] & window_mask()); }

  double window_mean(std::size_t agent) const {
    const std::size_t n = window_length();
    return n == 0 ? 0.5 : static_cast<double>(window_successes(agent)) / static_cast<double>(n);
  }

  void validate() const {
    if (round < 1 || round > kRoundsPerGame + 1) throw ValidationError("planner round out of range");
    if (window < 1 || window > 12) throw ValidationError("planner window must be in 1..12");
    for (std::size_t i = 0; i < kAgents; ++i) {
      if (successes[i] < 0 || failures[i] < 0 || successes[i] + failures[i] != elapsed()) {
        throw ValidationError("planner counts disagree with the round number");
      }
      if ((recent[i] & ~window_mask()) != 0 || window_successes(i) > successes[i] ||
          static_cast<int>(window_length()) - window_successes(i) > failures[i]) {
        throw ValidationError("planner window disagrees with the counts");
      }
    }
  }

  cognitive::Counts counts() const { return {successes, failures}; }

  friend bool operator==(const PlannerState&, const PlannerState&) = default;
};

/// The AI's recorded correctness: the chosen action, unless every human is
/// correct (the AI is then correct) or every human is wrong (then incorrect).
inline Action effective_action(const std::array<bool, kHumans>& humans, Action a) {
  if (humans[0] && humans[1] && humans[2]) return Action::truth;
  if (!humans[0] && !humans[1] && !humans[2]) return Action::lie;
  return a;
}

inline CorrectnessVector outcome_vector(const std::array<bool, kHumans>& humans, Action a) {
  CorrectnessVector p;
  for (std::size_t h = 0; h < kHumans; ++h) p[h] = humans[h];
  p[kAiIndex] = effective_action(humans, a) == Action::truth;
  return p;
}

inline PlannerState transition(const PlannerState& s, const std::array<bool, kHumans>& humans, Action a) {
  if (s.round >= kRoundsPerGame) throw TerminalStateError("no transition out of the final round");
  const CorrectnessVector p = outcome_vector(humans, a);
  PlannerState next = s;
  next.round = s.round + 1;
  const std::uint32_t keep = (1U << s.window) - 1U;
  for (std::size_t i = 0; i < kAgents; ++i) {
    (p[i] ? next.successes[i] : next.failures[i]) += 1;
    next.recent[i] = ((s.recent[i] << 1) | (p[i] ? 1U : 0U)) & keep;
  }
  return next;
}

// ---------------------------------------------------------------------------
// Rewards
// ---------------------------------------------------------------------------

/// Score lost to the AI's presence, 1^T (A_hat - A) p, discounted on lies.
inline double reward_cognitive(const InfluenceMatrix& a_cog, const CorrectnessVector& p, const PlannerState& s,
                               Action a, const SigmoidWeight& weight = {}) {
  const double base = round_score(zero_ai_renormalize(a_cog), p) - round_score(a_cog, p);
  if (a == Action::lie) return base * weight(s.successes[kAiIndex], s.failures[kAiIndex]);
  return base;
}

inline double reward_ml(const InfluenceMatrix& a_ml, const CorrectnessVector& p) { return -round_score(a_ml, p); }

/// Features for the data-driven model, taken from the state's windows.
inline ml::FeatureVector planner_features(const PlannerState& s, const CorrectnessVector& p) {
  ml::FeatureVector x{};
  x[ml::kRoundFeature] = static_cast<double>(s.round) / kRoundsPerGame;
  for (std::size_t i = 0; i < kAgents; ++i) {
    x[ml::kCurrentOffset + i] = p[i] ? 1.0 : 0.0;
    x[ml::kWindowOffset + i] = s.window_mean(i);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Planner
// ---------------------------------------------------------------------------

using HumanProbabilities = std::array<double, kHumans>;

inline constexpr double kTieTolerance = 1e-12;

struct PlanValue {
  double value = 0.0;
  Action best = Action::truth;
};

/// Probability of one joint human outcome (bit h set = human h correct).
inline double outcome_probability(const HumanProbabilities& probs, unsigned bits) {
  double w = 1.0;
  for (std::size_t h = 0; h < kHumans; ++h) w *= ((bits >> h) & 1U) ? probs[h] : 1.0 - probs[h];
  return w;
}

inline std::array<bool, kHumans> outcome_of_bits(unsigned bits) {
  return {(bits & 1U) != 0, (bits & 2U) != 0, (bits & 4U) != 0};
}

class Planner {
 public:
  Planner(PlannerConfig cfg, cognitive::TeamTrustParams params) : cfg_(cfg), cog_params_(params) {
    cfg_.validate();
    if (cfg_.mode != PlannerMode::cognitive) throw MisuseError("trust parameters need a cognitive planner");
  }

  Planner(PlannerConfig cfg, const ml::MlpParams* model) : cfg_(cfg), model_(model) {
    cfg_.validate();
    if (cfg_.mode != PlannerMode::ml) throw MisuseError("a network model needs an ML planner");
    if (model_ == nullptr) throw MisuseError("ML planner without a model");
    model_->validate_shapes();
  }

  const PlannerConfig& config() const { return cfg_; }

  /// Immediate reward of playing `a` in state s given the humans' outcome.
  double reward(const PlannerState& s, const std::array<bool, kHumans>& humans, Action a) {
    const CorrectnessVector p = outcome_vector(humans, a);
    if (cfg_.mode == PlannerMode::cognitive) {
      return cognitive_reward(cognitive_difference(s), s, p, effective_action(humans, a));
    }
    return reward_ml(ml_matrix(s, p), p);
  }

  /// max over actions of the expected reward over the eight human outcomes
  /// plus the continuation value; memoized on (state, depth).
  PlanValue expectimax(const PlannerState& s, int depth, const HumanProbabilities& probs) {
    if (depth < 0) throw ValidationError("expectimax depth must be non-negative");
    if (probs != probs_) {
      value_memo_.clear();
      probs_ = probs;
    }
    return search(s, depth);
  }

  struct Choice {
    Action action = Action::truth;
    double value_truth = 0.0;
    double value_lie = 0.0;
    bool forced = false;
  };

  /// Attack-phase decision once the humans' correctness of the round is known.
  Choice choose(const PlannerState& s, const std::array<bool, kHumans>& humans, const HumanProbabilities& probs) {
    if (s.round <= kBaselineRounds) throw MisuseError("the planner only acts after the baseline rounds");
    const int h = cfg_.effective_horizon(s.round);
    Choice c;
    for (Action a : {Action::truth, Action::lie}) {
      double q = reward(s, humans, a);
      if (h > 1 && s.round < kRoundsPerGame) q += expectimax(transition(s, humans, a), h - 1, probs).value;
      (a == Action::truth ? c.value_truth : c.value_lie) = q;
    }
    c.forced = humans[0] == humans[1] && humans[1] == humans[2];
    if (c.forced) {
      c.action = humans[0] ? Action::truth : Action::lie;
    } else {
      c.action = c.value_lie > c.value_truth + kTieTolerance ? Action::lie : Action::truth;
    }
    return c;
  }

  std::size_t memo_size() const { return value_memo_.size(); }

 private:
  PlanValue search(const PlannerState& s, int depth) {
    if (depth == 0 || s.round > kRoundsPerGame) return {};
    const std::uint64_t key = state_key(s, depth);
    if (auto it = value_memo_.find(key); it != value_memo_.end()) return it->second;
    const Row* d = cfg_.mode == PlannerMode::cognitive ? &cognitive_difference(s) : nullptr;
    std::array<double, 2> q{};
    for (Action a : {Action::truth, Action::lie}) {
      double total = 0.0;
      for (unsigned bits = 0; bits < 8; ++bits) {
        const auto humans = outcome_of_bits(bits);
        const CorrectnessVector p = outcome_vector(humans, a);
        double v = d != nullptr ? cognitive_reward(*d, s, p, effective_action(humans, a)) : reward_ml(ml_matrix(s, p), p);
        if (depth > 1 && s.round < kRoundsPerGame) v += search(transition(s, humans, a), depth - 1).value;
        total += outcome_probability(probs_, bits) * v;
      }
      q[static_cast<std::size_t>(a)] = total;
    }
    const std::size_t lie = static_cast<std::size_t>(Action::lie);
    const std::size_t truth = static_cast<std::size_t>(Action::truth);
    PlanValue out = q[lie] > q[truth] + kTieTolerance ? PlanValue{q[lie], Action::lie} : PlanValue{q[truth], Action::truth};
    value_memo_.emplace(key, out);
    return out;
  }

  std::uint64_t state_key(const PlannerState& s, int depth) const {
    std::uint64_t key = static_cast<std::uint64_t>(s.round) | (static_cast<std::uint64_t>(depth) << 5);
    int shift = 10;
    if (cfg_.mode == PlannerMode::cognitive) {
      // n_f = elapsed - n_s, so the success counts identify the state.
      for (std::size_t i = 0; i < kAgents; ++i, shift += 5) key |= static_cast<std::uint64_t>(s.successes[i]) << shift;
    } else {
      for (std::size_t i = 0; i < kAgents; ++i, shift += 12) {
        key |= static_cast<std::uint64_t>(s.recent[i] & s.window_mask()) << shift;
      }
    }
    return key;
  }

  double cognitive_reward(const Row& d, const PlannerState& s, const CorrectnessVector& p, Action eff) const {
    double base = 0.0;
    for (std::size_t i = 0; i < kAgents; ++i) base += p[i] ? d[i] : 0.0;
    return eff == Action::lie ? base * cfg_.sigmoid(s.successes[kAiIndex], s.failures[kAiIndex]) : base;
  }

  /// Column sums of (A_hat - A) for the state's cumulative counts.
  const Row& cognitive_difference(const PlannerState& s) {
    std::uint64_t key = 0;
    for (std::size_t i = 0; i < kAgents; ++i) {
      key |= static_cast<std::uint64_t>(s.successes[i]) << (10 * i);
      key |= static_cast<std::uint64_t>(s.failures[i]) << (10 * i + 5);
    }
    auto it = cog_memo_.find(key);
    if (it != cog_memo_.end()) return it->second;
    const InfluenceMatrix a = cognitive::predict_matrix(cog_params_, s.counts());
    const Row full = column_sums(a);
    const Row without = column_sums(zero_ai_renormalize(a));
    Row d{};
    for (std::size_t i = 0; i < kAgents; ++i) d[i] = without[i] - full[i];
    return cog_memo_.emplace(key, d).first->second;
  }

  /// Network prediction; features depend only on round, window counts and p.
  InfluenceMatrix ml_matrix(const PlannerState& s, const CorrectnessVector& p) {
    std::uint64_t key = static_cast<std::uint64_t>(s.round) | (static_cast<std::uint64_t>(p.bits()) << 5);
    for (std::size_t i = 0; i < kAgents; ++i) {
      key |= static_cast<std::uint64_t>(s.window_successes(i)) << (9 + 4 * i);
    }
    auto it = ml_memo_.find(key);
    if (it != ml_memo_.end()) return it->second;
    const InfluenceMatrix m = ml::predict_matrix(*model_, planner_features(s, p));
    return ml_memo_.emplace(key, m).first->second;
  }

  PlannerConfig cfg_;
  cognitive::TeamTrustParams cog_params_{};
  const ml::MlpParams* model_ = nullptr;
  HumanProbabilities probs_{-1.0, -1.0, -1.0};
  std::unordered_map<std::uint64_t, PlanValue> value_memo_;
  std::unordered_map<std::uint64_t, Row> cog_memo_;
  std::unordered_map<std::uint64_t, InfluenceMatrix> ml_memo_;
};

/// Human-outcome probabilities from the observed record of each human.
inline HumanProbabilities human_probabilities(const TeamHistory& history, bool smoothing = true) {
  HumanProbabilities p{};
  for (std::size_t h = 0; h < kHumans; ++h) p[h] = empirical_accuracy(history[h], smoothing);
  return p;
}

// ---------------------------------------------------------------------------
// Baseline phase and answer selection
// ---------------------------------------------------------------------------

inline AiAction baseline_action(int round, Rng& rng, double truth_rate = 0.75) {
  if (round < 1 || round > kBaselineRounds) throw MisuseError("baseline behaviour covers rounds 1..10 only");
  return bernoulli(rng, truth_rate) ? AiAction::baseline_truth : AiAction::baseline_lie;
}

/// Unconstrained truth-rate draw; used outside attacks (no-attack sessions).
inline AiAction fixed_rate_action(Rng& rng, double truth_rate = 0.75) {
  return bernoulli(rng, truth_rate) ? AiAction::baseline_truth : AiAction::baseline_lie;
}

/// Truth gives the key. A lie copies the wrong answer of the most accurate
/// human so far, falling back down the accuracy ranking, and finally to a
/// uniformly drawn wrong option when every human is correct.
inline int select_answer(bool truthful, const Question& question, const std::array<int, kHumans>& human_answers,
                         const TeamHistory& history, Rng& rng) {
  question.validate();
  for (int a : human_answers) {
    if (a < 0 || a >= kOptionsPerQuestion) throw ValidationError("human answer out of range");
  }
  if (truthful) return question.answer_index;
  for (std::size_t h : humans_by_accuracy(history)) {
    if (human_answers[h] != question.answer_index) return human_answers[h];
  }
  std::uniform_int_distribution<int> pick(0, kOptionsPerQuestion - 2);
  const int k = pick(rng);
  return k >= question.answer_index ? k + 1 : k;
}

inline int select_answer(Action a, const Question& question, const std::array<int, kHumans>& human_answers,
                         const TeamHistory& history, Rng& rng) {
  return select_answer(a == Action::truth, question, human_answers, history, rng);
}

// ---------------------------------------------------------------------------
// Per-session attacker
// ---------------------------------------------------------------------------

/// Wraps the planner for one session: baseline behaviour in rounds 1..10,
/// a cognitive fit on the baseline rounds when needed, then planning.
class Attacker {
 public:
  Attacker(AttackerMode mode, PlannerConfig cfg, const ml::MlpParams* model = nullptr,
           cognitive::FitConfig fit = {})
      : mode_(mode), cfg_(cfg), model_(model), fit_(fit) {
    if (mode_ != AttackerMode::none) {
      cfg_.mode = planner_mode_for(mode_);
      cfg_.validate();
      if (mode_ == AttackerMode::ml) planner_.emplace(cfg_, model_);
    }
    fit_.max_round = kBaselineRounds;
  }

  AttackerMode mode() const { return mode_; }
  bool attacking(int round) const { return mode_ != AttackerMode::none && round > kBaselineRounds; }

  /// Fitted sensitivities of the cognitive planner, once available.
  const std::optional<cognitive::TeamTrustParams>& fitted() const { return fitted_; }

  /// `log` holds the completed rounds of this session.
  PlannerDecision decide(const SessionLog& log, const std::array<bool, kHumans>& humans) {
    const int round = static_cast<int>(log.rounds.size()) + 1;
    if (!attacking(round)) throw MisuseError("no planner decision in this round");
    if (mode_ == AttackerMode::cognitive && !planner_) {
      fitted_ = cognitive::fit_mle(log, fit_).params;
      planner_.emplace(cfg_, *fitted_);
    }
    const TeamHistory history = history_before(log, log.rounds.size());
    const PlannerState s = PlannerState::from_history(history, round, cfg_.ml_window);
    const auto choice = planner_->choose(s, humans, human_probabilities(history, cfg_.laplace_smoothing));
    PlannerDecision d;
    d.round = round;
    d.mode = mode_;
    d.action = choice.action == Action::truth ? AiAction::truth : AiAction::lie;
    d.value_truth = choice.value_truth;
    d.value_lie = choice.value_lie;
    d.forced = choice.forced;
    return d;
  }

 private:
  AttackerMode mode_;
  PlannerConfig cfg_;
  const ml::MlpParams* model_;
  cognitive::FitConfig fit_;
  std::optional<Planner> planner_;
  std::optional<cognitive::TeamTrustParams> fitted_;
};

}  // namespace tmsattack::adversary
