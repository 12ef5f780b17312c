#pragma once

// Closed-loop evaluation with simulated teammates. Humans answer with
// difficulty-dependent accuracy and allocate influence from Beta trust over a
// recency window of what they observed; the AI follows a fixed 75% truth rate
// or one of the attackers.

#include <thread>

#include "tmsattack/adversary.hpp"
#include "tmsattack/cognitive_model.hpp"
#include "tmsattack/session_log.hpp"
#include "tmsattack/stats.hpp"

namespace tmsattack::sim {

enum class AllocationMode { expected, sampled };

inline std::string_view to_string(AllocationMode m) { return m == AllocationMode::expected ? "expected" : "sampled"; }

inline AllocationMode parse_allocation_mode(std::string_view s) {
  if (s == "expected") return AllocationMode::expected;
  if (s == "sampled") return AllocationMode::sampled;
  throw ValidationError("unknown allocation mode '" + std::string(s) + "'");
}

using DifficultyWeights = std::array<double, 3>;  // easy, medium, hard

inline constexpr DifficultyWeights kDefaultDifficultyProportions{0.24, 0.28, 0.49};
inline constexpr DifficultyWeights kDefaultAccuracy{0.63, 0.42, 0.35};

struct SimHumanProfile {
  DifficultyWeights accuracy_by_difficulty = kDefaultAccuracy;
  cognitive::TrustParams trust{1.0, 1.0, 1.0, 1.5};
  AllocationMode allocation = AllocationMode::sampled;
  std::size_t memory_window = 5;   // rounds of outcomes a human keeps in mind
  double discussion_weight = 0.3;  // trust multiplier 1 + k for agents right this round
  double confidence_noise = 1.0;
  DifficultyWeights difficulty_preference = kDefaultDifficultyProportions;

  void validate() const {
    for (double a : accuracy_by_difficulty) {
      if (!(a >= 0.0 && a <= 1.0)) throw ValidationError("accuracies must be probabilities");
    }
    trust.validate();
    if (!(discussion_weight >= 0.0) || !(confidence_noise >= 0.0)) {
      throw ValidationError("discussion weight and confidence noise must be non-negative");
    }
    for (double w : difficulty_preference) {
      if (!(w >= 0.0)) throw ValidationError("difficulty preferences must be non-negative");
    }
  }
};

using TeamProfile = std::array<SimHumanProfile, kHumans>;

enum class DifficultySource { proportions, vote };

struct SimulationConfig {
  SimHumanProfile human;
  double skill_jitter = 0.1;  // per-human accuracy offset, uniform in +-jitter
  DifficultySource difficulty_source = DifficultySource::proportions;
  DifficultyWeights difficulty_proportions = kDefaultDifficultyProportions;
  double ai_truth_rate = 0.75;
  // Training-data generation: rounds 11..25 use a per-session truth rate
  // drawn uniformly from [0, 1] instead of attacking.
  bool random_late_truth_rate = false;
  adversary::PlannerConfig planner;
  cognitive::FitConfig attacker_fit{10.0, 0.5, 0.5};  // coarse grid plus simplex polish

  void validate() const {
    human.validate();
    if (!(skill_jitter >= 0.0 && skill_jitter < 0.5)) throw ValidationError("skill jitter must be in [0, 0.5)");
    if (!(ai_truth_rate >= 0.0 && ai_truth_rate <= 1.0)) throw ValidationError("AI truth rate must be a probability");
    double total = 0.0;
    for (double w : difficulty_proportions) {
      if (!(w >= 0.0)) throw ValidationError("difficulty proportions must be non-negative");
      total += w;
    }
    if (total <= 0.0) throw ValidationError("difficulty proportions must not all be zero");
    planner.validate();
  }
};

// Independent random streams of one team.
enum Stream : std::uint64_t {
  kProfileStream = 1,
  kDifficultyStream = 2,
  kQuestionStream = 3,
  kAnswerStream = 4,
  kConfidenceStream = 5,
  kAiStream = 6,
  kAllocationStream = 7,
  kLieStream = 8,
  kTrainingRateStream = 9,
};

// ---------------------------------------------------------------------------
// Per-round pieces
// ---------------------------------------------------------------------------

inline std::size_t sample_index(const DifficultyWeights& weights, Rng& rng) {
  double total = weights[0] + weights[1] + weights[2];
  if (!(total > 0.0)) throw ValidationError("weights must not all be zero");
  double u = uniform01(rng) * total;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (u < weights[k]) return k;
    u -= weights[k];
  }
  for (std::size_t k = weights.size(); k-- > 0;) {
    if (weights[k] > 0.0) return k;
  }
  return 0;
}

inline Difficulty simulate_difficulty(const DifficultyWeights& proportions, Rng& rng) {
  return static_cast<Difficulty>(sample_index(proportions, rng));
}

/// Plurality over three votes; a three-way split picks the hardest.
inline Difficulty plurality_vote(const std::array<Difficulty, kHumans>& votes) {
  std::array<int, 3> tally{};
  for (Difficulty d : votes) ++tally[static_cast<std::size_t>(d)];
  std::size_t best = 2;
  for (std::size_t k = 3; k-- > 0;) {
    if (tally[k] > tally[best]) best = k;
  }
  return static_cast<Difficulty>(best);
}

inline Difficulty simulate_difficulty_vote(const TeamProfile& team, Rng& rng) {
  std::array<Difficulty, kHumans> votes{};
  for (std::size_t h = 0; h < kHumans; ++h) votes[h] = simulate_difficulty(team[h].difficulty_preference, rng);
  return plurality_vote(votes);
}

struct HumanAnswer {
  int option = 0;
  bool correct = false;
  int confidence = 1;
};

inline int sample_confidence(double p_correct, double noise, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double raw = 1.0 + 6.0 * p_correct + (noise > 0.0 ? noise * n(rng) : 0.0);
  return static_cast<int>(std::clamp(std::lround(raw), 1L, 7L));
}

/// `rng` drives the answer; confidence uses its own stream so that answers do
/// not depend on the confidence model.
inline HumanAnswer simulate_human_round(const SimHumanProfile& profile, Difficulty difficulty,
                                        const Question& question, Rng& rng, Rng& confidence_rng) {
  const double p = profile.accuracy_by_difficulty[static_cast<std::size_t>(difficulty)];
  HumanAnswer out;
  out.correct = bernoulli(rng, p);
  if (out.correct) {
    out.option = question.answer_index;
  } else {
    std::uniform_int_distribution<int> pick(0, kOptionsPerQuestion - 2);
    const int k = pick(rng);
    out.option = k >= question.answer_index ? k + 1 : k;
  }
  out.confidence = sample_confidence(p, profile.confidence_noise, confidence_rng);
  return out;
}

inline HumanAnswer simulate_human_round(const SimHumanProfile& profile, Difficulty difficulty,
                                        const Question& question, Rng& rng) {
  return simulate_human_round(profile, difficulty, question, rng, rng);
}

/// Trust row of one simulated human over its memory window, with the
/// discussion boost for agents that are right this round.
inline Row simulated_trust_row(const SimHumanProfile& profile, const TeamHistory& history,
                               const CorrectnessVector& current, Rng& rng) {
  const cognitive::Counts counts = cognitive::counts_of(history, profile.memory_window);
  Row row{};
  double total = 0.0;
  for (std::size_t i = 0; i < kAgents; ++i) {
    const auto b = cognitive::beta_pair(profile.trust, i, counts.successes[i], counts.failures[i]);
    double t = profile.allocation == AllocationMode::expected ? b.mean() : sample_beta(rng, b.alpha, b.beta);
    if (current[i]) t *= 1.0 + profile.discussion_weight;
    row[i] = t;
    total += t;
  }
  if (!(total > 0.0)) return Row{0.25, 0.25, 0.25, 0.25};
  for (double& v : row) v /= total;
  return row;
}

inline std::array<PointAllocation, kHumans> simulate_allocation(const TeamProfile& team, const TeamHistory& history,
                                                                const CorrectnessVector& current, Rng& rng) {
  std::array<PointAllocation, kHumans> out;
  for (std::size_t h = 0; h < kHumans; ++h) out[h] = largest_remainder(simulated_trust_row(team[h], history, current, rng));
  return out;
}

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

inline const std::array<std::string, kHumans> kDefaultAliases{"Amber", "Birch", "Cedar"};

inline TeamProfile make_team_profile(const SimulationConfig& cfg, std::uint64_t master_seed, std::size_t team) {
  Rng rng = make_rng(master_seed, team, kProfileStream);
  TeamProfile out;
  for (auto& p : out) {
    p = cfg.human;
    const double offset = (2.0 * uniform01(rng) - 1.0) * cfg.skill_jitter;
    for (double& a : p.accuracy_by_difficulty) a = std::clamp(a + offset, 0.02, 0.98);
  }
  return out;
}

inline std::string team_name(std::size_t team) {
  std::string digits = std::to_string(team);
  return "team-" + std::string(digits.size() < 3 ? 3 - digits.size() : 0, '0') + digits;
}

/// Draws questions per difficulty without replacement.
class QuestionSampler {
 public:
  QuestionSampler(const QuestionBank& bank, Rng& rng) : bank_(bank) {
    for (Difficulty d : kDifficulties) {
      auto idx = bank.indices_for(d);
      for (std::size_t k = idx.size(); k > 1; --k) {
        std::uniform_int_distribution<std::size_t> pick(0, k - 1);
        std::swap(idx[k - 1], idx[pick(rng)]);
      }
      pools_[static_cast<std::size_t>(d)] = std::move(idx);
    }
  }

  const Question& next(Difficulty d) {
    auto& pool = pools_[static_cast<std::size_t>(d)];
    if (pool.empty()) {
      throw InsufficientDataError("question bank exhausted for difficulty " + std::string(to_string(d)));
    }
    const std::size_t i = pool.back();
    pool.pop_back();
    return bank_.questions()[i];
  }

 private:
  const QuestionBank& bank_;
  std::array<std::vector<std::size_t>, 3> pools_;
};

/// Plays one 25-round session; the returned log is validated.
inline SessionLog run_session(const SimulationConfig& cfg, AttackerMode mode, const TeamProfile& team,
                              const QuestionBank& bank, std::uint64_t master_seed, std::size_t team_index,
                              const ml::MlpParams* model = nullptr) {
  cfg.validate();
  if (mode == AttackerMode::ml && model == nullptr) throw MisuseError("ML attacker needs a trained model");
  Rng difficulty_rng = make_rng(master_seed, team_index, kDifficultyStream);
  Rng question_rng = make_rng(master_seed, team_index, kQuestionStream);
  Rng answer_rng = make_rng(master_seed, team_index, kAnswerStream);
  Rng confidence_rng = make_rng(master_seed, team_index, kConfidenceStream);
  Rng ai_rng = make_rng(master_seed, team_index, kAiStream);
  Rng allocation_rng = make_rng(master_seed, team_index, kAllocationStream);
  Rng lie_rng = make_rng(master_seed, team_index, kLieStream);
  Rng rate_rng = make_rng(master_seed, team_index, kTrainingRateStream);
  const double late_truth_rate = cfg.random_late_truth_rate ? uniform01(rate_rng) : cfg.ai_truth_rate;

  QuestionSampler questions(bank, question_rng);
  adversary::Attacker attacker(mode, cfg.planner, model, cfg.attacker_fit);

  SessionLog log;
  log.team_id = team_name(team_index);
  log.session_id = std::string(to_string(mode)) + "-" + log.team_id + "-" + std::to_string(master_seed);
  log.attacker_mode = mode;
  log.seed = derive_seed(master_seed, team_index);
  log.question_bank_version = bank.version();
  log.player_aliases = kDefaultAliases;

  TeamHistory history;
  for (int round = 1; round <= kRoundsPerGame; ++round) {
    RoundRecord r;
    r.round_index = round;
    r.difficulty = cfg.difficulty_source == DifficultySource::vote ? simulate_difficulty_vote(team, difficulty_rng)
                                                                   : simulate_difficulty(cfg.difficulty_proportions, difficulty_rng);
    const Question& q = questions.next(r.difficulty);
    r.question_id = q.id;
    r.question_text = q.text;
    r.options = q.options;
    r.correct_option = q.answer_index;

    std::array<bool, kHumans> humans{};
    std::array<int, kHumans> human_answers{};
    for (std::size_t h = 0; h < kHumans; ++h) {
      const HumanAnswer a = simulate_human_round(team[h], r.difficulty, q, answer_rng, confidence_rng);
      humans[h] = a.correct;
      human_answers[h] = a.option;
      r.individual_answers[h] = a.option;
      r.confidences_pre[h] = a.confidence;
    }

    const double rate = round > kBaselineRounds ? late_truth_rate : cfg.ai_truth_rate;
    if (attacker.attacking(round)) {
      PlannerDecision d = attacker.decide(log, humans);
      r.ai_action = d.action;
      d.answer_index = adversary::select_answer(is_truthful(d.action), q, human_answers, history, lie_rng);
      r.individual_answers[kAiIndex] = d.answer_index;
      r.decision = d;
    } else {
      r.ai_action = round <= kBaselineRounds ? adversary::baseline_action(round, ai_rng, rate)
                                             : adversary::fixed_rate_action(ai_rng, rate);
      r.individual_answers[kAiIndex] = adversary::select_answer(is_truthful(r.ai_action), q, human_answers, history, lie_rng);
    }

    for (std::size_t i = 0; i < kAgents; ++i) r.correctness[i] = r.individual_answers[i] == r.correct_option;
    for (std::size_t h = 0; h < kHumans; ++h) {
      std::normal_distribution<double> n(0.0, 0.5);
      r.confidences_post[h] = static_cast<int>(std::clamp(std::lround(r.confidences_pre[h] + n(confidence_rng)), 1L, 7L));
    }
    r.allocations = simulate_allocation(team, history, r.correctness, allocation_rng);
    r.score = round_score(r.influence(), r.correctness);
    record_round(history, r.correctness);
    log.rounds.push_back(std::move(r));
  }

  const auto violations = validate_session_log(log);
  if (!violations.empty()) {
    throw Error("simulated log failed validation: " + violations.front().kind + " in round " +
                std::to_string(violations.front().round_index) + ": " + violations.front().message);
  }
  return log;
}

/// Logs for training and cross-validating the influence models: baseline
/// behaviour in rounds 1..10 and a random per-session truth rate afterwards.
inline std::vector<SessionLog> generate_training_logs(SimulationConfig cfg, const QuestionBank& bank,
                                                      std::size_t n_teams, std::uint64_t seed) {
  cfg.random_late_truth_rate = true;
  std::vector<SessionLog> logs;
  logs.reserve(n_teams);
  for (std::size_t t = 0; t < n_teams; ++t) {
    logs.push_back(run_session(cfg, AttackerMode::none, make_team_profile(cfg, seed, t), bank, seed, t));
  }
  return logs;
}

/// Influence model for the ML attacker, trained on freshly simulated
/// no-attack sessions whose seeds are disjoint from the experiment's teams.
inline ml::TrainResult train_attacker_model(const SimulationConfig& cfg, const QuestionBank& bank,
                                            std::size_t n_teams, const ml::TrainConfig& train_cfg,
                                            std::uint64_t seed, std::size_t window = ml::kDefaultWindow) {
  const auto logs = generate_training_logs(cfg, bank, n_teams, derive_seed(seed, 0, 0x7a11));
  return ml::train(logs, train_cfg, window);
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::size_t n_teams = 200;
  std::vector<AttackerMode> modes{AttackerMode::none, AttackerMode::cognitive, AttackerMode::ml};
  std::uint64_t seed = 1;
  SimulationConfig sim;
  unsigned threads = 1;

  void validate() const {
    if (n_teams < 1) throw ValidationError("experiment needs at least one team");
    if (modes.empty()) throw ValidationError("experiment needs at least one attacker mode");
    sim.validate();
  }
};

using RoundSeries = std::array<double, kRoundsPerGame>;

/// Per-team series of one attacker mode.
struct ModeMetrics {
  AttackerMode mode = AttackerMode::none;
  std::vector<RoundSeries> scores;
  std::vector<RoundSeries> ai_points;     // mean over the three humans
  std::vector<RoundSeries> best_points;   // most accurate human before the round
  std::vector<RoundSeries> worst_points;  // least accurate human before the round
  std::vector<SessionLog> logs;

  /// Mean score of each team over rounds [first, last].
  std::vector<double> team_means(int first = kBaselineRounds + 1, int last = kRoundsPerGame) const {
    std::vector<double> out;
    for (const auto& s : scores) {
      double total = 0.0;
      for (int k = first; k <= last; ++k) total += s[static_cast<std::size_t>(k - 1)];
      out.push_back(total / (last - first + 1));
    }
    return out;
  }

  RoundSeries mean_series(const std::vector<RoundSeries>& per_team) const {
    RoundSeries m{};
    for (const auto& s : per_team) {
      for (std::size_t k = 0; k < m.size(); ++k) m[k] += s[k] / static_cast<double>(per_team.size());
    }
    return m;
  }

  /// Cumulative mean score and its projection from the first 10 rounds.
  RoundSeries cumulative() const {
    RoundSeries c = mean_series(scores);
    for (std::size_t k = 1; k < c.size(); ++k) c[k] += c[k - 1];
    return c;
  }

  RoundSeries projected() const {
    const RoundSeries m = mean_series(scores);
    double base = 0.0;
    for (int k = 0; k < kBaselineRounds; ++k) base += m[static_cast<std::size_t>(k)];
    base /= kBaselineRounds;
    RoundSeries p{};
    for (std::size_t k = 0; k < p.size(); ++k) p[k] = base * static_cast<double>(k + 1);
    return p;
  }
};

struct ComparisonResult {
  AttackerMode a = AttackerMode::ml;
  AttackerMode b = AttackerMode::none;
  double mean_a = 0.0;
  double mean_b = 0.0;
  stats::TTestResult test;
};

struct ExperimentResult {
  std::vector<ModeMetrics> modes;
  std::vector<ComparisonResult> comparisons;
  std::optional<stats::SlopeTestResult> ml_ai_points_trend;

  const ModeMetrics* find(AttackerMode m) const {
    for (const auto& mm : modes) {
      if (mm.mode == m) return &mm;
    }
    return nullptr;
  }
};

inline void record_points(const SessionLog& log, RoundSeries& ai, RoundSeries& best, RoundSeries& worst) {
  TeamHistory history;
  for (const auto& r : log.rounds) {
    const auto order = humans_by_accuracy(history);
    const std::size_t k = static_cast<std::size_t>(r.round_index - 1);
    double a = 0.0;
    double b = 0.0;
    double w = 0.0;
    for (const auto& alloc : r.allocations) {
      a += alloc.points[kAiIndex];
      b += alloc.points[order.front()];
      w += alloc.points[order.back()];
    }
    ai[k] = a / kHumans;
    best[k] = b / kHumans;
    worst[k] = w / kHumans;
    record_round(history, r.correctness);
  }
}

/// Slope of the AI's allocated points over rounds 11..25, one point per
/// (team, round).
inline stats::SlopeTestResult ai_points_trend(const ModeMetrics& m) {
  std::vector<double> x;
  std::vector<double> y;
  for (const auto& s : m.ai_points) {
    for (int k = kBaselineRounds + 1; k <= kRoundsPerGame; ++k) {
      x.push_back(k);
      y.push_back(s[static_cast<std::size_t>(k - 1)]);
    }
  }
  return stats::ols_slope_test(x, y);
}

/// Runs every mode over the same teams. Each team reads only its own derived
/// random streams, so the thread count does not change any log.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const QuestionBank& bank,
                                       const ml::MlpParams* model = nullptr) {
  cfg.validate();
  ExperimentResult result;
  for (AttackerMode mode : cfg.modes) {
    ModeMetrics m;
    m.mode = mode;
    m.logs.resize(cfg.n_teams);
    auto work = [&](std::size_t first, std::size_t stride) {
      for (std::size_t t = first; t < cfg.n_teams; t += stride) {
        m.logs[t] = run_session(cfg.sim, mode, make_team_profile(cfg.sim, cfg.seed, t), bank, cfg.seed, t, model);
      }
    };
    const unsigned threads = std::max(1U, cfg.threads);
    if (threads == 1) {
      work(0, 1);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(threads);
      for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
          try {
            work(w, threads);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (auto& th : pool) th.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
    for (const auto& log : m.logs) {
      RoundSeries s{}, ai{}, best{}, worst{};
      for (const auto& r : log.rounds) s[static_cast<std::size_t>(r.round_index - 1)] = r.score;
      record_points(log, ai, best, worst);
      m.scores.push_back(s);
      m.ai_points.push_back(ai);
      m.best_points.push_back(best);
      m.worst_points.push_back(worst);
    }
    result.modes.push_back(std::move(m));
  }

  auto compare = [&](AttackerMode a, AttackerMode b) {
    const auto* ma = result.find(a);
    const auto* mb = result.find(b);
    if (ma == nullptr || mb == nullptr || cfg.n_teams < 2) return;
    const auto xa = ma->team_means();
    const auto xb = mb->team_means();
    ComparisonResult c{a, b, stats::mean(xa), stats::mean(xb), {}};
    try {
      c.test = stats::welch_t_test(xa, xb, true);
    } catch (const ValidationError&) {
      c.test = {0.0, 0.0, 1.0};
    }
    result.comparisons.push_back(c);
  };
  compare(AttackerMode::ml, AttackerMode::none);
  compare(AttackerMode::ml, AttackerMode::cognitive);
  compare(AttackerMode::cognitive, AttackerMode::none);
  if (const auto* ml_mode = result.find(AttackerMode::ml)) result.ml_ai_points_trend = ai_points_trend(*ml_mode);
  return result;
}

}  // namespace tmsattack::sim
