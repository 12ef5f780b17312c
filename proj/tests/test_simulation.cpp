#include <gtest/gtest.h>

#include "tmsattack/simulation.hpp"
#include "tmsattack/stats.hpp"

using namespace tmsattack;
using namespace tmsattack::sim;

TEST(Stats, WelchAgainstReferenceValues) {
  // Reference values from scipy.stats.ttest_ind(equal_var=False).
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> b{2, 4, 6, 8, 10.5};
  const auto one = stats::welch_t_test(a, b, true);
  EXPECT_NEAR(one.statistic, -1.8831158916154396, 1e-12);
  EXPECT_NEAR(one.p_value, 0.055527001299908105, 1e-10);
  EXPECT_NEAR(stats::welch_t_test(a, b, false).p_value, 0.11105400259981621, 1e-10);
  EXPECT_THROW(stats::welch_t_test(std::vector<double>{1}, b), ValidationError);
  EXPECT_THROW(stats::welch_t_test(std::vector<double>{1, 1}, std::vector<double>{2, 2}), ValidationError);
}

TEST(Stats, SlopeAgainstReferenceValues) {
  // Reference values from scipy.stats.linregress.
  std::vector<double> x;
  for (int k = 1; k <= 10; ++k) x.push_back(k);
  const std::vector<double> y{3.1, 2.9, 2.5, 2.6, 2.0, 1.8, 1.9, 1.2, 1.0, 0.7};
  const auto r = stats::ols_slope_test(x, y);
  EXPECT_NEAR(r.slope, -0.26484848484848483, 1e-12);
  EXPECT_NEAR(r.intercept, 3.4266666666666667, 1e-12);
  EXPECT_NEAR(r.standard_error, 0.018009282373458984, 1e-12);
  EXPECT_NEAR(r.p_value, 4.4916218622341327e-07, 1e-12);
  EXPECT_THROW(stats::ols_slope_test(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), ValidationError);
}

TEST(Simulation, PluralityVote) {
  using D = Difficulty;
  EXPECT_EQ(plurality_vote({D::easy, D::easy, D::hard}), D::easy);
  EXPECT_EQ(plurality_vote({D::medium, D::hard, D::medium}), D::medium);
  EXPECT_EQ(plurality_vote({D::easy, D::medium, D::hard}), D::hard);
}

TEST(Simulation, DifficultyProportions) {
  Rng rng(12);
  std::array<int, 3> tally{};
  const int n = 30000;
  for (int k = 0; k < n; ++k) ++tally[static_cast<std::size_t>(simulate_difficulty(kDefaultDifficultyProportions, rng))];
  const double total = kDefaultDifficultyProportions[0] + kDefaultDifficultyProportions[1] + kDefaultDifficultyProportions[2];
  for (std::size_t d = 0; d < 3; ++d) {
    EXPECT_NEAR(static_cast<double>(tally[d]) / n, kDefaultDifficultyProportions[d] / total, 0.01);
  }
}

TEST(Simulation, SessionsAreValidAndSeedDeterministic) {
  SimulationConfig cfg;
  const auto bank = QuestionBank::synthetic(30);
  for (AttackerMode mode : {AttackerMode::none, AttackerMode::cognitive}) {
    const auto a = run_session(cfg, mode, make_team_profile(cfg, 5, 3), bank, 5, 3);
    const auto b = run_session(cfg, mode, make_team_profile(cfg, 5, 3), bank, 5, 3);
    EXPECT_EQ(a, b);
    EXPECT_TRUE(validate_session_log(a).empty());
    EXPECT_EQ(a.rounds.size(), static_cast<std::size_t>(kRoundsPerGame));
  }
  const auto c = run_session(cfg, AttackerMode::none, make_team_profile(cfg, 6, 3), bank, 6, 3);
  EXPECT_NE(c, run_session(cfg, AttackerMode::none, make_team_profile(cfg, 5, 3), bank, 5, 3));
}

TEST(Simulation, BaselineRoundsIdenticalAcrossModes) {
  // Attack modes share the team's streams, so rounds 1..10 match the control.
  SimulationConfig cfg;
  const auto bank = QuestionBank::synthetic(30);
  const auto none = run_session(cfg, AttackerMode::none, make_team_profile(cfg, 2, 1), bank, 2, 1);
  const auto cog = run_session(cfg, AttackerMode::cognitive, make_team_profile(cfg, 2, 1), bank, 2, 1);
  for (int k = 0; k < kBaselineRounds; ++k) {
    EXPECT_EQ(none.rounds[k].question_id, cog.rounds[k].question_id);
    EXPECT_EQ(none.rounds[k].correctness, cog.rounds[k].correctness);
    EXPECT_EQ(none.rounds[k].allocations, cog.rounds[k].allocations);
  }
}

TEST(Simulation, QuestionsNeverRepeatWithinSession) {
  SimulationConfig cfg;
  const auto bank = QuestionBank::synthetic(30);
  for (std::size_t t = 0; t < 10; ++t) {
    const auto log = run_session(cfg, AttackerMode::none, make_team_profile(cfg, 1, t), bank, 1, t);
    std::set<std::string> seen;
    for (const auto& r : log.rounds) EXPECT_TRUE(seen.insert(r.question_id).second);
  }
}

TEST(Simulation, HumanAccuracyTracksProfile) {
  SimulationConfig cfg;
  cfg.skill_jitter = 0.0;
  cfg.difficulty_proportions = {1.0, 0.0, 0.0};
  const auto bank = QuestionBank::synthetic(30);
  int correct = 0;
  int total = 0;
  for (std::size_t t = 0; t < 80; ++t) {
    const auto log = run_session(cfg, AttackerMode::none, make_team_profile(cfg, 3, t), bank, 3, t);
    for (const auto& r : log.rounds) {
      for (std::size_t h = 0; h < kHumans; ++h) correct += r.correctness[h] ? 1 : 0;
      total += kHumans;
    }
  }
  EXPECT_NEAR(static_cast<double>(correct) / total, kDefaultAccuracy[0], 0.02);
}

TEST(Simulation, TrainingLogsUseRandomLateTruthRates) {
  SimulationConfig cfg;
  const auto bank = QuestionBank::synthetic(30);
  const auto logs = generate_training_logs(cfg, bank, 20, 4);
  ASSERT_EQ(logs.size(), 20u);
  std::set<int> late_truths;
  for (const auto& log : logs) {
    EXPECT_TRUE(validate_session_log(log).empty());
    int truths = 0;
    for (int k = kBaselineRounds; k < kRoundsPerGame; ++k) truths += is_truthful(log.rounds[k].ai_action) ? 1 : 0;
    late_truths.insert(truths);
  }
  EXPECT_GT(late_truths.size(), 4u);
}

TEST(Experiment, ThreadCountDoesNotChangeResults) {
  ExperimentConfig cfg;
  cfg.n_teams = 6;
  cfg.modes = {AttackerMode::none, AttackerMode::cognitive};
  cfg.sim.attacker_fit = {10.0, 1.0, 1.0};
  const auto bank = QuestionBank::synthetic(30);
  const auto a = run_experiment(cfg, bank);
  cfg.threads = 3;
  const auto b = run_experiment(cfg, bank);
  ASSERT_EQ(a.modes.size(), b.modes.size());
  for (std::size_t m = 0; m < a.modes.size(); ++m) {
    EXPECT_EQ(a.modes[m].logs, b.modes[m].logs);
    EXPECT_EQ(a.modes[m].scores, b.modes[m].scores);
  }
  ASSERT_EQ(a.comparisons.size(), 1u);
  EXPECT_EQ(a.comparisons[0].a, AttackerMode::cognitive);
  EXPECT_DOUBLE_EQ(a.comparisons[0].test.p_value, b.comparisons[0].test.p_value);
}

TEST(Experiment, MetricSeriesOracles) {
  ExperimentConfig cfg;
  cfg.n_teams = 4;
  cfg.modes = {AttackerMode::none};
  const auto bank = QuestionBank::synthetic(30);
  const auto r = run_experiment(cfg, bank);
  const auto& m = r.modes[0];
  const auto cum = m.cumulative();
  double running = 0;
  for (int k = 0; k < kRoundsPerGame; ++k) {
    double mean = 0;
    for (const auto& log : m.logs) mean += log.rounds[k].score / 4.0;
    running += mean;
    EXPECT_NEAR(cum[k], running, 1e-9);
  }
  const auto proj = m.projected();
  EXPECT_NEAR(proj[kRoundsPerGame - 1], cum[kBaselineRounds - 1] / kBaselineRounds * kRoundsPerGame, 1e-9);
  for (std::size_t t = 0; t < m.logs.size(); ++t) {
    for (int k = 0; k < kRoundsPerGame; ++k) {
      double ai = 0;
      for (const auto& a : m.logs[t].rounds[k].allocations) ai += a.points[kAiIndex];
      EXPECT_DOUBLE_EQ(m.ai_points[t][k], ai / 3.0);
      EXPECT_GE(m.best_points[t][k], 0.0);
    }
  }
  EXPECT_FALSE(r.ml_ai_points_trend.has_value());
  EXPECT_THROW(run_experiment(ExperimentConfig{0}, bank), ValidationError);
}

TEST(Experiment, MlModeNeedsModel) {
  ExperimentConfig cfg;
  cfg.n_teams = 1;
  cfg.modes = {AttackerMode::ml};
  const auto bank = QuestionBank::synthetic(30);
  EXPECT_ANY_THROW(run_experiment(cfg, bank, nullptr));
}
