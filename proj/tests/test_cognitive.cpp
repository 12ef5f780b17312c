#include <gtest/gtest.h>

#include "tmsattack/cognitive_model.hpp"
#include "tmsattack/simulation.hpp"

using namespace tmsattack;
using namespace tmsattack::cognitive;

namespace {

TeamHistory history_from(const std::vector<std::array<int, kAgents>>& rounds) {
  TeamHistory h;
  for (const auto& r : rounds) record_round(h, CorrectnessVector::from_values(r));
  return h;
}

}  // namespace

TEST(BetaPair, NoObservationsIsUniform) {
  const TrustParams p{3.0, 7.0, 0.2, 9.0};
  for (std::size_t i = 0; i < kAgents; ++i) {
    const auto b = beta_pair(p, i, 0, 0);
    EXPECT_EQ(b.alpha, 1.0);
    EXPECT_EQ(b.beta, 1.0);
  }
}

TEST(BetaPair, AnalyticMeans) {
  const auto b = beta_pair(TrustParams{1.0, 1.0, 1.0, 1.0}, 0, 2, 1);
  EXPECT_EQ(b.alpha, 3.0);
  EXPECT_EQ(b.beta, 2.0);
  EXPECT_DOUBLE_EQ(b.mean(), 0.6);
  const auto c = beta_pair(TrustParams{0.0, 0.0, 2.0, 0.5}, kAiIndex, 4, 2);
  EXPECT_EQ(c.alpha, 9.0);
  EXPECT_EQ(c.beta, 2.0);
  EXPECT_DOUBLE_EQ(c.mean(), 9.0 / 11.0);
}

TEST(BetaPair, TargetClassSelectsSensitivities) {
  const TrustParams p{2.0, 3.0, 5.0, 7.0};
  EXPECT_EQ(beta_pair(p, 1, 1, 1).alpha, 3.0);
  EXPECT_EQ(beta_pair(p, 1, 1, 1).beta, 4.0);
  EXPECT_EQ(beta_pair(p, kAiIndex, 1, 1).alpha, 6.0);
  EXPECT_EQ(beta_pair(p, kAiIndex, 1, 1).beta, 8.0);
}

TEST(PredictMatrix, EmptyHistoryIsUniform) {
  const auto m = predict_matrix(uniform_params({2.0, 0.5, 3.0, 1.0}), TeamHistory{});
  for (const auto& row : m.rows) {
    for (double v : row) EXPECT_EQ(v, 0.25);
  }
}

TEST(PredictMatrix, MatchesHandRecomputation) {
  const TeamTrustParams params{TrustParams{1.0, 1.0, 1.0, 1.0}, TrustParams{2.0, 0.5, 2.0, 0.5},
                               TrustParams{0.0, 3.0, 1.5, 0.0}};
  const auto h = history_from({{1, 0, 1, 1}, {1, 1, 0, 0}, {0, 1, 1, 1}, {1, 0, 0, 1}, {1, 1, 1, 0},
                               {0, 0, 1, 1}, {1, 1, 0, 1}, {1, 0, 1, 0}, {0, 1, 0, 1}, {1, 1, 1, 1}});
  // successes per agent: 7, 6, 6, 7; failures 3, 4, 4, 3.
  const int s[4] = {7, 6, 6, 7};
  const int f[4] = {3, 4, 4, 3};
  const auto m = predict_matrix(params, h);
  for (std::size_t j = 0; j < kHumans; ++j) {
    double e[4];
    double total = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double ws = i == 3 ? params[j].w_s_ai : params[j].w_s_human;
      const double wf = i == 3 ? params[j].w_f_ai : params[j].w_f_human;
      const double a = 1.0 + ws * s[i];
      const double b = 1.0 + wf * f[i];
      e[i] = a / (a + b);
      total += e[i];
    }
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(m.rows[j][i], e[i] / total, 1e-15);
  }
}

TEST(PredictMatrix, RowsAreDistributions) {
  Rng rng(3);
  for (int k = 0; k < 500; ++k) {
    TeamTrustParams p;
    for (auto& o : p) o = {10 * uniform01(rng), 10 * uniform01(rng), 10 * uniform01(rng), 10 * uniform01(rng)};
    TeamHistory h;
    const int n = static_cast<int>(rng() % 25);
    for (int r = 0; r < n; ++r) record_round(h, CorrectnessVector::from_bits(static_cast<unsigned>(rng() % 16)));
    const auto m = predict_matrix(p, h);
    EXPECT_TRUE(m.is_valid());
    for (const auto& row : m.rows) {
      for (double v : row) EXPECT_GE(v, 0.0);
    }
  }
}

TEST(PredictMatrix, MoreSuccessesNeverLowerInfluence) {
  Rng rng(5);
  for (int k = 0; k < 500; ++k) {
    TeamTrustParams p;
    for (auto& o : p) o = {5 * uniform01(rng), 5 * uniform01(rng), 5 * uniform01(rng), 5 * uniform01(rng)};
    Counts c;
    for (std::size_t i = 0; i < kAgents; ++i) {
      c.successes[i] = static_cast<int>(rng() % 10);
      c.failures[i] = static_cast<int>(rng() % 10);
    }
    const std::size_t target = rng() % kAgents;
    Counts more = c;
    more.successes[target] += 1;
    const auto a = predict_matrix(p, c);
    const auto b = predict_matrix(p, more);
    for (std::size_t j = 0; j < kHumans; ++j) {
      const double ws = p[j].success_weight(target);
      if (ws > 0.0) {
        EXPECT_GT(b.rows[j][target], a.rows[j][target]);
      } else {
        EXPECT_GE(b.rows[j][target], a.rows[j][target] - 1e-15);
      }
    }
  }
}

TEST(PredictMatrix, OneStrongTargetGainsInEveryRow) {
  TeamHistory h;
  for (int r = 0; r < 10; ++r) h[2].record(true);
  const auto m = predict_matrix(uniform_params({1.0, 1.0, 1.0, 1.0}), h);
  for (const auto& row : m.rows) EXPECT_GT(row[2], 0.25);
}

TEST(PredictMatrix, EqualSuccessesWithoutFailuresIsUniform) {
  Counts c;
  c.successes = {4, 4, 4, 4};
  for (double w : {0.0, 0.7, 3.0, 10.0}) {
    // Human and AI weights equal keeps every mean identical.
    const auto m = predict_matrix(uniform_params({w, 2.0, w, 9.0}), c);
    for (const auto& row : m.rows) {
      for (double v : row) EXPECT_NEAR(v, 0.25, 1e-15);
    }
  }
}

TEST(SampleMatrix, DeterministicPerSeedAndInSupport) {
  TeamHistory h;
  for (int r = 0; r < 6; ++r) record_round(h, CorrectnessVector::from_bits(0b1011));
  const auto p = uniform_params({1.0, 1.0, 1.0, 1.5});
  Rng a(99);
  Rng b(99);
  const auto ma = sample_matrix(p, h, a);
  const auto mb = sample_matrix(p, h, b);
  EXPECT_EQ(ma.rows, mb.rows);
  EXPECT_TRUE(ma.is_valid());
  Rng r(1);
  for (int k = 0; k < 10000; ++k) {
    const double x = sample_beta(r, 1.0, 1.0);
    EXPECT_GE(x, 0.0);
    EXPECT_LE(x, 1.0);
  }
}

TEST(FitMle, SingleRoundIsInsufficient) {
  sim::SimulationConfig cfg;
  const auto bank = QuestionBank::synthetic(30);
  auto log = sim::run_session(cfg, AttackerMode::none, sim::make_team_profile(cfg, 1, 0), bank, 1, 0);
  log.rounds.resize(1);
  EXPECT_THROW(fit_mle(log), InsufficientDataError);
}

TEST(FitMle, FlatLikelihoodReturnsFirstGridPoint) {
  sim::SimulationConfig cfg;
  const auto bank = QuestionBank::synthetic(30);
  const auto log = sim::run_session(cfg, AttackerMode::none, sim::make_team_profile(cfg, 2, 0), bank, 2, 0);
  FitConfig fc;
  fc.window = 0;  // no history: every Beta is (1,1) whatever the weights
  const auto r = fit_mle(log, fc);
  for (const auto& p : r.params) EXPECT_EQ(p, (TrustParams{0.0, 0.0, 0.0, 0.0}));
}

TEST(FitMle, BeatsEveryAuditGridPoint) {
  sim::SimulationConfig cfg;
  cfg.human.memory_window = kFullHistory;
  cfg.human.discussion_weight = 0.0;
  const auto bank = QuestionBank::synthetic(30);
  const auto logs = sim::generate_training_logs(cfg, bank, 3, 21);
  FitConfig fc;
  fc.grid_step = 0.5;
  ObserverLikelihood ll(fc.epsilon);
  for (const auto& log : logs) add_observer_rows(ll, log, 0, fc);
  const auto [best, value] = maximize(ll, fc);
  EXPECT_NEAR(ll(best), value, 1e-9);
  // Exhaustive audit over a 1.0 grid of all four sensitivities.
  for (double a = 0; a <= 10.0; a += 1.0) {
    for (double b = 0; b <= 10.0; b += 1.0) {
      for (double c = 0; c <= 10.0; c += 1.0) {
        for (double d = 0; d <= 10.0; d += 1.0) EXPECT_GE(value, ll({a, b, c, d}) - 1e-9);
      }
    }
  }
}

TEST(FitMle, DeterministicAndBounded) {
  sim::SimulationConfig cfg;
  const auto bank = QuestionBank::synthetic(30);
  const auto log = sim::run_session(cfg, AttackerMode::none, sim::make_team_profile(cfg, 4, 0), bank, 4, 0);
  FitConfig fc{10.0, 0.5, 0.5};
  const auto a = fit_mle(log, fc);
  const auto b = fit_mle(log, fc);
  EXPECT_EQ(a.params, b.params);
  for (const auto& p : a.params) {
    for (double w : {p.w_s_human, p.w_f_human, p.w_s_ai, p.w_f_ai}) {
      EXPECT_GE(w, 0.0);
      EXPECT_LE(w, 10.0);
    }
  }
}

TEST(FitMle, ParameterJsonRoundTrip) {
  const TeamTrustParams p{TrustParams{1, 2, 3, 4}, TrustParams{0.5, 0.25, 0, 10}, TrustParams{}};
  EXPECT_EQ(params_from_json(to_json_params(p)), p);
  EXPECT_THROW(params_from_json(json::array()), ParseError);
}
