// Acceptance checks. Each criterion runs on its own and prints one
// PASS/FAIL line; the exit status is 0 only on PASS.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <regex>
#include <sstream>

#include "CLI11.hpp"
#include "tmsattack/adversary.hpp"
#include "tmsattack/cognitive_model.hpp"
#include "tmsattack/llm_moderator.hpp"
#include "tmsattack/ml_model.hpp"
#include "tmsattack/report.hpp"
#include "tmsattack/simulation.hpp"

using namespace tmsattack;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Paths {
  std::string cli;
  std::string attack_dir;
  std::string scratch;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::array<bool, 3> humans_of(unsigned bits) { return {(bits & 1U) != 0, (bits & 2U) != 0, (bits & 4U) != 0}; }

adversary::PlannerState random_state(Rng& rng, int round) {
  TeamHistory h;
  for (int k = 1; k < round; ++k) record_round(h, CorrectnessVector::from_bits(static_cast<unsigned>(rng() % 16)));
  return adversary::PlannerState::from_history(h, round);
}

cognitive::TeamTrustParams random_trust(Rng& rng) {
  cognitive::TeamTrustParams p;
  for (auto& o : p) o = {4 * uniform01(rng), 4 * uniform01(rng), 4 * uniform01(rng), 4 * uniform01(rng)};
  return p;
}

// ---------------------------------------------------------------------------

Outcome eq1_oracle(const Paths&) {
  Rng rng(2024);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    std::vector<std::vector<double>> rows(3, std::vector<double>(4));
    for (auto& row : rows) {
      double t = 0;
      for (double& v : row) t += (v = uniform01(rng));
      for (double& v : row) v /= t;
    }
    std::vector<int> p(4);
    for (int& v : p) v = static_cast<int>(rng() % 2);
    double brute = 0.0;
    for (int j = 0; j < 3; ++j) {
      for (int i = 0; i < 4; ++i) brute += rows[j][i] * p[i];
    }
    worst = std::max(worst, std::abs(round_score(rows, p) - brute));
  }
  return {worst <= 1e-12, fmt("10000 draws, max |diff| = %.3g", worst)};
}

Outcome cognitive_analytics(const Paths&) {
  bool ok = true;
  Rng rng(7);
  const auto m = cognitive::predict_matrix(random_trust(rng), TeamHistory{});
  for (const auto& row : m.rows) {
    for (double v : row) ok = ok && v == 0.25;
  }
  const auto b = cognitive::beta_pair(cognitive::TrustParams{1, 1, 1, 1}, 0, 2, 1);
  ok = ok && b.alpha == 3.0 && b.beta == 2.0 && b.mean() == 0.6;
  const auto c = cognitive::beta_pair(cognitive::TrustParams{0, 0, 2, 0.5}, kAiIndex, 4, 2);
  ok = ok && c.mean() == 9.0 / 11.0;
  double worst = 0.0;
  for (const auto& [a, bb] : std::vector<std::pair<double, double>>{{3, 2}, {1, 1}, {9, 2}, {1.5, 6}}) {
    double s = 0;
    for (int k = 0; k < 100000; ++k) s += sample_beta(rng, a, bb);
    worst = std::max(worst, std::abs(s / 1e5 - a / (a + bb)));
  }
  ok = ok && worst < 0.01;
  return {ok, fmt("uniform empty history, exact Beta means, Monte Carlo max error %.4f", worst)};
}

Outcome mle_recovery(const Paths&) {
  const auto bank = QuestionBank::synthetic(30);
  sim::SimulationConfig cfg;
  cfg.human.trust = {2.0, 0.5, 2.0, 0.5};
  cfg.human.memory_window = kFullHistory;
  cfg.human.discussion_weight = 0.0;
  const auto logs = sim::generate_training_logs(cfg, bank, 40, 777);
  const auto r = cognitive::fit_mle(logs);
  double worst = 0.0;
  std::string est;
  for (const auto& p : r.params) {
    worst = std::max({worst, std::abs(p.w_s_human - 2.0) / 2.0, std::abs(p.w_f_human - 0.5) / 0.5,
                      std::abs(p.w_s_ai - 2.0) / 2.0, std::abs(p.w_f_ai - 0.5) / 0.5});
    est += fmt(" (%.2f,%.2f,%.2f,%.2f)", p.w_s_human, p.w_f_human, p.w_s_ai, p.w_f_ai);
  }
  return {worst <= 0.2, fmt("40 teams, max relative error %.3f;", worst) + est};
}

// ReLU on/off pattern of every hidden unit for one input.
std::vector<bool> relu_pattern(const ml::MlpParams& p, const ml::FeatureVector& x) {
  std::vector<double> a(x.begin(), x.end());
  std::vector<bool> out;
  for (std::size_t l = 0; l + 1 < p.layers(); ++l) {
    std::vector<double> z(p.out(l));
    const auto w = p.weights(l);
    const auto b = p.biases(l);
    for (std::size_t o = 0; o < p.out(l); ++o) {
      z[o] = b[o];
      for (std::size_t i = 0; i < p.in(l); ++i) z[o] += w[o * p.in(l) + i] * a[i];
      out.push_back(z[o] > 0);
      z[o] = std::max(0.0, z[o]);
    }
    a = z;
  }
  return out;
}

Outcome gradient_check(const Paths&) {
  Rng rng(99);
  double worst = 0.0;
  std::size_t checked = 0;
  std::size_t kinks = 0;
  const double h = 1e-6;
  for (int draw = 0; draw < 100; ++draw) {
    auto p = ml::MlpParams::glorot(1000 + static_cast<std::uint64_t>(draw));
    for (double& v : p.values) v += 0.02 * (uniform01(rng) - 0.5);
    std::vector<ml::Sample> batch(8);
    for (auto& s : batch) {
      for (double& v : s.x) v = uniform01(rng);
      for (double& v : s.y) v = uniform01(rng);
    }
    const auto lg = ml::loss_and_gradients(p, batch);
    std::vector<std::vector<bool>> base;
    for (const auto& s : batch) base.push_back(relu_pattern(p, s.x));
    double max_grad = 0.0;
    double max_err = 0.0;
    for (std::size_t k = 0; k < p.values.size(); ++k) {
      auto plus = p;
      auto minus = p;
      plus.values[k] += h;
      minus.values[k] -= h;
      bool smooth = true;
      for (std::size_t n = 0; n < batch.size() && smooth; ++n) {
        smooth = relu_pattern(plus, batch[n].x) == base[n] && relu_pattern(minus, batch[n].x) == base[n];
      }
      if (!smooth) {  // the finite difference straddles a ReLU kink
        ++kinks;
        continue;
      }
      const double fd = (ml::mean_squared_error(plus, batch) - ml::mean_squared_error(minus, batch)) / (2 * h);
      max_err = std::max(max_err, std::abs(fd - lg.gradients.values[k]));
      max_grad = std::max(max_grad, std::abs(lg.gradients.values[k]));
      ++checked;
    }
    worst = std::max(worst, max_err / std::max(max_grad, 1e-12));
  }
  return {worst < 1e-4, fmt("100 draws, %zu coordinates (%zu at ReLU kinks skipped), max relative error %.2e", checked,
                            kinks, worst)};
}

Outcome training_efficacy(const Paths&) {
  const auto bank = QuestionBank::synthetic(30);
  const auto logs = sim::generate_training_logs(sim::SimulationConfig{}, bank, 60, 4242);
  ml::CrossValidationConfig cv;
  cv.train.seed = 3;
  const auto folds = ml::leave_one_team_out(logs, cv);
  int wins = 0;
  std::vector<double> mlp, eq, cog;
  for (const auto& f : folds) {
    wins += (f.mse_mlp < f.mse_equal_weights && f.mse_mlp < f.mse_cognitive) ? 1 : 0;
    mlp.push_back(f.mse_mlp);
    eq.push_back(f.mse_equal_weights);
    cog.push_back(f.mse_cognitive);
  }
  const double frac = static_cast<double>(wins) / static_cast<double>(folds.size());
  return {frac >= 0.8, fmt("MLP lowest in %d/%zu folds (%.0f%%); mean MSE mlp %.5f, equal %.5f, cognitive %.5f", wins,
                           folds.size(), 100 * frac, stats::mean(mlp), stats::mean(eq), stats::mean(cog))};
}

// Exhaustive enumeration without memoization.
std::pair<double, adversary::Action> enumerate(const adversary::PlannerConfig& cfg, const cognitive::TeamTrustParams* cog,
                                               const ml::MlpParams* net, const adversary::PlannerState& s, int depth,
                                               const adversary::HumanProbabilities& probs) {
  using adversary::Action;
  if (depth == 0 || s.round > kRoundsPerGame) return {0.0, Action::truth};
  std::array<double, 2> q{};
  for (Action a : {Action::truth, Action::lie}) {
    for (unsigned bits = 0; bits < 8; ++bits) {
      const auto humans = humans_of(bits);
      const auto p = adversary::outcome_vector(humans, a);
      double r = cog != nullptr
                     ? adversary::reward_cognitive(cognitive::predict_matrix(*cog, s.counts()), p, s,
                                                   adversary::effective_action(humans, a), cfg.sigmoid)
                     : adversary::reward_ml(ml::predict_matrix(*net, adversary::planner_features(s, p)), p);
      if (depth > 1 && s.round < kRoundsPerGame) {
        r += enumerate(cfg, cog, net, adversary::transition(s, humans, a), depth - 1, probs).first;
      }
      q[static_cast<std::size_t>(a)] += adversary::outcome_probability(probs, bits) * r;
    }
  }
  const double lie = q[static_cast<std::size_t>(Action::lie)];
  const double truth = q[static_cast<std::size_t>(Action::truth)];
  return lie > truth + adversary::kTieTolerance ? std::pair{lie, Action::lie} : std::pair{truth, Action::truth};
}

Outcome planner_oracle(const Paths&) {
  Rng rng(31337);
  double worst = 0.0;
  int action_mismatch = 0;
  int cases = 0;
  for (int k = 0; k < 200; ++k) {
    const bool cognitive_mode = k % 2 == 0;
    adversary::PlannerConfig cfg;
    cfg.mode = cognitive_mode ? adversary::PlannerMode::cognitive : adversary::PlannerMode::ml;
    const auto trust = random_trust(rng);
    const auto net = ml::MlpParams::glorot(static_cast<std::uint64_t>(k));
    auto planner = cognitive_mode ? adversary::Planner(cfg, trust) : adversary::Planner(cfg, &net);
    const auto s = random_state(rng, 11 + static_cast<int>(rng() % 15));
    const adversary::HumanProbabilities probs{uniform01(rng), uniform01(rng), uniform01(rng)};
    for (int depth = 1; depth <= 3; ++depth) {
      const auto got = planner.expectimax(s, depth, probs);
      const auto want = enumerate(cfg, cognitive_mode ? &trust : nullptr, cognitive_mode ? nullptr : &net, s, depth, probs);
      worst = std::max(worst, std::abs(got.value - want.first));
      action_mismatch += got.best != want.second ? 1 : 0;
      ++cases;
    }
  }
  return {worst <= 1e-9 && action_mismatch == 0,
          fmt("%d (state, horizon) cases, max |value diff| %.2e, %d action mismatches", cases, worst, action_mismatch)};
}

Outcome forced_actions(const Paths&) {
  Rng rng(4711);
  int calls = 0;
  int violations = 0;
  const auto bank = QuestionBank::synthetic(30);
  for (int team = 0; team < 40; ++team) {
    adversary::PlannerConfig cfg;
    const bool cognitive_mode = team % 2 == 0;
    cfg.mode = cognitive_mode ? adversary::PlannerMode::cognitive : adversary::PlannerMode::ml;
    const auto net = ml::MlpParams::glorot(static_cast<std::uint64_t>(team));
    auto planner = cognitive_mode ? adversary::Planner(cfg, random_trust(rng)) : adversary::Planner(cfg, &net);
    const adversary::HumanProbabilities probs{uniform01(rng), uniform01(rng), uniform01(rng)};
    for (int k = 0; k < 250; ++k) {
      const int round = 11 + static_cast<int>(rng() % 15);
      TeamHistory h;
      for (int r = 1; r < round; ++r) record_round(h, CorrectnessVector::from_bits(static_cast<unsigned>(rng() % 16)));
      const auto s = adversary::PlannerState::from_history(h, round);
      const unsigned bits = static_cast<unsigned>(rng() % 8);
      const auto humans = humans_of(bits);
      const auto choice = planner.choose(s, humans, probs);
      ++calls;
      if (bits == 7 && choice.action != adversary::Action::truth) ++violations;
      if (bits == 0 && choice.action != adversary::Action::lie) ++violations;
      const Question& q = bank.questions()[rng() % bank.questions().size()];
      std::array<int, 3> answers{};
      for (std::size_t i = 0; i < 3; ++i) {
        if (humans[i]) {
          answers[i] = q.answer_index;
        } else {
          answers[i] = (q.answer_index + 1 + static_cast<int>(rng() % 3)) % 4;
        }
      }
      const int ai = adversary::select_answer(choice.action, q, answers, h, rng);
      if (choice.action == adversary::Action::lie && ai == q.answer_index) ++violations;
      if (choice.action == adversary::Action::truth && ai != q.answer_index) ++violations;
    }
  }
  return {violations == 0, fmt("%d planner calls, %d violations", calls, violations)};
}

Outcome attack_efficacy(const Paths& paths) {
  const auto b = report::read_bundle(paths.attack_dir);
  auto mean_of = [&](AttackerMode m) {
    for (const auto& s : b.modes) {
      if (s.mode == m) return s.mean_rounds_11_25;
    }
    throw InsufficientDataError("mode missing from bundle");
  };
  auto p_of = [&](AttackerMode x, AttackerMode y) {
    for (const auto& c : b.comparisons) {
      if (c.a == x && c.b == y) return c.test.p_value;
    }
    throw InsufficientDataError("comparison missing from bundle");
  };
  const double none = mean_of(AttackerMode::none);
  const double cog = mean_of(AttackerMode::cognitive);
  const double mlm = mean_of(AttackerMode::ml);
  const double p_ml_none = p_of(AttackerMode::ml, AttackerMode::none);
  const double p_ml_cog = p_of(AttackerMode::ml, AttackerMode::cognitive);
  const bool order = mlm < cog && cog < none;
  const bool ok = order && p_ml_none < 0.01 && p_ml_cog < 0.05;
  return {ok, fmt("mean score r11-25: ml %.4f, cognitive %.4f, none %.4f; p(ml<none) %.3g, p(ml<cognitive) %.3g, "
                  "p(cognitive<none) %.3g",
                  mlm, cog, none, p_ml_none, p_ml_cog, p_of(AttackerMode::cognitive, AttackerMode::none))};
}

Outcome trust_trend(const Paths& paths) {
  const auto b = report::read_bundle(paths.attack_dir);
  for (const auto& m : b.modes) {
    if (m.mode != AttackerMode::ml || !m.ai_trend) continue;
    const auto& t = *m.ai_trend;
    return {t.slope < 0 && t.p_value < 0.01, fmt("ml AI-points slope %.4f per round, p = %.3g", t.slope, t.p_value)};
  }
  return {false, "no ml trend in bundle"};
}

Outcome prompt_fidelity(const Paths&) {
  const std::string dir = TMSATTACK_SNAPSHOT_DIR;
  const auto sys = slurp(dir + "/system_prompt.txt");
  const auto user = slurp(dir + "/user_prompt_round4.txt");
  SessionLog log;
  log.player_aliases = {"DarkOrange Owl", "DarkOrchid Bear", "Blue Tiger"};
  const std::array<std::array<int, 4>, 3> corr{{{1, 1, 0, 1}, {0, 0, 0, 1}, {1, 1, 1, 1}}};
  for (int r = 0; r < 4; ++r) {
    RoundRecord rr;
    rr.round_index = r + 1;
    rr.options = {"Kent", "Hertfordshire", "Berkshire", "Surrey"};
    if (r < 3) rr.correctness = CorrectnessVector::from_values(corr[static_cast<std::size_t>(r)]);
    rr.individual_answers = {2, 1, 2, 1};
    rr.confidences_pre = {3, 2, 3};
    rr.confidences_post = {3, 4, 3};
    log.rounds.push_back(rr);
  }
  const std::regex re(R"(Player (\d) \(([^)]*)\): (.*))");
  const auto a = user.find("CHAT LOG:\n") + 10;
  std::istringstream ss(user.substr(a, user.find("\n\n", a) - a));
  std::string line;
  while (std::getline(ss, line)) {
    std::smatch m;
    if (std::regex_match(line, m, re)) log.rounds[3].chat.push_back({std::stoi(m[1]), "", m[3], 0});
  }
  const bool sys_ok = llm::build_system_prompt() == sys;
  const bool user_ok = llm::build_user_prompt(log, 4, llm::ReplayConfig{}) == user;
  return {sys_ok && user_ok && !log.rounds[3].chat.empty(),
          fmt("system prompt %s, round-4 user prompt %s (%zu bytes)", sys_ok ? "matches" : "differs",
              user_ok ? "matches" : "differs", user.size())};
}

Outcome baseline_accuracy(const Paths&) {
  const auto bank = QuestionBank::synthetic(30);
  sim::SimulationConfig cfg;
  long truths = 0;
  long total = 0;
  for (std::size_t t = 0; t < 10000; ++t) {
    const auto log = sim::run_session(cfg, AttackerMode::none, sim::make_team_profile(cfg, 5150, t), bank, 5150, t);
    for (int k = 0; k < kBaselineRounds; ++k) truths += is_truthful(log.rounds[static_cast<std::size_t>(k)].ai_action) ? 1 : 0;
    total += kBaselineRounds;
  }
  const double f = static_cast<double>(truths) / static_cast<double>(total);
  return {f >= 0.745 && f <= 0.755, fmt("truth frequency %.4f over %ld baseline rounds", f, total)};
}

Outcome determinism(const Paths& paths) {
  const fs::path root = fs::path(paths.scratch) / "determinism";
  fs::remove_all(root);
  std::vector<std::string> problems;
  for (const char* sub : {"a", "b"}) {
    if (run(paths.cli + " simulate --teams 5 --attacker cognitive --seed 11 --out " + (root / sub).string()) != 0) {
      problems.push_back(std::string("simulate run ") + sub + " failed");
    }
  }
  const auto a = slurp(root / "a" / "sessions.jsonl");
  const bool cli_same = !a.empty() && a == slurp(root / "b" / "sessions.jsonl");
  if (!cli_same) problems.push_back("simulate outputs differ");

  for (const auto& [sub, threads] : std::vector<std::pair<std::string, int>>{{"serial", 1}, {"parallel", 4}}) {
    run(paths.cli + " attack-eval --teams 8 --modes none,cognitive --seed 11 --threads " + std::to_string(threads) +
        " --out " + (root / sub).string());
  }
  bool threads_same = true;
  for (const char* mode : {"none", "cognitive"}) {
    const std::string file = std::string("sessions_") + mode + ".jsonl";
    const auto s = slurp(root / "serial" / file);
    threads_same = threads_same && !s.empty() && s == slurp(root / "parallel" / file);
  }
  if (!threads_same) problems.push_back("serial and parallel logs differ");
  std::string detail = fmt("simulate x2 %s (%zu bytes); attack-eval 1 vs 4 threads %s", cli_same ? "identical" : "DIFFER",
                           a.size(), threads_same ? "identical" : "DIFFER");
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, std::function<Outcome(const Paths&)>> criteria{
      {"eq1_oracle", eq1_oracle},
      {"cognitive_analytics", cognitive_analytics},
      {"mle_recovery", mle_recovery},
      {"gradient_check", gradient_check},
      {"training_efficacy", training_efficacy},
      {"planner_oracle", planner_oracle},
      {"forced_actions", forced_actions},
      {"attack_efficacy", attack_efficacy},
      {"trust_trend", trust_trend},
      {"prompt_fidelity", prompt_fidelity},
      {"baseline_accuracy", baseline_accuracy},
      {"determinism", determinism},
  };

  CLI::App app{"Acceptance criteria"};
  std::vector<std::string> names;
  Paths paths;
  paths.scratch = fs::temp_directory_path().string();
  app.add_option("--criterion", names, "Criteria to run (default: all)");
  app.add_option("--cli", paths.cli, "Path of the tmsattack binary");
  app.add_option("--attack-dir", paths.attack_dir, "Output directory of the attack-eval run");
  app.add_option("--scratch", paths.scratch, "Scratch directory");
  CLI11_PARSE(app, argc, argv);
  if (names.empty()) {
    for (const auto& [name, fn] : criteria) names.push_back(name);
  }

  int failures = 0;
  for (const auto& name : names) {
    const auto it = criteria.find(name);
    if (it == criteria.end()) {
      std::printf("[FAIL] %s: unknown criterion\n", name.c_str());
      ++failures;
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->second(paths);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
