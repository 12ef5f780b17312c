#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "tmsattack/report.hpp"

using namespace tmsattack;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("tmsattack_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TMSATTACK_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

report::MetricsBundle small_bundle() {
  sim::ExperimentConfig cfg;
  cfg.n_teams = 3;
  cfg.modes = {AttackerMode::none, AttackerMode::cognitive};
  cfg.sim.attacker_fit = {10.0, 1.0, 1.0};
  const auto r = sim::run_experiment(cfg, QuestionBank::synthetic(30));
  return report::bundle_from_experiment(r, {{"teams", 3}});
}

}  // namespace

TEST(Report, TablesHaveOneRowPerModeAndRound) {
  const auto b = small_bundle();
  const auto csv = report::cumulative_csv(b);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * kRoundsPerGame);
  EXPECT_EQ(csv.rfind("mode,round,cumulative,projected\nnone,1,", 0), 0u);
  const auto trends = report::trends_csv(b);
  EXPECT_EQ(std::count(trends.begin(), trends.end(), '\n'), 3);
  EXPECT_EQ(report::comparisons_csv(b).find("cognitive,none,"), std::string("a,b,mean_a,mean_b,t,df,p_value\n").size());
}

TEST(Report, BundleRoundTripAndReemissionIsByteIdentical) {
  const auto b = small_bundle();
  const auto dir = scratch("bundle");
  report::write_bundle(b, dir);
  const auto back = report::read_bundle(dir);
  EXPECT_EQ(report::to_json(back), report::to_json(b));
  const auto first = report::emit_report(back, dir / "a");
  const auto second = report::emit_report(report::read_bundle(dir), dir / "b");
  ASSERT_EQ(first.size(), 4u);
  for (std::size_t k = 0; k < first.size(); ++k) EXPECT_EQ(slurp(first[k]), slurp(second[k]));
}

TEST(Report, MissingOrEmptyInputsAreErrors) {
  const auto dir = scratch("empty");
  EXPECT_THROW(report::read_bundle(dir), InsufficientDataError);
  EXPECT_THROW(report::emit_report(report::MetricsBundle{}, dir), InsufficientDataError);
  std::ofstream(dir / "metrics.json") << "{\"format\":\"other\"}";
  EXPECT_THROW(report::read_bundle(dir), ParseError);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  EXPECT_EQ(run_cli("report --in " + (dir / "nothing").string() + " --out " + dir.string()), 1);
  EXPECT_EQ(run_cli("simulate --no-such-flag"), 1);
  EXPECT_EQ(run_cli("attack-eval --modes bogus --out " + dir.string()), 1);
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("simulate --teams 1 --attacker none --out " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "sessions.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "simulate.config.toml"));
}

TEST(Cli, SimulateIsSeedDeterministicAndConfigFileReproduces) {
  const auto a = scratch("cli_a");
  const auto b = scratch("cli_b");
  const auto c = scratch("cli_c");
  ASSERT_EQ(run_cli("simulate --teams 2 --attacker none --seed 7 --out " + a.string()), 0);
  ASSERT_EQ(run_cli("simulate --teams 2 --attacker none --seed 7 --out " + b.string()), 0);
  EXPECT_EQ(slurp(a / "sessions.jsonl"), slurp(b / "sessions.jsonl"));
  ASSERT_EQ(run_cli("--config-file " + (a / "simulate.config.toml").string() + " simulate --out " + c.string()), 0);
  EXPECT_EQ(slurp(a / "sessions.jsonl"), slurp(c / "sessions.jsonl"));
}

TEST(Cli, ReplayWithMockProvider) {
  const auto dir = scratch("cli_replay");
  ASSERT_EQ(run_cli("simulate --teams 1 --attacker none --out " + dir.string()), 0);
  ASSERT_EQ(run_cli("llm-replay --log " + (dir / "sessions.jsonl").string() +
                    " --provider mock --strategy best_agent --memory 3 --out " + dir.string()),
            0);
  const auto j = json::parse(slurp(dir / "replay.json"));
  EXPECT_EQ(j["network"], false);
  EXPECT_EQ(j["rounds"].size(), static_cast<std::size_t>(kRoundsPerGame));
  EXPECT_EQ(run_cli("llm-replay --log " + (dir / "sessions.jsonl").string() + " --memory zero --out " + dir.string()), 1);
}
