// tmsattack command-line entry point.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "tmsattack/adversary.hpp"
#include "tmsattack/cognitive_model.hpp"
#include "tmsattack/llm_moderator.hpp"
#include "tmsattack/ml_model.hpp"
#include "tmsattack/report.hpp"
#include "tmsattack/server.hpp"
#include "tmsattack/session_log.hpp"
#include "tmsattack/simulation.hpp"

namespace fs = std::filesystem;
using namespace tmsattack;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitInternal = 2;

struct Globals {
  std::uint64_t seed = 1;
  std::string out = "out";
};

std::string default_bank_path() { return std::string(TMSATTACK_DATA_DIR) + "/question_bank.json"; }

QuestionBank load_bank(const std::string& path) {
  if (path.empty()) return QuestionBank::synthetic(30);
  return QuestionBank::load(path);
}

/// Session logs from a .jsonl file or every .jsonl file of a directory, in
/// path order.
std::vector<SessionLog> load_logs(const std::string& path) {
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.path().extension() == ".jsonl") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::exists(path)) {
    files.emplace_back(path);
  } else {
    throw ValidationError("no such log file or directory: " + path);
  }
  std::vector<SessionLog> logs;
  for (const auto& f : files) {
    auto part = read_session_file(f.string());
    logs.insert(logs.end(), part.begin(), part.end());
  }
  if (logs.empty()) throw InsufficientDataError("no session logs found in " + path);
  return logs;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

/// Writes the resolved configuration next to the outputs; feeding the file
/// back through --config-file reproduces the run.
void stamp(const CLI::App& app, const std::string& command, const fs::path& dir) {
  write_text(dir / (command + ".config.toml"), app.config_to_str(true, false));
}

std::vector<AttackerMode> parse_modes(const std::string& list) {
  std::vector<AttackerMode> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_attacker_mode(item));
  }
  if (out.empty()) throw ValidationError("no attacker modes given");
  return out;
}

std::vector<std::size_t> parse_windows(const std::string& list) {
  std::vector<std::size_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const long w = std::stol(item);
    if (w < 1) throw ValidationError("windows must be positive");
    out.push_back(static_cast<std::size_t>(w));
  }
  if (out.empty()) throw ValidationError("no windows given");
  return out;
}

ml::Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open model checkpoint " + path);
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ParseError("model checkpoint is not JSON: " + path);
  return ml::checkpoint_from_json(j);
}

struct ModelOptions {
  std::string path;
  std::size_t training_teams = 300;
  int epochs = 100;
};

/// Loads a checkpoint, or trains one on simulated no-attack sessions.
ml::MlpParams obtain_model(const ModelOptions& o, const sim::SimulationConfig& cfg, const QuestionBank& bank,
                           std::uint64_t seed) {
  if (!o.path.empty()) return load_checkpoint(o.path).params;
  ml::TrainConfig tc;
  tc.epochs = o.epochs;
  tc.seed = seed;
  std::cerr << "training influence model on " << o.training_teams << " simulated teams\n";
  return sim::train_attacker_model(cfg, bank, o.training_teams, tc, seed, cfg.planner.ml_window).params;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct SimulateOptions {
  std::size_t teams = 10;
  std::string attacker = "none";
  std::string bank;
  ModelOptions model;
};

void run_simulate(const CLI::App& app, const Globals& g, const SimulateOptions& o) {
  const AttackerMode mode = parse_attacker_mode(o.attacker);
  const QuestionBank bank = load_bank(o.bank);
  sim::SimulationConfig cfg;
  std::optional<ml::MlpParams> model;
  if (mode == AttackerMode::ml) model = obtain_model(o.model, cfg, bank, g.seed);
  std::vector<SessionLog> logs;
  for (std::size_t t = 0; t < o.teams; ++t) {
    logs.push_back(sim::run_session(cfg, mode, sim::make_team_profile(cfg, g.seed, t), bank, g.seed, t,
                                    model ? &*model : nullptr));
  }
  const fs::path dir(g.out);
  fs::create_directories(dir);
  write_session_file((dir / "sessions.jsonl").string(), logs);
  stamp(app, "simulate", dir);
  std::cout << "wrote " << logs.size() << " sessions to " << (dir / "sessions.jsonl").string() << "\n";
}

struct FitOptions {
  std::string logs;
  double grid_step = 0.1;
  double coarse_step = 0.5;
  int max_round = kRoundsPerGame;
  std::size_t window = 0;  // 0 = full history
};

void run_fit(const CLI::App& app, const Globals& g, const FitOptions& o) {
  const auto logs = load_logs(o.logs);
  cognitive::FitConfig cfg;
  cfg.grid_step = o.grid_step;
  cfg.coarse_step = o.coarse_step;
  cfg.max_round = o.max_round;
  cfg.window = o.window == 0 ? kFullHistory : o.window;
  json fits = json::array();
  for (const auto& log : logs) {
    const auto r = cognitive::fit_mle(log, cfg);
    fits.push_back({{"session_id", log.session_id},
                    {"params", cognitive::to_json_params(r.params)},
                    {"log_likelihood", r.log_likelihood},
                    {"rounds_used", r.rounds_used}});
  }
  const fs::path dir(g.out);
  write_text(dir / "cognitive_fit.json", json{{"fits", fits}}.dump(2) + "\n");
  stamp(app, "fit-cognitive", dir);
  std::cout << "fitted " << logs.size() << " sessions; wrote " << (dir / "cognitive_fit.json").string() << "\n";
}

struct TrainOptions {
  std::string logs;
  std::size_t window = ml::kDefaultWindow;
  int epochs = 100;
  double lr = 0.01;
  std::size_t batch = 128;
};

void run_train(const CLI::App& app, const Globals& g, const TrainOptions& o) {
  const auto logs = load_logs(o.logs);
  ml::TrainConfig tc;
  tc.epochs = o.epochs;
  tc.learning_rate = o.lr;
  tc.batch_size = o.batch;
  tc.seed = g.seed;
  const auto r = ml::train(logs, tc, o.window);
  ml::Checkpoint c{r.params, o.window, tc, ml::fingerprint_logs(logs)};
  json j = ml::checkpoint_to_json(c);
  const fs::path dir(g.out);
  write_text(dir / "model.json", j.dump() + "\n");
  write_text(dir / "loss_trace.json", json(r.loss_trace).dump() + "\n");
  stamp(app, "train-ml", dir);
  std::cout << "trained " << tc.epochs << " epochs at lr " << tc.learning_rate << ", batch " << tc.batch_size
            << "; loss " << r.loss_trace.front() << " -> " << r.loss_trace.back() << "\n";
}

struct SweepOptions {
  std::string logs;
  std::string windows = "1,2,3,5,10,25";
  std::size_t folds = 5;
  int epochs = 40;
};

void run_sweep(const CLI::App& app, const Globals& g, const SweepOptions& o) {
  const auto logs = load_logs(o.logs);
  const auto windows = parse_windows(o.windows);
  ml::TrainConfig tc;
  tc.epochs = o.epochs;
  tc.seed = g.seed;
  const auto rows = ml::window_sweep(logs, windows, tc, o.folds);
  std::string csv = "window,median,q1,q3\n";
  for (const auto& r : rows) {
    csv += std::to_string(r.window) + "," + report::num(r.median) + "," + report::num(r.q1) + "," + report::num(r.q3) + "\n";
  }
  const fs::path dir(g.out);
  write_text(dir / "window_sweep.csv", csv);
  stamp(app, "window-sweep", dir);
  std::cout << csv;
}

struct AttackOptions {
  std::size_t teams = 200;
  std::string modes = "none,cognitive,ml";
  std::string bank;
  unsigned threads = 1;
  ModelOptions model;
};

void run_attack(const CLI::App& app, const Globals& g, const AttackOptions& o) {
  sim::ExperimentConfig ec;
  ec.n_teams = o.teams;
  ec.modes = parse_modes(o.modes);
  ec.seed = g.seed;
  ec.threads = std::max(1u, o.threads);
  ec.validate();
  const QuestionBank bank = load_bank(o.bank);
  std::optional<ml::MlpParams> model;
  if (std::find(ec.modes.begin(), ec.modes.end(), AttackerMode::ml) != ec.modes.end()) {
    model = obtain_model(o.model, ec.sim, bank, g.seed);
  }
  const auto result = sim::run_experiment(ec, bank, model ? &*model : nullptr);

  const fs::path dir(g.out);
  stamp(app, "attack-eval", dir);
  const auto bundle = report::bundle_from_experiment(result, json{{"teams", o.teams},
                                                                  {"modes", o.modes},
                                                                  {"seed", g.seed},
                                                                  {"bank", bank.version()}});
  report::write_bundle(bundle, dir);
  for (const auto& m : result.modes) {
    write_session_file((dir / ("sessions_" + std::string(to_string(m.mode)) + ".jsonl")).string(), m.logs);
  }

  std::ostringstream s;
  s << "mode,teams,mean_score_rounds_11_25\n";
  for (const auto& m : bundle.modes) s << to_string(m.mode) << "," << m.n_teams << "," << report::num(m.mean_rounds_11_25) << "\n";
  s << "\ncomparison,mean_a,mean_b,t,df,p_one_sided\n";
  for (const auto& c : bundle.comparisons) {
    s << to_string(c.a) << "<" << to_string(c.b) << "," << report::num(c.mean_a) << "," << report::num(c.mean_b) << ","
      << report::num(c.test.statistic) << "," << report::num(c.test.df) << "," << report::num(c.test.p_value) << "\n";
  }
  if (result.ml_ai_points_trend) {
    const auto& t = *result.ml_ai_points_trend;
    s << "\nml_ai_points_slope," << report::num(t.slope) << ",p," << report::num(t.p_value) << "\n";
  }
  write_text(dir / "summary.csv", s.str());
  std::cout << s.str();
}

struct ReplayOptions {
  std::string log;
  std::string session;  // id; empty = first session in the file
  std::string provider = "mock";
  std::string strategy = "accuracy_proportional";
  std::string memory = "full";
  std::string chat = "on";
  int perspective = 2;
  int retries = 2;
  bool dump_prompts = false;
  std::string endpoint;
  std::string model_name;
};

void run_replay(const CLI::App& app, const Globals& g, const ReplayOptions& o) {
  const auto logs = load_logs(o.log);
  const SessionLog* log = &logs.front();
  if (!o.session.empty()) {
    log = nullptr;
    for (const auto& l : logs) {
      if (l.session_id == o.session) log = &l;
    }
    if (log == nullptr) throw ValidationError("session " + o.session + " not found in " + o.log);
  }
  llm::ReplayConfig rc;
  rc.memory_rounds = llm::parse_memory(o.memory);
  if (o.chat != "on" && o.chat != "off") throw ValidationError("--chat must be on or off");
  rc.include_chat = o.chat == "on";
  rc.perspective_player = o.perspective;
  rc.retry_limit = o.retries;
  rc.keep_prompts = o.dump_prompts;
  rc.validate();

  std::unique_ptr<llm::CompletionClient> client;
  if (o.provider == "mock") {
    client = std::make_unique<llm::MockClient>(llm::parse_mock_strategy(o.strategy), g.seed);
  } else if (o.provider == "external") {
    llm::ExternalClientConfig ec;
    ec.endpoint = o.endpoint;
    if (!o.model_name.empty()) ec.model = o.model_name;
    client = std::make_unique<llm::ExternalClient>(llm::ExternalClientConfig::from_environment(ec));
  } else {
    throw ValidationError("--provider must be mock or external");
  }

  const auto result = llm::replay_session(*log, rc, *client);
  const fs::path dir(g.out);
  json j = llm::to_json(result);
  j["network"] = client->uses_network();
  write_text(dir / "replay.json", j.dump(2) + "\n");
  write_text(dir / "replay.csv", llm::replay_csv(result));
  if (o.dump_prompts) {
    write_text(dir / "prompts" / "system.txt", llm::build_system_prompt());
    for (const auto& r : result.rounds) {
      write_text(dir / "prompts" / ("round_" + std::to_string(r.round) + ".txt"), r.user_prompt);
    }
  }
  stamp(app, "llm-replay", dir);
  std::cout << "cumulative," << report::num(result.summary.cumulative) << "\nmean_rounds_1_10,"
            << report::num(result.summary.mean_rounds_1_10) << "\nmean_rounds_11_25,"
            << report::num(result.summary.mean_rounds_11_25) << "\nfallbacks," << result.summary.fallbacks << "\n";
}

struct ServeOptions {
  std::string host = "0.0.0.0";
  int port = 8080;
  std::string bank = default_bank_path();
  std::string attacker = "ml";
  std::string log_dir = "sessions";
  double timeout_difficulty = 60.0;
  double timeout_individual = 120.0;
  double timeout_discussion = 240.0;
  double timeout_feedback = 60.0;
  ModelOptions model;
};

server::HttpFrontend* g_frontend = nullptr;

void run_serve(const CLI::App& app, const Globals& g, const ServeOptions& o) {
  const AttackerMode mode = parse_attacker_mode(o.attacker);
  auto bank = std::make_shared<const QuestionBank>(QuestionBank::load(o.bank));
  server::ServiceConfig cfg;
  cfg.timeouts = {o.timeout_difficulty, o.timeout_individual, o.timeout_discussion, o.timeout_feedback};
  cfg.log_dir = o.log_dir;
  if (!cfg.log_dir.empty()) fs::create_directories(cfg.log_dir);
  if (mode == AttackerMode::ml || !o.model.path.empty()) {
    sim::SimulationConfig sc;
    cfg.model = std::make_shared<const ml::MlpParams>(obtain_model(o.model, sc, QuestionBank::synthetic(30), g.seed));
  }
  stamp(app, "serve", fs::path(g.out));
  server::GameService service(cfg);
  server::HttpFrontend frontend(service, bank, mode);
  g_frontend = &frontend;
  std::signal(SIGINT, [](int) {
    if (g_frontend != nullptr) g_frontend->raw().stop();
  });
  std::cout << "serving on " << o.host << ":" << o.port << " (default attacker " << o.attacker << ")\n" << std::flush;
  if (!frontend.listen(o.host, o.port)) throw Error("cannot listen on port " + std::to_string(o.port));
  g_frontend = nullptr;
}

struct ReportOptions {
  std::string in;
};

void run_report(const CLI::App& app, const Globals& g, const ReportOptions& o) {
  const auto bundle = report::read_bundle(o.in);
  const auto files = report::emit_report(bundle, g.out);
  stamp(app, "report", fs::path(g.out));
  for (const auto& f : files) std::cout << f.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial human-AI teaming: simulation, models, attacks, replay and game server"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config-file", "", "TOML file with option values; see README")->check(CLI::ExistingFile);
  app.allow_config_extras(CLI::config_extras_mode::error);

  Globals g;
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Output directory");

  SimulateOptions sim_o;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate teams and write session logs");
  sim_cmd->add_option("--teams", sim_o.teams, "Number of teams")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--attacker", sim_o.attacker, "none, cognitive or ml");
  sim_cmd->add_option("--bank", sim_o.bank, "Question bank JSON (default: synthetic)");
  sim_cmd->add_option("--model", sim_o.model.path, "ML checkpoint (default: train one)");
  sim_cmd->add_option("--training-teams", sim_o.model.training_teams, "Teams simulated to train the ML attacker");

  FitOptions fit_o;
  auto* fit_cmd = app.add_subcommand("fit-cognitive", "Fit trust sensitivities per session");
  fit_cmd->add_option("--logs", fit_o.logs, "Log file or directory")->required();
  fit_cmd->add_option("--grid-step", fit_o.grid_step, "Audit grid step");
  fit_cmd->add_option("--coarse-step", fit_o.coarse_step, "Coarse search step");
  fit_cmd->add_option("--max-round", fit_o.max_round, "Last round entering the likelihood");
  fit_cmd->add_option("--window", fit_o.window, "History window in rounds (0 = full)");

  TrainOptions train_o;
  auto* train_cmd = app.add_subcommand("train-ml", "Train the influence MLP");
  train_cmd->add_option("--logs", train_o.logs, "Log file or directory")->required();
  train_cmd->add_option("--window", train_o.window, "Feature window")->check(CLI::PositiveNumber);
  train_cmd->add_option("--epochs", train_o.epochs, "Training epochs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", train_o.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", train_o.batch, "Mini-batch size")->check(CLI::PositiveNumber);

  SweepOptions sweep_o;
  auto* sweep_cmd = app.add_subcommand("window-sweep", "Held-out error by feature window");
  sweep_cmd->add_option("--logs", sweep_o.logs, "Log file or directory")->required();
  sweep_cmd->add_option("--windows", sweep_o.windows, "Comma-separated windows");
  sweep_cmd->add_option("--folds", sweep_o.folds, "Team folds")->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--epochs", sweep_o.epochs, "Training epochs per fold")->check(CLI::PositiveNumber);

  AttackOptions attack_o;
  auto* attack_cmd = app.add_subcommand("attack-eval", "Compare attacker modes on simulated teams");
  attack_cmd->add_option("--teams", attack_o.teams, "Teams per mode")->check(CLI::PositiveNumber);
  attack_cmd->add_option("--modes", attack_o.modes, "Comma-separated attacker modes");
  attack_cmd->add_option("--bank", attack_o.bank, "Question bank JSON (default: synthetic)");
  attack_cmd->add_option("--threads", attack_o.threads, "Worker threads");
  attack_cmd->add_option("--model", attack_o.model.path, "ML checkpoint (default: train one)");
  attack_cmd->add_option("--training-teams", attack_o.model.training_teams, "Teams simulated to train the ML attacker");
  attack_cmd->add_option("--training-epochs", attack_o.model.epochs, "Epochs for the ML attacker model");

  ReplayOptions replay_o;
  auto* replay_cmd = app.add_subcommand("llm-replay", "Score an LLM moderator on a recorded session");
  replay_cmd->add_option("--log", replay_o.log, "Session log file")->required();
  replay_cmd->add_option("--session", replay_o.session, "Session id (default: first in file)");
  replay_cmd->add_option("--provider", replay_o.provider, "mock or external");
  replay_cmd->add_option("--strategy", replay_o.strategy, "Mock strategy: uniform, best_agent, accuracy_proportional");
  replay_cmd->add_option("--memory", replay_o.memory, "full or a number of rounds");
  replay_cmd->add_option("--chat", replay_o.chat, "on or off");
  replay_cmd->add_option("--perspective", replay_o.perspective, "Perspective player 1..3");
  replay_cmd->add_option("--retries", replay_o.retries, "Retries after an unparseable reply");
  replay_cmd->add_flag("--dump-prompts", replay_o.dump_prompts, "Write every prompt to the output directory");
  replay_cmd->add_option("--endpoint", replay_o.endpoint, "External base URL");
  replay_cmd->add_option("--model-name", replay_o.model_name, "External model name");

  ServeOptions serve_o;
  auto* serve_cmd = app.add_subcommand("serve", "Host live game sessions over HTTP");
  serve_cmd->add_option("--host", serve_o.host, "Bind address");
  serve_cmd->add_option("--port", serve_o.port, "TCP port")->check(CLI::Range(1, 65535));
  serve_cmd->add_option("--bank", serve_o.bank, "Question bank JSON");
  serve_cmd->add_option("--attacker", serve_o.attacker, "Default attacker mode for new sessions");
  serve_cmd->add_option("--log-dir", serve_o.log_dir, "Directory for finished session logs");
  serve_cmd->add_option("--timeout-difficulty", serve_o.timeout_difficulty, "Seconds; 0 disables");
  serve_cmd->add_option("--timeout-individual", serve_o.timeout_individual, "Seconds; 0 disables");
  serve_cmd->add_option("--timeout-discussion", serve_o.timeout_discussion, "Seconds; 0 disables");
  serve_cmd->add_option("--timeout-feedback", serve_o.timeout_feedback, "Seconds; 0 disables");
  serve_cmd->add_option("--model", serve_o.model.path, "ML checkpoint (default: train one)");

  ReportOptions report_o;
  auto* report_cmd = app.add_subcommand("report", "CSV tables from an attack-eval metrics directory");
  report_cmd->add_option("--in", report_o.in, "Metrics directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*sim_cmd) run_simulate(app, g, sim_o);
    if (*fit_cmd) run_fit(app, g, fit_o);
    if (*train_cmd) run_train(app, g, train_o);
    if (*sweep_cmd) run_sweep(app, g, sweep_o);
    if (*attack_cmd) run_attack(app, g, attack_o);
    if (*replay_cmd) run_replay(app, g, replay_o);
    if (*serve_cmd) run_serve(app, g, serve_o);
    if (*report_cmd) run_report(app, g, report_o);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const InsufficientDataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}
