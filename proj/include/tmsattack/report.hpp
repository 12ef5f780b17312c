#pragma once

// Metrics bundles written by attack-eval and the CSV tables derived from them.

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "tmsattack/simulation.hpp"

namespace tmsattack::report {

inline constexpr std::string_view kBundleFormat = "tmsattack.metrics.v1";
inline constexpr std::string_view kBundleFile = "metrics.json";

struct ModeSummary {
  AttackerMode mode = AttackerMode::none;
  std::size_t n_teams = 0;
  sim::RoundSeries score{};
  sim::RoundSeries ai_points{};
  sim::RoundSeries best_points{};
  sim::RoundSeries worst_points{};
  sim::RoundSeries cumulative{};
  sim::RoundSeries projected{};
  double mean_rounds_11_25 = 0.0;
  std::optional<stats::SlopeTestResult> ai_trend;
};

struct MetricsBundle {
  json config;
  std::vector<ModeSummary> modes;
  std::vector<sim::ComparisonResult> comparisons;
};

inline MetricsBundle bundle_from_experiment(const sim::ExperimentResult& r, json config) {
  MetricsBundle b;
  b.config = std::move(config);
  for (const auto& m : r.modes) {
    ModeSummary s;
    s.mode = m.mode;
    s.n_teams = m.scores.size();
    s.score = m.mean_series(m.scores);
    s.ai_points = m.mean_series(m.ai_points);
    s.best_points = m.mean_series(m.best_points);
    s.worst_points = m.mean_series(m.worst_points);
    s.cumulative = m.cumulative();
    s.projected = m.projected();
    s.mean_rounds_11_25 = stats::mean(m.team_means());
    if (m.scores.size() > 0) {
      try {
        s.ai_trend = sim::ai_points_trend(m);
      } catch (const ValidationError&) {
      }
    }
    b.modes.push_back(s);
  }
  b.comparisons = r.comparisons;
  return b;
}

inline json slope_json(const stats::SlopeTestResult& t) {
  return {{"slope", t.slope},
          {"intercept", t.intercept},
          {"standard_error", t.standard_error},
          {"statistic", t.statistic},
          {"p_value", t.p_value}};
}

inline json to_json(const MetricsBundle& b) {
  json modes = json::array();
  for (const auto& m : b.modes) {
    json j = {{"mode", to_string(m.mode)},
              {"n_teams", m.n_teams},
              {"score", m.score},
              {"ai_points", m.ai_points},
              {"best_points", m.best_points},
              {"worst_points", m.worst_points},
              {"cumulative", m.cumulative},
              {"projected", m.projected},
              {"mean_rounds_11_25", m.mean_rounds_11_25}};
    if (m.ai_trend) j["ai_trend"] = slope_json(*m.ai_trend);
    modes.push_back(std::move(j));
  }
  json comps = json::array();
  for (const auto& c : b.comparisons) {
    comps.push_back({{"a", to_string(c.a)},
                     {"b", to_string(c.b)},
                     {"mean_a", c.mean_a},
                     {"mean_b", c.mean_b},
                     {"t", c.test.statistic},
                     {"df", c.test.df},
                     {"p_value", c.test.p_value}});
  }
  return {{"format", kBundleFormat}, {"config", b.config}, {"modes", modes}, {"comparisons", comps}};
}

inline MetricsBundle bundle_from_json(const json& j) {
  if (j.value("format", std::string{}) != kBundleFormat) throw ParseError("not a metrics bundle");
  MetricsBundle b;
  try {
    b.config = j.at("config");
    for (const auto& m : j.at("modes")) {
      ModeSummary s;
      s.mode = parse_attacker_mode(m.at("mode").get<std::string>());
      s.n_teams = m.at("n_teams").get<std::size_t>();
      m.at("score").get_to(s.score);
      m.at("ai_points").get_to(s.ai_points);
      m.at("best_points").get_to(s.best_points);
      m.at("worst_points").get_to(s.worst_points);
      m.at("cumulative").get_to(s.cumulative);
      m.at("projected").get_to(s.projected);
      s.mean_rounds_11_25 = m.at("mean_rounds_11_25").get<double>();
      if (m.contains("ai_trend")) {
        const auto& t = m["ai_trend"];
        s.ai_trend = stats::SlopeTestResult{t.at("slope"), t.at("intercept"), t.at("standard_error"),
                                            t.at("statistic"), t.at("p_value")};
      }
      b.modes.push_back(s);
    }
    for (const auto& c : j.at("comparisons")) {
      sim::ComparisonResult r;
      r.a = parse_attacker_mode(c.at("a").get<std::string>());
      r.b = parse_attacker_mode(c.at("b").get<std::string>());
      r.mean_a = c.at("mean_a");
      r.mean_b = c.at("mean_b");
      r.test = {c.at("t"), c.at("df"), c.at("p_value")};
      b.comparisons.push_back(r);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("metrics bundle: ") + e.what());
  }
  return b;
}

inline void write_bundle(const MetricsBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / kBundleFile);
  if (!out) throw Error("cannot write " + (dir / kBundleFile).string());
  out << to_json(b).dump(2) << "\n";
}

inline MetricsBundle read_bundle(const std::filesystem::path& dir) {
  const auto path = dir / kBundleFile;
  std::ifstream in(path);
  if (!in) throw InsufficientDataError("no metrics bundle at " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ParseError("metrics bundle is not JSON: " + path.string());
  return bundle_from_json(j);
}

/// Fixed-precision number formatting so repeated emission is byte-identical.
inline std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

inline std::string cumulative_csv(const MetricsBundle& b) {
  std::string out = "mode,round,cumulative,projected\n";
  for (const auto& m : b.modes) {
    for (int k = 0; k < kRoundsPerGame; ++k) {
      out += std::string(to_string(m.mode)) + "," + std::to_string(k + 1) + "," + num(m.cumulative[k]) + "," +
             num(m.projected[k]) + "\n";
    }
  }
  return out;
}

inline std::string per_round_csv(const MetricsBundle& b) {
  std::string out = "mode,round,score,ai_points,best_points,worst_points\n";
  for (const auto& m : b.modes) {
    for (int k = 0; k < kRoundsPerGame; ++k) {
      out += std::string(to_string(m.mode)) + "," + std::to_string(k + 1) + "," + num(m.score[k]) + "," +
             num(m.ai_points[k]) + "," + num(m.best_points[k]) + "," + num(m.worst_points[k]) + "\n";
    }
  }
  return out;
}

inline std::string trends_csv(const MetricsBundle& b) {
  std::string out = "mode,n_teams,mean_rounds_11_25,ai_slope,ai_slope_se,ai_slope_p\n";
  for (const auto& m : b.modes) {
    out += std::string(to_string(m.mode)) + "," + std::to_string(m.n_teams) + "," + num(m.mean_rounds_11_25) + ",";
    out += m.ai_trend ? num(m.ai_trend->slope) + "," + num(m.ai_trend->standard_error) + "," + num(m.ai_trend->p_value)
                      : std::string(",,");
    out += "\n";
  }
  return out;
}

inline std::string comparisons_csv(const MetricsBundle& b) {
  std::string out = "a,b,mean_a,mean_b,t,df,p_value\n";
  for (const auto& c : b.comparisons) {
    out += std::string(to_string(c.a)) + "," + std::string(to_string(c.b)) + "," + num(c.mean_a) + "," +
           num(c.mean_b) + "," + num(c.test.statistic) + "," + num(c.test.df) + "," + num(c.test.p_value) + "\n";
  }
  return out;
}

/// Writes the four report tables and returns their paths.
inline std::vector<std::filesystem::path> emit_report(const MetricsBundle& b, const std::filesystem::path& out_dir) {
  if (b.modes.empty()) throw InsufficientDataError("metrics bundle has no modes");
  std::filesystem::create_directories(out_dir);
  const std::vector<std::pair<std::string, std::string>> tables{{"cumulative.csv", cumulative_csv(b)},
                                                                {"per_round.csv", per_round_csv(b)},
                                                                {"trends.csv", trends_csv(b)},
                                                                {"comparisons.csv", comparisons_csv(b)}};
  std::vector<std::filesystem::path> written;
  for (const auto& [name, text] : tables) {
    const auto path = out_dir / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    written.push_back(path);
  }
  return written;
}

}  // namespace tmsattack::report
