#pragma once

// Multi-agent Beta trust model: each human j holds trust t^{i,j} in agent i,
// t ~ Beta(1 + w_s n_s^i, 1 + w_f n_f^i), with separate sensitivities toward
// humans (including the observer itself) and toward the AI. Rows are
// normalized into an influence matrix.

#include <gsl/gsl_multimin.h>

#include <boost/math/quadrature/gauss.hpp>
#include <map>
#include <span>
#include <utility>

#include "tmsattack/core.hpp"
#include "tmsattack/rng.hpp"
#include "tmsattack/session_log.hpp"

namespace tmsattack::cognitive {

struct TrustParams {
  double w_s_human = 1.0;
  double w_f_human = 1.0;
  double w_s_ai = 1.0;
  double w_f_ai = 1.0;

  void validate() const {
    for (double w : {w_s_human, w_f_human, w_s_ai, w_f_ai}) {
      if (!std::isfinite(w) || w < 0.0) throw ValidationError("sensitivities must be finite and non-negative");
    }
  }

  double success_weight(std::size_t target) const { return target == kAiIndex ? w_s_ai : w_s_human; }
  double failure_weight(std::size_t target) const { return target == kAiIndex ? w_f_ai : w_f_human; }

  friend bool operator==(const TrustParams&, const TrustParams&) = default;
};

using TeamTrustParams = std::array<TrustParams, kHumans>;

inline TeamTrustParams uniform_params(const TrustParams& p) { return {p, p, p}; }

struct BetaPair {
  double alpha = 1.0;
  double beta = 1.0;

  double mean() const { return alpha / (alpha + beta); }
};

/// Success / failure counts for the four agents.
struct Counts {
  std::array<int, kAgents> successes{};
  std::array<int, kAgents> failures{};
};

inline Counts counts_of(const TeamHistory& history, std::size_t window = kFullHistory) {
  Counts c;
  for (std::size_t i = 0; i < kAgents; ++i) {
    c.successes[i] = history[i].successes(window);
    c.failures[i] = history[i].failures(window);
  }
  return c;
}

inline BetaPair beta_pair(const TrustParams& observer, std::size_t target, int successes, int failures) {
  return {1.0 + observer.success_weight(target) * successes, 1.0 + observer.failure_weight(target) * failures};
}

inline BetaPair beta_pair(const TeamTrustParams& params, std::size_t observer, std::size_t target,
                          const AgentHistory& target_history, std::size_t window = kFullHistory) {
  return beta_pair(params.at(observer), target, target_history.successes(window), target_history.failures(window));
}

/// Expected trusts of one observer, normalized to sum to one.
inline Row predict_row(const TrustParams& observer, const Counts& counts) {
  Row row{};
  double total = 0.0;
  for (std::size_t i = 0; i < kAgents; ++i) {
    row[i] = beta_pair(observer, i, counts.successes[i], counts.failures[i]).mean();
    total += row[i];
  }
  for (double& v : row) v /= total;
  return row;
}

inline InfluenceMatrix predict_matrix(const TeamTrustParams& params, const Counts& counts) {
  InfluenceMatrix m;
  for (std::size_t j = 0; j < kHumans; ++j) m.rows[j] = predict_row(params[j], counts);
  return m;
}

inline InfluenceMatrix predict_matrix(const TeamTrustParams& params, const TeamHistory& history,
                                      std::size_t window = kFullHistory) {
  return predict_matrix(params, counts_of(history, window));
}

/// One random trust draw per (observer, target) pair, rows renormalized.
inline Row sample_row(const TrustParams& observer, const Counts& counts, Rng& rng) {
  Row row{};
  double total = 0.0;
  for (std::size_t i = 0; i < kAgents; ++i) {
    const BetaPair b = beta_pair(observer, i, counts.successes[i], counts.failures[i]);
    row[i] = sample_beta(rng, b.alpha, b.beta);
    total += row[i];
  }
  if (total <= 0.0) return Row{0.25, 0.25, 0.25, 0.25};
  for (double& v : row) v /= total;
  return row;
}

inline InfluenceMatrix sample_matrix(const TeamTrustParams& params, const TeamHistory& history, Rng& rng,
                                     std::size_t window = kFullHistory) {
  const Counts counts = counts_of(history, window);
  InfluenceMatrix m;
  for (std::size_t j = 0; j < kHumans; ++j) m.rows[j] = sample_row(params[j], counts, rng);
  return m;
}

// ---------------------------------------------------------------------------
// Maximum-likelihood fitting
// ---------------------------------------------------------------------------

struct FitConfig {
  double w_max = 10.0;
  double grid_step = 0.1;    // audit grid over each (w_s, w_f) block
  double coarse_step = 0.5;  // block-coordinate search grid
  double epsilon = 1e-4;     // observed fractions are clamped to [eps, 1 - eps]
  std::size_t window = kFullHistory;
  int max_round = kRoundsPerGame;  // only rounds <= max_round enter the likelihood
  int max_passes = 10;
  int simplex_iterations = 2000;
};

/// Log-likelihood of observed normalized allocation rows for one observer.
///
/// An observed row f is the trust vector t rescaled by its unknown sum S, so
/// t_i = S f_i. The density of f is obtained by integrating the product of the
/// four Beta densities over S in (0, 1 / max f) with Jacobian S^3; the
/// integral is evaluated with Gauss-Legendre quadrature. Every term that does
/// not depend on the sensitivities is precomputed per row.
class ObserverLikelihood {
 public:
  static constexpr int kNodes = 64;

  explicit ObserverLikelihood(double epsilon = 1e-4) : epsilon_(epsilon) {}

  void add_row(const Counts& counts, const Row& observed) {
    Row f{};
    double fmax = 0.0;
    for (std::size_t i = 0; i < kAgents; ++i) {
      f[i] = std::clamp(observed[i], epsilon_, 1.0 - epsilon_);
      fmax = std::max(fmax, f[i]);
    }
    const double smax = 1.0 / fmax;

    RowTerms terms;
    const auto& abscissa = Gauss::abscissa();
    const auto& weights = Gauss::weights();
    int q = 0;
    auto add_node = [&](double x, double w) {
      const double s = 0.5 * smax * (x + 1.0);
      NodeTerms n{};
      for (std::size_t i = 0; i < kAgents; ++i) {
        const double lx = std::log(s * f[i]);
        const double l1x = std::log1p(-s * f[i]);
        if (i == kAiIndex) {
          n.ai_success = counts.successes[i] * lx;
          n.ai_failure = counts.failures[i] * l1x;
        } else {
          n.human_success += counts.successes[i] * lx;
          n.human_failure += counts.failures[i] * l1x;
        }
      }
      n.base = 3.0 * std::log(s) + std::log(0.5 * smax * w);
      terms.nodes[static_cast<std::size_t>(q++)] = n;
    };
    for (std::size_t k = 0; k < abscissa.size(); ++k) {
      add_node(abscissa[k], weights[k]);
      add_node(-abscissa[k], weights[k]);
    }
    rows_.push_back(terms);

    for (std::size_t i = 0; i < kAgents; ++i) {
      auto& table = i == kAiIndex ? ai_pairs_ : human_pairs_;
      table[{counts.successes[i], counts.failures[i]}] += 1;
    }
  }

  std::size_t rows() const { return rows_.size(); }

  double operator()(const TrustParams& w) const {
    double total = 0.0;
    for (const auto& [pair, mult] : human_pairs_) {
      total -= mult * log_beta_fn(1.0 + w.w_s_human * pair.first, 1.0 + w.w_f_human * pair.second);
    }
    for (const auto& [pair, mult] : ai_pairs_) {
      total -= mult * log_beta_fn(1.0 + w.w_s_ai * pair.first, 1.0 + w.w_f_ai * pair.second);
    }
    std::array<double, kNodes> e{};
    for (const auto& row : rows_) {
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t q = 0; q < kNodes; ++q) {
        const NodeTerms& n = row.nodes[q];
        e[q] = n.base + w.w_s_human * n.human_success + w.w_f_human * n.human_failure + w.w_s_ai * n.ai_success +
               w.w_f_ai * n.ai_failure;
        peak = std::max(peak, e[q]);
      }
      // Nodes more than 36 nats below the peak add less than 1e-15 relative.
      double acc = 0.0;
      for (std::size_t q = 0; q < kNodes; ++q) {
        const double d = e[q] - peak;
        if (d > -36.0) acc += std::exp(d);
      }
      total += peak + std::log(acc);
    }
    return total;
  }

 private:
  using Gauss = boost::math::quadrature::gauss<double, kNodes>;

  struct NodeTerms {
    double base = 0.0;
    double human_success = 0.0;
    double human_failure = 0.0;
    double ai_success = 0.0;
    double ai_failure = 0.0;
  };
  struct RowTerms {
    std::array<NodeTerms, kNodes> nodes;
  };

  static double log_beta_fn(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

  double epsilon_;
  std::vector<RowTerms> rows_;
  std::map<std::pair<int, int>, double> human_pairs_;
  std::map<std::pair<int, int>, double> ai_pairs_;
};

struct FitResult {
  TeamTrustParams params{};
  std::array<double, kHumans> log_likelihood{};
  int rounds_used = 0;
};

namespace detail {

using Block = std::pair<double TrustParams::*, double TrustParams::*>;
inline constexpr std::array<Block, 2> kBlocks{Block{&TrustParams::w_s_human, &TrustParams::w_f_human},
                                              Block{&TrustParams::w_s_ai, &TrustParams::w_f_ai}};

/// Scans a (w_s, w_f) block on a regular grid in lexicographic order and moves
/// to the first strictly better point. Returns true if it moved.
inline bool grid_block(const ObserverLikelihood& ll, TrustParams& cur, double& best, const Block& block,
                       double step, double w_max) {
  const int n = static_cast<int>(std::llround(w_max / step));
  TrustParams trial = cur;
  TrustParams arg = cur;
  double arg_val = best;
  for (int a = 0; a <= n; ++a) {
    trial.*block.first = a * step;
    for (int b = 0; b <= n; ++b) {
      trial.*block.second = b * step;
      const double v = ll(trial);
      if (v > arg_val) {
        arg_val = v;
        arg = trial;
      }
    }
  }
  if (arg_val > best) {
    cur = arg;
    best = arg_val;
    return true;
  }
  return false;
}

/// Joint Nelder-Mead polish over all four sensitivities, confined to the box
/// [0, w_max]^4. Returns true if it found a strictly better point.
inline bool simplex_polish(const ObserverLikelihood& ll, TrustParams& cur, double& best, double initial_step,
                           double w_max, int max_iterations) {
  struct Context {
    const ObserverLikelihood* ll;
    double w_max;
  } ctx{&ll, w_max};
  gsl_multimin_function fn;
  fn.n = 4;
  fn.params = &ctx;
  fn.f = [](const gsl_vector* x, void* raw) -> double {
    const auto* c = static_cast<const Context*>(raw);
    TrustParams t{gsl_vector_get(x, 0), gsl_vector_get(x, 1), gsl_vector_get(x, 2), gsl_vector_get(x, 3)};
    for (double w : {t.w_s_human, t.w_f_human, t.w_s_ai, t.w_f_ai}) {
      if (!(w >= 0.0 && w <= c->w_max)) return std::numeric_limits<double>::max();
    }
    return -(*c->ll)(t);
  };
  gsl_vector* x = gsl_vector_alloc(4);
  gsl_vector* step = gsl_vector_alloc(4);
  const std::array<double, 4> start{cur.w_s_human, cur.w_f_human, cur.w_s_ai, cur.w_f_ai};
  for (std::size_t k = 0; k < 4; ++k) {
    gsl_vector_set(x, k, start[k]);
    // Step into the box so the initial simplex stays feasible at the bounds.
    gsl_vector_set(step, k, start[k] + initial_step <= w_max ? initial_step : -initial_step);
  }
  gsl_multimin_fminimizer* m = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 4);
  gsl_multimin_fminimizer_set(m, &fn, x, step);
  for (int it = 0; it < max_iterations; ++it) {
    if (gsl_multimin_fminimizer_iterate(m) != GSL_SUCCESS) break;
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(m), 1e-7) == GSL_SUCCESS) break;
  }
  const gsl_vector* xm = gsl_multimin_fminimizer_x(m);
  const TrustParams found{gsl_vector_get(xm, 0), gsl_vector_get(xm, 1), gsl_vector_get(xm, 2), gsl_vector_get(xm, 3)};
  gsl_multimin_fminimizer_free(m);
  gsl_vector_free(step);
  gsl_vector_free(x);
  const double v = ll(found);
  if (v > best + 1e-9) {
    cur = found;
    best = v;
    return true;
  }
  return false;
}

}  // namespace detail

/// Maximizes an observer likelihood over [0, w_max]^4.
///
/// Block-coordinate search on the coarse grid, a joint simplex polish, then an
/// audit pass over the fine grid of each block; any
/// strictly better grid point restarts the cycle. On termination the result is
/// at least as likely as every fine-grid point of either block (the other
/// block held fixed). Ties resolve to the lexicographically smallest point.
inline std::pair<TrustParams, double> maximize(const ObserverLikelihood& ll, const FitConfig& cfg) {
  TrustParams cur{0.0, 0.0, 0.0, 0.0};
  double best = ll(cur);
  for (int pass = 0; pass < cfg.max_passes; ++pass) {
    bool moved = true;
    for (int inner = 0; inner < cfg.max_passes && moved; ++inner) {
      moved = false;
      for (const auto& block : detail::kBlocks) {
        moved |= detail::grid_block(ll, cur, best, block, cfg.coarse_step, cfg.w_max);
      }
    }
    detail::simplex_polish(ll, cur, best, cfg.coarse_step / 2.0, cfg.w_max, cfg.simplex_iterations);
    bool audit_moved = false;
    for (const auto& block : detail::kBlocks) {
      audit_moved |= detail::grid_block(ll, cur, best, block, cfg.grid_step, cfg.w_max);
    }
    if (!audit_moved) break;
  }
  return {cur, best};
}

/// Adds the rows of every round <= cfg.max_round of `log` for one observer.
inline int add_observer_rows(ObserverLikelihood& ll, const SessionLog& log, std::size_t observer,
                             const FitConfig& cfg) {
  TeamHistory history;
  int used = 0;
  for (const auto& round : log.rounds) {
    if (round.round_index > cfg.max_round) break;
    ll.add_row(counts_of(history, cfg.window), normalize_points(round.allocations[observer]));
    record_round(history, round.correctness);
    ++used;
  }
  return used;
}

/// Per-observer maximum-likelihood sensitivities, pooling observer j across
/// all supplied logs.
inline FitResult fit_mle(std::span<const SessionLog> logs, const FitConfig& cfg = {}) {
  FitResult result;
  for (std::size_t j = 0; j < kHumans; ++j) {
    ObserverLikelihood ll(cfg.epsilon);
    int used = 0;
    for (const auto& log : logs) used += add_observer_rows(ll, log, j, cfg);
    if (used < 2) throw InsufficientDataError("maximum-likelihood fit needs at least 2 observed rounds");
    auto [params, value] = maximize(ll, cfg);
    result.params[j] = params;
    result.log_likelihood[j] = value;
    result.rounds_used = used;
  }
  return result;
}

inline FitResult fit_mle(const SessionLog& log, const FitConfig& cfg = {}) {
  return fit_mle(std::span<const SessionLog>(&log, 1), cfg);
}

/// One parameter set shared by every observer of every log (population fit).
inline std::pair<TrustParams, double> fit_mle_pooled(std::span<const SessionLog> logs, const FitConfig& cfg = {}) {
  ObserverLikelihood ll(cfg.epsilon);
  int used = 0;
  for (const auto& log : logs) {
    for (std::size_t j = 0; j < kHumans; ++j) used += add_observer_rows(ll, log, j, cfg);
  }
  if (used < 2) throw InsufficientDataError("maximum-likelihood fit needs at least 2 observed rounds");
  return maximize(ll, cfg);
}

inline json to_json_params(const TeamTrustParams& params) {
  json out = json::array();
  for (std::size_t j = 0; j < kHumans; ++j) {
    out.push_back({{"observer", j + 1},
                   {"w_s_human", params[j].w_s_human},
                   {"w_f_human", params[j].w_f_human},
                   {"w_s_ai", params[j].w_s_ai},
                   {"w_f_ai", params[j].w_f_ai}});
  }
  return out;
}

inline TeamTrustParams params_from_json(const json& j) {
  if (!j.is_array() || j.size() != kHumans) throw ParseError("fitted parameters need 3 observers");
  TeamTrustParams out;
  try {
    for (const auto& item : j) {
      const auto observer = item.at("observer").get<std::size_t>();
      if (observer < 1 || observer > kHumans) throw ParseError("observer index out of range");
      auto& p = out[observer - 1];
      p.w_s_human = item.at("w_s_human").get<double>();
      p.w_f_human = item.at("w_f_human").get<double>();
      p.w_s_ai = item.at("w_s_ai").get<double>();
      p.w_f_ai = item.at("w_f_ai").get<double>();
      p.validate();
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("fitted parameters: ") + e.what());
  }
  return out;
}

}  // namespace tmsattack::cognitive
