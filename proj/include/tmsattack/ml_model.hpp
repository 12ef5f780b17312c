#pragma once

// Data-driven influence model: a 9 -> 16 -> 16 -> 16 -> 12 ReLU perceptron
// mapping (round, current correctness, windowed past accuracy) to a 3x4
// influence matrix, trained with MSE and Adam on permutation-augmented data.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "tmsattack/cognitive_model.hpp"
#include "tmsattack/core.hpp"
#include "tmsattack/rng.hpp"
#include "tmsattack/session_log.hpp"

namespace tmsattack::ml {

inline constexpr std::size_t kFeatures = 9;
inline constexpr std::size_t kOutputs = kHumans * kAgents;
inline constexpr std::size_t kDefaultWindow = 5;
inline constexpr std::size_t kMaxWidth = 64;

using FeatureVector = std::array<double, kFeatures>;
using Output = std::array<double, kOutputs>;

// Feature layout.
inline constexpr std::size_t kRoundFeature = 0;
inline constexpr std::size_t kCurrentOffset = 1;
inline constexpr std::size_t kWindowOffset = 5;

/// Window mean over the last min(window, elapsed) outcomes; 0.5 without any.
inline double window_mean(const AgentHistory& h, std::size_t window) {
  const std::size_t n = std::min(window, h.outcomes.size());
  if (n == 0) return 0.5;
  return static_cast<double>(h.successes(window)) / static_cast<double>(n);
}

/// `history` holds rounds 1..round-1; `current` is this round's correctness.
inline FeatureVector encode_features(const TeamHistory& history, int round, const CorrectnessVector& current,
                                     std::size_t window = kDefaultWindow) {
  FeatureVector x{};
  x[kRoundFeature] = static_cast<double>(round) / kRoundsPerGame;
  for (std::size_t i = 0; i < kAgents; ++i) {
    x[kCurrentOffset + i] = current[i] ? 1.0 : 0.0;
    x[kWindowOffset + i] = window_mean(history[i], window);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// All weights and biases in one flat buffer. Layer l stores its weight matrix
/// (out x in, row-major) followed by its bias vector.
struct MlpParams {
  std::vector<std::size_t> layer_sizes{kFeatures, 16, 16, 16, kOutputs};
  std::vector<double> values;

  static MlpParams zeros(std::vector<std::size_t> sizes = {kFeatures, 16, 16, 16, kOutputs}) {
    MlpParams p;
    p.layer_sizes = std::move(sizes);
    p.validate_shapes(false);
    p.values.assign(p.expected_size(), 0.0);
    return p;
  }

  /// Uniform in +-sqrt(6 / (fan_in + fan_out)); biases zero.
  static MlpParams glorot(std::uint64_t seed, std::vector<std::size_t> sizes = {kFeatures, 16, 16, 16, kOutputs}) {
    MlpParams p = zeros(std::move(sizes));
    Rng rng(seed);
    for (std::size_t l = 0; l < p.layers(); ++l) {
      const double limit = std::sqrt(6.0 / static_cast<double>(p.layer_sizes[l] + p.layer_sizes[l + 1]));
      for (double& w : p.weights(l)) w = (2.0 * uniform01(rng) - 1.0) * limit;
    }
    return p;
  }

  std::size_t layers() const { return layer_sizes.size() - 1; }
  std::size_t in(std::size_t l) const { return layer_sizes[l]; }
  std::size_t out(std::size_t l) const { return layer_sizes[l + 1]; }

  std::size_t offset(std::size_t l) const {
    std::size_t off = 0;
    for (std::size_t k = 0; k < l; ++k) off += (layer_sizes[k] + 1) * layer_sizes[k + 1];
    return off;
  }

  std::size_t expected_size() const { return offset(layers()); }

  std::span<double> weights(std::size_t l) { return {values.data() + offset(l), in(l) * out(l)}; }
  std::span<const double> weights(std::size_t l) const { return {values.data() + offset(l), in(l) * out(l)}; }
  std::span<double> biases(std::size_t l) { return {values.data() + offset(l) + in(l) * out(l), out(l)}; }
  std::span<const double> biases(std::size_t l) const {
    return {values.data() + offset(l) + in(l) * out(l), out(l)};
  }

  void validate_shapes(bool check_values = true) const {
    if (layer_sizes.size() < 2) throw DimensionError("network needs at least one layer");
    if (layer_sizes.front() != kFeatures) throw DimensionError("network input must have 9 features");
    if (layer_sizes.back() != kOutputs) throw DimensionError("network output must have 12 entries");
    for (std::size_t s : layer_sizes) {
      if (s == 0 || s > kMaxWidth) throw DimensionError("layer width must be in 1..64");
    }
    if (check_values && values.size() != expected_size()) {
      throw DimensionError("parameter buffer has " + std::to_string(values.size()) + " values, shapes need " +
                           std::to_string(expected_size()));
    }
  }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }
};

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

inline Output forward(const MlpParams& params, std::span<const double> x) {
  params.validate_shapes();
  if (x.size() != params.layer_sizes.front()) {
    throw DimensionError("input has " + std::to_string(x.size()) + " features, network expects " +
                         std::to_string(params.layer_sizes.front()));
  }
  std::array<double, kMaxWidth> a{};
  std::array<double, kMaxWidth> z{};
  std::copy(x.begin(), x.end(), a.begin());
  const std::size_t last = params.layers() - 1;
  for (std::size_t l = 0; l <= last; ++l) {
    const auto w = params.weights(l);
    const auto b = params.biases(l);
    const std::size_t n_in = params.in(l);
    for (std::size_t o = 0; o < params.out(l); ++o) {
      double s = b[o];
      const double* row = w.data() + o * n_in;
      for (std::size_t i = 0; i < n_in; ++i) s += row[i] * a[i];
      z[o] = (l == last) ? s : std::max(0.0, s);
    }
    std::copy(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(params.out(l)), a.begin());
  }
  Output out{};
  std::copy(a.begin(), a.begin() + kOutputs, out.begin());
  return out;
}

/// Floors raw outputs at 1e-6 and renormalizes each row of the 3x4 reshape.
inline InfluenceMatrix predict_matrix(const Output& raw) {
  InfluenceMatrix m;
  for (std::size_t r = 0; r < kHumans; ++r) {
    double total = 0.0;
    for (std::size_t i = 0; i < kAgents; ++i) {
      m.rows[r][i] = std::max(raw[r * kAgents + i], 1e-6);
      total += m.rows[r][i];
    }
    for (double& v : m.rows[r]) v /= total;
  }
  return m;
}

inline InfluenceMatrix predict_matrix(const MlpParams& params, const FeatureVector& x) {
  return predict_matrix(forward(params, x));
}

// ---------------------------------------------------------------------------
// Loss and gradients
// ---------------------------------------------------------------------------

struct Sample {
  FeatureVector x{};
  Output y{};  // observed normalized allocation matrix, row-major
  int team = 0;
  int round = 0;
};

struct LossAndGradients {
  double mse = 0.0;
  MlpParams gradients;
};

/// MSE over all 12 outputs averaged over the batch, with reverse-mode
/// gradients of the raw (pre-normalization) output.
inline LossAndGradients loss_and_gradients(const MlpParams& params, std::span<const Sample> batch) {
  params.validate_shapes();
  if (batch.empty()) throw ValidationError("loss needs a non-empty batch");
  const std::size_t layers = params.layers();
  LossAndGradients result{0.0, MlpParams::zeros(params.layer_sizes)};
  const double scale = 1.0 / (static_cast<double>(batch.size()) * kOutputs);

  // activations[l] is the input of layer l; activations[layers] is the output.
  std::vector<std::array<double, kMaxWidth>> act(layers + 1);
  std::array<double, kMaxWidth> delta{};
  std::array<double, kMaxWidth> prev_delta{};

  for (const Sample& s : batch) {
    std::fill(act[0].begin(), act[0].end(), 0.0);
    std::copy(s.x.begin(), s.x.end(), act[0].begin());
    for (std::size_t l = 0; l < layers; ++l) {
      const auto w = params.weights(l);
      const auto b = params.biases(l);
      const std::size_t n_in = params.in(l);
      for (std::size_t o = 0; o < params.out(l); ++o) {
        double z = b[o];
        const double* row = w.data() + o * n_in;
        for (std::size_t i = 0; i < n_in; ++i) z += row[i] * act[l][i];
        act[l + 1][o] = (l + 1 == layers) ? z : std::max(0.0, z);
      }
    }
    for (std::size_t o = 0; o < kOutputs; ++o) {
      const double diff = act[layers][o] - s.y[o];
      result.mse += diff * diff * scale;
      delta[o] = 2.0 * diff * scale;
    }
    for (std::size_t l = layers; l-- > 0;) {
      auto gw = result.gradients.weights(l);
      auto gb = result.gradients.biases(l);
      const auto w = params.weights(l);
      const std::size_t n_in = params.in(l);
      const std::size_t n_out = params.out(l);
      for (std::size_t o = 0; o < n_out; ++o) {
        gb[o] += delta[o];
        double* grow = gw.data() + o * n_in;
        for (std::size_t i = 0; i < n_in; ++i) grow[i] += delta[o] * act[l][i];
      }
      if (l == 0) break;
      for (std::size_t i = 0; i < n_in; ++i) {
        double acc = 0.0;
        for (std::size_t o = 0; o < n_out; ++o) acc += w[o * n_in + i] * delta[o];
        // act[l] = relu(z); the ReLU derivative is 1 where the activation is positive.
        prev_delta[i] = act[l][i] > 0.0 ? acc : 0.0;
      }
      std::copy(prev_delta.begin(), prev_delta.begin() + static_cast<std::ptrdiff_t>(n_in), delta.begin());
    }
  }
  return result;
}

inline double mean_squared_error(const MlpParams& params, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    const Output out = forward(params, s.x);
    for (std::size_t o = 0; o < kOutputs; ++o) total += (out[o] - s.y[o]) * (out[o] - s.y[o]);
  }
  return total / (static_cast<double>(samples.size()) * kOutputs);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 0.01;
  std::size_t batch_size = 128;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs <= 0 || learning_rate <= 0.0 || batch_size == 0 || beta1 <= 0.0 || beta1 >= 1.0 ||
        beta2 <= 0.0 || beta2 >= 1.0 || epsilon <= 0.0) {
      throw ValidationError("training configuration values must be positive (betas in (0,1))");
    }
  }
};

inline void to_json(json& j, const TrainConfig& c) {
  j = json{{"epochs", c.epochs},     {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
           {"beta1", c.beta1},       {"beta2", c.beta2},                 {"epsilon", c.epsilon},
           {"seed", c.seed}};
}

inline void from_json(const json& j, TrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.seed = j.value("seed", c.seed);
}

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update; `t` is the 1-based step index.
inline void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
                      const TrainConfig& cfg, int t) {
  if (t < 1) throw MisuseError("Adam step index starts at 1");
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("Adam buffers disagree in size");
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * grads[k];
    state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * grads[k] * grads[k];
    const double m_hat = state.m[k] / c1;
    const double v_hat = state.v[k] / c2;
    params[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

// ---------------------------------------------------------------------------
// Datasets and augmentation
// ---------------------------------------------------------------------------

/// perm[new_index] = old_index over the three humans; the AI stays at 3.
using HumanPermutation = std::array<std::size_t, kHumans>;

inline constexpr std::array<HumanPermutation, 6> kHumanPermutations{{
    {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};

inline std::size_t permuted_agent(const HumanPermutation& perm, std::size_t i) {
  return i == kAiIndex ? kAiIndex : perm[i];
}

inline Sample permute_sample(const Sample& s, const HumanPermutation& perm) {
  Sample out = s;
  for (std::size_t i = 0; i < kAgents; ++i) {
    const std::size_t src = permuted_agent(perm, i);
    out.x[kCurrentOffset + i] = s.x[kCurrentOffset + src];
    out.x[kWindowOffset + i] = s.x[kWindowOffset + src];
  }
  for (std::size_t r = 0; r < kHumans; ++r) {
    for (std::size_t c = 0; c < kAgents; ++c) {
      out.y[r * kAgents + c] = s.y[perm[r] * kAgents + permuted_agent(perm, c)];
    }
  }
  return out;
}

/// Six relabelings of the humans per sample, identity first.
inline std::vector<Sample> augment_permutations(std::span<const Sample> samples) {
  std::vector<Sample> out;
  out.reserve(samples.size() * kHumanPermutations.size());
  for (const auto& s : samples) {
    for (const auto& perm : kHumanPermutations) out.push_back(permute_sample(s, perm));
  }
  return out;
}

/// Relabels the humans of a whole log (answers, confidences, allocation rows
/// and columns, correctness, chat speakers).
inline SessionLog permute_log(const SessionLog& log, const HumanPermutation& perm) {
  SessionLog out = log;
  std::array<std::size_t, kHumans> inverse{};
  for (std::size_t i = 0; i < kHumans; ++i) inverse[perm[i]] = i;
  for (std::size_t i = 0; i < kHumans; ++i) out.player_aliases[i] = log.player_aliases[perm[i]];
  for (std::size_t k = 0; k < log.rounds.size(); ++k) {
    const auto& src = log.rounds[k];
    auto& dst = out.rounds[k];
    for (std::size_t i = 0; i < kAgents; ++i) {
      const std::size_t from = permuted_agent(perm, i);
      dst.individual_answers[i] = src.individual_answers[from];
      dst.correctness[i] = src.correctness[from];
    }
    for (std::size_t r = 0; r < kHumans; ++r) {
      dst.confidences_pre[r] = src.confidences_pre[perm[r]];
      dst.confidences_post[r] = src.confidences_post[perm[r]];
      for (std::size_t c = 0; c < kAgents; ++c) {
        dst.allocations[r].points[c] = src.allocations[perm[r]].points[permuted_agent(perm, c)];
      }
    }
    for (auto& m : dst.chat) m.speaker = static_cast<int>(inverse[static_cast<std::size_t>(m.speaker - 1)]) + 1;
  }
  return out;
}

inline Output target_of(const RoundRecord& r) {
  Output y{};
  for (std::size_t h = 0; h < kHumans; ++h) {
    for (std::size_t i = 0; i < kAgents; ++i) {
      y[h * kAgents + i] = static_cast<double>(r.allocations[h].points[i]) / kPointsPerAllocation;
    }
  }
  return y;
}

/// One sample per recorded round: features from the preceding rounds and the
/// current correctness, target the observed normalized allocations.
inline std::vector<Sample> samples_from_log(const SessionLog& log, std::size_t window = kDefaultWindow,
                                            int team = 0) {
  std::vector<Sample> out;
  TeamHistory history;
  for (const auto& r : log.rounds) {
    Sample s;
    s.x = encode_features(history, r.round_index, r.correctness, window);
    s.y = target_of(r);
    s.team = team;
    s.round = r.round_index;
    out.push_back(s);
    record_round(history, r.correctness);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainResult {
  MlpParams params;
  std::vector<double> loss_trace;  // full-data MSE after each epoch
};

inline TrainResult train_samples(std::vector<Sample> data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw InsufficientDataError("training needs at least one sample");
  TrainResult result{MlpParams::glorot(derive_seed(cfg.seed, 0, 1)), {}};
  AdamState state(result.params.values.size());
  Rng shuffle_rng(derive_seed(cfg.seed, 0, 2));
  std::vector<std::size_t> order(data.size());
  std::vector<Sample> batch;
  batch.reserve(cfg.batch_size);
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t k = order.size(); k > 1; --k) {
      std::uniform_int_distribution<std::size_t> pick(0, k - 1);
      std::swap(order[k - 1], order[pick(shuffle_rng)]);
    }
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch_size); ++k) {
        batch.push_back(data[order[k]]);
      }
      const auto lg = loss_and_gradients(result.params, batch);
      adam_step(result.params.values, lg.gradients.values, state, cfg, ++step);
    }
    result.loss_trace.push_back(mean_squared_error(result.params, data));
  }
  return result;
}

inline TrainResult train(std::span<const SessionLog> logs, const TrainConfig& cfg,
                         std::size_t window = kDefaultWindow) {
  if (logs.empty()) throw InsufficientDataError("training needs at least one session log");
  std::vector<Sample> raw;
  for (std::size_t t = 0; t < logs.size(); ++t) {
    auto s = samples_from_log(logs[t], window, static_cast<int>(t));
    raw.insert(raw.end(), s.begin(), s.end());
  }
  return train_samples(augment_permutations(raw), cfg);
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Squared error of predicted against observed matrices, averaged over rounds
/// and the 12 entries.
template <typename Predictor>
double heldout_mse(const SessionLog& log, Predictor&& predict) {
  if (log.rounds.empty()) return 0.0;
  TeamHistory history;
  double total = 0.0;
  for (const auto& r : log.rounds) {
    const InfluenceMatrix pred = predict(history, r);
    const InfluenceMatrix obs = r.influence();
    for (std::size_t h = 0; h < kHumans; ++h) {
      for (std::size_t i = 0; i < kAgents; ++i) total += (pred(h, i) - obs(h, i)) * (pred(h, i) - obs(h, i));
    }
    record_round(history, r.correctness);
  }
  return total / (static_cast<double>(log.rounds.size()) * kOutputs);
}

inline double mlp_heldout_mse(const MlpParams& params, const SessionLog& log, std::size_t window) {
  return heldout_mse(log, [&](const TeamHistory& h, const RoundRecord& r) {
    return predict_matrix(params, encode_features(h, r.round_index, r.correctness, window));
  });
}

inline double equal_weights_mse(const SessionLog& log) {
  return heldout_mse(log, [](const TeamHistory&, const RoundRecord&) { return InfluenceMatrix::uniform(); });
}

inline double cognitive_mse(const cognitive::TeamTrustParams& params, const SessionLog& log,
                            std::size_t window = kFullHistory) {
  return heldout_mse(log, [&](const TeamHistory& h, const RoundRecord&) {
    return cognitive::predict_matrix(params, h, window);
  });
}

struct FoldResult {
  std::string team_id;
  double mse_mlp = 0.0;
  double mse_equal_weights = 0.0;
  double mse_cognitive = 0.0;
  cognitive::TrustParams cognitive_params;
};

struct CrossValidationConfig {
  TrainConfig train;
  std::size_t window = kDefaultWindow;
  bool with_cognitive = true;
  cognitive::FitConfig cognitive_fit{10.0, 1.0, 1.0};
};

/// Leave-one-team-out: each log is held out once; the MLP and (optionally) a
/// pooled cognitive fit are trained on the remaining logs.
inline std::vector<FoldResult> leave_one_team_out(std::span<const SessionLog> logs,
                                                  const CrossValidationConfig& cfg) {
  if (logs.size() < 2) throw InsufficientDataError("cross-validation needs at least two teams");
  std::vector<FoldResult> folds;
  for (std::size_t k = 0; k < logs.size(); ++k) {
    std::vector<SessionLog> train_logs;
    for (std::size_t t = 0; t < logs.size(); ++t) {
      if (t != k) train_logs.push_back(logs[t]);
    }
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.train.seed, k, 7);
    const auto trained = train(train_logs, tc, cfg.window);
    FoldResult f;
    f.team_id = logs[k].team_id;
    f.mse_mlp = mlp_heldout_mse(trained.params, logs[k], cfg.window);
    f.mse_equal_weights = equal_weights_mse(logs[k]);
    if (cfg.with_cognitive) {
      f.cognitive_params = cognitive::fit_mle_pooled(train_logs, cfg.cognitive_fit).first;
      f.mse_cognitive = cognitive_mse(cognitive::uniform_params(f.cognitive_params), logs[k]);
    }
    folds.push_back(f);
  }
  return folds;
}

struct WindowSweepRow {
  std::size_t window = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  std::vector<double> team_mse;
};

/// Linear-interpolation quantile of an unsorted sample.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Retrains per window with team-grouped k-fold splits and summarizes the
/// per-team held-out MSE by median and interquartile range.
inline std::vector<WindowSweepRow> window_sweep(std::span<const SessionLog> logs,
                                                std::span<const std::size_t> windows, const TrainConfig& cfg,
                                                std::size_t folds = 5) {
  if (logs.size() < 2) throw InsufficientDataError("window sweep needs at least two teams");
  folds = std::clamp<std::size_t>(folds, 2, logs.size());
  std::vector<WindowSweepRow> rows;
  for (std::size_t window : windows) {
    WindowSweepRow row;
    row.window = window;
    for (std::size_t fold = 0; fold < folds; ++fold) {
      std::vector<SessionLog> train_logs;
      std::vector<const SessionLog*> test_logs;
      for (std::size_t t = 0; t < logs.size(); ++t) {
        if (t % folds == fold) {
          test_logs.push_back(&logs[t]);
        } else {
          train_logs.push_back(logs[t]);
        }
      }
      TrainConfig tc = cfg;
      tc.seed = derive_seed(cfg.seed, fold, 11);
      const auto trained = train(train_logs, tc, window);
      for (const auto* log : test_logs) row.team_mse.push_back(mlp_heldout_mse(trained.params, *log, window));
    }
    row.median = quantile(row.team_mse, 0.5);
    row.q1 = quantile(row.team_mse, 0.25);
    row.q3 = quantile(row.team_mse, 0.75);
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr std::string_view kCheckpointFormat = "tmsattack.mlp.v1";

struct Checkpoint {
  MlpParams params;
  std::size_t window = kDefaultWindow;
  TrainConfig config;
  std::string data_fingerprint;
};

inline std::string fingerprint_logs(std::span<const SessionLog> logs) {
  std::string ids;
  for (const auto& log : logs) ids += log.session_id + ":" + std::to_string(log.seed) + ";";
  return QuestionBank::fingerprint(ids);
}

inline json checkpoint_to_json(const Checkpoint& c) {
  return json{{"format", std::string(kCheckpointFormat)},
              {"layer_sizes", c.params.layer_sizes},
              {"weights", c.params.values},
              {"window", c.window},
              {"config", c.config},
              {"data_fingerprint", c.data_fingerprint}};
}

inline Checkpoint checkpoint_from_json(const json& j) {
  Checkpoint c;
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) throw ParseError("unknown checkpoint format");
    c.params.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    c.params.values = j.at("weights").get<std::vector<double>>();
    c.window = j.at("window").get<std::size_t>();
    c.config = j.at("config").get<TrainConfig>();
    c.data_fingerprint = j.value("data_fingerprint", std::string());
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  c.params.validate_shapes();
  if (!c.params.all_finite()) throw ValidationError("checkpoint contains non-finite weights");
  return c;
}

}  // namespace tmsattack::ml
