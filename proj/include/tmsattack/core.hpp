#pragma once

// Domain types shared by every module: correctness vectors, influence
// matrices, point allocations, per-agent histories, and the round score.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tmsattack {

inline constexpr std::size_t kHumans = 3;
inline constexpr std::size_t kAgents = 4;
inline constexpr std::size_t kAiIndex = 3;
inline constexpr int kRoundsPerGame = 25;
inline constexpr int kBaselineRounds = 10;
inline constexpr int kPointsPerAllocation = 100;
inline constexpr int kOptionsPerQuestion = 4;
inline constexpr double kRowTolerance = 1e-9;

/// Sentinel for "use the whole history" wherever a memory window is accepted.
inline constexpr std::size_t kFullHistory = std::numeric_limits<std::size_t>::max();

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input is well-formed but violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class DegenerateRowError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class TerminalStateError : public Error {
 public:
  using Error::Error;
};

/// An operation was called outside the part of the game it is defined for.
class MisuseError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Difficulty
// ---------------------------------------------------------------------------

enum class Difficulty { easy = 0, medium = 1, hard = 2 };

inline constexpr std::array<Difficulty, 3> kDifficulties{Difficulty::easy, Difficulty::medium,
                                                         Difficulty::hard};

inline std::string_view to_string(Difficulty d) {
  switch (d) {
    case Difficulty::easy: return "easy";
    case Difficulty::medium: return "medium";
    case Difficulty::hard: return "hard";
  }
  return "hard";
}

inline Difficulty parse_difficulty(std::string_view s) {
  if (s == "easy") return Difficulty::easy;
  if (s == "medium") return Difficulty::medium;
  if (s == "hard") return Difficulty::hard;
  throw ValidationError("unknown difficulty '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Correctness vector p, ordered (h1, h2, h3, AI)
// ---------------------------------------------------------------------------

struct CorrectnessVector {
  std::array<bool, kAgents> entries{};

  static CorrectnessVector from_values(std::span<const int> values) {
    if (values.size() != kAgents) {
      throw DimensionError("correctness vector needs 4 entries, got " +
                           std::to_string(values.size()));
    }
    CorrectnessVector p;
    for (std::size_t i = 0; i < kAgents; ++i) {
      if (values[i] != 0 && values[i] != 1) throw ValidationError("correctness entries are 0 or 1");
      p.entries[i] = values[i] == 1;
    }
    return p;
  }

  /// Packs the human entries into bits 0..2 and the AI into bit 3.
  static CorrectnessVector from_bits(unsigned bits) {
    CorrectnessVector p;
    for (std::size_t i = 0; i < kAgents; ++i) p.entries[i] = ((bits >> i) & 1U) != 0;
    return p;
  }

  unsigned bits() const {
    unsigned b = 0;
    for (std::size_t i = 0; i < kAgents; ++i) b |= static_cast<unsigned>(entries[i]) << i;
    return b;
  }

  bool operator[](std::size_t i) const { return entries[i]; }
  bool& operator[](std::size_t i) { return entries[i]; }

  int humans_correct() const {
    return static_cast<int>(entries[0]) + static_cast<int>(entries[1]) + static_cast<int>(entries[2]);
  }
  bool all_humans_correct() const { return humans_correct() == static_cast<int>(kHumans); }
  bool all_humans_wrong() const { return humans_correct() == 0; }

  friend bool operator==(const CorrectnessVector&, const CorrectnessVector&) = default;
};

// ---------------------------------------------------------------------------
// Influence matrix A (3 x 4, rows sum to one)
// ---------------------------------------------------------------------------

using Row = std::array<double, kAgents>;

inline double row_sum(const Row& row) { return row[0] + row[1] + row[2] + row[3]; }

struct InfluenceMatrix {
  std::array<Row, kHumans> rows{};

  static InfluenceMatrix uniform() {
    InfluenceMatrix m;
    for (auto& row : m.rows) row.fill(0.25);
    return m;
  }

  static InfluenceMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.size() != kHumans) {
      throw DimensionError("influence matrix needs 3 rows, got " + std::to_string(rows.size()));
    }
    InfluenceMatrix m;
    for (std::size_t r = 0; r < kHumans; ++r) {
      if (rows[r].size() != kAgents) {
        throw DimensionError("influence matrix rows need 4 columns, got " +
                             std::to_string(rows[r].size()));
      }
      std::copy(rows[r].begin(), rows[r].end(), m.rows[r].begin());
    }
    return m;
  }

  double operator()(std::size_t r, std::size_t i) const { return rows[r][i]; }
  double& operator()(std::size_t r, std::size_t i) { return rows[r][i]; }

  bool is_valid(double tolerance = kRowTolerance) const {
    for (const auto& row : rows) {
      for (double v : row) {
        if (!(v >= 0.0) || !std::isfinite(v)) return false;
      }
      if (std::abs(row_sum(row) - 1.0) > tolerance) return false;
    }
    return true;
  }

  void validate(double tolerance = kRowTolerance) const {
    if (!is_valid(tolerance)) throw ValidationError("influence matrix rows must be non-negative and sum to 1");
  }

  friend bool operator==(const InfluenceMatrix&, const InfluenceMatrix&) = default;
};

/// Team score for one round: 1^T A p.
inline double round_score(const InfluenceMatrix& a, const CorrectnessVector& p) {
  double score = 0.0;
  for (const auto& row : a.rows) {
    for (std::size_t i = 0; i < kAgents; ++i) {
      if (p[i]) score += row[i];
    }
  }
  return score;
}

inline double round_score(const std::vector<std::vector<double>>& a, const std::vector<int>& p) {
  return round_score(InfluenceMatrix::from_rows(a), CorrectnessVector::from_values(p));
}

/// Per-agent column sums of A, so that round_score(A, p) == sum_i col[i] * p[i].
inline Row column_sums(const InfluenceMatrix& a) {
  Row col{};
  for (const auto& row : a.rows) {
    for (std::size_t i = 0; i < kAgents; ++i) col[i] += row[i];
  }
  return col;
}

enum class DegenerateRowPolicy { uniform_humans, throw_error };

/// Drops the AI column and renormalizes each row over the three humans.
/// A row that puts all of its weight on the AI becomes uniform over humans
/// unless the caller asks for an error instead.
inline InfluenceMatrix zero_ai_renormalize(const InfluenceMatrix& a,
                                           DegenerateRowPolicy policy = DegenerateRowPolicy::uniform_humans) {
  InfluenceMatrix out;
  for (std::size_t r = 0; r < kHumans; ++r) {
    const Row& in = a.rows[r];
    const double human = in[0] + in[1] + in[2];
    if (human > 0.0) {
      for (std::size_t i = 0; i < kHumans; ++i) out.rows[r][i] = in[i] / human;
    } else {
      if (policy == DegenerateRowPolicy::throw_error) {
        throw DegenerateRowError("row " + std::to_string(r + 1) + " has no weight on humans");
      }
      for (std::size_t i = 0; i < kHumans; ++i) out.rows[r][i] = 1.0 / 3.0;
    }
    out.rows[r][kAiIndex] = 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Point allocations (the 100-point convention used by humans and LLMs)
// ---------------------------------------------------------------------------

struct PointAllocation {
  std::array<int, kAgents> points{};

  int total() const { return points[0] + points[1] + points[2] + points[3]; }

  bool is_valid() const {
    return std::all_of(points.begin(), points.end(), [](int v) { return v >= 0; }) &&
           total() == kPointsPerAllocation;
  }

  void validate() const {
    for (int v : points) {
      if (v < 0) throw ValidationError("influence points must be non-negative");
    }
    if (total() != kPointsPerAllocation) {
      throw ValidationError("influence points must sum to 100, got " + std::to_string(total()));
    }
  }

  static PointAllocation uniform() { return PointAllocation{{25, 25, 25, 25}}; }

  friend bool operator==(const PointAllocation&, const PointAllocation&) = default;
};

inline Row normalize_points(const PointAllocation& alloc) {
  alloc.validate();
  Row row{};
  for (std::size_t i = 0; i < kAgents; ++i) {
    row[i] = static_cast<double>(alloc.points[i]) / static_cast<double>(kPointsPerAllocation);
  }
  return row;
}

inline InfluenceMatrix matrix_from_allocations(const std::array<PointAllocation, kHumans>& allocations) {
  InfluenceMatrix m;
  for (std::size_t r = 0; r < kHumans; ++r) m.rows[r] = normalize_points(allocations[r]);
  return m;
}

/// Scales non-negative weights to integers summing to `total` (Hamilton's
/// method). Remainder ties go to the lower index.
inline PointAllocation largest_remainder(std::span<const double> weights, int total = kPointsPerAllocation) {
  if (weights.size() != kAgents) throw DimensionError("largest_remainder needs 4 weights");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("weights must be finite and non-negative");
    sum += w;
  }
  if (sum <= 0.0) throw ValidationError("weights must not all be zero");

  PointAllocation out;
  std::array<double, kAgents> remainder{};
  int assigned = 0;
  for (std::size_t i = 0; i < kAgents; ++i) {
    const double quota = weights[i] / sum * total;
    const double floor_q = std::floor(quota);
    out.points[i] = static_cast<int>(floor_q);
    remainder[i] = quota - floor_q;
    assigned += out.points[i];
  }
  std::array<std::size_t, kAgents> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (int k = 0; k < total - assigned; ++k) out.points[order[static_cast<std::size_t>(k) % kAgents]] += 1;
  return out;
}

// ---------------------------------------------------------------------------
// Agent histories
// ---------------------------------------------------------------------------

/// Ordered correctness outcomes of one agent, oldest first.
struct AgentHistory {
  std::vector<bool> outcomes;

  int observed() const { return static_cast<int>(outcomes.size()); }

  /// Successes among the last `window` rounds (all rounds by default).
  int successes(std::size_t window = kFullHistory) const {
    const std::size_t n = std::min(window, outcomes.size());
    return static_cast<int>(std::count(outcomes.end() - static_cast<std::ptrdiff_t>(n), outcomes.end(), true));
  }

  int failures(std::size_t window = kFullHistory) const {
    const std::size_t n = std::min(window, outcomes.size());
    return static_cast<int>(n) - successes(window);
  }

  void record(bool correct) { outcomes.push_back(correct); }
};

using TeamHistory = std::array<AgentHistory, kAgents>;

inline void record_round(TeamHistory& history, const CorrectnessVector& p) {
  for (std::size_t i = 0; i < kAgents; ++i) history[i].record(p[i]);
}

/// Observed accuracy of one agent; Laplace smoothing adds one pseudo-success
/// and one pseudo-failure. An agent with no observations scores 0.5 either way.
inline double empirical_accuracy(const AgentHistory& history, bool smoothing,
                                 std::size_t window = kFullHistory) {
  const int s = history.successes(window);
  const int f = history.failures(window);
  if (smoothing) return (s + 1.0) / (s + f + 2.0);
  if (s + f == 0) return 0.5;
  return static_cast<double>(s) / (s + f);
}

/// Index of the most accurate human so far; ties go to the lower index.
inline std::size_t most_accurate_human(const TeamHistory& history) {
  std::size_t best = 0;
  for (std::size_t h = 1; h < kHumans; ++h) {
    if (empirical_accuracy(history[h], false) > empirical_accuracy(history[best], false)) best = h;
  }
  return best;
}

/// Humans ordered from most to least accurate; ties keep the lower index first.
inline std::array<std::size_t, kHumans> humans_by_accuracy(const TeamHistory& history) {
  std::array<std::size_t, kHumans> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return empirical_accuracy(history[a], false) > empirical_accuracy(history[b], false);
  });
  return order;
}

}  // namespace tmsattack
