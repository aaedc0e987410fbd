#pragma once

// Temporal dual-depth scoring.
//
// Inner level: the contribution of sample n between adjacent epochs t and t+1
// is estimated by a loss difference computed from logged probabilities,
//
//   KL:  delta = sum_c f_{t+1}[c] * ln(f_{t+1}[c] / f_t[c])
//   CE:  delta = ln(f_{t+1}[y] / f_t[y])
//
// with both probabilities clamped below at epsilon before the logarithm.
//
// Outer level: the magnitudes |delta| are grouped into windows of K
// consecutive values (stride 1). Each window contributes the sum of squared
// deviations from its own mean, and windows are folded with an exponential
// moving average R <- beta * R_window + (1 - beta) * R, seeded with the first
// window. beta == 0 selects a plain average over all windows instead.
//
// A trajectory of T epochs has T-1 deltas and therefore W = T - K windows.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <vector>

#include "dynaprune/error.hpp"
#include "dynaprune/trajlog.hpp"

namespace dynaprune {

enum class DeltaKind : std::uint8_t { KL = 0, CE = 1 };

inline constexpr double kDefaultEpsilon = 1e-12;

struct TddsParams {
  std::uint32_t epochs = 0;  // T; 0 means "every epoch in the log"
  std::uint32_t window = 10;  // K
  double beta = 0.9;
  DeltaKind delta = DeltaKind::KL;
  double epsilon = kDefaultEpsilon;
  // false keeps the sign of each delta (only meaningful for CE), giving the
  // gradient-direction variant instead of the magnitude one.
  bool magnitude = true;

  /// Returns a copy with `epochs` filled in from the log and every field
  /// checked against it. Throws ParameterError.
  TddsParams resolved(const TrajectoryHeader& header) const;
  std::uint32_t window_count() const { return epochs - window; }
};

template <std::floating_point P>
double kl_delta(std::span<const P> next, std::span<const P> prev, double epsilon = kDefaultEpsilon) {
  if (next.size() != prev.size()) throw ShapeError("kl_delta: probability vectors differ in length");
  double sum = 0.0;
  for (std::size_t c = 0; c < next.size(); ++c) {
    const double q = static_cast<double>(next[c]);
    if (q == 0.0) continue;
    const double a = std::max(q, epsilon);
    const double b = std::max(static_cast<double>(prev[c]), epsilon);
    sum += q * std::log(a / b);
  }
  return sum;
}

template <std::floating_point P>
double ce_delta(std::span<const P> next, std::span<const P> prev, std::uint32_t target,
                double epsilon = kDefaultEpsilon) {
  if (next.size() != prev.size()) throw ShapeError("ce_delta: probability vectors differ in length");
  if (target >= next.size()) throw RangeError("ce_delta: target class out of range");
  return std::log(std::max(static_cast<double>(next[target]), epsilon)) -
         std::log(std::max(static_cast<double>(prev[target]), epsilon));
}

/// Per-sample deltas, sample-major: values[n * n_deltas + t]. Stored as f32,
/// the precision of the DeltaMagnitudes payload, so scoring from a reduced log
/// and from full probabilities agree bit for bit.
struct DeltaSeries {
  std::uint64_t n_samples = 0;
  std::uint32_t n_deltas = 0;
  std::vector<float> values;

  std::span<const float> row(std::uint64_t n) const {
    return std::span<const float>(values).subspan(n * n_deltas, n_deltas);
  }
};

/// Deltas between two adjacent probability blocks for every sample.
void compute_delta_block(const TrajectoryHeader& header, const TddsParams& params, std::span<const float> prev,
                         std::span<const float> next, std::span<float> out);

/// Streams the first T epochs, holding two epoch blocks at a time. For a
/// DeltaMagnitudes log the stored blocks are returned unchanged.
DeltaSeries compute_deltas(const EpochSource& log, const TddsParams& params);

/// Packs deltas into a DeltaMagnitudes trajectory carrying the source labels.
TrajectoryLog to_delta_log(const DeltaSeries& deltas, const TrajectoryHeader& source);

/// Sum of squared deviations from the window mean (no 1/K factor).
double window_variance(std::span<const double> window);
/// As above, but insists the window holds exactly `k` values.
double window_variance(std::span<const double> deltas, std::size_t k);

/// beta * r_window + (1 - beta) * r_prev, for 0 < beta <= 1.
double ema_update(double r_prev, double r_window, double beta);

/// Full scorer over a trajectory. Memory: two epoch blocks plus K deltas per
/// sample. Deterministic; identical inputs produce bit-identical scores.
ScoreTable tdds_scores(const EpochSource& log, const TddsParams& params);
/// Same fold, starting from materialized deltas (params.epochs counts epochs,
/// so at most n_deltas + 1).
ScoreTable tdds_scores(const DeltaSeries& deltas, const TddsParams& params);

/// M = max(1, round((1 - p) * N)), rounding halves away from zero.
std::uint64_t coreset_size(std::uint64_t n, double pruning_rate);

/// Keeps the M highest scores (ties to the lower index). Output indices are
/// ascending and weights are the retained scores.
Coreset select_top_m(std::span<const double> scores, double pruning_rate);
inline Coreset select_top_m(const ScoreTable& table, double pruning_rate) {
  return select_top_m(table.scores, pruning_rate);
}

}  // namespace dynaprune
