#pragma once

// Brute-force checks of the two theoretical claims behind TDDS:
//
//   * pruning by temporal magnitude matching, J(S) = (1/T) sum_t sum_{n not in S}
//     (G[t][n] - Gbar[n])^2, is minimized by exactly the subsets that maximize
//     the kept temporal variance R(S) = sum_{m in S} sum_t (G[t][m] - Gbar[m])^2,
//     because T*J(S) + R(S) is the same for every S;
//   * the adjacent-epoch loss difference over eta approximates the projection
//     of a sample's gradient onto the accumulated update direction.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dynaprune/toytrain.hpp"

namespace dynaprune {

/// G[t][n] >= 0, stored row-major T x N.
struct MagnitudeMatrix {
  std::uint32_t n_epochs = 0;
  std::uint32_t n_samples = 0;
  std::vector<double> values;

  double at(std::uint32_t t, std::uint32_t n) const { return values[static_cast<std::size_t>(t) * n_samples + n]; }
  /// Throws ShapeError / DataError.
  void validate() const;
};

/// sum_t (G[t][n] - mean_t G[t][n])^2 for every column.
std::vector<double> column_variances(const MagnitudeMatrix& g);

/// `keep` lists distinct column indices. Empty keep -> ParameterError.
double mse_objective(const MagnitudeMatrix& g, std::span<const std::uint32_t> keep);
double variance_objective(const MagnitudeMatrix& g, std::span<const std::uint32_t> keep);

constexpr std::uint32_t kMaxEnumerationSamples = 16;

struct EquivalenceReport {
  std::uint32_t n_samples = 0;
  std::uint32_t keep = 0;
  std::uint64_t subsets = 0;
  double best_mse = 0.0;
  double best_variance = 0.0;
  std::vector<std::uint32_t> mse_minimizers;  // subsets as bitmasks
  std::vector<std::uint32_t> variance_maximizers;
  double max_conservation_error = 0.0;  // relative to the total
  bool same_optima = false;
  bool conserved = false;
  bool equal() const { return same_optima && conserved; }
};

/// Enumerates all C(N, M) subsets of size M. Objectives within
/// tolerance * max(1, total) of the optimum count as ties.
/// N > 16 -> CapacityError; M outside [1, N) -> ParameterError.
EquivalenceReport equivalence_check(const MagnitudeMatrix& g, std::uint32_t m, double tolerance = 1e-9);

std::vector<std::uint32_t> mask_members(std::uint32_t mask);

struct TaylorResult {
  double lhs = 0.0;  // |l(theta_next) - l(theta_t)| / eta
  double rhs = 0.0;  // |grad l(theta_t) . (theta_t - theta_next) / eta|
  double residual = 0.0;
};

using LossFn = std::function<double(std::span<const double>)>;
using GradFn = std::function<std::vector<double>(std::span<const double>)>;

/// Generic form over any differentiable loss of theta.
TaylorResult taylor_residual(const LossFn& loss, const GradFn& grad, std::span<const double> theta_t,
                             std::span<const double> theta_next, double eta);

/// Cross-entropy of one sample under `model`'s architecture at both parameter
/// vectors.
TaylorResult taylor_residual(const ToyModel& model, std::span<const double> theta_t,
                             std::span<const double> theta_next, std::span<const double> x, std::uint32_t label,
                             double eta);

}  // namespace dynaprune
