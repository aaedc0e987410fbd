#pragma once

// Trajectory-based comparison scores. Every scorer returns one score per
// sample where larger means "keep".

#include <cstdint>

#include "dynaprune/tdds.hpp"
#include "dynaprune/trajlog.hpp"

namespace dynaprune {

struct BaselineParams {
  ScoreMethod method = ScoreMethod::Random;
  std::uint32_t el2n_epochs = 10;    // E: EL2N averages over the first E epochs
  std::uint32_t dynunc_window = 10;  // J: Dyn-Unc sliding window length
  std::uint64_t seed = 0;            // Random only
  double epsilon = kDefaultEpsilon;
};

/// Entropy of the final-epoch prediction (natural log).
ScoreTable entropy_score(const EpochSource& log, double epsilon = kDefaultEpsilon);

/// Number of correct -> incorrect transitions between consecutive epochs.
/// Samples that are never classified correctly score T.
ScoreTable forgetting_score(const EpochSource& log);

/// Mean L2 norm of (prediction - one-hot label) over the first E epochs.
ScoreTable el2n_score(const EpochSource& log, std::uint32_t epochs);

/// Mean probability margin: p[label] - max over other classes, over all epochs.
ScoreTable aum_score(const EpochSource& log);

/// Mean over sliding windows of length J of the population standard deviation
/// of the target-class probability.
ScoreTable dyn_unc_score(const EpochSource& log, std::uint32_t window);

/// Ranks 0..N-1 of a uniformly random permutation (Fisher-Yates over Rng).
ScoreTable random_score(std::uint64_t n_samples, std::uint64_t seed);

/// Dispatches on params.method. TDDS is rejected; use tdds_scores.
ScoreTable baseline_scores(const EpochSource& log, const BaselineParams& params);

/// Class with the largest probability; ties go to the lower index.
std::uint32_t argmax_class(std::span<const float> probs);

}  // namespace dynaprune
