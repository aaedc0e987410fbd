#include "dynaprune/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "dynaprune/error.hpp"
#include "dynaprune/rng.hpp"

namespace dynaprune {

namespace {

void require_probs(const EpochSource& log, const char* who) {
  if (log.header().payload_kind != PayloadKind::FullProbs) {
    throw FormatError(std::string(who) + ": requires a trajectory of full probabilities");
  }
}

// Calls fn(t, block) for epochs [0, count) in order, one block resident.
template <typename Fn>
void for_each_epoch(const EpochSource& log, std::uint32_t count, Fn&& fn) {
  std::vector<float> block(log.header().block_values());
  for (std::uint32_t t = 0; t < count; ++t) {
    log.read_block(t, block);
    fn(t, std::span<const float>(block));
  }
}

}  // namespace

std::uint32_t argmax_class(std::span<const float> probs) {
  std::uint32_t best = 0;
  for (std::uint32_t c = 1; c < probs.size(); ++c) {
    if (probs[c] > probs[best]) best = c;
  }
  return best;
}

ScoreTable entropy_score(const EpochSource& log, double epsilon) {
  require_probs(log, "entropy");
  const auto& h = log.header();
  const auto last = log.read_epoch(h.n_epochs - 1);
  ScoreTable t{ScoreMethod::Entropy, {h.n_epochs, 0, 0.0f}, std::vector<double>(h.n_samples)};
  for (std::uint64_t n = 0; n < h.n_samples; ++n) {
    double e = 0.0;
    for (float p : last.row(n)) {
      const double q = p;
      if (q > 0.0) e -= q * std::log(std::max(q, epsilon));
    }
    t.scores[n] = e;
  }
  return t;
}

ScoreTable forgetting_score(const EpochSource& log) {
  require_probs(log, "forgetting");
  const auto& h = log.header();
  const std::size_t c = h.n_classes;
  std::vector<std::uint32_t> events(h.n_samples, 0);
  std::vector<std::uint8_t> was_correct(h.n_samples, 0);
  std::vector<std::uint8_t> ever_correct(h.n_samples, 0);
  for_each_epoch(log, h.n_epochs, [&](std::uint32_t t, std::span<const float> block) {
    for (std::uint64_t n = 0; n < h.n_samples; ++n) {
      const bool correct = argmax_class(block.subspan(n * c, c)) == h.labels[n];
      if (t > 0 && was_correct[n] && !correct) ++events[n];
      was_correct[n] = correct;
      ever_correct[n] |= correct;
    }
  });
  ScoreTable t{ScoreMethod::Forgetting, {h.n_epochs, 0, 0.0f}, std::vector<double>(h.n_samples)};
  for (std::uint64_t n = 0; n < h.n_samples; ++n) {
    t.scores[n] = ever_correct[n] ? events[n] : static_cast<double>(h.n_epochs);
  }
  return t;
}

ScoreTable el2n_score(const EpochSource& log, std::uint32_t epochs) {
  require_probs(log, "el2n");
  const auto& h = log.header();
  if (epochs < 1 || epochs > h.n_epochs) {
    throw ParameterError("el2n: E=" + std::to_string(epochs) + " must lie in [1, " + std::to_string(h.n_epochs) +
                         "]");
  }
  const std::size_t c = h.n_classes;
  std::vector<double> sum(h.n_samples, 0.0);
  for_each_epoch(log, epochs, [&](std::uint32_t, std::span<const float> block) {
    for (std::uint64_t n = 0; n < h.n_samples; ++n) {
      double sq = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        const double err = static_cast<double>(block[n * c + k]) - (k == h.labels[n] ? 1.0 : 0.0);
        sq += err * err;
      }
      sum[n] += std::sqrt(sq);
    }
  });
  for (auto& s : sum) s /= static_cast<double>(epochs);
  return ScoreTable{ScoreMethod::EL2N, {epochs, epochs, 0.0f}, std::move(sum)};
}

ScoreTable aum_score(const EpochSource& log) {
  require_probs(log, "aum");
  const auto& h = log.header();
  const std::size_t c = h.n_classes;
  std::vector<double> sum(h.n_samples, 0.0);
  for_each_epoch(log, h.n_epochs, [&](std::uint32_t, std::span<const float> block) {
    for (std::uint64_t n = 0; n < h.n_samples; ++n) {
      const auto row = block.subspan(n * c, c);
      const std::uint32_t y = h.labels[n];
      float other = -1.0f;
      for (std::size_t k = 0; k < c; ++k) {
        if (k != y) other = std::max(other, row[k]);
      }
      sum[n] += static_cast<double>(row[y]) - static_cast<double>(other);
    }
  });
  for (auto& s : sum) s /= static_cast<double>(h.n_epochs);
  return ScoreTable{ScoreMethod::AUM, {h.n_epochs, 0, 0.0f}, std::move(sum)};
}

ScoreTable dyn_unc_score(const EpochSource& log, std::uint32_t window) {
  require_probs(log, "dyn-unc");
  const auto& h = log.header();
  if (window < 2 || window > h.n_epochs) {
    throw ParameterError("dyn-unc: J=" + std::to_string(window) + " must lie in [2, " +
                         std::to_string(h.n_epochs) + "]");
  }
  const std::size_t c = h.n_classes;
  std::vector<double> ring(h.n_samples * window);
  std::vector<double> sum(h.n_samples, 0.0);
  std::uint64_t windows = 0;
  for_each_epoch(log, h.n_epochs, [&](std::uint32_t t, std::span<const float> block) {
    for (std::uint64_t n = 0; n < h.n_samples; ++n) {
      ring[n * window + t % window] = block[n * c + h.labels[n]];
    }
    if (t + 1 < window) return;
    for (std::uint64_t n = 0; n < h.n_samples; ++n) {
      const auto w = std::span<const double>(ring).subspan(n * window, window);
      // oldest slot first
      double mean = 0.0;
      for (std::uint32_t j = 0; j < window; ++j) mean += w[(t + 1 + j) % window];
      mean /= window;
      double var = 0.0;
      for (std::uint32_t j = 0; j < window; ++j) {
        const double d = w[(t + 1 + j) % window] - mean;
        var += d * d;
      }
      sum[n] += std::sqrt(var / window);
    }
    ++windows;
  });
  for (auto& s : sum) s /= static_cast<double>(windows);
  return ScoreTable{ScoreMethod::DynUnc, {h.n_epochs, window, 0.0f}, std::move(sum)};
}

ScoreTable random_score(std::uint64_t n_samples, std::uint64_t seed) {
  std::vector<std::uint64_t> perm(n_samples);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed, 0x52414e44);  // "RAND"
  for (std::uint64_t i = n_samples; i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
  }
  ScoreTable t{ScoreMethod::Random, {}, std::vector<double>(n_samples)};
  for (std::uint64_t rank = 0; rank < n_samples; ++rank) t.scores[perm[rank]] = static_cast<double>(rank);
  return t;
}

ScoreTable baseline_scores(const EpochSource& log, const BaselineParams& p) {
  switch (p.method) {
    case ScoreMethod::Random: return random_score(log.header().n_samples, p.seed);
    case ScoreMethod::Entropy: return entropy_score(log, p.epsilon);
    case ScoreMethod::Forgetting: return forgetting_score(log);
    case ScoreMethod::EL2N: return el2n_score(log, p.el2n_epochs);
    case ScoreMethod::AUM: return aum_score(log);
    case ScoreMethod::DynUnc: return dyn_unc_score(log, p.dynunc_window);
    case ScoreMethod::TDDS: break;
  }
  throw ParameterError("baseline_scores: TDDS is not a baseline");
}

}  // namespace dynaprune
