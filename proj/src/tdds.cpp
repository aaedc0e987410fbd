#include "dynaprune/tdds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace dynaprune {

TddsParams TddsParams::resolved(const TrajectoryHeader& header) const {
  TddsParams p = *this;
  if (p.epochs == 0) p.epochs = header.n_epochs;
  if (p.epochs < 2) throw ParameterError("tdds: T must be >= 2");
  if (p.epochs > header.n_epochs) {
    throw ParameterError("tdds: T=" + std::to_string(p.epochs) + " exceeds the " + std::to_string(header.n_epochs) +
                         " epochs in the log");
  }
  if (p.window < 1 || p.window > p.epochs - 1) {
    throw ParameterError("tdds: K=" + std::to_string(p.window) + " must lie in [1, T-1] = [1, " +
                         std::to_string(p.epochs - 1) + "]");
  }
  if (!(p.beta >= 0.0 && p.beta <= 1.0)) throw ParameterError("tdds: beta must lie in [0, 1]");
  if (!(p.epsilon > 0.0 && p.epsilon <= 1e-6)) throw ParameterError("tdds: epsilon must lie in (0, 1e-6]");
  if (p.delta != DeltaKind::KL && p.delta != DeltaKind::CE) throw ParameterError("tdds: unknown delta kind");
  return p;
}

void compute_delta_block(const TrajectoryHeader& header, const TddsParams& params, std::span<const float> prev,
                         std::span<const float> next, std::span<float> out) {
  const std::uint64_t n_samples = header.n_samples;
  const std::size_t c = header.n_classes;
  if (prev.size() != n_samples * c || next.size() != n_samples * c || out.size() != n_samples) {
    throw ShapeError("compute_delta_block: buffer sizes do not match the header");
  }
  for (std::uint64_t n = 0; n < n_samples; ++n) {
    const auto a = next.subspan(n * c, c);
    const auto b = prev.subspan(n * c, c);
    double d = params.delta == DeltaKind::KL ? kl_delta(a, b, params.epsilon)
                                             : ce_delta(a, b, header.labels[n], params.epsilon);
    if (params.magnitude) d = std::abs(d);
    out[n] = static_cast<float>(d);
  }
}

namespace {

// Feeds delta blocks one at a time and keeps, per sample, a ring of the last
// K deltas plus the running aggregate.
class WindowFold {
 public:
  WindowFold(std::uint64_t n_samples, const TddsParams& params)
      : n_(n_samples),
        k_(params.window),
        beta_(params.beta),
        ring_(n_samples * params.window),
        window_(params.window),
        score_(n_samples, 0.0) {}

  void push(std::span<const float> deltas) {
    const std::uint64_t slot = fed_ % k_;
    for (std::uint64_t n = 0; n < n_; ++n) ring_[n * k_ + slot] = deltas[n];
    ++fed_;
    if (fed_ < k_) return;
    const std::uint64_t oldest = fed_ - k_;
    for (std::uint64_t n = 0; n < n_; ++n) {
      for (std::uint32_t j = 0; j < k_; ++j) window_[j] = ring_[n * k_ + (oldest + j) % k_];
      const double v = window_variance(window_);
      if (windows_ == 0 || beta_ == 0.0) {
        score_[n] = windows_ == 0 ? v : score_[n] + v;
      } else {
        score_[n] = ema_update(score_[n], v, beta_);
      }
    }
    ++windows_;
  }

  std::vector<double> finish() {
    if (windows_ == 0) throw ParameterError("tdds: no complete window");
    if (beta_ == 0.0) {
      for (auto& s : score_) s /= static_cast<double>(windows_);
    }
    return std::move(score_);
  }

 private:
  std::uint64_t n_;
  std::uint32_t k_;
  double beta_;
  std::vector<float> ring_;
  std::vector<double> window_;
  std::vector<double> score_;
  std::uint64_t fed_ = 0;
  std::uint64_t windows_ = 0;
};

ScoreParams record_params(const TddsParams& p) {
  return ScoreParams{p.epochs, p.window, static_cast<float>(p.beta)};
}

}  // namespace

DeltaSeries compute_deltas(const EpochSource& log, const TddsParams& raw) {
  const auto& h = log.header();
  const TddsParams params = raw.resolved(h);
  const std::uint32_t n_deltas = params.epochs - 1;

  DeltaSeries out;
  out.n_samples = h.n_samples;
  out.n_deltas = n_deltas;
  out.values.resize(h.n_samples * n_deltas);

  std::vector<float> block(h.n_samples);
  auto scatter = [&](std::uint32_t t) {
    for (std::uint64_t n = 0; n < h.n_samples; ++n) out.values[n * n_deltas + t] = block[n];
  };

  if (h.payload_kind == PayloadKind::DeltaMagnitudes) {
    for (std::uint32_t t = 0; t < n_deltas; ++t) {
      log.read_block(t, block);
      scatter(t);
    }
    return out;
  }
  std::vector<float> prev(h.block_values());
  std::vector<float> next(h.block_values());
  log.read_block(0, prev);
  for (std::uint32_t t = 0; t < n_deltas; ++t) {
    log.read_block(t + 1, next);
    compute_delta_block(h, params, prev, next, block);
    scatter(t);
    std::swap(prev, next);
  }
  return out;
}

TrajectoryLog to_delta_log(const DeltaSeries& deltas, const TrajectoryHeader& source) {
  if (deltas.n_samples != source.n_samples) throw ShapeError("to_delta_log: sample count differs from source");
  TrajectoryHeader h = source;
  h.payload_kind = PayloadKind::DeltaMagnitudes;
  h.n_epochs = deltas.n_deltas + 1;
  TrajectoryLog log(h);
  std::vector<float> block(deltas.n_samples);
  for (std::uint32_t t = 0; t < deltas.n_deltas; ++t) {
    for (std::uint64_t n = 0; n < deltas.n_samples; ++n) block[n] = deltas.values[n * deltas.n_deltas + t];
    log.append_block(block);
  }
  return log;
}

double window_variance(std::span<const double> window) {
  if (window.empty()) throw ShapeError("window_variance: empty window");
  const double mean = std::accumulate(window.begin(), window.end(), 0.0) / static_cast<double>(window.size());
  double sum = 0.0;
  for (double v : window) sum += (v - mean) * (v - mean);
  return sum;
}

double window_variance(std::span<const double> deltas, std::size_t k) {
  if (k == 0 || deltas.size() != k) {
    throw ShapeError("window_variance: expected " + std::to_string(k) + " values, got " +
                     std::to_string(deltas.size()));
  }
  return window_variance(deltas);
}

double ema_update(double r_prev, double r_window, double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw ParameterError("ema_update: beta must lie in (0, 1]");
  return beta * r_window + (1.0 - beta) * r_prev;
}

ScoreTable tdds_scores(const EpochSource& log, const TddsParams& raw) {
  const auto& h = log.header();
  const TddsParams params = raw.resolved(h);
  const std::uint32_t n_deltas = params.epochs - 1;

  WindowFold fold(h.n_samples, params);
  std::vector<float> deltas(h.n_samples);
  if (h.payload_kind == PayloadKind::DeltaMagnitudes) {
    for (std::uint32_t t = 0; t < n_deltas; ++t) {
      log.read_block(t, deltas);
      fold.push(deltas);
    }
  } else {
    std::vector<float> prev(h.block_values());
    std::vector<float> next(h.block_values());
    log.read_block(0, prev);
    for (std::uint32_t t = 0; t < n_deltas; ++t) {
      log.read_block(t + 1, next);
      compute_delta_block(h, params, prev, next, deltas);
      fold.push(deltas);
      std::swap(prev, next);
    }
  }
  return ScoreTable{ScoreMethod::TDDS, record_params(params), fold.finish()};
}

ScoreTable tdds_scores(const DeltaSeries& series, const TddsParams& raw) {
  TrajectoryHeader h;
  h.n_samples = series.n_samples;
  h.n_classes = 2;
  h.n_epochs = series.n_deltas + 1;
  h.payload_kind = PayloadKind::DeltaMagnitudes;
  const TddsParams params = raw.resolved(h);
  const std::uint32_t n_deltas = params.epochs - 1;

  WindowFold fold(series.n_samples, params);
  std::vector<float> block(series.n_samples);
  for (std::uint32_t t = 0; t < n_deltas; ++t) {
    for (std::uint64_t n = 0; n < series.n_samples; ++n) block[n] = series.values[n * series.n_deltas + t];
    fold.push(block);
  }
  return ScoreTable{ScoreMethod::TDDS, record_params(params), fold.finish()};
}

std::uint64_t coreset_size(std::uint64_t n, double pruning_rate) {
  if (!(pruning_rate > 0.0 && pruning_rate < 1.0)) throw ParameterError("pruning rate must lie in (0, 1)");
  const double kept = std::round((1.0 - pruning_rate) * static_cast<double>(n));
  return std::clamp<std::uint64_t>(static_cast<std::uint64_t>(kept), 1, std::max<std::uint64_t>(n, 1));
}

Coreset select_top_m(std::span<const double> scores, double pruning_rate) {
  if (scores.empty()) throw ParameterError("select_top_m: no scores");
  const std::uint64_t n = scores.size();
  const std::uint64_t m = coreset_size(n, pruning_rate);

  std::vector<std::uint64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const auto higher = [&](std::uint64_t a, std::uint64_t b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m), order.end(), higher);
  order.resize(m);
  std::sort(order.begin(), order.end());

  Coreset c;
  c.n_total = n;
  c.pruning_rate = static_cast<float>(pruning_rate);
  c.indices = std::move(order);
  c.weights.reserve(m);
  for (auto i : c.indices) c.weights.push_back(scores[i]);
  return c;
}

}  // namespace dynaprune
