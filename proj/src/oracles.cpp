#include "dynaprune/oracles.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "dynaprune/error.hpp"

namespace dynaprune {

namespace {

void check_keep(const MagnitudeMatrix& g, std::span<const std::uint32_t> keep) {
  if (keep.empty()) throw ParameterError("objective: keep set must be nonempty");
  std::vector<std::uint8_t> seen(g.n_samples, 0);
  for (auto k : keep) {
    if (k >= g.n_samples) throw RangeError("objective: column " + std::to_string(k) + " out of range");
    if (seen[k]++) throw ParameterError("objective: column " + std::to_string(k) + " repeated");
  }
}

}  // namespace

void MagnitudeMatrix::validate() const {
  if (n_epochs < 1 || n_samples < 1) throw ShapeError("magnitude matrix: needs T >= 1 and N >= 1");
  if (values.size() != static_cast<std::size_t>(n_epochs) * n_samples) {
    throw ShapeError("magnitude matrix: value count is not T x N");
  }
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) throw DataError("magnitude matrix: entries must be finite and >= 0");
  }
}

std::vector<double> column_variances(const MagnitudeMatrix& g) {
  g.validate();
  std::vector<double> out(g.n_samples, 0.0);
  for (std::uint32_t n = 0; n < g.n_samples; ++n) {
    double mean = 0.0;
    for (std::uint32_t t = 0; t < g.n_epochs; ++t) mean += g.at(t, n);
    mean /= g.n_epochs;
    double ss = 0.0;
    for (std::uint32_t t = 0; t < g.n_epochs; ++t) {
      const double d = g.at(t, n) - mean;
      ss += d * d;
    }
    out[n] = ss;
  }
  return out;
}

double mse_objective(const MagnitudeMatrix& g, std::span<const std::uint32_t> keep) {
  const auto var = column_variances(g);
  check_keep(g, keep);
  std::vector<std::uint8_t> kept(g.n_samples, 0);
  for (auto k : keep) kept[k] = 1;
  double j = 0.0;
  for (std::uint32_t n = 0; n < g.n_samples; ++n) {
    if (!kept[n]) j += var[n];
  }
  return j / g.n_epochs;
}

double variance_objective(const MagnitudeMatrix& g, std::span<const std::uint32_t> keep) {
  const auto var = column_variances(g);
  check_keep(g, keep);
  double r = 0.0;
  for (auto k : keep) r += var[k];
  return r;
}

std::vector<std::uint32_t> mask_members(std::uint32_t mask) {
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; mask; ++i, mask >>= 1) {
    if (mask & 1u) out.push_back(i);
  }
  return out;
}

EquivalenceReport equivalence_check(const MagnitudeMatrix& g, std::uint32_t m, double tolerance) {
  g.validate();
  if (g.n_samples > kMaxEnumerationSamples) {
    throw CapacityError("equivalence_check: N=" + std::to_string(g.n_samples) + " exceeds the enumeration limit of " +
                        std::to_string(kMaxEnumerationSamples));
  }
  if (m < 1 || m >= g.n_samples) {
    throw ParameterError("equivalence_check: M=" + std::to_string(m) + " must lie in [1, N)");
  }
  const double t = g.n_epochs;
  const auto var = column_variances(g);
  double total = 0.0;
  for (double v : var) total += v;
  const double scale = std::max(1.0, total);

  struct Scored {
    std::uint32_t mask;
    double j, r;
  };
  std::vector<Scored> all;
  EquivalenceReport rep;
  rep.n_samples = g.n_samples;
  rep.keep = m;
  for (std::uint32_t mask = 0; mask < (1u << g.n_samples); ++mask) {
    if (static_cast<std::uint32_t>(std::popcount(mask)) != m) continue;
    const auto keep = mask_members(mask);
    const double j = mse_objective(g, keep);
    const double r = variance_objective(g, keep);
    rep.max_conservation_error = std::max(rep.max_conservation_error, std::abs(t * j + r - total) / scale);
    all.push_back({mask, j, r});
  }
  rep.subsets = all.size();
  rep.best_mse = all.front().j;
  rep.best_variance = all.front().r;
  for (const auto& s : all) {
    rep.best_mse = std::min(rep.best_mse, s.j);
    rep.best_variance = std::max(rep.best_variance, s.r);
  }
  // J carries a 1/T factor, so its tie band is scaled to match R's
  for (const auto& s : all) {
    if (s.j - rep.best_mse <= tolerance * scale / t) rep.mse_minimizers.push_back(s.mask);
    if (rep.best_variance - s.r <= tolerance * scale) rep.variance_maximizers.push_back(s.mask);
  }
  rep.same_optima = rep.mse_minimizers == rep.variance_maximizers;
  rep.conserved = rep.max_conservation_error <= tolerance;
  return rep;
}

TaylorResult taylor_residual(const LossFn& loss, const GradFn& grad, std::span<const double> theta_t,
                             std::span<const double> theta_next, double eta) {
  if (theta_t.size() != theta_next.size()) throw ShapeError("taylor_residual: theta vectors differ in length");
  if (!(eta > 0.0)) throw ParameterError("taylor_residual: eta must be > 0");
  const auto g = grad(theta_t);
  if (g.size() != theta_t.size()) throw ShapeError("taylor_residual: gradient length differs from theta");
  TaylorResult out;
  out.lhs = std::abs(loss(theta_next) - loss(theta_t)) / eta;
  double dot = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * (theta_t[i] - theta_next[i]);
  out.rhs = std::abs(dot / eta);
  out.residual = std::abs(out.lhs - out.rhs);
  return out;
}

TaylorResult taylor_residual(const ToyModel& model, std::span<const double> theta_t,
                             std::span<const double> theta_next, std::span<const double> x, std::uint32_t label,
                             double eta) {
  if (theta_t.size() != model.theta.size()) throw ShapeError("taylor_residual: theta does not fit the model");
  ToyModel probe = model;
  auto at = [&](std::span<const double> theta) -> const ToyModel& {
    probe.theta.assign(theta.begin(), theta.end());
    return probe;
  };
  const std::vector<std::uint32_t> labels{label};
  const std::vector<double> weights{1.0};
  return taylor_residual([&](std::span<const double> th) { return sample_loss(at(th), x, label); },
                         [&](std::span<const double> th) { return grad(at(th), x, labels, weights); }, theta_t,
                         theta_next, eta);
}

}  // namespace dynaprune
