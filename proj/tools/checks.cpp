#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>

#include <json.hpp>

#include "commands.hpp"
#include "dynaprune/error.hpp"
#include "dynaprune/oracles.hpp"
#include "dynaprune/rng.hpp"

namespace dynaprune::cli {

namespace {

struct SuiteResult {
  std::string name;
  bool pass = true;
  std::uint64_t cases = 0;
  double worst = 0.0;
  std::string detail;
};

SuiteResult equivalence_suite(const CheckOptions& o, Rng& rng) {
  SuiteResult s;
  s.name = "equivalence";
  for (std::uint32_t trial = 0; trial < o.trials; ++trial) {
    const auto n = static_cast<std::uint32_t>(2 + rng.uniform_index(o.max_n - 1));
    const auto t = static_cast<std::uint32_t>(1 + rng.uniform_index(o.max_t));
    MagnitudeMatrix g{t, n, std::vector<double>(static_cast<std::size_t>(t) * n)};
    const bool coarse = trial % 4 == 0;
    for (auto& v : g.values) v = coarse ? static_cast<double>(rng.uniform_index(3)) : rng.uniform(0.0, 1.0);
    const auto var = column_variances(g);
    for (std::uint32_t m = 1; m < n; ++m) {
      const auto rep = equivalence_check(g, m);
      ++s.cases;
      s.worst = std::max(s.worst, rep.max_conservation_error);
      const auto top = select_top_m(var, 1.0 - static_cast<double>(m) / n);
      std::uint32_t mask = 0;
      for (auto k : top.indices) mask |= 1u << k;
      const bool top_ok = std::find(rep.mse_minimizers.begin(), rep.mse_minimizers.end(), mask) !=
                          rep.mse_minimizers.end();
      if (!rep.equal() || !top_ok) {
        s.pass = false;
        s.detail = "trial " + std::to_string(trial) + " M=" + std::to_string(m) + " failed";
      }
    }
  }
  return s;
}

SuiteResult taylor_suite(const CheckOptions& o, Rng& rng) {
  SuiteResult s;
  s.name = "taylor";
  for (std::uint32_t trial = 0; trial < o.taylor_trials; ++trial) {
    const auto dim = static_cast<std::uint32_t>(2 + rng.uniform_index(4));
    const auto data = gen_blobs(10, 2, dim, 1.0, 1.0, rng.next_u64());
    const auto model = make_model(Arch::Linear, dim, 2, 0, rng.next_u64());
    std::vector<std::uint64_t> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    const std::vector<double> ones(data.size(), 1.0);
    const auto g = grad(model, data, all, ones);
    const auto n = rng.uniform_index(data.size());
    auto residual_at = [&](double eta) {
      std::vector<double> next(model.theta.size());
      for (std::size_t i = 0; i < next.size(); ++i) next[i] = model.theta[i] - eta * g[i];
      return taylor_residual(model, model.theta, next, data.row(n), data.labels[n], eta);
    };
    const auto big = residual_at(1e-3);
    const auto small = residual_at(1e-4);
    const double rel = big.residual / big.lhs;
    const double decay = small.residual / big.residual;
    ++s.cases;
    s.worst = std::max(s.worst, rel);
    if (!(rel < 0.05) || !(decay >= 0.02 && decay <= 0.5)) {
      s.pass = false;
      s.detail = "trial " + std::to_string(trial) + ": residual/lhs=" + std::to_string(rel) +
                 " decay=" + std::to_string(decay);
    }
  }
  return s;
}

SuiteResult gradient_suite(const CheckOptions& o, Rng& rng) {
  SuiteResult s;
  s.name = "gradient";
  const double h = 1e-6;
  for (std::uint32_t trial = 0; trial < o.gradient_trials; ++trial) {
    const auto arch = trial % 2 ? Arch::MLP : Arch::Linear;
    const auto dim = static_cast<std::uint32_t>(1 + rng.uniform_index(4));
    const auto classes = static_cast<std::uint32_t>(2 + rng.uniform_index(3));
    auto model = make_model(arch, dim, classes, 3, rng.next_u64());
    const std::size_t b = 1 + rng.uniform_index(4);
    std::vector<double> x(b * dim);
    for (auto& v : x) v = rng.uniform(-2.0, 2.0);
    std::vector<std::uint32_t> y(b);
    std::vector<double> w(b);
    for (std::size_t i = 0; i < b; ++i) {
      y[i] = static_cast<std::uint32_t>(rng.uniform_index(classes));
      w[i] = rng.uniform(0.0, 2.0);
    }
    auto loss = [&](const ToyModel& m) {
      double l = 0.0;
      for (std::size_t i = 0; i < b; ++i) l += w[i] * sample_loss(m, std::span<const double>(x).subspan(i * dim, dim), y[i]);
      return l;
    };
    const auto g = grad(model, x, y, w);
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double keep = model.theta[k];
      model.theta[k] = keep + h;
      const double up = loss(model);
      model.theta[k] = keep - h;
      const double down = loss(model);
      model.theta[k] = keep;
      const double fd = (up - down) / (2.0 * h);
      const double err = std::abs(fd - g[k]) / std::max(1.0, std::abs(g[k]));
      s.worst = std::max(s.worst, err);
    }
    ++s.cases;
  }
  s.pass = s.worst < 1e-5;
  return s;
}

}  // namespace

Outcome cmd_check(const CheckOptions& o) {
  if (o.max_n < 2 || o.max_n > kMaxEnumerationSamples) {
    throw ParameterError("check: --max-n must lie in [2, " + std::to_string(kMaxEnumerationSamples) + "]");
  }
  if (o.max_t < 1) throw ParameterError("check: --max-t must be >= 1");
  Outcome out;
  out.seeds = {o.seed};
  Rng rng(o.seed, 0x43484543);  // "CHEC"
  std::vector<SuiteResult> results;
  results.push_back(equivalence_suite(o, rng));
  results.push_back(taylor_suite(o, rng));
  results.push_back(gradient_suite(o, rng));

  bool all = true;
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  for (const auto& r : results) {
    all = all && r.pass;
    std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << ": " << r.cases << " cases, worst " << r.worst;
    if (!r.detail.empty()) std::cout << " (" << r.detail << ")";
    std::cout << '\n';
    summary[r.name] = {{"pass", r.pass}, {"cases", r.cases}, {"worst", r.worst}};
  }
  summary["pass"] = all;
  if (!o.output.empty()) {
    std::ofstream os(o.output, std::ios::trunc);
    if (!os) throw IoError("cannot open " + o.output + " for writing");
    os << summary.dump(2) << '\n';
    out.outputs.push_back(o.output);
  }
  out.exit_code = all ? 0 : 1;
  return out;
}

}  // namespace dynaprune::cli
