#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dynaprune/error.hpp"
#include "dynaprune/tdds.hpp"
#include "dynaprune/toytrain.hpp"
#include "support.hpp"

using namespace dynaprune;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

Dataset separable() {
  // centers 6 sigma apart
  return gen_blobs(100, 2, 2, 6.0 / std::sqrt(2.0), 1.0, 17);
}

}  // namespace

TEST_CASE("forward") {
  const auto zero = zero_model(Arch::Linear, 3, 4, 0);
  const std::vector<double> x{1.0, -2.0, 0.5};
  for (double p : forward(zero, x)) CHECK(p == 0.25);
  CHECK(sample_loss(zero, x, 2) == doctest::Approx(std::log(4.0)).epsilon(1e-15));

  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto arch = i % 2 ? Arch::MLP : Arch::Linear;
    auto m = make_model(arch, 4, 3, 5, rng.next_u64());
    const auto xi = random_vec(rng, 4, 3.0);
    const auto p = forward(m, xi);
    CHECK(std::abs(p[0] + p[1] + p[2] - 1.0) < 1e-12);
    if (arch == Arch::Linear) {
      auto shifted = m;
      for (std::size_t c = 0; c < 3; ++c) shifted.theta[12 + c] += 7.25;  // every bias moves together
      const auto q = forward(shifted, xi);
      for (std::size_t c = 0; c < 3; ++c) CHECK(q[c] == doctest::Approx(p[c]).epsilon(1e-12));
    }
  }
  const std::vector<double> short_x{1.0};
  CHECK_THROWS_AS(forward(zero, short_x), ShapeError);
  CHECK_THROWS_AS(sample_loss(zero, x, 4), RangeError);
}

TEST_CASE("gradient linearity and zero weights") {
  Rng rng(2);
  const auto m = make_model(Arch::MLP, 3, 3, 4, 5);
  const auto feats = random_vec(rng, 12);
  const std::vector<std::uint32_t> labels{0, 2, 1, 1};
  const std::vector<double> zeros(4, 0.0), w{0.5, 1.0, 2.0, 0.25}, w2{1.0, 2.0, 4.0, 0.5};
  for (double g : grad(m, feats, labels, zeros)) CHECK(g == 0.0);
  const auto g1 = grad(m, feats, labels, w);
  const auto g2 = grad(m, feats, labels, w2);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == 2.0 * g1[i]);

  const std::vector<double> neg{1.0, -1.0, 1.0, 1.0};
  CHECK_THROWS_AS(grad(m, feats, labels, neg), ParameterError);
  const std::vector<double> short_w{1.0};
  CHECK_THROWS_AS(grad(m, feats, labels, short_w), ShapeError);
}

TEST_CASE("gradient matches central differences") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto arch = trial % 2 ? Arch::MLP : Arch::Linear;
    auto m = make_model(arch, 3, 3, 4, rng.next_u64());
    const std::size_t b = 1 + rng.uniform_index(4);
    const auto feats = random_vec(rng, b * 3, 2.0);
    std::vector<std::uint32_t> labels(b);
    std::vector<double> w(b);
    for (std::size_t i = 0; i < b; ++i) {
      labels[i] = static_cast<std::uint32_t>(rng.uniform_index(3));
      w[i] = rng.uniform(0.1, 2.0);
    }
    auto total = [&](const ToyModel& mm) {
      double s = 0.0;
      for (std::size_t i = 0; i < b; ++i) {
        s += w[i] * sample_loss(mm, std::span<const double>(feats).subspan(i * 3, 3), labels[i]);
      }
      return s;
    };
    const auto g = grad(m, feats, labels, w);
    for (std::size_t k = 0; k < m.theta.size(); ++k) {
      auto plus = m, minus = m;
      plus.theta[k] += 1e-6;
      minus.theta[k] -= 1e-6;
      const double fd = (total(plus) - total(minus)) / 2e-6;
      CHECK(std::abs(fd - g[k]) <= 1e-5 * std::max(1.0, std::abs(g[k])));
    }
  }
}

TEST_CASE("one full-batch step moves theta by exactly -eta * grad") {
  const auto data = gen_blobs(8, 2, 3, 2.0, 1.0, 4);
  TrainConfig cfg;
  cfg.eta = 0.3;
  cfg.epochs = 1;
  cfg.batch_size = static_cast<std::uint32_t>(data.size());
  cfg.shuffle = false;
  cfg.seed = 11;
  const auto init = make_model(Arch::Linear, 3, 2, 0, 11);
  std::vector<std::uint64_t> all(data.size());
  std::iota(all.begin(), all.end(), 0);
  const std::vector<double> ones(data.size(), 1.0);
  const auto g = grad(init, data, all, ones);
  const auto trained = train_epochs(data, cfg);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(trained.theta[i] == init.theta[i] - 0.3 * g[i]);
}

TEST_CASE("training is deterministic and eta zero freezes the model") {
  const auto data = gen_blobs(20, 3, 3, 3.0, 1.0, 6);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 8;
  cfg.seed = 99;
  const auto [m1, log1] = train_and_log(data, cfg);
  const auto [m2, log2] = train_and_log(data, cfg);
  CHECK(m1 == m2);
  CHECK(log1.payload() == log2.payload());
  CHECK(log1.complete());

  cfg.eta = 0.0;
  const auto [frozen, flog] = train_and_log(data, cfg);
  CHECK(frozen == make_model(Arch::Linear, 3, 3, 0, 99));
  for (std::uint32_t t = 1; t < 5; ++t) {
    CHECK(std::equal(flog.block(t).begin(), flog.block(t).end(), flog.block(0).begin()));
  }
  TddsParams p;
  p.window = 2;
  for (double s : tdds_scores(flog, p).scores) CHECK(s == 0.0);

  cfg.eta = 0.1;
  cfg.recording = RecordingMode::EvalTime;
  cfg.arch = Arch::MLP;
  const auto [mlp, elog] = train_and_log(data, cfg);
  CHECK(elog.header().recording_mode == RecordingMode::EvalTime);
  CHECK(elog.complete());
  CHECK(mlp.hidden == 16);
}

TEST_CASE("separable blobs are learned") {
  const auto data = separable();
  TrainConfig cfg;
  cfg.eta = 0.5;
  cfg.epochs = 30;
  cfg.batch_size = 32;
  cfg.seed = 1;
  const auto m = train_epochs(data, cfg);
  CHECK(evaluate(m, data).accuracy >= 0.99);
}

TEST_CASE("divergence names the epoch") {
  auto data = gen_blobs(10, 2, 2, 1.0, 1.0, 1);
  for (auto& v : data.features) v *= 1e200;
  TrainConfig cfg;
  cfg.eta = 1e200;
  cfg.epochs = 3;
  try {
    train_epochs(data, cfg);
    FAIL("expected divergence");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
  }
}

TEST_CASE("config validation and cosine schedule") {
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg.epochs = 10;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg.batch_size = 1;
  cfg.eta = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg.eta = 0.2;
  cfg.schedule = LrSchedule::Cosine;
  CHECK(cfg.learning_rate(0) == 0.2);
  CHECK(cfg.learning_rate(5) == doctest::Approx(0.1));
  CHECK(cfg.learning_rate(10) == doctest::Approx(0.0));
}

TEST_CASE("weighted retraining") {
  const auto data = gen_blobs(12, 2, 3, 3.0, 1.0, 8);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 5;
  cfg.seed = 3;

  SUBCASE("equal weights under mean-one match unweighted training") {
    Coreset c{data.size(), {1, 4, 5, 9, 13, 20}, std::vector<double>(6, 7.5), 0.75f};
    auto unweighted = cfg;
    unweighted.weighting = Weighting::None;
    CHECK(weighted_retrain(data, c, cfg) == weighted_retrain(data, c, unweighted));
    CHECK(coreset_weights(c, Weighting::ImportanceMeanOne) == std::vector<double>(6, 1.0));
  }
  SUBCASE("full coreset with unit weights matches train_epochs") {
    Coreset c{data.size(), {}, {}, 0.01f};
    for (std::uint64_t i = 0; i < data.size(); ++i) {
      c.indices.push_back(i);
      c.weights.push_back(1.0);
    }
    CHECK(weighted_retrain(data, c, cfg) == train_epochs(data, cfg));
  }
  SUBCASE("raw weights x10 equal eta / 10 with full batches") {
    Coreset c{data.size(), {0, 2, 3, 7, 11}, {0.5, 1.5, 2.0, 0.25, 1.0}, 0.8f};
    auto raw = cfg;
    raw.weighting = Weighting::ImportanceRaw;
    raw.batch_size = 5;
    raw.eta = 0.05;
    auto scaled = c;
    for (auto& w : scaled.weights) w *= 10.0;
    auto slow = raw;
    slow.eta = 0.005;
    const auto a = weighted_retrain(data, c, raw);
    const auto b = weighted_retrain(data, scaled, slow);
    for (std::size_t i = 0; i < a.theta.size(); ++i) CHECK(b.theta[i] == doctest::Approx(a.theta[i]).epsilon(1e-12));
  }
  SUBCASE("mean-one normalization") {
    Coreset c{4, {0, 1}, {1.0, 3.0}, 0.5f};
    CHECK(coreset_weights(c, Weighting::ImportanceMeanOne) == std::vector<double>{0.5, 1.5});
    CHECK(coreset_weights(c, Weighting::ImportanceRaw) == std::vector<double>{1.0, 3.0});
    CHECK(coreset_weights(c, Weighting::None) == std::vector<double>{1.0, 1.0});
    c.weights = {-1.0, 2.0};
    CHECK_THROWS_AS(coreset_weights(c, Weighting::ImportanceMeanOne), ParameterError);
    CHECK(coreset_weights(c, Weighting::None) == std::vector<double>{1.0, 1.0});
  }
  SUBCASE("coreset sized for another dataset") {
    Coreset c{5, {0, 1}, {1.0, 1.0}, 0.6f};
    CHECK_THROWS_AS(weighted_retrain(data, c, cfg), ParameterError);
  }
}

TEST_CASE("evaluation") {
  const auto data = gen_blobs(10, 3, 3, 2.0, 1.0, 2);
  const auto uniform = zero_model(Arch::Linear, 3, 3, 0);
  const auto r = evaluate(uniform, data);
  CHECK(r.mean_loss == doctest::Approx(std::log(3.0)).epsilon(1e-15));
  CHECK(r.accuracy == doctest::Approx(1.0 / 3.0));  // ties pick class 0

  double sum = 0.0;
  const auto test = gen_blobs(100, 2, 2, 2.0, 1.0, 77);
  for (std::uint64_t seed = 0; seed < 32; ++seed) sum += evaluate(make_model(Arch::Linear, 2, 2, 0, seed), test).accuracy;
  CHECK(std::abs(sum / 32.0 - 0.5) <= 0.1);
}

TEST_CASE("model checkpoints roundtrip") {
  const auto m = make_model(Arch::MLP, 4, 3, 6, 12);
  std::ostringstream os;
  const auto n = write_model(m, os);
  CHECK(n == 4 + 4 + 1 + 4 + 4 + 4 + 8 + 8 * m.theta.size() + 4);
  CHECK(parse_model(testing::bytes_of(os.str())) == m);
  auto bad = testing::bytes_of(os.str());
  bad[30] ^= 1;
  CHECK_THROWS_AS(parse_model(bad), FormatError);
  bad = testing::bytes_of(os.str());
  bad[0] = 'X';
  CHECK_THROWS_AS(parse_model(bad), FormatError);
}
