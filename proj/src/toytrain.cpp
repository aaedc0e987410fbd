#include "dynaprune/toytrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>

#include "binary_io.hpp"
#include "dynaprune/error.hpp"
#include "dynaprune/rng.hpp"

namespace dynaprune {

namespace {

constexpr detail::Magic kModelMagic{'T', 'D', 'M', 'D'};
constexpr std::uint32_t kModelVersion = 1;

// Forward/backward for one sample with caller-owned scratch buffers.
class Net {
 public:
  explicit Net(const ToyModel& m) : m_(m), z_(m.n_classes), p_(m.n_classes), h_(m.hidden), dh_(m.hidden) {}

  // Fills probs() and returns the CE loss for `label`.
  double forward(std::span<const double> x, std::uint32_t label) {
    const std::size_t D = m_.dim, C = m_.n_classes, H = m_.hidden;
    const double* th = m_.theta.data();
    if (m_.arch == Arch::Linear) {
      affine(th, th + C * D, x.data(), C, D, z_.data());
    } else {
      affine(th, th + H * D, x.data(), H, D, h_.data());
      for (auto& v : h_) v = std::tanh(v);
      const double* w2 = th + H * D + H;
      affine(w2, w2 + C * H, h_.data(), C, H, z_.data());
    }
    const double zmax = *std::max_element(z_.begin(), z_.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      p_[c] = std::exp(z_[c] - zmax);
      sum += p_[c];
    }
    for (auto& v : p_) v /= sum;
    return zmax + std::log(sum) - z_[label];
  }

  // Adds weight * dCE/dtheta into g; forward() must have run on the same x.
  void backward(std::span<const double> x, std::uint32_t label, double weight, std::span<double> g) {
    const std::size_t D = m_.dim, C = m_.n_classes, H = m_.hidden;
    double* gp = g.data();
    if (m_.arch == Arch::Linear) {
      for (std::size_t c = 0; c < C; ++c) {
        const double dz = weight * (p_[c] - (c == label ? 1.0 : 0.0));
        double* row = gp + c * D;
        for (std::size_t d = 0; d < D; ++d) row[d] += dz * x[d];
        gp[C * D + c] += dz;
      }
      return;
    }
    const double* w2 = m_.theta.data() + H * D + H;
    double* gw1 = gp;
    double* gb1 = gp + H * D;
    double* gw2 = gb1 + H;
    double* gb2 = gw2 + C * H;
    std::fill(dh_.begin(), dh_.end(), 0.0);
    for (std::size_t c = 0; c < C; ++c) {
      const double dz = weight * (p_[c] - (c == label ? 1.0 : 0.0));
      for (std::size_t j = 0; j < H; ++j) {
        gw2[c * H + j] += dz * h_[j];
        dh_[j] += dz * w2[c * H + j];
      }
      gb2[c] += dz;
    }
    for (std::size_t j = 0; j < H; ++j) {
      const double da = dh_[j] * (1.0 - h_[j] * h_[j]);
      double* row = gw1 + j * D;
      for (std::size_t d = 0; d < D; ++d) row[d] += da * x[d];
      gb1[j] += da;
    }
  }

  std::span<const double> probs() const { return p_; }
  std::span<const double> logits() const { return z_; }

 private:
  static void affine(const double* w, const double* b, const double* x, std::size_t rows, std::size_t cols,
                     double* out) {
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = b[r];
      const double* wr = w + r * cols;
      for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
      out[r] = acc;
    }
  }

  const ToyModel& m_;
  std::vector<double> z_, p_, h_, dh_;
};

void check_input(const ToyModel& model, std::span<const double> x) {
  if (x.size() != model.dim) {
    throw ShapeError("model expects " + std::to_string(model.dim) + " features, got " + std::to_string(x.size()));
  }
}

void store_probs(std::span<const double> p, float* out) {
  for (std::size_t c = 0; c < p.size(); ++c) out[c] = static_cast<float>(p[c]);
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

std::size_t ToyModel::param_count(Arch arch, std::uint32_t dim, std::uint32_t n_classes, std::uint32_t hidden) {
  const std::size_t D = dim, C = n_classes, H = hidden;
  return arch == Arch::Linear ? C * D + C : H * D + H + C * H + C;
}

void ToyModel::validate() const {
  if (arch != Arch::Linear && arch != Arch::MLP) throw ShapeError("model: unknown architecture");
  if (dim < 1 || n_classes < 2) throw ShapeError("model: needs D >= 1 and C >= 2");
  if (arch == Arch::MLP && hidden < 1) throw ShapeError("model: MLP needs a hidden width >= 1");
  if (arch == Arch::Linear && hidden != 0) throw ShapeError("model: Linear has no hidden layer");
  if (theta.size() != param_count(arch, dim, n_classes, hidden)) {
    throw ShapeError("model: parameter vector has " + std::to_string(theta.size()) + " entries, expected " +
                     std::to_string(param_count(arch, dim, n_classes, hidden)));
  }
  for (double v : theta) {
    if (!std::isfinite(v)) throw DataError("model: non-finite parameter");
  }
}

ToyModel zero_model(Arch arch, std::uint32_t dim, std::uint32_t n_classes, std::uint32_t hidden) {
  ToyModel m{arch, dim, n_classes, arch == Arch::Linear ? 0u : hidden, {}};
  m.theta.assign(ToyModel::param_count(arch, dim, n_classes, m.hidden), 0.0);
  m.validate();
  return m;
}

ToyModel make_model(Arch arch, std::uint32_t dim, std::uint32_t n_classes, std::uint32_t hidden,
                    std::uint64_t seed) {
  ToyModel m = zero_model(arch, dim, n_classes, hidden);
  Rng rng(seed, 0x494e4954);  // "INIT"
  auto fill = [&](std::size_t begin, std::size_t count, std::uint32_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = begin; i < begin + count; ++i) m.theta[i] = rng.uniform(-bound, bound);
  };
  const std::size_t D = dim, C = n_classes, H = m.hidden;
  if (arch == Arch::Linear) {
    fill(0, C * D + C, dim);
  } else {
    fill(0, H * D + H, dim);
    fill(H * D + H, C * H + C, m.hidden);
  }
  return m;
}

std::vector<double> logits(const ToyModel& model, std::span<const double> x) {
  check_input(model, x);
  Net net(model);
  net.forward(x, 0);
  return {net.logits().begin(), net.logits().end()};
}

std::vector<double> forward(const ToyModel& model, std::span<const double> x) {
  check_input(model, x);
  Net net(model);
  net.forward(x, 0);
  return {net.probs().begin(), net.probs().end()};
}

double sample_loss(const ToyModel& model, std::span<const double> x, std::uint32_t label) {
  check_input(model, x);
  if (label >= model.n_classes) throw RangeError("sample_loss: label out of range");
  Net net(model);
  return net.forward(x, label);
}

std::vector<double> grad(const ToyModel& model, std::span<const double> features,
                         std::span<const std::uint32_t> labels, std::span<const double> weights) {
  const std::size_t b = labels.size();
  if (features.size() != b * model.dim) throw ShapeError("grad: feature block is not B x D");
  if (weights.size() != b) throw ShapeError("grad: weights length differs from batch size");
  std::vector<double> g(model.theta.size(), 0.0);
  Net net(model);
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= model.n_classes) throw RangeError("grad: label out of range");
    if (!(weights[i] >= 0.0)) throw ParameterError("grad: sample weights must be >= 0");
    const auto x = features.subspan(i * model.dim, model.dim);
    net.forward(x, labels[i]);
    net.backward(x, labels[i], weights[i], g);
  }
  return g;
}

std::vector<double> grad(const ToyModel& model, const Dataset& data, std::span<const std::uint64_t> indices,
                         std::span<const double> weights) {
  if (data.dim != model.dim) throw ShapeError("grad: dataset and model dimensions differ");
  if (weights.size() != indices.size()) throw ShapeError("grad: weights length differs from batch size");
  std::vector<double> g(model.theta.size(), 0.0);
  Net net(model);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= data.size()) throw RangeError("grad: sample index out of range");
    if (!(weights[i] >= 0.0)) throw ParameterError("grad: sample weights must be >= 0");
    const auto x = data.row(indices[i]);
    const auto y = data.labels[indices[i]];
    net.forward(x, y);
    net.backward(x, y, weights[i], g);
  }
  return g;
}

void sgd_step(ToyModel& model, std::span<const double> g, double eta) {
  if (g.size() != model.theta.size()) throw ShapeError("sgd_step: gradient length differs from theta");
  for (std::size_t i = 0; i < g.size(); ++i) model.theta[i] = model.theta[i] - eta * g[i];
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ParameterError("train: eta must be finite and >= 0");
  if (epochs < 1) throw ParameterError("train: epochs must be >= 1");
  if (batch_size < 1) throw ParameterError("train: batch size must be >= 1");
  if (arch == Arch::MLP && hidden < 1) throw ParameterError("train: MLP needs hidden width >= 1");
}

double TrainConfig::learning_rate(std::uint32_t epoch) const {
  if (schedule == LrSchedule::Constant) return eta;
  return eta * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(epochs)));
}

TrajectoryHeader log_header(const Dataset& data, const TrainConfig& config) {
  TrajectoryHeader h;
  h.n_samples = data.size();
  h.n_classes = data.n_classes;
  h.n_epochs = config.epochs;
  h.payload_kind = PayloadKind::FullProbs;
  h.recording_mode = config.recording;
  h.labels = data.labels;
  return h;
}

ToyModel train_weighted(const Dataset& data, const TrainConfig& config, std::span<const double> sample_weights,
                        BlockSink* log_sink) {
  config.validate();
  const std::uint64_t n = data.size();
  if (n == 0) throw ParameterError("train: empty dataset");
  if (sample_weights.size() != n) throw ShapeError("train: one weight per sample required");
  for (double w : sample_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ParameterError("train: sample weights must be finite and >= 0");
  }

  ToyModel model = make_model(config.arch, data.dim, data.n_classes, config.hidden, config.seed);
  Net net(model);
  const std::size_t C = data.n_classes;
  std::vector<std::uint64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(config.seed, 0x53485546);  // "SHUF"
  std::vector<double> g(model.theta.size());
  std::vector<float> block(log_sink ? n * C : 0);

  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) {
      for (std::uint64_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
    }
    const double eta = config.learning_rate(epoch);
    double epoch_loss = 0.0;
    for (std::uint64_t start = 0; start < n; start += config.batch_size) {
      const std::uint64_t stop = std::min<std::uint64_t>(n, start + config.batch_size);
      std::fill(g.begin(), g.end(), 0.0);
      for (std::uint64_t k = start; k < stop; ++k) {
        const std::uint64_t i = order[k];
        const auto x = data.row(i);
        const auto y = data.labels[i];
        epoch_loss += sample_weights[i] * net.forward(x, y);
        if (log_sink && config.recording == RecordingMode::TrainTime) store_probs(net.probs(), &block[i * C]);
        net.backward(x, y, sample_weights[i], g);
      }
      sgd_step(model, g, eta);
    }
    bool finite = std::isfinite(epoch_loss);
    for (double v : model.theta) finite = finite && std::isfinite(v);
    if (!finite) throw TrainingError("training diverged in epoch " + std::to_string(epoch));
    if (log_sink) {
      if (config.recording == RecordingMode::EvalTime) {
        for (std::uint64_t i = 0; i < n; ++i) {
          net.forward(data.row(i), data.labels[i]);
          store_probs(net.probs(), &block[i * C]);
        }
      }
      log_sink->append_block(block);
    }
  }
  return model;
}

ToyModel train_epochs(const Dataset& data, const TrainConfig& config, BlockSink* log_sink) {
  const std::vector<double> ones(data.size(), 1.0);
  return train_weighted(data, config, ones, log_sink);
}

std::pair<ToyModel, TrajectoryLog> train_and_log(const Dataset& data, const TrainConfig& config) {
  TrajectoryLog log(log_header(data, config));
  ToyModel model = train_epochs(data, config, &log);
  return {std::move(model), std::move(log)};
}

std::vector<double> coreset_weights(const Coreset& coreset, Weighting mode) {
  const std::size_t m = coreset.weights.size();
  std::vector<double> w(m, 1.0);
  if (mode == Weighting::None || m == 0) return w;
  for (double v : coreset.weights) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ParameterError("importance weighting needs finite, nonnegative coreset weights");
    }
  }
  if (mode == Weighting::ImportanceRaw) return coreset.weights;
  const bool all_equal = std::all_of(coreset.weights.begin(), coreset.weights.end(),
                                     [&](double v) { return v == coreset.weights.front(); });
  if (all_equal) return w;
  const double mean = std::accumulate(coreset.weights.begin(), coreset.weights.end(), 0.0) / static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i) w[i] = coreset.weights[i] / mean;
  return w;
}

ToyModel weighted_retrain(const Dataset& data, const Coreset& coreset, const TrainConfig& config) {
  coreset.validate();
  if (coreset.n_total != data.size()) {
    throw ParameterError("retrain: coreset was built for " + std::to_string(coreset.n_total) +
                         " samples, dataset has " + std::to_string(data.size()));
  }
  const Dataset subset = data.subset(coreset.indices);
  const auto weights = coreset_weights(coreset, config.weighting);
  return train_weighted(subset, config, weights, nullptr);
}

EvalResult evaluate(const ToyModel& model, const Dataset& test) {
  if (test.size() == 0) throw ParameterError("evaluate: empty test set");
  if (test.dim != model.dim) throw ShapeError("evaluate: dataset and model dimensions differ");
  Net net(model);
  std::uint64_t correct = 0;
  double loss = 0.0;
  for (std::uint64_t i = 0; i < test.size(); ++i) {
    loss += net.forward(test.row(i), test.labels[i]);
    const auto p = net.probs();
    const auto best = static_cast<std::uint32_t>(std::max_element(p.begin(), p.end()) - p.begin());
    correct += best == test.labels[i];
  }
  const double n = static_cast<double>(test.size());
  return {static_cast<double>(correct) / n, loss / n};
}

// ---------------------------------------------------------------------------
// Checkpoints

std::uint64_t write_model(const ToyModel& model, std::ostream& os) {
  model.validate();
  detail::ByteWriter w(os, kModelMagic);
  w.u32(kModelVersion);
  w.u8(static_cast<std::uint8_t>(model.arch));
  w.u32(model.dim);
  w.u32(model.n_classes);
  w.u32(model.hidden);
  w.u64(model.theta.size());
  for (double v : model.theta) w.f64(v);
  return w.finish();
}

void save_model(const ToyModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_model(model, os);
}

ToyModel parse_model(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic(kModelMagic, "model");
  r.verify_crc("model");
  const auto version = r.u32();
  if (version != kModelVersion) throw FormatError("model: unsupported version " + std::to_string(version));
  ToyModel m;
  const auto arch = r.u8();
  if (arch > 1) throw FormatError("model: unknown architecture " + std::to_string(arch));
  m.arch = static_cast<Arch>(arch);
  m.dim = r.u32();
  m.n_classes = r.u32();
  m.hidden = r.u32();
  const auto len = r.u64();
  if (r.remaining() < 4 || (r.remaining() - 4) / 8 < len || r.remaining() - 4 != 8 * len) {
    throw FormatError("model: size does not match parameter count");
  }
  m.theta.resize(len);
  for (auto& v : m.theta) v = r.f64();
  try {
    m.validate();
  } catch (const Error& e) {
    throw FormatError(e.what());
  }
  return m;
}

ToyModel load_model(const std::string& path) { return parse_model(detail::read_file(path)); }

}  // namespace dynaprune
