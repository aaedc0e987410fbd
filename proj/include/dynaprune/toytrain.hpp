#pragma once

// Small deterministic classifiers trained with plain minibatch SGD,
//
//   theta <- theta - eta * sum_{n in batch} w_n * grad_theta CE(f_theta(x_n), y_n),
//
// used to produce trajectories and to retrain on coresets. Arithmetic is
// 64-bit throughout; probabilities are narrowed to f32 only when logged.
//
// Checkpoint file ("TDMD", little-endian): magic; version u32 = 1; arch u8;
// D u32; C u32; H u32; theta length u64; theta f64 array; CRC32 of every byte
// after the magic.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dynaprune/synthdata.hpp"
#include "dynaprune/trajlog.hpp"

namespace dynaprune {

enum class Arch : std::uint8_t { Linear = 0, MLP = 1 };
enum class LrSchedule : std::uint8_t { Constant = 0, Cosine = 1 };
enum class Weighting : std::uint8_t { None = 0, ImportanceRaw = 1, ImportanceMeanOne = 2 };

/// Flat parameter layout:
///   Linear: W[C x D], b[C]
///   MLP:    W1[H x D], b1[H], W2[C x H], b2[C]   (tanh hidden layer)
struct ToyModel {
  Arch arch = Arch::Linear;
  std::uint32_t dim = 0;
  std::uint32_t n_classes = 0;
  std::uint32_t hidden = 0;  // 0 for Linear
  std::vector<double> theta;

  static std::size_t param_count(Arch arch, std::uint32_t dim, std::uint32_t n_classes, std::uint32_t hidden);
  void validate() const;
  bool operator==(const ToyModel&) const = default;
};

/// Weights and biases drawn uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)].
ToyModel make_model(Arch arch, std::uint32_t dim, std::uint32_t n_classes, std::uint32_t hidden, std::uint64_t seed);
ToyModel zero_model(Arch arch, std::uint32_t dim, std::uint32_t n_classes, std::uint32_t hidden);

std::vector<double> logits(const ToyModel& model, std::span<const double> x);
/// Softmax of the logits (max-shifted).
std::vector<double> forward(const ToyModel& model, std::span<const double> x);
/// Cross-entropy in nats, evaluated as logsumexp(z) - z[label].
double sample_loss(const ToyModel& model, std::span<const double> x, std::uint32_t label);

/// sum_n w_n * d CE(x_n, y_n) / d theta over a batch given as row-major
/// features (B x D), labels and weights (all >= 0).
std::vector<double> grad(const ToyModel& model, std::span<const double> features,
                         std::span<const std::uint32_t> labels, std::span<const double> weights);
/// Batch drawn from a dataset by index.
std::vector<double> grad(const ToyModel& model, const Dataset& data, std::span<const std::uint64_t> indices,
                         std::span<const double> weights);

/// theta <- theta - eta * g.
void sgd_step(ToyModel& model, std::span<const double> g, double eta);

struct TrainConfig {
  double eta = 0.1;
  std::uint32_t epochs = 30;
  std::uint32_t batch_size = 32;
  std::uint64_t seed = 0;
  bool shuffle = true;
  LrSchedule schedule = LrSchedule::Constant;
  Weighting weighting = Weighting::ImportanceMeanOne;
  RecordingMode recording = RecordingMode::TrainTime;
  Arch arch = Arch::Linear;
  std::uint32_t hidden = 16;

  void validate() const;
  /// Constant: eta. Cosine: eta * (1 + cos(pi * epoch / epochs)) / 2.
  double learning_rate(std::uint32_t epoch) const;
};

/// Header of the trajectory train_epochs would log for this dataset/config.
TrajectoryHeader log_header(const Dataset& data, const TrainConfig& config);

/// Runs config.epochs epochs of minibatch SGD from make_model(..., config.seed).
/// With a sink, appends one probability block per epoch: each sample's
/// prediction at its minibatch forward pass (TrainTime) or from a full pass
/// after the epoch's updates (EvalTime). Throws TrainingError on divergence.
ToyModel train_epochs(const Dataset& data, const TrainConfig& config, BlockSink* log_sink = nullptr);
std::pair<ToyModel, TrajectoryLog> train_and_log(const Dataset& data, const TrainConfig& config);

/// Per-sample SGD weights for a coreset under a weighting mode. MeanOne
/// rescales to mean 1 (all-equal weights map to exactly 1).
std::vector<double> coreset_weights(const Coreset& coreset, Weighting mode);

/// Trains only on the coreset samples, weighting each gradient per
/// config.weighting.
ToyModel weighted_retrain(const Dataset& data, const Coreset& coreset, const TrainConfig& config);

/// Same loop as train_epochs with explicit per-sample weights (size N).
ToyModel train_weighted(const Dataset& data, const TrainConfig& config, std::span<const double> sample_weights,
                        BlockSink* log_sink = nullptr);

struct EvalResult {
  double accuracy = 0.0;
  double mean_loss = 0.0;
};

/// Accuracy uses argmax with ties to the lower class index.
EvalResult evaluate(const ToyModel& model, const Dataset& test);

std::uint64_t write_model(const ToyModel& model, std::ostream& os);
void save_model(const ToyModel& model, const std::string& path);
ToyModel parse_model(std::span<const std::uint8_t> bytes);
ToyModel load_model(const std::string& path);

}  // namespace dynaprune
