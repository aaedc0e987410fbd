#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dynaprune/synthdata.hpp"
#include "dynaprune/tdds.hpp"
#include "dynaprune/toytrain.hpp"

namespace dynaprune::cli {

enum class FileFormat { Bin, Csv };

/// What a command touched, for the run manifest.
struct Outcome {
  int exit_code = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<std::uint64_t> seeds;
  /// Where manifests go; defaults to "<output>.manifest.json" for every output.
  std::vector<std::string> manifest_paths;
};

struct GenDataOptions {
  std::string output;
  std::string test_output;
  FileFormat format = FileFormat::Bin;
  std::uint32_t n_per_class = 500;
  std::uint32_t test_per_class = 0;  // 0: same as n_per_class
  std::uint32_t classes = 4;
  std::uint32_t dim = 10;
  double center_scale = 2.0;
  double sigma = 1.0;
  double duplicates = 0.0;
  double jitter = 0.01;
  double label_noise = 0.0;
  std::uint64_t seed = 0;
};

struct TrainOptions {
  std::string input;
  std::string output;
  std::string model;
  std::uint32_t classes = 0;
  TrainConfig config;
};

struct ScoreOptions {
  std::string input;
  std::string output;
  FileFormat format = FileFormat::Bin;
  ScoreMethod method = ScoreMethod::TDDS;
  TddsParams tdds;
  std::uint32_t el2n_epochs = 10;
  std::uint32_t dynunc_window = 0;  // 0: use the TDDS window
  std::uint64_t seed = 0;
};

struct SelectOptions {
  std::string input;
  std::string output;
  FileFormat format = FileFormat::Bin;
  double rate = 0.5;
};

struct RetrainOptions {
  std::string input;
  std::string coreset;
  std::string output;
  std::string test;
  std::uint32_t classes = 0;
  TrainConfig config;
};

struct CheckOptions {
  std::string output;
  std::uint32_t trials = 200;
  std::uint32_t max_n = 10;
  std::uint32_t max_t = 6;
  std::uint32_t taylor_trials = 20;
  std::uint32_t gradient_trials = 100;
  std::uint64_t seed = 0;
};

struct CompareOptions {
  std::string input;
  std::string test;
  std::string output;
  FileFormat format = FileFormat::Bin;
  std::uint32_t classes = 0;
  std::vector<std::string> methods{"tdds", "random"};
  std::vector<double> rates{0.9};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::uint32_t jobs = 1;
  TrainConfig config;
  TddsParams tdds;
  std::uint32_t el2n_epochs = 10;
  std::uint32_t dynunc_window = 0;
};

Outcome cmd_gen_data(const GenDataOptions& o);
Outcome cmd_train(const TrainOptions& o);
Outcome cmd_score(const ScoreOptions& o);
Outcome cmd_select(const SelectOptions& o);
Outcome cmd_retrain(const RetrainOptions& o);
Outcome cmd_check(const CheckOptions& o);
Outcome cmd_compare(const CompareOptions& o);
Outcome cmd_info(const std::string& input);

/// Loads a TDDT file, or a dataset CSV (class count from `classes`, or from
/// the labels when 0).
Dataset load_dataset_any(const std::string& path, std::uint32_t classes);

}  // namespace dynaprune::cli
