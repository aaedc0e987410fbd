#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "dynaprune/rng.hpp"
#include "dynaprune/trajlog.hpp"

namespace testing {

namespace fs = std::filesystem;

inline fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("dynaprune_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

inline std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

inline std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

// Random probability vector; with `sharp`, mass concentrates on one class and
// exact zeros appear.
inline void random_probs(dynaprune::Rng& rng, std::span<float> out, bool sharp = false) {
  double sum = 0.0;
  std::vector<double> raw(out.size());
  for (auto& v : raw) {
    v = sharp ? std::pow(rng.uniform01(), 8.0) : rng.uniform(0.01, 1.0);
    if (sharp && v < 1e-6) v = 0.0;
    sum += v;
  }
  if (sum == 0.0) {
    raw[0] = 1.0;
    sum = 1.0;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(raw[i] / sum);
}

inline dynaprune::TrajectoryLog random_log(dynaprune::Rng& rng, std::uint64_t n, std::uint32_t c, std::uint32_t t,
                                           bool sharp = false) {
  dynaprune::TrajectoryHeader h;
  h.n_samples = n;
  h.n_classes = c;
  h.n_epochs = t;
  for (std::uint64_t i = 0; i < n; ++i) h.labels.push_back(static_cast<std::uint32_t>(rng.uniform_index(c)));
  dynaprune::TrajectoryLog log(h);
  std::vector<float> block(n * c);
  for (std::uint32_t e = 0; e < t; ++e) {
    for (std::uint64_t i = 0; i < n; ++i) random_probs(rng, std::span<float>(block).subspan(i * c, c), sharp);
    log.append_block(block);
  }
  return log;
}

inline std::string serialize(const dynaprune::TrajectoryLog& log) {
  std::ostringstream os;
  log.write(os);
  return os.str();
}

}  // namespace testing
