#pragma once

// Labeled synthetic datasets with per-sample provenance, so pruning can be
// probed where redundancy and label corruption are known.
//
// Dataset file ("TDDT", little-endian): magic; version u32 = 1; N u64; D u32;
// C u32; features N*D f64 row-major; labels N*u32; provenance N*(tag u8,
// ref u64, original_label u32); CRC32 of every byte after the magic.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace dynaprune {

enum class ProvenanceTag : std::uint8_t { Clean = 0, Duplicate = 1, Mislabeled = 2 };

struct Provenance {
  ProvenanceTag tag = ProvenanceTag::Clean;
  std::uint64_t ref = 0;             // Duplicate: index of the source sample
  std::uint32_t original_label = 0;  // Mislabeled: label before corruption
  bool operator==(const Provenance&) const = default;
};

struct Dataset {
  std::uint32_t dim = 0;
  std::uint32_t n_classes = 0;
  std::vector<double> features;  // N x D, row-major
  std::vector<std::uint32_t> labels;
  std::vector<Provenance> provenance;

  std::uint64_t size() const { return labels.size(); }
  std::span<const double> row(std::uint64_t n) const {
    return std::span<const double>(features).subspan(n * dim, dim);
  }
  /// Throws DataError if dimensions, labels or provenance are inconsistent.
  void validate() const;
  Dataset subset(std::span<const std::uint64_t> indices) const;
  std::uint64_t count(ProvenanceTag tag) const;
  bool operator==(const Dataset&) const = default;
};

/// Balanced Gaussian blobs. When C <= D the class centers are the vertices of
/// a regular simplex, center_c = center_scale * (e_c - centroid), so every
/// pair of centers is center_scale * sqrt(2) apart. When C > D the centers are
/// independent uniform directions on the sphere of radius center_scale.
/// Samples are center + sigma * N(0, I). `stream` selects an independent
/// sample draw around the same centers (use 1 for a held-out test split).
Dataset gen_blobs(std::uint32_t n_per_class, std::uint32_t n_classes, std::uint32_t dim, double center_scale,
                  double sigma, std::uint64_t seed, std::uint64_t stream = 0);

/// Appends round(fraction * N) jittered copies of uniformly chosen Clean samples.
Dataset inject_duplicates(const Dataset& data, double fraction, double jitter, std::uint64_t seed);

/// Relabels round(fraction * N) distinct samples with a uniformly chosen wrong
/// class. Candidates are Clean samples that no Duplicate points to.
Dataset inject_label_noise(const Dataset& data, double fraction, std::uint64_t seed);

std::uint64_t write_dataset(const Dataset& data, std::ostream& os);
void save_dataset(const Dataset& data, const std::string& path);
Dataset parse_dataset(std::span<const std::uint8_t> bytes);
Dataset load_dataset(const std::string& path);
/// Columns: x0..x{D-1},label,tag,ref,original_label.
void write_dataset_csv(const Dataset& data, std::ostream& os);
Dataset read_dataset_csv(const std::string& path, std::uint32_t n_classes);

}  // namespace dynaprune
