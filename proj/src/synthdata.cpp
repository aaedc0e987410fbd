#include "dynaprune/synthdata.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "binary_io.hpp"
#include "dynaprune/error.hpp"
#include "dynaprune/rng.hpp"
#include "text_io.hpp"

namespace dynaprune {

namespace {

constexpr detail::Magic kDatasetMagic{'T', 'D', 'D', 'T'};
constexpr std::uint32_t kDatasetVersion = 1;

std::uint64_t round_count(double fraction, std::uint64_t n) {
  return static_cast<std::uint64_t>(std::round(fraction * static_cast<double>(n)));
}

}  // namespace

void Dataset::validate() const {
  const auto n = labels.size();
  if (dim < 1) throw DataError("dataset: D must be >= 1");
  if (n_classes < 2) throw DataError("dataset: C must be >= 2");
  if (features.size() != n * dim) throw DataError("dataset: feature matrix is not N x D");
  if (provenance.size() != n) throw DataError("dataset: provenance length differs from N");
  for (std::uint64_t i = 0; i < n; ++i) {
    if (labels[i] >= n_classes) throw DataError("dataset: label of sample " + std::to_string(i) + " out of range");
    const auto& p = provenance[i];
    switch (p.tag) {
      case ProvenanceTag::Clean: break;
      case ProvenanceTag::Duplicate:
        if (p.ref >= n || provenance[p.ref].tag != ProvenanceTag::Clean) {
          throw DataError("dataset: duplicate " + std::to_string(i) + " does not point at a clean sample");
        }
        break;
      case ProvenanceTag::Mislabeled:
        if (p.original_label >= n_classes || p.original_label == labels[i]) {
          throw DataError("dataset: mislabeled sample " + std::to_string(i) + " has inconsistent labels");
        }
        break;
      default: throw DataError("dataset: unknown provenance tag");
    }
  }
  for (double v : features) {
    if (!std::isfinite(v)) throw DataError("dataset: non-finite feature");
  }
}

Dataset Dataset::subset(std::span<const std::uint64_t> indices) const {
  Dataset out;
  out.dim = dim;
  out.n_classes = n_classes;
  out.features.reserve(indices.size() * dim);
  for (auto i : indices) {
    if (i >= size()) throw RangeError("dataset subset: index " + std::to_string(i) + " out of range");
    const auto r = row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(labels[i]);
    auto p = provenance[i];
    // references into the parent no longer resolve
    if (p.tag == ProvenanceTag::Duplicate) p = Provenance{};
    out.provenance.push_back(p);
  }
  return out;
}

std::uint64_t Dataset::count(ProvenanceTag tag) const {
  std::uint64_t c = 0;
  for (const auto& p : provenance) c += p.tag == tag;
  return c;
}

Dataset gen_blobs(std::uint32_t n_per_class, std::uint32_t n_classes, std::uint32_t dim, double center_scale,
                  double sigma, std::uint64_t seed, std::uint64_t stream) {
  if (n_classes < 2) throw ParameterError("gen_blobs: C must be >= 2");
  if (dim < 2) throw ParameterError("gen_blobs: D must be >= 2");
  if (!(sigma > 0.0)) throw ParameterError("gen_blobs: sigma must be > 0");

  std::vector<double> centers(static_cast<std::size_t>(n_classes) * dim, 0.0);
  if (n_classes <= dim) {
    const double centroid = 1.0 / n_classes;
    for (std::uint32_t c = 0; c < n_classes; ++c) {
      for (std::uint32_t d = 0; d < n_classes; ++d) {
        centers[c * dim + d] = center_scale * ((c == d ? 1.0 : 0.0) - centroid);
      }
    }
  } else {
    Rng rng(seed, 0x43454e54);  // "CENT"
    for (std::uint32_t c = 0; c < n_classes; ++c) {
      double norm = 0.0;
      while (norm == 0.0) {
        norm = 0.0;
        for (std::uint32_t d = 0; d < dim; ++d) {
          centers[c * dim + d] = rng.normal();
          norm += centers[c * dim + d] * centers[c * dim + d];
        }
      }
      norm = std::sqrt(norm);
      for (std::uint32_t d = 0; d < dim; ++d) centers[c * dim + d] *= center_scale / norm;
    }
  }

  Dataset data;
  data.dim = dim;
  data.n_classes = n_classes;
  const std::uint64_t n = static_cast<std::uint64_t>(n_per_class) * n_classes;
  data.features.reserve(n * dim);
  data.labels.reserve(n);
  data.provenance.assign(n, Provenance{});
  Rng rng(seed, 0x534d504c + stream);  // "SMPL"
  for (std::uint32_t i = 0; i < n_per_class; ++i) {
    for (std::uint32_t c = 0; c < n_classes; ++c) {
      for (std::uint32_t d = 0; d < dim; ++d) data.features.push_back(centers[c * dim + d] + sigma * rng.normal());
      data.labels.push_back(c);
    }
  }
  return data;
}

Dataset inject_duplicates(const Dataset& data, double fraction, double jitter, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ParameterError("inject_duplicates: fraction must lie in [0, 1)");
  if (!(jitter >= 0.0)) throw ParameterError("inject_duplicates: jitter must be >= 0");
  const std::uint64_t extra = round_count(fraction, data.size());
  if (extra == 0) return data;

  std::vector<std::uint64_t> clean;
  for (std::uint64_t i = 0; i < data.size(); ++i) {
    if (data.provenance[i].tag == ProvenanceTag::Clean) clean.push_back(i);
  }
  if (clean.empty()) throw ParameterError("inject_duplicates: no clean samples to copy");

  Dataset out = data;
  Rng rng(seed, 0x44555053);  // "DUPS"
  for (std::uint64_t k = 0; k < extra; ++k) {
    const std::uint64_t src = clean[rng.uniform_index(clean.size())];
    for (std::uint32_t d = 0; d < data.dim; ++d) {
      const double v = data.features[src * data.dim + d];
      out.features.push_back(jitter > 0.0 ? v + jitter * rng.normal() : v);
    }
    out.labels.push_back(data.labels[src]);
    out.provenance.push_back(Provenance{ProvenanceTag::Duplicate, src, 0});
  }
  return out;
}

Dataset inject_label_noise(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ParameterError("inject_label_noise: fraction must lie in [0, 1)");
  if (data.n_classes < 2) throw ParameterError("inject_label_noise: C must be >= 2");
  const std::uint64_t flips = round_count(fraction, data.size());
  if (flips == 0) return data;

  std::vector<std::uint8_t> referenced(data.size(), 0);
  for (const auto& p : data.provenance) {
    if (p.tag == ProvenanceTag::Duplicate) referenced[p.ref] = 1;
  }
  std::vector<std::uint64_t> candidates;
  for (std::uint64_t i = 0; i < data.size(); ++i) {
    if (data.provenance[i].tag == ProvenanceTag::Clean && !referenced[i]) candidates.push_back(i);
  }
  if (candidates.size() < flips) {
    throw ParameterError("inject_label_noise: only " + std::to_string(candidates.size()) +
                         " eligible samples for " + std::to_string(flips) + " flips");
  }

  Dataset out = data;
  Rng rng(seed, 0x4e4f4953);  // "NOIS"
  // partial Fisher-Yates: the first `flips` entries become a uniform sample
  for (std::uint64_t k = 0; k < flips; ++k) {
    std::swap(candidates[k], candidates[k + rng.uniform_index(candidates.size() - k)]);
    const std::uint64_t i = candidates[k];
    const std::uint32_t original = out.labels[i];
    auto wrong = static_cast<std::uint32_t>(rng.uniform_index(data.n_classes - 1));
    if (wrong >= original) ++wrong;
    out.labels[i] = wrong;
    out.provenance[i] = Provenance{ProvenanceTag::Mislabeled, 0, original};
  }
  return out;
}

std::uint64_t write_dataset(const Dataset& data, std::ostream& os) {
  data.validate();
  detail::ByteWriter w(os, kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u64(data.size());
  w.u32(data.dim);
  w.u32(data.n_classes);
  for (double v : data.features) w.f64(v);
  for (auto l : data.labels) w.u32(l);
  for (const auto& p : data.provenance) {
    w.u8(static_cast<std::uint8_t>(p.tag));
    w.u64(p.ref);
    w.u32(p.original_label);
  }
  return w.finish();
}

void save_dataset(const Dataset& data, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_dataset(data, os);
}

Dataset parse_dataset(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic(kDatasetMagic, "dataset");
  r.verify_crc("dataset");
  const auto version = r.u32();
  if (version != kDatasetVersion) throw FormatError("dataset: unsupported version " + std::to_string(version));
  const auto n = r.u64();
  Dataset data;
  data.dim = r.u32();
  data.n_classes = r.u32();
  const std::uint64_t per_sample = 8ull * data.dim + 4 + 13;
  if (r.remaining() < 4 || (r.remaining() - 4) / per_sample < n || r.remaining() - 4 != per_sample * n) {
    throw FormatError("dataset: size does not match header");
  }
  data.features.resize(n * data.dim);
  for (auto& v : data.features) v = r.f64();
  data.labels.resize(n);
  for (auto& l : data.labels) l = r.u32();
  data.provenance.resize(n);
  for (auto& p : data.provenance) {
    const auto tag = r.u8();
    if (tag > 2) throw FormatError("dataset: unknown provenance tag " + std::to_string(tag));
    p.tag = static_cast<ProvenanceTag>(tag);
    p.ref = r.u64();
    p.original_label = r.u32();
  }
  try {
    data.validate();
  } catch (const DataError& e) {
    throw FormatError(e.what());
  }
  return data;
}

Dataset load_dataset(const std::string& path) { return parse_dataset(detail::read_file(path)); }

void write_dataset_csv(const Dataset& data, std::ostream& os) {
  data.validate();
  for (std::uint32_t d = 0; d < data.dim; ++d) os << 'x' << d << ',';
  os << "label,tag,ref,original_label\n";
  for (std::uint64_t i = 0; i < data.size(); ++i) {
    for (double v : data.row(i)) os << detail::format_double(v) << ',';
    const auto& p = data.provenance[i];
    os << data.labels[i] << ',' << static_cast<int>(p.tag) << ',' << p.ref << ',' << p.original_label << '\n';
  }
  if (!os) throw IoError("write failed");
}

Dataset read_dataset_csv(const std::string& path, std::uint32_t n_classes) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw FormatError(path + ": empty csv");
  const auto header = detail::split(line, ',');
  if (header.size() < 5) throw FormatError(path + ": not a dataset csv");
  Dataset data;
  data.dim = static_cast<std::uint32_t>(header.size() - 4);
  data.n_classes = n_classes;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != header.size()) throw FormatError(path + ": ragged row");
    for (std::uint32_t d = 0; d < data.dim; ++d) data.features.push_back(detail::parse_double(f[d]));
    data.labels.push_back(static_cast<std::uint32_t>(detail::parse_u64(f[data.dim])));
    const auto tag = detail::parse_u64(f[data.dim + 1]);
    if (tag > 2) throw FormatError(path + ": unknown provenance tag");
    data.provenance.push_back(Provenance{static_cast<ProvenanceTag>(tag), detail::parse_u64(f[data.dim + 2]),
                                         static_cast<std::uint32_t>(detail::parse_u64(f[data.dim + 3]))});
  }
  data.validate();
  return data;
}

}  // namespace dynaprune
