#include "dynaprune/trajlog.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <utility>

#include "binary_io.hpp"
#include "dynaprune/error.hpp"
#include "text_io.hpp"

namespace dynaprune {

namespace {

constexpr detail::Magic kTrajectoryMagic{'T', 'D', 'L', 'G'};
constexpr detail::Magic kScoresMagic{'T', 'D', 'S', 'C'};
constexpr detail::Magic kCoresetMagic{'T', 'D', 'C', 'S'};

std::string block_label(const TrajectoryHeader& h) {
  return h.payload_kind == PayloadKind::FullProbs ? "epoch" : "delta block";
}

}  // namespace

// ---------------------------------------------------------------------------
// Header

std::uint32_t TrajectoryHeader::block_count() const {
  if (payload_kind == PayloadKind::FullProbs) return n_epochs;
  return n_epochs == 0 ? 0 : n_epochs - 1;
}

std::uint64_t TrajectoryHeader::block_values() const {
  return payload_kind == PayloadKind::FullProbs ? n_samples * n_classes : n_samples;
}

std::uint64_t TrajectoryHeader::file_size() const {
  return payload_offset() + 4ull * block_values() * block_count() + 4;
}

void TrajectoryHeader::validate() const {
  if (n_samples < 1) throw FormatError("trajectory: N must be >= 1");
  if (n_classes < 2) throw FormatError("trajectory: C must be >= 2");
  if (n_epochs < 2) throw FormatError("trajectory: T must be >= 2");
  if (payload_kind != PayloadKind::FullProbs && payload_kind != PayloadKind::DeltaMagnitudes) {
    throw FormatError("trajectory: unknown payload kind");
  }
  if (recording_mode != RecordingMode::TrainTime && recording_mode != RecordingMode::EvalTime) {
    throw FormatError("trajectory: unknown recording mode");
  }
  if (labels.size() != n_samples) {
    throw FormatError("trajectory: expected " + std::to_string(n_samples) + " labels, got " +
                      std::to_string(labels.size()));
  }
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n] >= n_classes) {
      throw FormatError("trajectory: label of sample " + std::to_string(n) + " is out of range");
    }
  }
}

void validate_block(const TrajectoryHeader& header, std::span<const float> block) {
  if (block.size() != header.block_values()) {
    throw FormatError("trajectory: block has " + std::to_string(block.size()) + " values, expected " +
                     std::to_string(header.block_values()));
  }
  if (header.payload_kind == PayloadKind::DeltaMagnitudes) {
    for (std::size_t i = 0; i < block.size(); ++i) {
      if (!std::isfinite(block[i]) || block[i] < 0.0f) {
        throw DataError("trajectory: delta of sample " + std::to_string(i) + " is negative or non-finite");
      }
    }
    return;
  }
  const std::size_t c = header.n_classes;
  for (std::uint64_t n = 0; n < header.n_samples; ++n) {
    double sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const float v = block[n * c + k];
      if (!std::isfinite(v)) {
        throw DataError("trajectory: non-finite probability for sample " + std::to_string(n));
      }
      if (v < 0.0f || v > 1.0f) {
        throw DataError("trajectory: probability outside [0,1] for sample " + std::to_string(n));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw DataError("trajectory: probabilities of sample " + std::to_string(n) + " sum to " +
                      std::to_string(sum));
    }
  }
}

ProbMatrix EpochSource::read_epoch(std::uint32_t t) const {
  const auto& h = header();
  if (h.payload_kind != PayloadKind::FullProbs) {
    throw FormatError("read_epoch: trajectory stores delta magnitudes, not probabilities");
  }
  if (t >= h.n_epochs) {
    throw RangeError("read_epoch: epoch " + std::to_string(t) + " out of range [0, " +
                     std::to_string(h.n_epochs) + ")");
  }
  ProbMatrix m;
  m.epoch = t;
  m.n_samples = h.n_samples;
  m.n_classes = h.n_classes;
  m.values.resize(h.block_values());
  read_block(t, m.values);
  return m;
}

// ---------------------------------------------------------------------------
// Writer

namespace {

void write_header_fields(detail::ByteWriter& w, const TrajectoryHeader& h) {
  w.u32(kFormatVersion);
  w.u8(static_cast<std::uint8_t>(h.payload_kind));
  w.u8(static_cast<std::uint8_t>(h.recording_mode));
  w.u16(0);
  w.u64(h.n_samples);
  w.u32(h.n_classes);
  w.u32(h.n_epochs);
  std::vector<std::uint8_t> buf(4 * h.labels.size());
  for (std::size_t i = 0; i < h.labels.size(); ++i) detail::store_le(buf.data() + 4 * i, h.labels[i]);
  w.bytes(buf.data(), buf.size());
}

}  // namespace

struct TrajectoryWriter::Impl {
  Impl(std::ostream& os, TrajectoryHeader h) : header(std::move(h)), writer(os, kTrajectoryMagic) {}
  TrajectoryHeader header;
  detail::ByteWriter writer;
  std::uint32_t blocks = 0;
  bool finished = false;
};

TrajectoryWriter::TrajectoryWriter(std::ostream& os, TrajectoryHeader header) {
  header.validate();
  impl_ = std::make_unique<Impl>(os, std::move(header));
  write_header_fields(impl_->writer, impl_->header);
}

TrajectoryWriter::~TrajectoryWriter() = default;

void TrajectoryWriter::append_block(std::span<const float> block) {
  if (impl_->finished) throw FormatError("trajectory: append after finish");
  if (impl_->blocks >= impl_->header.block_count()) {
    throw FormatError("trajectory: more than " + std::to_string(impl_->header.block_count()) + " " +
                      block_label(impl_->header) + "s");
  }
  validate_block(impl_->header, block);
  impl_->writer.f32_array(block);
  ++impl_->blocks;
}

std::uint64_t TrajectoryWriter::finish() {
  if (impl_->finished) throw FormatError("trajectory: finish called twice");
  if (impl_->blocks != impl_->header.block_count()) {
    throw FormatError("trajectory: wrote " + std::to_string(impl_->blocks) + " blocks, header declares " +
                      std::to_string(impl_->header.block_count()));
  }
  impl_->finished = true;
  return impl_->writer.finish();
}

const TrajectoryHeader& TrajectoryWriter::header() const { return impl_->header; }
std::uint32_t TrajectoryWriter::blocks_written() const { return impl_->blocks; }

std::uint64_t write_trajectory(const TrajectoryHeader& header, std::span<const ProbMatrix> epochs,
                               std::ostream& os) {
  if (header.payload_kind != PayloadKind::FullProbs) {
    throw FormatError("write_trajectory: probability blocks require a FullProbs header");
  }
  if (epochs.size() != header.block_count()) {
    throw FormatError("write_trajectory: got " + std::to_string(epochs.size()) + " epochs, header declares " +
                      std::to_string(header.block_count()));
  }
  TrajectoryWriter w(os, header);
  for (const auto& e : epochs) {
    if (e.n_samples != header.n_samples || e.n_classes != header.n_classes) {
      throw FormatError("write_trajectory: epoch matrix dimensions differ from header");
    }
    w.append(e);
  }
  return w.finish();
}

std::uint64_t write_trajectory(const TrajectoryHeader& header, const std::vector<std::vector<float>>& blocks,
                               std::ostream& os) {
  if (blocks.size() != header.block_count()) {
    throw FormatError("write_trajectory: got " + std::to_string(blocks.size()) + " blocks, header declares " +
                      std::to_string(header.block_count()));
  }
  TrajectoryWriter w(os, header);
  for (const auto& b : blocks) w.append_block(b);
  return w.finish();
}

// ---------------------------------------------------------------------------
// In-memory log

TrajectoryLog::TrajectoryLog(TrajectoryHeader header) : header_(std::move(header)) {
  header_.validate();
  payload_.reserve(header_.block_values() * header_.block_count());
}

void TrajectoryLog::append_block(std::span<const float> b) {
  if (complete()) throw FormatError("trajectory: all blocks already stored");
  validate_block(header_, b);
  payload_.insert(payload_.end(), b.begin(), b.end());
}

std::uint32_t TrajectoryLog::blocks_stored() const {
  const auto per = header_.block_values();
  return per == 0 ? 0 : static_cast<std::uint32_t>(payload_.size() / per);
}

std::span<const float> TrajectoryLog::block(std::uint32_t index) const {
  if (index >= blocks_stored()) {
    throw RangeError(block_label(header_) + " " + std::to_string(index) + " out of range");
  }
  const auto per = header_.block_values();
  return std::span<const float>(payload_).subspan(index * per, per);
}

void TrajectoryLog::read_block(std::uint32_t index, std::span<float> out) const {
  const auto b = block(index);
  if (out.size() != b.size()) throw ShapeError("read_block: output buffer has wrong size");
  std::copy(b.begin(), b.end(), out.begin());
}

std::uint64_t TrajectoryLog::write(std::ostream& os) const {
  if (!complete()) throw FormatError("trajectory: log is incomplete");
  TrajectoryWriter w(os, header_);
  for (std::uint32_t i = 0; i < header_.block_count(); ++i) w.append_block(block(i));
  return w.finish();
}

std::uint64_t TrajectoryLog::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  return write(os);
}

// ---------------------------------------------------------------------------
// Reader

TrajectoryHeader parse_header(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic(kTrajectoryMagic, "trajectory");
  const auto version = r.u32();
  if (version != kFormatVersion) {
    throw FormatError("trajectory: unsupported version " + std::to_string(version));
  }
  TrajectoryHeader h;
  const auto kind = r.u8();
  const auto mode = r.u8();
  if (kind > 1) throw FormatError("trajectory: unknown payload kind " + std::to_string(kind));
  if (mode > 1) throw FormatError("trajectory: unknown recording mode " + std::to_string(mode));
  h.payload_kind = static_cast<PayloadKind>(kind);
  h.recording_mode = static_cast<RecordingMode>(mode);
  if (r.u16() != 0) throw FormatError("trajectory: reserved field is nonzero");
  h.n_samples = r.u64();
  h.n_classes = r.u32();
  h.n_epochs = r.u32();
  if (h.n_samples > r.remaining() / 4) throw FormatError("trajectory: truncated label table");
  h.labels.resize(h.n_samples);
  for (auto& l : h.labels) l = r.u32();
  h.validate();
  return h;
}

TrajectoryReader::TrajectoryReader(const std::string& path) : path_(path) {
  fd_ = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd_ < 0) throw IoError("cannot open " + path + ": " + std::strerror(errno));
  struct stat st {};
  if (::fstat(fd_, &st) != 0) {
    ::close(fd_);
    throw IoError("cannot stat " + path);
  }
  file_size_ = static_cast<std::uint64_t>(st.st_size);
  if (file_size_ < kTrajectoryFixedHeaderBytes + 4) {
    ::close(fd_);
    throw FormatError("trajectory: " + path + " is truncated");
  }
  try {
    std::vector<std::uint8_t> fixed(kTrajectoryFixedHeaderBytes);
    read_at(0, fixed.data(), fixed.size());
    const auto n = detail::load_le<std::uint64_t>(fixed.data() + 12);
    if (n > (file_size_ - kTrajectoryFixedHeaderBytes) / 4) {
      throw FormatError("trajectory: " + path + " is truncated");
    }
    std::vector<std::uint8_t> head(kTrajectoryFixedHeaderBytes + 4 * n);
    read_at(0, head.data(), head.size());
    header_ = parse_header(head);
    if (file_size_ != header_.file_size()) {
      throw FormatError("trajectory: " + path + " has " + std::to_string(file_size_) + " bytes, expected " +
                        std::to_string(header_.file_size()));
    }
  } catch (...) {
    ::close(fd_);
    fd_ = -1;
    throw;
  }
}

TrajectoryReader::~TrajectoryReader() {
  if (fd_ >= 0) ::close(fd_);
}

TrajectoryReader::TrajectoryReader(TrajectoryReader&& o) noexcept
    : path_(std::move(o.path_)),
      fd_(std::exchange(o.fd_, -1)),
      file_size_(o.file_size_),
      header_(std::move(o.header_)) {}

TrajectoryReader& TrajectoryReader::operator=(TrajectoryReader&& o) noexcept {
  if (this != &o) {
    if (fd_ >= 0) ::close(fd_);
    path_ = std::move(o.path_);
    fd_ = std::exchange(o.fd_, -1);
    file_size_ = o.file_size_;
    header_ = std::move(o.header_);
  }
  return *this;
}

void TrajectoryReader::read_at(std::uint64_t offset, void* dst, std::size_t len) const {
  auto* p = static_cast<char*>(dst);
  while (len > 0) {
    const ssize_t got = ::pread(fd_, p, len, static_cast<off_t>(offset));
    if (got < 0) {
      if (errno == EINTR) continue;
      throw IoError("read failed on " + path_ + ": " + std::strerror(errno));
    }
    if (got == 0) throw FormatError("trajectory: " + path_ + " is truncated");
    p += got;
    offset += static_cast<std::uint64_t>(got);
    len -= static_cast<std::size_t>(got);
  }
}

void TrajectoryReader::read_block(std::uint32_t index, std::span<float> out) const {
  if (index >= header_.block_count()) {
    throw RangeError(block_label(header_) + " " + std::to_string(index) + " out of range [0, " +
                     std::to_string(header_.block_count()) + ")");
  }
  const auto per = header_.block_values();
  if (out.size() != per) throw ShapeError("read_block: output buffer has wrong size");
  std::vector<std::uint8_t> raw(per * 4);
  read_at(header_.payload_offset() + 4ull * per * index, raw.data(), raw.size());
  detail::decode_f32(raw.data(), out);
}

void TrajectoryReader::verify() const {
  constexpr std::size_t kChunk = 1 << 20;
  std::vector<std::uint8_t> buf(kChunk);
  std::uint32_t crc = 0;
  std::uint64_t pos = 4;
  const std::uint64_t end = file_size_ - 4;
  while (pos < end) {
    const auto len = static_cast<std::size_t>(std::min<std::uint64_t>(kChunk, end - pos));
    read_at(pos, buf.data(), len);
    crc = detail::crc32_update(crc, buf.data(), len);
    pos += len;
  }
  std::uint8_t tail[4];
  read_at(end, tail, 4);
  if (detail::load_le<std::uint32_t>(tail) != crc) throw FormatError("trajectory: CRC mismatch in " + path_);
}

TrajectoryHeader read_header(const std::string& path) { return TrajectoryReader(path).header(); }

TrajectoryLog load_trajectory(const std::string& path) {
  TrajectoryReader reader(path);
  reader.verify();
  TrajectoryLog log(reader.header());
  std::vector<float> block(reader.header().block_values());
  for (std::uint32_t i = 0; i < reader.header().block_count(); ++i) {
    reader.read_block(i, block);
    log.append_block(block);
  }
  return log;
}

// ---------------------------------------------------------------------------
// Score tables

std::string_view method_name(ScoreMethod method) {
  switch (method) {
    case ScoreMethod::TDDS: return "tdds";
    case ScoreMethod::Random: return "random";
    case ScoreMethod::Entropy: return "entropy";
    case ScoreMethod::Forgetting: return "forgetting";
    case ScoreMethod::EL2N: return "el2n";
    case ScoreMethod::AUM: return "aum";
    case ScoreMethod::DynUnc: return "dynunc";
  }
  return "unknown";
}

ScoreMethod parse_method(std::string_view name) {
  for (std::uint16_t m = 0; m <= static_cast<std::uint16_t>(ScoreMethod::DynUnc); ++m) {
    if (method_name(static_cast<ScoreMethod>(m)) == name) return static_cast<ScoreMethod>(m);
  }
  if (name == "dyn-unc") return ScoreMethod::DynUnc;
  throw ParameterError("unknown scoring method '" + std::string(name) + "'");
}

std::uint64_t write_scores(const ScoreTable& table, std::ostream& os) {
  for (std::size_t i = 0; i < table.scores.size(); ++i) {
    if (!std::isfinite(table.scores[i])) {
      throw DataError("scores: non-finite score at index " + std::to_string(i));
    }
  }
  detail::ByteWriter w(os, kScoresMagic);
  w.u32(kFormatVersion);
  w.u16(static_cast<std::uint16_t>(table.method));
  w.u16(0);
  w.u32(table.params.epochs);
  w.u32(table.params.window);
  w.f32(table.params.beta);
  w.u64(table.scores.size());
  for (double s : table.scores) w.f64(s);
  return w.finish();
}

ScoreTable parse_scores(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic(kScoresMagic, "scores");
  r.verify_crc("scores");
  const auto version = r.u32();
  if (version != kFormatVersion) throw FormatError("scores: unsupported version " + std::to_string(version));
  ScoreTable t;
  const auto method = r.u16();
  if (method > static_cast<std::uint16_t>(ScoreMethod::DynUnc)) {
    throw FormatError("scores: unknown method id " + std::to_string(method));
  }
  t.method = static_cast<ScoreMethod>(method);
  if (r.u16() != 0) throw FormatError("scores: reserved field is nonzero");
  t.params.epochs = r.u32();
  t.params.window = r.u32();
  t.params.beta = r.f32();
  const auto n = r.u64();
  if (r.remaining() < 4 || n > (r.remaining() - 4) / 8 || r.remaining() - 4 != 8 * n) {
    throw FormatError("scores: size does not match N=" + std::to_string(n));
  }
  t.scores.resize(n);
  for (auto& s : t.scores) {
    s = r.f64();
    if (!std::isfinite(s)) throw FormatError("scores: non-finite score");
  }
  return t;
}

ScoreTable read_scores(const std::string& path) { return parse_scores(detail::read_file(path)); }

void write_scores_csv(const ScoreTable& table, std::ostream& os) {
  os << "index,score\n";
  for (std::size_t i = 0; i < table.scores.size(); ++i) {
    os << i << ',' << detail::format_double(table.scores[i]) << '\n';
  }
  if (!os) throw IoError("write failed");
}

ScoreTable read_scores_csv(const std::string& path) {
  const auto rows = detail::read_csv(path, {"index", "score"});
  ScoreTable t;
  t.scores.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (detail::parse_u64(rows[i][0]) != i) throw FormatError("scores csv: indices must be 0..N-1 in order");
    t.scores[i] = detail::parse_double(rows[i][1]);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Coresets

void Coreset::validate() const {
  if (indices.size() != weights.size()) throw FormatError("coreset: indices and weights differ in length");
  if (indices.empty()) throw FormatError("coreset: empty");
  if (indices.size() > n_total) {
    throw FormatError("coreset: M=" + std::to_string(indices.size()) + " exceeds N=" + std::to_string(n_total));
  }
  if (!(pruning_rate > 0.0f && pruning_rate < 1.0f)) throw FormatError("coreset: pruning rate outside (0,1)");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= n_total) throw FormatError("coreset: index " + std::to_string(indices[i]) + " >= N");
    if (i > 0 && indices[i] <= indices[i - 1]) {
      throw FormatError(indices[i] == indices[i - 1]
                            ? "coreset: duplicate index " + std::to_string(indices[i])
                            : std::string("coreset: indices not strictly increasing"));
    }
    if (!std::isfinite(weights[i])) throw FormatError("coreset: non-finite weight");
  }
}

std::uint64_t write_coreset(const Coreset& c, std::ostream& os) {
  c.validate();
  detail::ByteWriter w(os, kCoresetMagic);
  w.u32(kFormatVersion);
  w.u64(c.n_total);
  w.u64(c.indices.size());
  w.f32(c.pruning_rate);
  w.u32(0);
  for (std::size_t i = 0; i < c.indices.size(); ++i) {
    w.u64(c.indices[i]);
    w.f64(c.weights[i]);
  }
  return w.finish();
}

Coreset parse_coreset(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  r.expect_magic(kCoresetMagic, "coreset");
  r.verify_crc("coreset");
  const auto version = r.u32();
  if (version != kFormatVersion) throw FormatError("coreset: unsupported version " + std::to_string(version));
  Coreset c;
  c.n_total = r.u64();
  const auto m = r.u64();
  c.pruning_rate = r.f32();
  if (r.u32() != 0) throw FormatError("coreset: reserved field is nonzero");
  if (r.remaining() < 4 || m > (r.remaining() - 4) / 16 || r.remaining() - 4 != 16 * m) {
    throw FormatError("coreset: size does not match M=" + std::to_string(m));
  }
  c.indices.resize(m);
  c.weights.resize(m);
  for (std::uint64_t i = 0; i < m; ++i) {
    c.indices[i] = r.u64();
    c.weights[i] = r.f64();
  }
  c.validate();
  return c;
}

Coreset read_coreset(const std::string& path) { return parse_coreset(detail::read_file(path)); }

void write_coreset_csv(const Coreset& c, std::ostream& os) {
  c.validate();
  os << "index,weight\n";
  for (std::size_t i = 0; i < c.indices.size(); ++i) {
    os << c.indices[i] << ',' << detail::format_double(c.weights[i]) << '\n';
  }
  if (!os) throw IoError("write failed");
}

Coreset read_coreset_csv(const std::string& path, std::uint64_t n_total) {
  const auto rows = detail::read_csv(path, {"index", "weight"});
  Coreset c;
  c.n_total = n_total;
  for (const auto& row : rows) {
    c.indices.push_back(detail::parse_u64(row[0]));
    c.weights.push_back(detail::parse_double(row[1]));
  }
  if (n_total > 0) {
    c.pruning_rate = static_cast<float>(1.0 - static_cast<double>(rows.size()) / static_cast<double>(n_total));
  }
  c.validate();
  return c;
}

}  // namespace dynaprune
