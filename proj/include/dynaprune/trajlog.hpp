#pragma once

// On-disk formats for training trajectories ("TDLG"), score tables ("TDSC")
// and coresets ("TDCS"), plus streaming readers and writers.
//
// Trajectory layout (all integers and floats little-endian):
//
//   offset  size  field
//   0       4     magic "TDLG"
//   4       4     version u32 = 1
//   8       1     payload_kind u8 (0 = FullProbs, 1 = DeltaMagnitudes)
//   9       1     recording_mode u8 (0 = TrainTime, 1 = EvalTime)
//   10      2     reserved u16 = 0
//   12      8     N u64
//   20      4     C u32
//   24      4     T u32
//   28      4N    labels, u32 each
//   ...           payload: T blocks of N*C f32 (FullProbs, row-major)
//                 or T-1 blocks of N f32 (DeltaMagnitudes)
//   end-4   4     CRC32 (IEEE) of every byte after the magic
//
// Blocks have fixed size, so any epoch can be located in O(1).

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dynaprune {

enum class PayloadKind : std::uint8_t { FullProbs = 0, DeltaMagnitudes = 1 };
enum class RecordingMode : std::uint8_t { TrainTime = 0, EvalTime = 1 };

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::uint64_t kTrajectoryFixedHeaderBytes = 28;
/// Largest tolerated |row sum - 1| for a logged probability row.
inline constexpr double kRowSumTolerance = 1e-4;

struct TrajectoryHeader {
  std::uint64_t n_samples = 0;
  std::uint32_t n_classes = 0;
  std::uint32_t n_epochs = 0;
  PayloadKind payload_kind = PayloadKind::FullProbs;
  RecordingMode recording_mode = RecordingMode::TrainTime;
  std::vector<std::uint32_t> labels;

  /// Number of payload blocks: T for FullProbs, T-1 for DeltaMagnitudes.
  std::uint32_t block_count() const;
  /// Floats per block: N*C for FullProbs, N for DeltaMagnitudes.
  std::uint64_t block_values() const;
  std::uint64_t payload_offset() const { return kTrajectoryFixedHeaderBytes + 4 * n_samples; }
  std::uint64_t file_size() const;

  /// Throws FormatError when the header violates its invariants.
  void validate() const;

  bool operator==(const TrajectoryHeader&) const = default;
};

/// Predicted class probabilities of every sample at one epoch, row-major N x C.
struct ProbMatrix {
  std::uint32_t epoch = 0;
  std::uint64_t n_samples = 0;
  std::uint32_t n_classes = 0;
  std::vector<float> values;

  std::span<const float> row(std::uint64_t n) const {
    return std::span<const float>(values).subspan(n * n_classes, n_classes);
  }
  std::span<float> row(std::uint64_t n) { return std::span<float>(values).subspan(n * n_classes, n_classes); }
};

/// Random-access view over the blocks of a trajectory. Implementations are
/// immutable after construction and safe to read from several threads.
class EpochSource {
 public:
  virtual ~EpochSource() = default;
  virtual const TrajectoryHeader& header() const = 0;
  /// Copies block `index` into `out` (size must equal header().block_values()).
  virtual void read_block(std::uint32_t index, std::span<float> out) const = 0;

  /// FullProbs only. Throws RangeError for t >= T.
  ProbMatrix read_epoch(std::uint32_t t) const;
};

/// Receiver for sequentially produced payload blocks.
class BlockSink {
 public:
  virtual ~BlockSink() = default;
  virtual void append_block(std::span<const float> block) = 0;
};

/// Checks one payload block against the header. Throws FormatError on
/// dimension mismatch and DataError on non-finite or non-normalized values.
void validate_block(const TrajectoryHeader& header, std::span<const float> block);

/// Streaming "TDLG" writer. Blocks are validated and written as they arrive,
/// so only one block is ever resident.
class TrajectoryWriter : public BlockSink {
 public:
  TrajectoryWriter(std::ostream& os, TrajectoryHeader header);
  ~TrajectoryWriter() override;
  TrajectoryWriter(const TrajectoryWriter&) = delete;
  TrajectoryWriter& operator=(const TrajectoryWriter&) = delete;

  void append_block(std::span<const float> block) override;
  void append(const ProbMatrix& epoch) { append_block(epoch.values); }
  /// Writes the CRC trailer. Throws FormatError if the block count is short.
  std::uint64_t finish();

  const TrajectoryHeader& header() const;
  std::uint32_t blocks_written() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::uint64_t write_trajectory(const TrajectoryHeader& header, std::span<const ProbMatrix> epochs,
                               std::ostream& os);
std::uint64_t write_trajectory(const TrajectoryHeader& header,
                               const std::vector<std::vector<float>>& blocks, std::ostream& os);

/// Whole trajectory held in memory. Also a BlockSink, so the trainer can log
/// straight into it.
class TrajectoryLog : public EpochSource, public BlockSink {
 public:
  TrajectoryLog() = default;
  explicit TrajectoryLog(TrajectoryHeader header);

  const TrajectoryHeader& header() const override { return header_; }
  void read_block(std::uint32_t index, std::span<float> out) const override;
  void append_block(std::span<const float> block) override;

  std::span<const float> block(std::uint32_t index) const;
  std::uint32_t blocks_stored() const;
  bool complete() const { return blocks_stored() == header_.block_count(); }
  /// Entire payload, block-major.
  const std::vector<float>& payload() const { return payload_; }

  std::uint64_t write(std::ostream& os) const;
  std::uint64_t save(const std::string& path) const;

 private:
  TrajectoryHeader header_;
  std::vector<float> payload_;
};

/// File-backed reader. Opening parses the header and checks that the file
/// size matches; block reads use positioned I/O and never touch shared state.
class TrajectoryReader : public EpochSource {
 public:
  explicit TrajectoryReader(const std::string& path);
  ~TrajectoryReader() override;
  TrajectoryReader(TrajectoryReader&&) noexcept;
  TrajectoryReader& operator=(TrajectoryReader&&) noexcept;

  const TrajectoryHeader& header() const override { return header_; }
  void read_block(std::uint32_t index, std::span<float> out) const override;

  /// Recomputes the CRC over the whole file, streaming. Throws FormatError.
  void verify() const;

 private:
  void read_at(std::uint64_t offset, void* dst, std::size_t len) const;

  std::string path_;
  int fd_ = -1;
  std::uint64_t file_size_ = 0;
  TrajectoryHeader header_;
};

TrajectoryHeader read_header(const std::string& path);
/// Parses a header from the leading bytes of a file image.
TrajectoryHeader parse_header(std::span<const std::uint8_t> bytes);
/// Loads and CRC-verifies a whole trajectory file.
TrajectoryLog load_trajectory(const std::string& path);

// ---------------------------------------------------------------------------
// Score tables

enum class ScoreMethod : std::uint16_t {
  TDDS = 0,
  Random = 1,
  Entropy = 2,
  Forgetting = 3,
  EL2N = 4,
  AUM = 5,
  DynUnc = 6,
};

std::string_view method_name(ScoreMethod method);
/// Accepts the lowercase names printed by method_name. Throws ParameterError.
ScoreMethod parse_method(std::string_view name);

/// Parameters recorded alongside a score table. `window` holds K for TDDS,
/// E for EL2N and J for Dyn-Unc; `epochs` is the number of epochs consumed.
struct ScoreParams {
  std::uint32_t epochs = 0;
  std::uint32_t window = 0;
  float beta = 0.0f;
  bool operator==(const ScoreParams&) const = default;
};

struct ScoreTable {
  ScoreMethod method = ScoreMethod::TDDS;
  ScoreParams params;
  std::vector<double> scores;
  bool operator==(const ScoreTable&) const = default;
};

std::uint64_t write_scores(const ScoreTable& table, std::ostream& os);
ScoreTable parse_scores(std::span<const std::uint8_t> bytes);
ScoreTable read_scores(const std::string& path);
void write_scores_csv(const ScoreTable& table, std::ostream& os);
ScoreTable read_scores_csv(const std::string& path);

// ---------------------------------------------------------------------------
// Coresets

struct Coreset {
  std::uint64_t n_total = 0;
  std::vector<std::uint64_t> indices;  // strictly increasing
  std::vector<double> weights;         // retained scores, same order as indices
  float pruning_rate = 0.0f;

  std::uint64_t size() const { return indices.size(); }
  /// Throws FormatError on duplicate/unsorted/out-of-range indices, M > N,
  /// non-finite weights, or a pruning rate outside (0, 1).
  void validate() const;
  bool operator==(const Coreset&) const = default;
};

std::uint64_t write_coreset(const Coreset& coreset, std::ostream& os);
Coreset parse_coreset(std::span<const std::uint8_t> bytes);
Coreset read_coreset(const std::string& path);
void write_coreset_csv(const Coreset& coreset, std::ostream& os);
/// The CSV mirror carries only (index, weight); N comes from the caller and
/// the pruning rate is reconstructed as 1 - M/N.
Coreset read_coreset_csv(const std::string& path, std::uint64_t n_total);

}  // namespace dynaprune
