#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dtplace/canvas.hpp"
#include "dtplace/netlist.hpp"
#include "dtplace/vgae.hpp"

namespace dtplace::data {

// ---------------------------------------------------------------------------
// Proxy expert collectors
// ---------------------------------------------------------------------------

/// Weights softmax(-wire_raw / temperature) over feasible cells; temperature
/// 0 is the one-hot argmin with the lowest-index tie-break.
PolicyFn wire_greedy_policy(double temperature);

/// Uniform over feasible cells.
PolicyFn uniform_policy();

/// One greedy rollout. A dead-end retries with a derived seed up to
/// `max_attempts` times, then throws DeadEndError. The returned trajectory
/// records the seed that succeeded.
Trajectory collect_greedy(const Netlist& netlist, const GridSpec& grid, std::uint64_t seed,
                          double temperature, int max_attempts = 8, int max_macros = 256);

struct AnnealConfig {
  int iterations = 200;
  double cooling = 0.97;     // temperature multiplier per iteration
  double start_fraction = 0.1;  // initial temperature as a fraction of the start HPWL
  double greedy_temperature = 0.0;
};

/// Simulated-annealing refinement of a greedy trajectory: each move re-anchors
/// one macro at a random feasible cell and repairs the later steps (keeping
/// their old cells when still legal, else the greedy choice). Returns the best
/// sequence seen.
Trajectory collect_annealed(const Netlist& netlist, const GridSpec& grid, std::uint64_t seed,
                            const AnnealConfig& config, int max_macros = 256);

// ---------------------------------------------------------------------------
// Offline dataset
// ---------------------------------------------------------------------------

struct CollectorConfig {
  Collector kind = Collector::kStochasticGreedy;
  double temperature = 0.1;
  AnnealConfig anneal;
};

struct DatasetConfig {
  int per_circuit = 500;
  std::uint64_t seed = 0;
  int grid = 84;
  int max_macros = 256;
  CollectorConfig collector;
};

struct CircuitEntry {
  Netlist netlist;
  vgae::CircuitToken token;
  std::vector<Trajectory> trajectories;
};

struct OfflineDataset {
  DatasetConfig config;
  std::vector<CircuitEntry> circuits;

  const CircuitEntry& circuit(std::string_view id) const;
};

/// Collects `per_circuit` trajectories per circuit with `workers` threads.
/// Trajectory j of circuit i uses seed mix_seed(config.seed, i * per_circuit + j),
/// so the result does not depend on the worker count. Tokens come from
/// `encoder`. Throws naming the circuit when any collection fails.
OfflineDataset build_dataset(const std::vector<Netlist>& circuits, const DatasetConfig& config,
                             const vgae::Encoder<float>& encoder, int workers = 1);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

/// Binary trajectory file: "DTPTRAJ1", u32 version, u32 grid n, u32 count,
/// then per trajectory u64 seed, u8 collector, u32 length, u16 actions,
/// f32 rewards, f64 return, i32 final HPWL. Little-endian throughout.
std::string encode_trajectories(const std::vector<Trajectory>& trajectories, int grid);
std::vector<Trajectory> decode_trajectories(std::string_view bytes, const std::string& circuit_id,
                                            int* grid = nullptr);

/// Directory layout:
///   manifest.json              counts, grid, collector config, checksums, tokens
///   circuits/<id>.netlist      canonical netlist text
///   trajectories/<id>.traj     trajectory file
void write_dataset(const OfflineDataset& dataset, const std::filesystem::path& dir);
/// Verifies every checksum; throws ValidationError on mismatch and IoError on
/// missing files.
OfflineDataset read_dataset(const std::filesystem::path& dir);

/// Re-executes every trajectory; throws IllegalActionError or ValidationError
/// naming the circuit and trajectory on the first mismatch. Returns the number
/// of trajectories checked.
int validate_replay(const OfflineDataset& dataset);

// ---------------------------------------------------------------------------
// Finetuning replay buffers
// ---------------------------------------------------------------------------

/// Keeps the highest-return trajectories. Over capacity, the minimum-return
/// entry leaves (possibly the one just inserted); among equal returns the
/// older entry leaves first.
class PriorityBuffer {
 public:
  explicit PriorityBuffer(std::size_t capacity = 64);

  /// Throws ValidationError for dead-ended trajectories.
  std::optional<Trajectory> insert(Trajectory trajectory);

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  double min_return() const;
  double max_return() const;
  /// Entries from lowest to highest return.
  std::vector<const Trajectory*> items() const;

 private:
  struct Entry {
    double ret;
    std::uint64_t seq;
    Trajectory trajectory;
    bool operator<(const Entry& o) const { return ret != o.ret ? ret < o.ret : seq < o.seq; }
  };
  std::size_t capacity_;
  std::uint64_t next_seq_ = 0;
  std::set<Entry> entries_;
};

/// First-in first-out counterpart used by the buffer ablation.
class FifoBuffer {
 public:
  explicit FifoBuffer(std::size_t capacity = 64);
  std::optional<Trajectory> insert(Trajectory trajectory);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  double min_return() const;
  double max_return() const;
  std::vector<const Trajectory*> items() const;

 private:
  std::size_t capacity_;
  std::deque<Trajectory> entries_;
};

struct WeightConfig {
  double alpha = 1e-2;
  bool standardize = true;        // z-score returns over the buffer first
  bool batch_expectation = true;  // normalize by the batch mean, else the buffer mean
};

/// omega = exp(R / alpha) / E[exp(R / alpha)], evaluated in log space.
/// `batch` are the sampled returns, `pool` the whole buffer.
std::vector<double> omega_weights(const std::vector<double>& batch, const std::vector<double>& pool,
                                  const WeightConfig& config);

struct SampledBatch {
  std::vector<const Trajectory*> items;
  std::vector<double> weights;
};

/// Uniform sampling with replacement plus omega weights.
SampledBatch buffer_sample(const std::vector<const Trajectory*>& pool, int batch_size,
                           std::uint64_t seed, const WeightConfig& config);

}  // namespace dtplace::data
