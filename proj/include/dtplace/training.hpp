#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dtplace/canvas.hpp"
#include "dtplace/data.hpp"
#include "dtplace/metrics.hpp"
#include "dtplace/model.hpp"

namespace dtplace::training {

struct TrajectoryRef {
  int circuit = 0;
  int index = 0;
};

std::vector<TrajectoryRef> all_trajectories(const data::OfflineDataset& dataset);

// ---------------------------------------------------------------------------
// Offline pretraining
// ---------------------------------------------------------------------------

struct PretrainConfig {
  int batch_size = 32;
  double lr = 6e-4;
  int epochs = 100;
  std::uint64_t seed = 0;
  int warmup_steps = 10;  // linear ramp of the learning rate
  double clip_norm = 1.0;

  void validate() const;
};

struct PretrainResult {
  model::Policy<float> policy;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
};

using EpochCallback = std::function<void(int epoch, double mean_loss, const model::Policy<float>&)>;

/// Behaviour cloning over (circuit, trajectory) pairs, shuffled each epoch.
/// Trajectories longer than the model window contribute one random window
/// per visit. `train` defaults to every trajectory. Throws NonFiniteError
/// naming the epoch, batch and circuits when the loss or gradient diverges.
PretrainResult pretrain(const data::OfflineDataset& dataset, const model::ModelConfig& model_config,
                        const PretrainConfig& config, std::span<const TrajectoryRef> train = {},
                        const EpochCallback& on_epoch = {});

/// Fraction of expert actions that are the policy's argmax when replaying the
/// expert trajectory.
double action_accuracy(const model::Policy<float>& policy, const data::OfflineDataset& dataset,
                       std::span<const TrajectoryRef> refs);

/// Accuracy of a uniform guess over feasible cells: 1 / mean feasible count.
double uniform_accuracy(const data::OfflineDataset& dataset, std::span<const TrajectoryRef> refs);

// ---------------------------------------------------------------------------
// Online finetuning
// ---------------------------------------------------------------------------

enum class BufferKind { kPriority, kFifo };

struct FinetuneConfig {
  double alpha = 1e-2;
  double lambda = 0.5;
  double beta = 0.5;
  double lr = 1e-4;
  int batch_size = 32;
  int buffer_capacity = 64;
  int budget = 300;
  int steps_per_rollout = 4;
  double temperature_start = 1.0;
  double temperature_decay = 0.99;
  double temperature_floor = 0.1;
  int dead_end_window = 20;
  double clip_norm = 1.0;
  BufferKind buffer = BufferKind::kPriority;
  bool standardize_returns = true;
  bool batch_expectation = true;

  void validate() const;
  double temperature(int rollout) const;
};

struct EvalRecord {
  std::string circuit_id;
  double best_hpwl = 0.0;  // grid units
  int rollouts = 0;
  int dead_ends = 0;
  double wall_seconds = 0.0;
  std::vector<double> trace;  // grid HPWL of each completed rollout
  std::vector<Action> best_actions;
};

struct FinetuneResult {
  model::Policy<float> policy;
  EvalRecord record;
  std::vector<double> buffer_min;   // after each completed rollout
  std::vector<double> buffer_best;
};

/// Return-weighted regression with an entropy floor:
///   -sum_r w_r log pi(a_r) + lambda * max(0, beta - mean_r H_r)
/// `row_weights` already include the omega weight and the per-trajectory and
/// per-batch normalization.
template <typename Scalar>
ad::Tensor<Scalar> finetune_loss(const ad::Tensor<Scalar>& logits, std::span<const Action> targets,
                                 std::span<const double> row_weights, double lambda, double beta);

/// Rollout i uses seed mix_seed(seed, i) and the scheduled temperature; each
/// completed rollout enters the buffer and is followed by
/// `steps_per_rollout` updates, except after the last one, so a budget of 1
/// returns the starting parameters. Throws DeadEndError when more than half
/// of a full window of rollouts dead-ends.
FinetuneResult finetune(const model::Policy<float>& start, const Netlist& circuit,
                        const vgae::CircuitToken& token, const FinetuneConfig& config,
                        std::uint64_t seed);

/// Runs the priority and FIFO variants from the same start and seed.
struct AblationResult {
  FinetuneResult priority;
  FinetuneResult fifo;
};
AblationResult buffer_ablation(const model::Policy<float>& start, const Netlist& circuit,
                               const vgae::CircuitToken& token, FinetuneConfig config,
                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalCircuit {
  const Netlist* netlist = nullptr;
  vgae::CircuitToken token;
};

struct EvalConfig {
  int budget = 300;
  double temperature = 1.0;  // 0 = argmax rollouts
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  int workers = 1;
};

struct CircuitEval {
  std::string circuit_id;
  std::vector<EvalRecord> records;     // one per seed
  std::vector<MetricsReport> best;     // metrics of each record's best placement
  double mean_hpwl = 0.0;              // over seeds, grid units
  double std_hpwl = 0.0;
};

/// Best-of-budget sampling without parameter updates.
std::vector<CircuitEval> evaluate(const model::Policy<float>& policy,
                                  std::span<const EvalCircuit> circuits, const EvalConfig& config);

/// Physical metrics of a complete action sequence.
MetricsReport report_for(const Netlist& netlist, const GridSpec& grid, std::span<const Action> actions);

std::string to_json(const EvalRecord& record);
/// Writes eval_<id>.json and trace_<id>.txt (one HPWL per line).
void write_record(const std::filesystem::path& dir, const EvalRecord& record);

}  // namespace dtplace::training
