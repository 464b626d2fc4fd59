#include "dtplace/training.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include "dtplace/errors.hpp"

namespace dtplace::training {

using model::Episode;
using model::Policy;

std::vector<TrajectoryRef> all_trajectories(const data::OfflineDataset& dataset) {
  std::vector<TrajectoryRef> refs;
  for (std::size_t c = 0; c < dataset.circuits.size(); ++c)
    for (std::size_t i = 0; i < dataset.circuits[c].trajectories.size(); ++i)
      refs.push_back({static_cast<int>(c), static_cast<int>(i)});
  return refs;
}

namespace {

using MaskSeq = std::vector<MaskSet>;

MaskSeq masks_along(const Netlist& netlist, const GridSpec& grid, std::span<const Action> actions) {
  PlacementState state = reset(netlist, grid);
  MaskSeq out;
  out.reserve(actions.size());
  for (Action a : actions) {
    out.push_back(masks(state));
    apply_action(state, a);
  }
  return out;
}

// States of stored trajectories, kept while they fit in the memory budget.
class StateCache {
 public:
  explicit StateCache(const data::OfflineDataset& ds, std::size_t budget = std::size_t{1} << 30)
      : ds_(ds), budget_(budget) {
    for (const auto& c : ds.circuits) grids_.push_back(GridSpec::for_canvas(c.netlist, ds.config.grid));
  }

  std::shared_ptr<const MaskSeq> get(TrajectoryRef ref) {
    const auto key = std::make_pair(ref.circuit, ref.index);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    const auto& c = ds_.circuits.at(static_cast<std::size_t>(ref.circuit));
    auto seq = std::make_shared<const MaskSeq>(
        masks_along(c.netlist, grids_[static_cast<std::size_t>(ref.circuit)],
                    c.trajectories.at(static_cast<std::size_t>(ref.index)).actions));
    const std::size_t bytes = seq->empty() ? 0 : seq->size() * 4 * seq->front().view.size() * sizeof(double);
    if (used_ + bytes <= budget_) {
      used_ += bytes;
      cache_.emplace(key, seq);
    }
    return seq;
  }

  const GridSpec& grid(int circuit) const { return grids_.at(static_cast<std::size_t>(circuit)); }

 private:
  const data::OfflineDataset& ds_;
  std::size_t budget_;
  std::size_t used_ = 0;
  std::vector<GridSpec> grids_;
  std::map<std::pair<int, int>, std::shared_ptr<const MaskSeq>> cache_;
};

// Episodes plus what keeps their masks alive.
struct Batch {
  std::vector<std::shared_ptr<const MaskSeq>> hold;
  std::vector<Episode> episodes;
  std::vector<Action> targets;
  std::vector<std::string> names;
  std::vector<int> steps;

  // Appends states [start, start + k) of one trajectory; returns k.
  int add(const vgae::CircuitToken& token, std::shared_ptr<const MaskSeq> states,
          std::span<const Action> actions, const std::string& name, int window, Rng& rng) {
    const int T = static_cast<int>(states->size());
    const int k = std::min(T, window);
    const int start = T > window ? static_cast<int>(rng.below(static_cast<std::uint64_t>(T - window + 1))) : 0;
    Episode e;
    e.token = &token;
    for (int i = start; i < start + k; ++i) {
      e.states.push_back(&(*states)[static_cast<std::size_t>(i)]);
      e.actions.push_back(actions[static_cast<std::size_t>(i)]);
      targets.push_back(actions[static_cast<std::size_t>(i)]);
    }
    episodes.push_back(std::move(e));
    names.push_back(name);
    steps.push_back(k);
    hold.push_back(std::move(states));
    return k;
  }
};

double learning_rate(const PretrainConfig& c, int step) {
  if (c.warmup_steps <= 0) return c.lr;
  return c.lr * std::min(1.0, static_cast<double>(step + 1) / c.warmup_steps);
}

std::string join(const std::vector<std::string>& names) {
  std::vector<std::string> u = names;
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  std::string out;
  for (const auto& s : u) out += (out.empty() ? "" : ", ") + s;
  return out;
}

}  // namespace

void PretrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("pretrain config: " + m); };
  if (batch_size < 1) fail("batch_size must be positive");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (epochs < 1) fail("epochs must be positive");
  if (warmup_steps < 0) fail("warmup_steps must be >= 0");
  if (!(clip_norm > 0.0)) fail("clip_norm must be positive");
}

PretrainResult pretrain(const data::OfflineDataset& dataset, const model::ModelConfig& model_config,
                        const PretrainConfig& config, std::span<const TrajectoryRef> train,
                        const EpochCallback& on_epoch) {
  config.validate();
  model_config.validate();
  if (model_config.grid != dataset.config.grid)
    throw ValidationError("model grid " + std::to_string(model_config.grid) +
                          " differs from dataset grid " + std::to_string(dataset.config.grid));
  std::vector<TrajectoryRef> refs(train.begin(), train.end());
  if (refs.empty()) refs = all_trajectories(dataset);
  if (refs.empty()) throw ValidationError("pretraining needs at least one trajectory");

  PretrainResult result{Policy<float>(model_config, mix_seed(config.seed, 1)), {}};
  auto& policy = result.policy;
  StateCache cache(dataset);
  Rng order_rng(mix_seed(config.seed, 2));
  Rng window_rng(mix_seed(config.seed, 3));
  Rng dropout_rng(mix_seed(config.seed, 4));
  Rng* dropout = model_config.dropout > 0.0 ? &dropout_rng : nullptr;
  ad::AdamState<float> adam;
  int step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<TrajectoryRef> order = refs;
    order_rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    int batches = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config.batch_size)) {
      Batch batch;
      const std::size_t end = std::min(order.size(), b + static_cast<std::size_t>(config.batch_size));
      for (std::size_t i = b; i < end; ++i) {
        const auto& c = dataset.circuits[static_cast<std::size_t>(order[i].circuit)];
        const auto& t = c.trajectories[static_cast<std::size_t>(order[i].index)];
        batch.add(c.token, cache.get(order[i]), t.actions, c.netlist.name, model_config.window,
                  window_rng);
      }
      const std::string where = "epoch " + std::to_string(epoch) + " batch " + std::to_string(batches);
      policy.params().zero_grad();
      const auto logits = policy.forward(batch.episodes, dropout);
      const auto loss = model::bc_loss(logits, batch.targets, batch.names, batch.steps);
      const double value = loss.item();
      if (!std::isfinite(value))
        throw NonFiniteError("pretraining loss is not finite at " + where + " (circuits: " +
                             join(batch.names) + ")");
      ad::backward(loss);
      if (!std::isfinite(policy.params().grad_norm()))
        throw NonFiniteError("pretraining gradient is not finite at " + where + " (circuits: " +
                             join(batch.names) + ")");
      policy.params().clip_grad_norm(config.clip_norm);
      ad::adam_step(policy.params(), adam, learning_rate(config, step++));
      total += value;
      ++batches;
    }
    result.epoch_loss.push_back(total / batches);
    if (on_epoch) on_epoch(epoch, result.epoch_loss.back(), policy);
  }
  return result;
}

double action_accuracy(const Policy<float>& policy, const data::OfflineDataset& dataset,
                       std::span<const TrajectoryRef> refs) {
  if (refs.empty()) throw ValidationError("accuracy needs at least one trajectory");
  ad::NoGrad<float> guard;
  StateCache cache(dataset, 0);
  const int window = policy.config().window;
  long hits = 0, total = 0;
  for (const auto& ref : refs) {
    const auto& c = dataset.circuits.at(static_cast<std::size_t>(ref.circuit));
    const auto& t = c.trajectories.at(static_cast<std::size_t>(ref.index));
    const auto states = cache.get(ref);
    const int T = static_cast<int>(states->size());
    auto argmax = [](const auto& row) {
      Eigen::Index best = 0;
      for (Eigen::Index i = 1; i < row.size(); ++i)
        if (row[i] > row[best]) best = i;
      return static_cast<Action>(best);
    };
    if (T <= window) {
      Episode e = model::windowed(c.token, *states, t.actions, window);
      e.actions = t.actions;
      const auto logits = policy.forward(std::span<const Episode>(&e, 1)).value();
      for (int i = 0; i < T; ++i) hits += argmax(logits.row(i)) == t.actions[static_cast<std::size_t>(i)];
    } else {
      for (int i = 0; i < T; ++i) {
        const Episode e = model::windowed(
            c.token, std::span<const MaskSet>(states->data(), static_cast<std::size_t>(i + 1)),
            std::span<const Action>(t.actions.data(), static_cast<std::size_t>(i)), window);
        const auto v = policy.next_logits(e);
        hits += argmax(v) == t.actions[static_cast<std::size_t>(i)];
      }
    }
    total += T;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

double uniform_accuracy(const data::OfflineDataset& dataset, std::span<const TrajectoryRef> refs) {
  StateCache cache(dataset, 0);
  double feasible = 0.0;
  long steps = 0;
  for (const auto& ref : refs) {
    for (const auto& m : *cache.get(ref)) feasible += m.feasible_count();
    steps += static_cast<long>(cache.get(ref)->size());
  }
  if (steps == 0) throw ValidationError("no steps to average");
  return static_cast<double>(steps) / feasible;
}

// ---------------------------------------------------------------------------

void FinetuneConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("finetune config: " + m); };
  if (!(alpha > 0.0)) fail("alpha must be positive");
  if (lambda < 0.0) fail("lambda must be >= 0");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (batch_size < 1) fail("batch_size must be positive");
  if (buffer_capacity < 1) fail("buffer_capacity must be positive");
  if (budget < 1) fail("budget must be >= 1");
  if (steps_per_rollout < 0) fail("steps_per_rollout must be >= 0");
  if (temperature_start < 0.0 || temperature_floor < 0.0) fail("temperatures must be >= 0");
  if (!(temperature_decay > 0.0)) fail("temperature_decay must be positive");
  if (dead_end_window < 1) fail("dead_end_window must be positive");
  if (!(clip_norm > 0.0)) fail("clip_norm must be positive");
}

double FinetuneConfig::temperature(int rollout) const {
  return std::max(temperature_floor, temperature_start * std::pow(temperature_decay, rollout));
}

template <typename S>
ad::Tensor<S> finetune_loss(const ad::Tensor<S>& logits, std::span<const Action> targets,
                            std::span<const double> row_weights, double lambda, double beta) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows() ||
      static_cast<Eigen::Index>(row_weights.size()) != logits.rows())
    throw ShapeError("finetune_loss: one target and one weight per row");
  const auto logp = ad::log_softmax_rows(logits);
  ad::Mat<S> w(logits.rows(), 1);
  for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, 0) = static_cast<S>(row_weights[static_cast<std::size_t>(r)]);
  const auto picked = ad::pick(logp, targets);
  const auto nll = ad::scale(ad::sum(ad::mul(picked, ad::Tensor<S>::constant(w))), -1.0);
  const auto entropy = ad::mean(ad::row_entropy(logp));
  const auto hinge = ad::relu(ad::add_scalar(ad::scale(entropy, -1.0), beta));
  return ad::add(nll, ad::scale(hinge, lambda));
}

template ad::Tensor<float> finetune_loss(const ad::Tensor<float>&, std::span<const Action>,
                                         std::span<const double>, double, double);
template ad::Tensor<double> finetune_loss(const ad::Tensor<double>&, std::span<const Action>,
                                          std::span<const double>, double, double);

namespace {

class Buffer {
 public:
  Buffer(BufferKind kind, std::size_t capacity) : kind_(kind), priority_(capacity), fifo_(capacity) {}

  void insert(Trajectory t) {
    if (kind_ == BufferKind::kPriority)
      priority_.insert(std::move(t));
    else
      fifo_.insert(std::move(t));
  }
  std::vector<const Trajectory*> items() const {
    return kind_ == BufferKind::kPriority ? priority_.items() : fifo_.items();
  }
  double min_return() const {
    return kind_ == BufferKind::kPriority ? priority_.min_return() : fifo_.min_return();
  }
  double max_return() const {
    return kind_ == BufferKind::kPriority ? priority_.max_return() : fifo_.max_return();
  }

 private:
  BufferKind kind_;
  data::PriorityBuffer priority_;
  data::FifoBuffer fifo_;
};

Policy<float> clone(const Policy<float>& p) {
  Policy<float> out(p.config(), 0);
  out.params().copy_from(p.params());
  return out;
}

}  // namespace

FinetuneResult finetune(const Policy<float>& start, const Netlist& circuit,
                        const vgae::CircuitToken& token, const FinetuneConfig& config,
                        std::uint64_t seed) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  FinetuneResult result{clone(start), {}, {}, {}};
  auto& policy = result.policy;
  auto& rec = result.record;
  rec.circuit_id = circuit.name;
  rec.best_hpwl = std::numeric_limits<double>::infinity();
  const GridSpec grid = GridSpec::for_canvas(circuit, policy.config().grid);
  const int window = policy.config().window;

  Buffer buffer(config.buffer, static_cast<std::size_t>(config.buffer_capacity));
  std::map<const Trajectory*, std::shared_ptr<const MaskSeq>> states;
  const data::WeightConfig weights{config.alpha, config.standardize_returns, config.batch_expectation};
  ad::AdamState<float> adam;
  Rng window_rng(mix_seed(seed, 0x5eed));
  std::deque<bool> recent;
  int recent_dead = 0;

  for (int i = 0; i < config.budget; ++i) {
    const auto policy_fn = model::make_policy_fn(policy, token, config.temperature(i));
    Trajectory traj = rollout(policy_fn, circuit, grid, mix_seed(seed, static_cast<std::uint64_t>(i)));
    ++rec.rollouts;
    recent.push_back(traj.dead_end);
    recent_dead += traj.dead_end;
    if (static_cast<int>(recent.size()) > config.dead_end_window) {
      recent_dead -= recent.front();
      recent.pop_front();
    }
    if (static_cast<int>(recent.size()) == config.dead_end_window && 2 * recent_dead > config.dead_end_window)
      throw DeadEndError("circuit '" + circuit.name + "': " + std::to_string(recent_dead) + " of the last " +
                         std::to_string(config.dead_end_window) + " rollouts dead-ended");
    if (traj.dead_end) {
      ++rec.dead_ends;
    } else {
      const double h = traj.final_hpwl;
      rec.trace.push_back(h);
      if (h < rec.best_hpwl) {
        rec.best_hpwl = h;
        rec.best_actions = traj.actions;
      }
      traj.collector = Collector::kLearned;
      buffer.insert(std::move(traj));
      result.buffer_min.push_back(buffer.min_return());
      result.buffer_best.push_back(buffer.max_return());
      // drop the states of evicted entries, add the new one's
      const auto items = buffer.items();
      std::map<const Trajectory*, std::shared_ptr<const MaskSeq>> kept;
      for (const auto* it : items) {
        auto found = states.find(it);
        kept[it] = found != states.end() ? found->second
                                         : std::make_shared<const MaskSeq>(masks_along(circuit, grid, it->actions));
      }
      states = std::move(kept);
    }
    if (i + 1 == config.budget || states.empty()) continue;

    for (int k = 0; k < config.steps_per_rollout; ++k) {
      const auto sample = data::buffer_sample(
          buffer.items(), config.batch_size,
          mix_seed(seed, (static_cast<std::uint64_t>(i) << 20) + static_cast<std::uint64_t>(k) + 1), weights);
      Batch batch;
      std::vector<double> row_weights;
      const double per_batch = 1.0 / static_cast<double>(sample.items.size());
      for (std::size_t j = 0; j < sample.items.size(); ++j) {
        const Trajectory* t = sample.items[j];
        const int rows = batch.add(token, states.at(t), t->actions, circuit.name, window, window_rng);
        row_weights.insert(row_weights.end(), static_cast<std::size_t>(rows),
                           sample.weights[j] * per_batch / rows);
      }
      policy.params().zero_grad();
      const auto logits = policy.forward(batch.episodes);
      const auto loss = finetune_loss(logits, batch.targets, row_weights, config.lambda, config.beta);
      if (!std::isfinite(loss.item()))
        throw NonFiniteError("finetuning loss is not finite on circuit '" + circuit.name +
                             "' after rollout " + std::to_string(i));
      ad::backward(loss);
      policy.params().clip_grad_norm(config.clip_norm);
      ad::adam_step(policy.params(), adam, config.lr);
    }
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

AblationResult buffer_ablation(const Policy<float>& start, const Netlist& circuit,
                               const vgae::CircuitToken& token, FinetuneConfig config,
                               std::uint64_t seed) {
  config.buffer = BufferKind::kPriority;
  FinetuneResult priority = finetune(start, circuit, token, config, seed);
  config.buffer = BufferKind::kFifo;
  FinetuneResult fifo = finetune(start, circuit, token, config, seed);
  return {std::move(priority), std::move(fifo)};
}

// ---------------------------------------------------------------------------

MetricsReport report_for(const Netlist& netlist, const GridSpec& grid, std::span<const Action> actions) {
  const PlacementState state = replay_state(netlist, grid, actions);
  const Trajectory traj = replay(netlist, grid, actions);
  return evaluate_placement(state, netlist, traj);
}

std::vector<CircuitEval> evaluate(const Policy<float>& policy, std::span<const EvalCircuit> circuits,
                                  const EvalConfig& config) {
  if (config.budget < 1) throw ValidationError("evaluation budget must be >= 1");
  if (config.seeds.empty()) throw ValidationError("evaluation needs at least one seed");
  const std::size_t per = config.seeds.size();
  const std::size_t jobs = circuits.size() * per;
  std::vector<EvalRecord> records(jobs);
  std::vector<MetricsReport> reports(jobs);
  std::vector<std::string> errors(jobs);
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    ad::NoGrad<float> guard;
    for (std::size_t job = next++; job < jobs; job = next++) {
      const EvalCircuit& c = circuits[job / per];
      const std::uint64_t seed = config.seeds[job % per];
      try {
        const auto t0 = std::chrono::steady_clock::now();
        const GridSpec grid = GridSpec::for_canvas(*c.netlist, policy.config().grid);
        EvalRecord rec;
        rec.circuit_id = c.netlist->name;
        rec.best_hpwl = std::numeric_limits<double>::infinity();
        for (int i = 0; i < config.budget; ++i) {
          const auto fn = model::make_policy_fn(policy, c.token, config.temperature);
          const Trajectory t = rollout(fn, *c.netlist, grid, mix_seed(seed, static_cast<std::uint64_t>(i)));
          ++rec.rollouts;
          if (t.dead_end) {
            ++rec.dead_ends;
            continue;
          }
          rec.trace.push_back(t.final_hpwl);
          if (t.final_hpwl < rec.best_hpwl) {
            rec.best_hpwl = t.final_hpwl;
            rec.best_actions = t.actions;
          }
        }
        if (rec.trace.empty())
          throw DeadEndError("every rollout on circuit '" + rec.circuit_id + "' dead-ended");
        reports[job] = report_for(*c.netlist, grid, rec.best_actions);
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        records[job] = std::move(rec);
      } catch (const std::exception& e) {
        errors[job] = e.what();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(config.workers, static_cast<int>(jobs)));
  {
    std::vector<std::jthread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(work);
    work();
  }
  for (const auto& e : errors)
    if (!e.empty()) throw DeadEndError(e);

  std::vector<CircuitEval> out;
  for (std::size_t c = 0; c < circuits.size(); ++c) {
    CircuitEval ev;
    ev.circuit_id = circuits[c].netlist->name;
    double sum = 0.0;
    for (std::size_t s = 0; s < per; ++s) {
      ev.records.push_back(records[c * per + s]);
      ev.best.push_back(reports[c * per + s]);
      sum += ev.records.back().best_hpwl;
    }
    ev.mean_hpwl = sum / static_cast<double>(per);
    double var = 0.0;
    for (const auto& r : ev.records) var += (r.best_hpwl - ev.mean_hpwl) * (r.best_hpwl - ev.mean_hpwl);
    ev.std_hpwl = per > 1 ? std::sqrt(var / static_cast<double>(per - 1)) : 0.0;
    out.push_back(std::move(ev));
  }
  return out;
}

std::string to_json(const EvalRecord& record) {
  nlohmann::json j;
  j["circuit_id"] = record.circuit_id;
  j["best_hpwl"] = record.best_hpwl;
  j["rollouts"] = record.rollouts;
  j["dead_ends"] = record.dead_ends;
  j["wall_seconds"] = record.wall_seconds;
  j["best_actions"] = record.best_actions;
  return j.dump(2);
}

void write_record(const std::filesystem::path& dir, const EvalRecord& record) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / ("eval_" + record.circuit_id + ".json"));
    if (!os) throw IoError("cannot write to " + dir.string());
    os << to_json(record) << "\n";
  }
  std::ofstream os(dir / ("trace_" + record.circuit_id + ".txt"));
  if (!os) throw IoError("cannot write to " + dir.string());
  for (double h : record.trace) os << h << "\n";
}

}  // namespace dtplace::training
