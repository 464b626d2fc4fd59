#include "dtplace/data.hpp"

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "dtplace/errors.hpp"

namespace dtplace::data {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Collectors

namespace {

Eigen::VectorXd greedy_weights(const MaskSet& m, double temperature) {
  const int cells = m.n() * m.n();
  const double* feasible = m.position.data();
  const double* wire = m.wire_raw.data();
  double best = std::numeric_limits<double>::infinity();
  int best_cell = -1;
  for (int a = 0; a < cells; ++a)
    if (feasible[a] > 0.5 && wire[a] < best) {
      best = wire[a];
      best_cell = a;
    }
  Eigen::VectorXd w = Eigen::VectorXd::Zero(cells);
  if (best_cell < 0) return w;
  if (temperature <= 0.0) {
    w[best_cell] = 1.0;
    return w;
  }
  for (int a = 0; a < cells; ++a)
    if (feasible[a] > 0.5) w[a] = std::exp(-(wire[a] - best) / temperature);
  return w;
}

Action argmin_wire(const MaskSet& m) {
  const Eigen::VectorXd w = greedy_weights(m, 0.0);
  Eigen::Index idx = 0;
  if (w.maxCoeff(&idx) <= 0.0) return -1;
  return static_cast<Action>(idx);
}

}  // namespace

PolicyFn wire_greedy_policy(double temperature) {
  return [temperature](const PolicyInput& in, Rng&) { return greedy_weights(in.current, temperature); };
}

PolicyFn uniform_policy() {
  return [](const PolicyInput& in, Rng&) -> Eigen::VectorXd {
    return Eigen::Map<const Eigen::VectorXd>(in.current.position.data(), in.current.position.size());
  };
}

Trajectory collect_greedy(const Netlist& netlist, const GridSpec& grid, std::uint64_t seed,
                          double temperature, int max_attempts, int max_macros) {
  const auto policy = wire_greedy_policy(temperature);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const std::uint64_t s = attempt == 0 ? seed : mix_seed(seed, static_cast<std::uint64_t>(attempt));
    Trajectory t = rollout(policy, netlist, grid, s, max_macros);
    if (t.dead_end) continue;
    t.collector = temperature > 0.0 ? Collector::kStochasticGreedy : Collector::kGreedy;
    return t;
  }
  throw DeadEndError("circuit '" + netlist.name + "': every one of " + std::to_string(max_attempts) +
                     " greedy attempts hit a dead end");
}

namespace {

// Replays `actions` from step `from`, keeping each old cell when it is still
// legal and otherwise taking the greedy cell. Returns false on a dead end.
bool repair(PlacementState& state, std::vector<Action>& actions, std::size_t from) {
  for (std::size_t j = from; j < actions.size(); ++j) {
    try {
      apply_action(state, actions[j]);
      continue;
    } catch (const IllegalActionError&) {
    }
    const Action a = argmin_wire(masks(state));
    if (a < 0) return false;
    apply_action(state, a);
    actions[j] = a;
  }
  return true;
}

}  // namespace

Trajectory collect_annealed(const Netlist& netlist, const GridSpec& grid, std::uint64_t seed,
                            const AnnealConfig& config, int max_macros) {
  const Trajectory start =
      collect_greedy(netlist, grid, seed, config.greedy_temperature, 8, max_macros);
  std::vector<Action> current = start.actions;
  int current_cost = start.final_hpwl;
  std::vector<Action> best = current;
  int best_cost = current_cost;
  const std::size_t horizon = current.size();

  Rng rng(mix_seed(seed, 0xa11ea1));
  double temp = config.start_fraction * std::max(1, current_cost);
  for (int it = 0; it < config.iterations && horizon > 0; ++it, temp *= config.cooling) {
    std::vector<Action> cand = current;
    std::size_t from = rng.below(horizon);
    PlacementState state =
        replay_state(netlist, grid, std::span<const Action>(cand.data(), from), max_macros);
    if (horizon > 1 && rng.uniform() < 0.5) {
      // swap the anchors of two macros
      std::size_t other = rng.below(horizon - 1);
      if (other >= from) ++other;
      if (other < from) {
        std::swap(other, from);
        state = replay_state(netlist, grid, std::span<const Action>(cand.data(), from), max_macros);
      }
      std::swap(cand[from], cand[other]);
    } else {
      // move one macro to a random feasible cell
      const MaskSet m = masks(state);
      const int feasible = m.feasible_count();
      if (feasible == 0) continue;
      std::uint64_t k = rng.below(static_cast<std::uint64_t>(feasible));
      for (int a = 0; a < grid.cells(); ++a)
        if (m.position.data()[a] > 0.5 && k-- == 0) {
          cand[from] = a;
          break;
        }
    }
    if (!repair(state, cand, from)) continue;
    const int cost = grid_hpwl(state);
    const double delta = cost - current_cost;
    if (delta <= 0.0 || rng.uniform() < std::exp(-delta / std::max(temp, 1e-12))) {
      current = std::move(cand);
      current_cost = cost;
      if (cost < best_cost) {
        best = current;
        best_cost = cost;
      }
    }
  }

  Trajectory t = replay(netlist, grid, best, max_macros);
  t.seed = start.seed;
  t.collector = Collector::kAnnealed;
  return t;
}

// ---------------------------------------------------------------------------
// Dataset

const CircuitEntry& OfflineDataset::circuit(std::string_view id) const {
  for (const auto& c : circuits)
    if (c.netlist.name == id) return c;
  throw ValidationError("dataset has no circuit '" + std::string(id) + "'");
}

namespace {

Trajectory collect_one(const Netlist& netlist, const GridSpec& grid, std::uint64_t seed,
                       const DatasetConfig& config) {
  switch (config.collector.kind) {
    case Collector::kGreedy:
      return collect_greedy(netlist, grid, seed, 0.0, 8, config.max_macros);
    case Collector::kStochasticGreedy:
      return collect_greedy(netlist, grid, seed, config.collector.temperature, 8, config.max_macros);
    case Collector::kAnnealed:
      return collect_annealed(netlist, grid, seed, config.collector.anneal, config.max_macros);
    case Collector::kLearned:
      break;
  }
  throw ValidationError("the learned collector cannot build an offline dataset");
}

void check_id(const std::string& id) {
  if (id.empty() || id.find_first_of("/\\") != std::string::npos || id == "." || id == "..")
    throw ValidationError("circuit name '" + id + "' cannot be used as a file name");
}

}  // namespace

OfflineDataset build_dataset(const std::vector<Netlist>& circuits, const DatasetConfig& config,
                             const vgae::Encoder<float>& encoder, int workers) {
  if (config.per_circuit < 1) throw ValidationError("per_circuit must be at least 1");
  if (config.grid < 1 || config.grid > 256) throw ValidationError("grid must be in [1, 256]");
  OfflineDataset ds;
  ds.config = config;
  std::vector<GridSpec> grids;
  for (const auto& nl : circuits) {
    check_id(nl.name);
    for (const auto& c : ds.circuits)
      if (c.netlist.name == nl.name) throw ValidationError("duplicate circuit '" + nl.name + "'");
    ds.circuits.push_back({nl, vgae::circuit_token(to_graph(nl), encoder),
                           std::vector<Trajectory>(static_cast<std::size_t>(config.per_circuit))});
    grids.push_back(GridSpec::for_canvas(nl, config.grid));
  }

  const std::size_t per = static_cast<std::size_t>(config.per_circuit);
  const std::size_t jobs = circuits.size() * per;
  std::vector<std::string> errors(jobs);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t job = next++; job < jobs; job = next++) {
      const std::size_t i = job / per, j = job % per;
      try {
        ds.circuits[i].trajectories[j] =
            collect_one(circuits[i], grids[i], mix_seed(config.seed, job), config);
      } catch (const std::exception& e) {
        errors[job] = e.what();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(workers, static_cast<int>(jobs)));
  std::vector<std::jthread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  pool.clear();

  std::ostringstream report;
  int failed = 0;
  for (std::size_t job = 0; job < jobs; ++job)
    if (!errors[job].empty()) {
      if (failed++ < 5) report << "\n  " << errors[job];
    }
  if (failed > 0)
    throw ValidationError("dataset rejected: " + std::to_string(failed) +
                          " trajectories could not be collected" + report.str());
  return ds;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

namespace {

constexpr char kTrajMagic[8] = {'D', 'T', 'P', 'T', 'R', 'A', 'J', '1'};
constexpr std::uint32_t kTrajVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

class Reader {
 public:
  Reader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw ValidationError(what_ + ": truncated file");
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw ValidationError(what_ + ": truncated file");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Collector collector_from_string(std::string_view s) {
  for (auto c : {Collector::kGreedy, Collector::kStochasticGreedy, Collector::kAnnealed,
                 Collector::kLearned})
    if (to_string(c) == s) return c;
  throw ValidationError("unknown collector '" + std::string(s) + "'");
}

}  // namespace

std::string encode_trajectories(const std::vector<Trajectory>& trajectories, int grid) {
  std::string out(kTrajMagic, sizeof(kTrajMagic));
  put<std::uint32_t>(out, kTrajVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(grid));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(trajectories.size()));
  for (const auto& t : trajectories) {
    if (t.dead_end) throw ValidationError("dead-ended trajectories cannot be stored");
    put<std::uint64_t>(out, t.seed);
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.collector));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.actions.size()));
    for (Action a : t.actions) {
      if (a < 0 || a >= grid * grid) throw ValidationError("action out of range");
      put<std::uint16_t>(out, static_cast<std::uint16_t>(a));
    }
    for (double r : t.rewards) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(r)));
    put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(t.return_R));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.final_hpwl));
  }
  return out;
}

std::vector<Trajectory> decode_trajectories(std::string_view bytes, const std::string& circuit_id,
                                            int* grid) {
  Reader in(bytes, "trajectories of '" + circuit_id + "'");
  if (in.take(sizeof(kTrajMagic)) != std::string_view(kTrajMagic, sizeof(kTrajMagic)))
    throw ValidationError("trajectories of '" + circuit_id + "': bad magic");
  if (const auto v = in.get<std::uint32_t>(); v != kTrajVersion)
    throw ValidationError("trajectories of '" + circuit_id + "': unsupported version " +
                          std::to_string(v));
  const auto n = static_cast<int>(in.get<std::uint32_t>());
  if (grid) *grid = n;
  const auto count = in.get<std::uint32_t>();
  std::vector<Trajectory> out;
  for (std::uint32_t k = 0; k < count; ++k) {
    Trajectory t;
    t.circuit_id = circuit_id;
    t.seed = in.get<std::uint64_t>();
    const auto c = in.get<std::uint8_t>();
    if (c > static_cast<std::uint8_t>(Collector::kLearned))
      throw ValidationError("trajectories of '" + circuit_id + "': bad collector tag");
    t.collector = static_cast<Collector>(c);
    const auto len = in.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < len; ++i) t.actions.push_back(in.get<std::uint16_t>());
    for (std::uint32_t i = 0; i < len; ++i)
      t.rewards.push_back(std::bit_cast<float>(in.get<std::uint32_t>()));
    t.return_R = std::bit_cast<double>(in.get<std::uint64_t>());
    t.final_hpwl = static_cast<int>(in.get<std::uint32_t>());
    out.push_back(std::move(t));
  }
  if (!in.at_end()) throw ValidationError("trajectories of '" + circuit_id + "': trailing bytes");
  return out;
}

void write_dataset(const OfflineDataset& dataset, const fs::path& dir) {
  fs::create_directories(dir / "circuits");
  fs::create_directories(dir / "trajectories");
  const auto& cfg = dataset.config;
  json manifest;
  manifest["format"] = "dtplace-dataset";
  manifest["version"] = 1;
  manifest["grid"] = cfg.grid;
  manifest["per_circuit"] = cfg.per_circuit;
  manifest["seed"] = cfg.seed;
  manifest["max_macros"] = cfg.max_macros;
  manifest["collector"] = {{"kind", to_string(cfg.collector.kind)},
                           {"temperature", cfg.collector.temperature},
                           {"anneal",
                            {{"iterations", cfg.collector.anneal.iterations},
                             {"cooling", cfg.collector.anneal.cooling},
                             {"start_fraction", cfg.collector.anneal.start_fraction},
                             {"greedy_temperature", cfg.collector.anneal.greedy_temperature}}}};
  json list = json::array();
  for (const auto& c : dataset.circuits) {
    const std::string& id = c.netlist.name;
    check_id(id);
    const std::string netlist_text = serialize(c.netlist);
    const std::string traj_bytes = encode_trajectories(c.trajectories, cfg.grid);
    write_file(dir / "circuits" / (id + ".netlist"), netlist_text);
    write_file(dir / "trajectories" / (id + ".traj"), traj_bytes);
    list.push_back({{"id", id},
                    {"trajectories", c.trajectories.size()},
                    {"netlist_sha256", sha256_hex(netlist_text)},
                    {"trajectories_sha256", sha256_hex(traj_bytes)},
                    {"token", std::vector<double>(c.token.data(), c.token.data() + c.token.size())}});
  }
  manifest["circuits"] = std::move(list);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

OfflineDataset read_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw IoError("no dataset manifest at " + manifest_path.string());
  json m;
  try {
    m = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw ValidationError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  try {
    if (m.at("format") != "dtplace-dataset" || m.at("version") != 1)
      throw ValidationError("unsupported dataset format in " + manifest_path.string());
    OfflineDataset ds;
    auto& cfg = ds.config;
    cfg.grid = m.at("grid");
    cfg.per_circuit = m.at("per_circuit");
    cfg.seed = m.at("seed");
    cfg.max_macros = m.at("max_macros");
    const auto& col = m.at("collector");
    cfg.collector.kind = collector_from_string(col.at("kind").get<std::string>());
    cfg.collector.temperature = col.at("temperature");
    const auto& an = col.at("anneal");
    cfg.collector.anneal = {an.at("iterations"), an.at("cooling"), an.at("start_fraction"),
                            an.at("greedy_temperature")};
    for (const auto& e : m.at("circuits")) {
      const std::string id = e.at("id");
      check_id(id);
      const std::string netlist_text = read_file(dir / "circuits" / (id + ".netlist"));
      const std::string traj_bytes = read_file(dir / "trajectories" / (id + ".traj"));
      if (sha256_hex(netlist_text) != e.at("netlist_sha256"))
        throw ValidationError("checksum mismatch for circuit '" + id + "' netlist");
      if (sha256_hex(traj_bytes) != e.at("trajectories_sha256"))
        throw ValidationError("checksum mismatch for circuit '" + id + "' trajectories");
      CircuitEntry entry;
      entry.netlist = parse_canonical(netlist_text);
      if (entry.netlist.name != id)
        throw ValidationError("circuit file for '" + id + "' names '" + entry.netlist.name + "'");
      int grid = 0;
      entry.trajectories = decode_trajectories(traj_bytes, id, &grid);
      if (grid != cfg.grid)
        throw ValidationError("trajectories of '" + id + "' use grid " + std::to_string(grid) +
                              ", manifest says " + std::to_string(cfg.grid));
      if (entry.trajectories.size() != e.at("trajectories").get<std::size_t>() ||
          static_cast<int>(entry.trajectories.size()) < cfg.per_circuit)
        throw ValidationError("circuit '" + id + "' has " +
                              std::to_string(entry.trajectories.size()) + " trajectories, expected " +
                              std::to_string(cfg.per_circuit));
      const auto token = e.at("token").get<std::vector<double>>();
      entry.token = Eigen::Map<const vgae::CircuitToken>(token.data(), static_cast<Eigen::Index>(token.size()));
      ds.circuits.push_back(std::move(entry));
    }
    return ds;
  } catch (const json::exception& e) {
    throw ValidationError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
}

int validate_replay(const OfflineDataset& dataset) {
  int checked = 0;
  for (const auto& c : dataset.circuits) {
    const GridSpec grid = GridSpec::for_canvas(c.netlist, dataset.config.grid);
    for (std::size_t k = 0; k < c.trajectories.size(); ++k) {
      const Trajectory& t = c.trajectories[k];
      const std::string where = "circuit '" + c.netlist.name + "' trajectory " + std::to_string(k);
      Trajectory again;
      try {
        again = replay(c.netlist, grid, t.actions, dataset.config.max_macros);
      } catch (const IllegalActionError& e) {
        throw IllegalActionError(where + ": " + e.what());
      } catch (const ValidationError& e) {
        throw ValidationError(where + ": " + e.what());
      }
      if (again.return_R != t.return_R)
        throw ValidationError(where + ": stored return differs from replay");
      if (again.final_hpwl != t.final_hpwl)
        throw ValidationError(where + ": stored HPWL differs from replay");
      for (std::size_t i = 0; i < t.rewards.size(); ++i)
        if (static_cast<float>(again.rewards[i]) != static_cast<float>(t.rewards[i]))
          throw ValidationError(where + ": reward at step " + std::to_string(i) + " differs");
      ++checked;
    }
  }
  return checked;
}

// ---------------------------------------------------------------------------
// Buffers

PriorityBuffer::PriorityBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ValidationError("buffer capacity must be positive");
}

std::optional<Trajectory> PriorityBuffer::insert(Trajectory trajectory) {
  if (trajectory.dead_end) throw ValidationError("only complete trajectories enter the buffer");
  const double ret = trajectory.return_R;
  entries_.insert(Entry{ret, next_seq_++, std::move(trajectory)});
  if (entries_.size() <= capacity_) return std::nullopt;
  auto node = entries_.extract(entries_.begin());
  return std::move(node.value().trajectory);
}

double PriorityBuffer::min_return() const {
  if (entries_.empty()) throw ValidationError("empty buffer");
  return entries_.begin()->ret;
}

double PriorityBuffer::max_return() const {
  if (entries_.empty()) throw ValidationError("empty buffer");
  return entries_.rbegin()->ret;
}

std::vector<const Trajectory*> PriorityBuffer::items() const {
  std::vector<const Trajectory*> out;
  for (const auto& e : entries_) out.push_back(&e.trajectory);
  return out;
}

FifoBuffer::FifoBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ValidationError("buffer capacity must be positive");
}

std::optional<Trajectory> FifoBuffer::insert(Trajectory trajectory) {
  if (trajectory.dead_end) throw ValidationError("only complete trajectories enter the buffer");
  entries_.push_back(std::move(trajectory));
  if (entries_.size() <= capacity_) return std::nullopt;
  Trajectory out = std::move(entries_.front());
  entries_.pop_front();
  return out;
}

double FifoBuffer::min_return() const {
  if (entries_.empty()) throw ValidationError("empty buffer");
  double m = entries_.front().return_R;
  for (const auto& t : entries_) m = std::min(m, t.return_R);
  return m;
}

double FifoBuffer::max_return() const {
  if (entries_.empty()) throw ValidationError("empty buffer");
  double m = entries_.front().return_R;
  for (const auto& t : entries_) m = std::max(m, t.return_R);
  return m;
}

std::vector<const Trajectory*> FifoBuffer::items() const {
  std::vector<const Trajectory*> out;
  for (const auto& t : entries_) out.push_back(&t);
  return out;
}

std::vector<double> omega_weights(const std::vector<double>& batch, const std::vector<double>& pool,
                                  const WeightConfig& config) {
  if (!(config.alpha > 0.0)) throw ValidationError("alpha must be positive");
  if (batch.empty()) return {};
  double shift = 0.0, spread = 1.0;
  if (config.standardize && !pool.empty()) {
    double mean = 0.0;
    for (double r : pool) mean += r;
    mean /= static_cast<double>(pool.size());
    double var = 0.0;
    for (double r : pool) var += (r - mean) * (r - mean);
    var /= static_cast<double>(pool.size());
    shift = mean;
    spread = std::sqrt(var);
  }
  auto logit = [&](double r) {
    const double z = spread > 0.0 ? (r - shift) / spread : 0.0;
    return z / config.alpha;
  };
  const std::vector<double>& ref = config.batch_expectation || pool.empty() ? batch : pool;
  double top = -std::numeric_limits<double>::infinity();
  for (double r : ref) top = std::max(top, logit(r));
  double mean_exp = 0.0;
  for (double r : ref) mean_exp += std::exp(logit(r) - top);
  mean_exp /= static_cast<double>(ref.size());
  const double log_norm = top + std::log(mean_exp);
  std::vector<double> w;
  w.reserve(batch.size());
  for (double r : batch) w.push_back(std::exp(logit(r) - log_norm));
  return w;
}

SampledBatch buffer_sample(const std::vector<const Trajectory*>& pool, int batch_size,
                           std::uint64_t seed, const WeightConfig& config) {
  if (pool.empty()) throw ValidationError("cannot sample from an empty buffer");
  if (batch_size < 1) throw ValidationError("batch size must be positive");
  Rng rng(seed);
  SampledBatch out;
  std::vector<double> batch_returns, pool_returns;
  for (const auto* t : pool) pool_returns.push_back(t->return_R);
  for (int i = 0; i < batch_size; ++i) {
    const auto* t = pool[rng.below(pool.size())];
    out.items.push_back(t);
    batch_returns.push_back(t->return_R);
  }
  out.weights = omega_weights(batch_returns, pool_returns, config);
  return out;
}

}  // namespace dtplace::data
