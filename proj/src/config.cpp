#include "dtplace/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "dtplace/errors.hpp"

namespace dtplace {

using nlohmann::json;

namespace {

// Reads the listed keys of `j` into fields, rejecting keys it does not know.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError("config: '" + where_ + "' must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ValidationError("config: unknown key '" + where_ + k + "'");
  }

  template <typename T>
  void get(const char* key, T& field) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      field = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError("config: '" + where_ + key + "' has the wrong type");
    }
  }
  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  std::string path(const char* key) const { return where_ + key + "."; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

Collector collector_from(const std::string& s) {
  for (auto c : {Collector::kGreedy, Collector::kStochasticGreedy, Collector::kAnnealed})
    if (to_string(c) == s) return c;
  throw ValidationError("config: unknown collector '" + s + "'");
}

}  // namespace

void RunConfig::resolve() {
  if (model_preset == "desk") {
    model = model::ModelConfig::desk(grid);
  } else if (model_preset != "full" && model_preset != "custom") {
    throw ValidationError("config: model_preset must be 'full', 'desk' or 'custom'");
  }
  model.grid = grid;
  dataset.grid = grid;
  dataset.seed = seed;
  generator.seed = seed;
  vgae.seed = seed;
  pretrain.seed = seed;
}

void RunConfig::validate() const {
  if (grid < 6 || grid > 256) throw ValidationError("config: grid must be in [6, 256]");
  if (workers < 1) throw ValidationError("config: workers must be >= 1");
  if (generator.n_macros < 1) throw ValidationError("config: generator.macros must be >= 1");
  if (generator.n_nets < 1) throw ValidationError("config: generator.nets must be >= 1");
  if (!(generator.target_util > 0.0 && generator.target_util < 1.0))
    throw ValidationError("config: generator.utilization must be in (0, 1)");
  if (!(generator.canvas.w > 0.0 && generator.canvas.h > 0.0))
    throw ValidationError("config: generator.canvas must be positive");
  if (vgae.epochs < 1 || !(vgae.lr > 0.0)) throw ValidationError("config: vgae epochs and lr must be positive");
  if (dataset.per_circuit < 1) throw ValidationError("config: dataset.per_circuit must be >= 1");
  if (dataset.collector.temperature < 0.0) throw ValidationError("config: dataset.temperature must be >= 0");
  if (eval_budget < 1 || eval_seeds < 1) throw ValidationError("config: eval budget and seeds must be >= 1");
  if (eval_temperature < 0.0) throw ValidationError("config: eval.temperature must be >= 0");
  model.validate();
  pretrain.validate();
  finetune.validate();
}

json RunConfig::to_json() const {
  const auto& a = dataset.collector.anneal;
  return {
      {"seed", seed},
      {"grid", grid},
      {"workers", workers},
      {"model_preset", model_preset},
      {"generator",
       {{"macros", generator.n_macros},
        {"nets", generator.n_nets},
        {"canvas", {generator.canvas.w, generator.canvas.h}},
        {"utilization", generator.target_util}}},
      {"vgae", {{"epochs", vgae.epochs}, {"lr", vgae.lr}}},
      {"dataset",
       {{"per_circuit", dataset.per_circuit},
        {"collector", to_string(dataset.collector.kind)},
        {"temperature", dataset.collector.temperature},
        {"max_macros", dataset.max_macros},
        {"anneal",
         {{"iterations", a.iterations},
          {"cooling", a.cooling},
          {"start_fraction", a.start_fraction},
          {"greedy_temperature", a.greedy_temperature}}}}},
      {"model",
       {{"layers", model.layers},
        {"hidden", model.hidden},
        {"heads", model.heads},
        {"window", model.window},
        {"projector", model.projector},
        {"state_fc", model.state_fc},
        {"dropout", model.dropout}}},
      {"pretrain",
       {{"batch_size", pretrain.batch_size},
        {"lr", pretrain.lr},
        {"epochs", pretrain.epochs},
        {"warmup_steps", pretrain.warmup_steps},
        {"clip_norm", pretrain.clip_norm}}},
      {"finetune",
       {{"alpha", finetune.alpha},
        {"lambda", finetune.lambda},
        {"beta", finetune.beta},
        {"lr", finetune.lr},
        {"batch_size", finetune.batch_size},
        {"buffer_capacity", finetune.buffer_capacity},
        {"budget", finetune.budget},
        {"steps_per_rollout", finetune.steps_per_rollout},
        {"temperature_start", finetune.temperature_start},
        {"temperature_decay", finetune.temperature_decay},
        {"temperature_floor", finetune.temperature_floor},
        {"dead_end_window", finetune.dead_end_window},
        {"clip_norm", finetune.clip_norm},
        {"buffer", finetune.buffer == training::BufferKind::kPriority ? "priority" : "fifo"},
        {"standardize_returns", finetune.standardize_returns},
        {"batch_expectation", finetune.batch_expectation}}},
      {"eval", {{"budget", eval_budget}, {"seeds", eval_seeds}, {"temperature", eval_temperature}}},
  };
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  Reader top(j, "");
  top.get("seed", c.seed);
  top.get("grid", c.grid);
  top.get("workers", c.workers);
  top.get("model_preset", c.model_preset);
  if (c.model_preset == "desk") c.model = model::ModelConfig::desk(c.grid);

  if (const json* g = top.child("generator")) {
    Reader r(*g, top.path("generator"));
    r.get("macros", c.generator.n_macros);
    r.get("nets", c.generator.n_nets);
    r.get("utilization", c.generator.target_util);
    std::vector<double> canvas{c.generator.canvas.w, c.generator.canvas.h};
    r.get("canvas", canvas);
    if (canvas.size() != 2) throw ValidationError("config: generator.canvas must be [w, h]");
    c.generator.canvas = {canvas[0], canvas[1]};
  }
  if (const json* v = top.child("vgae")) {
    Reader r(*v, top.path("vgae"));
    r.get("epochs", c.vgae.epochs);
    r.get("lr", c.vgae.lr);
  }
  if (const json* d = top.child("dataset")) {
    Reader r(*d, top.path("dataset"));
    r.get("per_circuit", c.dataset.per_circuit);
    std::string kind(to_string(c.dataset.collector.kind));
    r.get("collector", kind);
    c.dataset.collector.kind = collector_from(kind);
    r.get("temperature", c.dataset.collector.temperature);
    r.get("max_macros", c.dataset.max_macros);
    if (const json* an = r.child("anneal")) {
      Reader ra(*an, r.path("anneal"));
      auto& a = c.dataset.collector.anneal;
      ra.get("iterations", a.iterations);
      ra.get("cooling", a.cooling);
      ra.get("start_fraction", a.start_fraction);
      ra.get("greedy_temperature", a.greedy_temperature);
    }
  }
  if (const json* m = top.child("model")) {
    Reader r(*m, top.path("model"));
    r.get("layers", c.model.layers);
    r.get("hidden", c.model.hidden);
    r.get("heads", c.model.heads);
    r.get("window", c.model.window);
    r.get("projector", c.model.projector);
    r.get("state_fc", c.model.state_fc);
    r.get("dropout", c.model.dropout);
    if (c.model_preset == "desk" || c.model_preset == "full") c.model_preset = "custom";
  }
  if (const json* p = top.child("pretrain")) {
    Reader r(*p, top.path("pretrain"));
    r.get("batch_size", c.pretrain.batch_size);
    r.get("lr", c.pretrain.lr);
    r.get("epochs", c.pretrain.epochs);
    r.get("warmup_steps", c.pretrain.warmup_steps);
    r.get("clip_norm", c.pretrain.clip_norm);
  }
  if (const json* f = top.child("finetune")) {
    Reader r(*f, top.path("finetune"));
    auto& ft = c.finetune;
    r.get("alpha", ft.alpha);
    r.get("lambda", ft.lambda);
    r.get("beta", ft.beta);
    r.get("lr", ft.lr);
    r.get("batch_size", ft.batch_size);
    r.get("buffer_capacity", ft.buffer_capacity);
    r.get("budget", ft.budget);
    r.get("steps_per_rollout", ft.steps_per_rollout);
    r.get("temperature_start", ft.temperature_start);
    r.get("temperature_decay", ft.temperature_decay);
    r.get("temperature_floor", ft.temperature_floor);
    r.get("dead_end_window", ft.dead_end_window);
    r.get("clip_norm", ft.clip_norm);
    std::string buffer = ft.buffer == training::BufferKind::kPriority ? "priority" : "fifo";
    r.get("buffer", buffer);
    if (buffer != "priority" && buffer != "fifo")
      throw ValidationError("config: finetune.buffer must be 'priority' or 'fifo'");
    ft.buffer = buffer == "priority" ? training::BufferKind::kPriority : training::BufferKind::kFifo;
    r.get("standardize_returns", ft.standardize_returns);
    r.get("batch_expectation", ft.batch_expectation);
  }
  if (const json* e = top.child("eval")) {
    Reader r(*e, top.path("eval"));
    r.get("budget", c.eval_budget);
    r.get("seeds", c.eval_seeds);
    r.get("temperature", c.eval_temperature);
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void RunConfig::snapshot(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config.json");
  if (!out) throw IoError("cannot write " + (dir / "config.json").string());
  out << to_json().dump(2) << "\n";
}

}  // namespace dtplace
