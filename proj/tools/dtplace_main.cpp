#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dtplace/canvas.hpp"
#include "dtplace/config.hpp"
#include "dtplace/data.hpp"
#include "dtplace/errors.hpp"
#include "dtplace/metrics.hpp"
#include "dtplace/model.hpp"
#include "dtplace/netlist.hpp"
#include "dtplace/render.hpp"
#include "dtplace/training.hpp"
#include "dtplace/vgae.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dtplace;

namespace {

enum Exit : int { kOk = 0, kUsage = 2, kMissing = 3, kParse = 4, kStage = 5 };

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  int grid = 84;
  int workers = 1;
  int budget = 300;
  std::string out;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* grid_opt = nullptr;
  CLI::Option* workers_opt = nullptr;
  CLI::Option* budget_opt = nullptr;

  void attach(CLI::App* sub, bool with_budget = false) {
    sub->add_option("--config", config, "JSON run config")->check(CLI::ExistingFile);
    seed_opt = sub->add_option("--seed", seed, "Random seed");
    grid_opt = sub->add_option("--grid", grid, "Grid resolution n (n x n cells)");
    workers_opt = sub->add_option("--workers", workers, "Worker threads");
    sub->add_option("--out", out, "Output directory (default $DTPLACE_OUT/<command>)");
    if (with_budget) budget_opt = sub->add_option("--budget", budget, "Rollout budget");
  }

  RunConfig resolve() const {
    RunConfig rc = config.empty() ? RunConfig{} : RunConfig::load(config);
    if (seed_opt && seed_opt->count()) rc.seed = seed;
    if (grid_opt && grid_opt->count()) rc.grid = grid;
    if (workers_opt && workers_opt->count()) rc.workers = workers;
    if (budget_opt && budget_opt->count()) {
      rc.finetune.budget = budget;
      rc.eval_budget = budget;
    }
    rc.resolve();
    rc.validate();
    return rc;
  }

  fs::path out_dir(const std::string& command) const {
    if (!out.empty()) return out;
    if (const char* root = std::getenv("DTPLACE_OUT"); root && *root) return fs::path(root) / command;
    return fs::path("runs") / command;
  }
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out || !(out << bytes)) throw IoError("cannot write " + p.string());
}

/// Canonical .netlist, or a Bookshelf .nodes file with .nets/.pl beside it.
Netlist load_netlist(const fs::path& path) {
  if (path.extension() == ".nodes") {
    fs::path nets = path, pl = path;
    nets.replace_extension(".nets");
    pl.replace_extension(".pl");
    const std::string pl_text = fs::exists(pl) ? read_file(pl) : std::string();
    std::optional<std::string_view> pl_view;
    if (fs::exists(pl)) pl_view = pl_text;
    Netlist nl = parse_bookshelf(read_file(path), read_file(nets), pl_view, std::nullopt,
                                 path.stem().string());
    validate(nl);
    return nl;
  }
  Netlist nl = parse_canonical(read_file(path));
  validate(nl);
  return nl;
}

std::vector<Netlist> load_netlists(const std::vector<std::string>& paths) {
  std::vector<Netlist> out;
  for (const auto& p : paths) out.push_back(load_netlist(p));
  return out;
}

vgae::Encoder<float> load_encoder(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read encoder checkpoint " + p.string());
  return vgae::load(in);
}

model::Policy<float> load_policy(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read policy checkpoint " + p.string());
  return model::load(in);
}

template <typename T>
void save_checkpoint(const fs::path& p, const T& object) {
  fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    if constexpr (std::is_same_v<T, vgae::Encoder<float>>)
      vgae::save(out, object);
    else
      model::save(out, object);
  }
  fs::rename(tmp, p);
}

json placement_json(const Netlist& nl, const GridSpec& grid, std::span<const Action> actions) {
  const PlacementState state = replay_state(nl, grid, actions);
  const PlacementSolution sol = to_solution(state, nl);
  json pos = json::array();
  for (const Module& m : nl.modules)
    if (const auto& p = sol.positions[m.id]; p && m.movable_macro())
      pos.push_back({{"name", m.name}, {"x", p->x}, {"y", p->y}});
  return {{"circuit", nl.name},
          {"grid", grid.n},
          {"actions", std::vector<Action>(actions.begin(), actions.end())},
          {"hpwl_grid", grid_hpwl(state)},
          {"positions", pos}};
}

/// Writes placement.json, metrics.json and placement.svg for one action sequence.
void write_placement(const fs::path& dir, const Netlist& nl, const GridSpec& grid,
                     std::span<const Action> actions) {
  write_file(dir / "placement.json", placement_json(nl, grid, actions).dump(2) + "\n");
  write_file(dir / "metrics.json", to_json(training::report_for(nl, grid, actions)));
  const PlacementState state = replay_state(nl, grid, actions);
  write_file(dir / "placement.svg", render_svg(to_solution(state, nl), {}));
}

// ---------------------------------------------------------------------------

int cmd_gen(const Common& c, int macros, int nets, double util, std::vector<double> canvas,
            int count, const std::string& name, bool bookshelf) {
  RunConfig rc = c.resolve();
  if (macros > 0) rc.generator.n_macros = macros;
  if (nets > 0) rc.generator.n_nets = nets;
  if (util > 0) rc.generator.target_util = util;
  if (canvas.size() == 2) rc.generator.canvas = {canvas[0], canvas[1]};
  rc.validate();
  const fs::path dir = c.out_dir("gen");
  for (int k = 0; k < count; ++k) {
    SyntheticSpec spec = rc.generator;
    spec.seed = rc.seed + static_cast<std::uint64_t>(k);
    Netlist nl = generate_synthetic(spec);
    if (!name.empty()) nl.name = count == 1 ? name : name + "_" + std::to_string(k);
    if (bookshelf) {
      const BookshelfTexts bs = to_bookshelf(nl);
      write_file(dir / (nl.name + ".nodes"), bs.nodes);
      write_file(dir / (nl.name + ".nets"), bs.nets);
      write_file(dir / (nl.name + ".pl"), bs.pl);
      std::cout << (dir / (nl.name + ".nodes")).string() << "\n";
    } else {
      write_file(dir / (nl.name + ".netlist"), serialize(nl));
      std::cout << (dir / (nl.name + ".netlist")).string() << "\n";
    }
  }
  return kOk;
}

int cmd_parse(const std::string& input, const std::string& out) {
  const Netlist nl = load_netlist(input);
  const std::string text = serialize(nl);
  if (out.empty())
    std::cout << text;
  else
    write_file(out, text);
  int fixed = 0;
  for (const Module& m : nl.modules) fixed += m.fixed;
  std::cerr << nl.name << ": " << nl.modules.size() << " modules (" << nl.num_movable_macros()
            << " movable macros, " << fixed << " fixed), " << nl.nets.size() << " nets, canvas "
            << nl.canvas_w << " x " << nl.canvas_h << "\n";
  return kOk;
}

int cmd_train_vgae(const Common& c, const std::vector<std::string>& inputs, int epochs) {
  RunConfig rc = c.resolve();
  if (epochs > 0) rc.vgae.epochs = epochs;
  rc.validate();
  const fs::path dir = c.out_dir("train-vgae");
  std::vector<CircuitGraph> graphs;
  for (const Netlist& nl : load_netlists(inputs)) graphs.push_back(to_graph(nl));
  const auto result = vgae::train(graphs, rc.vgae);
  rc.snapshot(dir);
  save_checkpoint(dir / "encoder.ckpt", result.encoder);
  std::ostringstream loss;
  loss.precision(9);
  for (double l : result.loss_history) loss << l << "\n";
  write_file(dir / "loss.txt", loss.str());
  std::cout << "encoder: " << (dir / "encoder.ckpt").string() << "  final loss "
            << result.loss_history.back() << "\n";
  return kOk;
}

int cmd_collect(const Common& c, const std::vector<std::string>& inputs, const std::string& encoder,
                int per_circuit) {
  RunConfig rc = c.resolve();
  if (per_circuit > 0) rc.dataset.per_circuit = per_circuit;
  rc.validate();
  const fs::path dir = c.out_dir("collect");
  const auto enc = load_encoder(encoder);
  const auto circuits = load_netlists(inputs);
  const auto ds = data::build_dataset(circuits, rc.dataset, enc, rc.workers);
  data::write_dataset(ds, dir);
  rc.snapshot(dir);
  std::cout << "dataset: " << dir.string() << "  " << circuits.size() << " circuits x "
            << rc.dataset.per_circuit << " trajectories\n";
  return kOk;
}

int cmd_pretrain(const Common& c, const std::string& dataset_dir, int epochs) {
  RunConfig rc = c.resolve();
  const auto ds = data::read_dataset(dataset_dir);
  if (c.grid_opt->count() && c.grid != ds.config.grid)
    throw ValidationError("--grid " + std::to_string(c.grid) + " does not match the dataset grid " +
                          std::to_string(ds.config.grid));
  rc.grid = ds.config.grid;
  if (epochs > 0) rc.pretrain.epochs = epochs;
  rc.resolve();
  rc.validate();
  const fs::path dir = c.out_dir("pretrain");
  rc.snapshot(dir);
  std::ofstream loss(dir / "loss.txt");
  loss.precision(9);
  const auto result = training::pretrain(
      ds, rc.model, rc.pretrain, {}, [&](int epoch, double mean_loss, const model::Policy<float>& p) {
        loss << mean_loss << std::endl;
        save_checkpoint(dir / "checkpoint.ckpt", p);
        std::cerr << "epoch " << epoch + 1 << "/" << rc.pretrain.epochs << "  loss " << mean_loss << "\n";
      });
  save_checkpoint(dir / "policy.ckpt", result.policy);
  std::cout << "policy: " << (dir / "policy.ckpt").string() << "\n";
  return kOk;
}

struct Placed {
  Netlist netlist;
  vgae::CircuitToken token;
  model::Policy<float> policy;
};

Placed load_for_placement(const std::string& policy, const std::string& encoder,
                          const std::string& circuit) {
  auto pol = load_policy(policy);
  const auto enc = load_encoder(encoder);
  Netlist nl = load_netlist(circuit);
  auto token = vgae::circuit_token(to_graph(nl), enc);
  return {std::move(nl), std::move(token), std::move(pol)};
}

int cmd_finetune(const Common& c, const std::string& policy, const std::string& encoder,
                 const std::string& circuit, const char* command, int default_budget) {
  RunConfig rc = c.resolve();
  if (!c.budget_opt->count()) rc.finetune.budget = default_budget;
  const fs::path dir = c.out_dir(command);
  Placed p = load_for_placement(policy, encoder, circuit);
  rc.grid = p.policy.config().grid;
  rc.snapshot(dir);
  const auto result = training::finetune(p.policy, p.netlist, p.token, rc.finetune, rc.seed);
  const GridSpec grid = GridSpec::for_canvas(p.netlist, rc.grid);
  training::write_record(dir, result.record);
  write_placement(dir, p.netlist, grid, result.record.best_actions);
  if (std::string_view(command) == "finetune") save_checkpoint(dir / "policy.ckpt", result.policy);
  std::cout << p.netlist.name << ": best HPWL " << result.record.best_hpwl << " (grid units) after "
            << result.record.rollouts << " rollouts\n"
            << to_key_value(training::report_for(p.netlist, grid, result.record.best_actions));
  return kOk;
}

int cmd_eval(const Common& c, const std::string& policy, const std::string& encoder,
             const std::vector<std::string>& inputs, int seeds) {
  RunConfig rc = c.resolve();
  if (seeds > 0) rc.eval_seeds = seeds;
  rc.validate();
  const fs::path dir = c.out_dir("eval");
  const auto pol = load_policy(policy);
  const auto enc = load_encoder(encoder);
  const auto circuits = load_netlists(inputs);
  rc.grid = pol.config().grid;
  rc.snapshot(dir);

  std::vector<training::EvalCircuit> ec;
  for (const Netlist& nl : circuits) ec.push_back({&nl, vgae::circuit_token(to_graph(nl), enc)});
  training::EvalConfig cfg;
  cfg.budget = rc.eval_budget;
  cfg.temperature = rc.eval_temperature;
  cfg.workers = rc.workers;
  cfg.seeds.clear();
  for (int s = 0; s < rc.eval_seeds; ++s) cfg.seeds.push_back(rc.seed + static_cast<std::uint64_t>(s));
  const auto evals = training::evaluate(pol, ec, cfg);

  json report = json::array();
  for (const auto& ev : evals) {
    json per_seed = json::array();
    for (std::size_t s = 0; s < ev.records.size(); ++s) {
      per_seed.push_back({{"seed", cfg.seeds[s]},
                          {"best_hpwl", ev.records[s].best_hpwl},
                          {"metrics", json::parse(to_json(ev.best[s]))}});
      std::ostringstream trace;
      trace.precision(17);
      for (double h : ev.records[s].trace) trace << h << "\n";
      write_file(dir / ("trace_" + ev.circuit_id + "_seed" + std::to_string(cfg.seeds[s]) + ".txt"),
                 trace.str());
    }
    report.push_back({{"circuit", ev.circuit_id},
                      {"budget", cfg.budget},
                      {"mean_hpwl", ev.mean_hpwl},
                      {"std_hpwl", ev.std_hpwl},
                      {"seeds", per_seed}});
    std::cout << ev.circuit_id << ": HPWL " << ev.mean_hpwl << " +- " << ev.std_hpwl << " (grid units, "
              << cfg.seeds.size() << " seeds, budget " << cfg.budget << ")\n";
  }
  write_file(dir / "report.json", report.dump(2) + "\n");
  return kOk;
}

int cmd_render(const Common& c, const std::string& circuit, const std::string& placement,
               bool nets, double width) {
  const Netlist nl = load_netlist(circuit);
  PlacementSolution sol = fixed_solution(nl);
  if (!placement.empty()) {
    json pj;
    try {
      pj = json::parse(read_file(placement));
    } catch (const json::exception& e) {
      throw ValidationError("placement " + placement + " is not valid JSON: " + e.what());
    }
    const int n = pj.at("grid").get<int>();
    const auto actions = pj.at("actions").get<std::vector<Action>>();
    sol = to_solution(replay_state(nl, GridSpec::for_canvas(nl, n), actions), nl);
  }
  RenderOptions opt;
  opt.net_boxes = nets;
  opt.width_px = width;
  const fs::path out = c.out.empty() ? c.out_dir("render") / (nl.name + ".svg") : fs::path(c.out);
  write_file(out, render_svg(sol, opt));
  std::cout << out.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dtplace: offline-pretrained transformer macro placement"};
  app.require_subcommand(1);

  Common gen_c, vg_c, col_c, pre_c, ft_c, pl_c, ev_c, re_c;

  auto* gen = app.add_subcommand("gen", "Generate synthetic circuits");
  gen_c.attach(gen);
  int macros = 0, nets = 0, count = 1;
  double util = 0.0;
  std::vector<double> canvas;
  std::string gen_name;
  bool bookshelf = false;
  gen->add_option("--macros", macros, "Movable macros");
  gen->add_option("--nets", nets, "Nets");
  gen->add_option("--util", util, "Target macro utilization");
  gen->add_option("--canvas", canvas, "Canvas W H")->expected(2);
  gen->add_option("--count", count, "Circuits to generate (seeds seed, seed+1, ...)")->check(CLI::PositiveNumber);
  gen->add_option("--name", gen_name, "Circuit name");
  gen->add_flag("--bookshelf", bookshelf, "Write .nodes/.nets/.pl instead of the canonical format");

  auto* parse = app.add_subcommand("parse", "Parse and validate a netlist, print it in canonical form");
  std::string parse_in, parse_out;
  parse->add_option("input", parse_in, "Canonical .netlist or Bookshelf .nodes")->required();
  parse->add_option("--out", parse_out, "Output file (default stdout)");

  auto* vg = app.add_subcommand("train-vgae", "Train the circuit-token encoder");
  vg_c.attach(vg);
  std::vector<std::string> vg_in;
  int vg_epochs = 0;
  vg->add_option("circuits", vg_in, "Netlists")->required();
  vg->add_option("--epochs", vg_epochs, "Training epochs");

  auto* col = app.add_subcommand("collect", "Collect an offline placement dataset");
  col_c.attach(col);
  std::vector<std::string> col_in;
  std::string col_enc;
  int per_circuit = 0;
  col->add_option("circuits", col_in, "Netlists")->required();
  col->add_option("--encoder", col_enc, "Encoder checkpoint")->required();
  col->add_option("--per-circuit", per_circuit, "Trajectories per circuit");

  auto* pre = app.add_subcommand("pretrain", "Behaviour-clone the policy on a dataset");
  pre_c.attach(pre);
  std::string pre_ds;
  int pre_epochs = 0;
  pre->add_option("--dataset", pre_ds, "Dataset directory")->required();
  pre->add_option("--epochs", pre_epochs, "Training epochs");

  std::string ft_pol, ft_enc, ft_circ;
  auto* ft = app.add_subcommand("finetune", "Finetune on one circuit with online rollouts");
  ft_c.attach(ft, true);
  ft->add_option("--policy", ft_pol, "Policy checkpoint")->required();
  ft->add_option("--encoder", ft_enc, "Encoder checkpoint")->required();
  ft->add_option("--circuit", ft_circ, "Netlist")->required();

  std::string pl_pol, pl_enc, pl_circ;
  auto* pl = app.add_subcommand("place", "Place one circuit (budget 1 = zero-shot)");
  pl_c.attach(pl, true);
  pl->add_option("--policy", pl_pol, "Policy checkpoint")->required();
  pl->add_option("--encoder", pl_enc, "Encoder checkpoint")->required();
  pl->add_option("--circuit", pl_circ, "Netlist")->required();

  std::string ev_pol, ev_enc;
  std::vector<std::string> ev_in;
  int ev_seeds = 0;
  auto* ev = app.add_subcommand("eval", "Best-of-budget evaluation over seeds");
  ev_c.attach(ev, true);
  ev->add_option("circuits", ev_in, "Netlists")->required();
  ev->add_option("--policy", ev_pol, "Policy checkpoint")->required();
  ev->add_option("--encoder", ev_enc, "Encoder checkpoint")->required();
  ev->add_option("--seeds", ev_seeds, "Number of seeds");

  std::string re_circ, re_place;
  bool re_nets = false;
  double re_width = 800.0;
  auto* re = app.add_subcommand("render", "Render a placement as SVG");
  re_c.attach(re);
  re->add_option("--circuit", re_circ, "Netlist")->required();
  re->add_option("--placement", re_place, "placement.json (omit to draw fixed modules only)");
  re->add_flag("--nets", re_nets, "Draw net bounding boxes");
  re->add_option("--width", re_width, "Canvas width in pixels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_c, macros, nets, util, canvas, count, gen_name, bookshelf);
    if (parse->parsed()) return cmd_parse(parse_in, parse_out);
    if (vg->parsed()) return cmd_train_vgae(vg_c, vg_in, vg_epochs);
    if (col->parsed()) return cmd_collect(col_c, col_in, col_enc, per_circuit);
    if (pre->parsed()) return cmd_pretrain(pre_c, pre_ds, pre_epochs);
    if (ft->parsed()) return cmd_finetune(ft_c, ft_pol, ft_enc, ft_circ, "finetune", 300);
    if (pl->parsed()) return cmd_finetune(pl_c, pl_pol, pl_enc, pl_circ, "place", 1);
    if (ev->parsed()) return cmd_eval(ev_c, ev_pol, ev_enc, ev_in, ev_seeds);
    if (re->parsed()) return cmd_render(re_c, re_circ, re_place, re_nets, re_width);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kParse;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return kMissing;
  } catch (const std::exception& e) {
    std::cerr << "stage failed: " << e.what() << "\n";
    return kStage;
  }
  return kUsage;
}
