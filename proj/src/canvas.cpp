#include "dtplace/canvas.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dtplace/errors.hpp"

namespace dtplace {

namespace {

// Relative slack for snapping physical coordinates onto the grid, so a macro
// exactly one cell wide does not round up to two cells.
constexpr double kSnapTolerance = 1e-9;

int floor_cells(double length, double cell) {
  return static_cast<int>(std::floor(length / cell + kSnapTolerance));
}

int ceil_cells(double length, double cell) {
  return static_cast<int>(std::ceil(length / cell - kSnapTolerance));
}

/// Pins of one macro on one net, reduced to their offset extremes.
struct NetTouch {
  int net;
  int ox_min, ox_max, oy_min, oy_max;
};

std::vector<NetTouch> touches(const NetIndex& index, int module_id) {
  std::map<int, NetTouch> by_net;
  for (const auto& ref : index.by_module[module_id]) {
    auto [it, inserted] = by_net.try_emplace(
        ref.net, NetTouch{ref.net, ref.offset.x, ref.offset.x, ref.offset.y, ref.offset.y});
    if (!inserted) {
      NetTouch& t = it->second;
      t.ox_min = std::min(t.ox_min, ref.offset.x);
      t.ox_max = std::max(t.ox_max, ref.offset.x);
      t.oy_min = std::min(t.oy_min, ref.offset.y);
      t.oy_max = std::max(t.oy_max, ref.offset.y);
    }
  }
  std::vector<NetTouch> out;
  out.reserve(by_net.size());
  for (const auto& [net, t] : by_net) out.push_back(t);
  return out;
}

// Growth of [lo, hi] when it must also contain [c + omin, c + omax].
inline int axis_growth(int c, int omin, int omax, int lo, int hi) {
  return std::max(0, c + omax - hi) + std::max(0, lo - (c + omin));
}

bool fits(const PlacementState& s, Footprint fp, Cell c) {
  const int n = s.grid().n;
  if (c.x < 0 || c.y < 0 || c.x + fp.w > n || c.y + fp.h > n) return false;
  for (int y = c.y; y < c.y + fp.h; ++y)
    for (int x = c.x; x < c.x + fp.w; ++x)
      if (s.occupied(x, y)) return false;
  return true;
}

}  // namespace

GridSpec GridSpec::for_canvas(const Netlist& netlist, int n) {
  if (n < 4) throw ValidationError("grid side must be >= 4, got " + std::to_string(n));
  if (n > 256) throw ValidationError("grid side must be <= 256 (16-bit actions)");
  if (!(netlist.canvas_w > 0.0) || !(netlist.canvas_h > 0.0))
    throw ValidationError("canvas dimensions must be positive");
  return GridSpec{n, netlist.canvas_w / n, netlist.canvas_h / n};
}

Footprint footprint(const Module& module, const GridSpec& grid) {
  Footprint fp{std::max(1, ceil_cells(module.width, grid.cell_w)),
               std::max(1, ceil_cells(module.height, grid.cell_h))};
  if (fp.w > grid.n || fp.h > grid.n)
    throw InfeasibleError("macro '" + module.name + "' needs " + std::to_string(fp.w) + "x" +
                          std::to_string(fp.h) + " cells on a " + std::to_string(grid.n) +
                          "-cell grid");
  return fp;
}

Cell pin_cell_offset(const Pin& pin, const Module& module, const GridSpec& grid) {
  const Footprint fp = footprint(module, grid);
  return {std::clamp(floor_cells(pin.dx, grid.cell_w), 0, fp.w - 1),
          std::clamp(floor_cells(pin.dy, grid.cell_h), 0, fp.h - 1)};
}

void NetBox::add(int x, int y) {
  if (count == 0) {
    xmin = xmax = x;
    ymin = ymax = y;
  } else {
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  ++count;
}

PlacementState reset(const Netlist& netlist, const GridSpec& grid, int max_macros) {
  if (grid.n < 4 || !(grid.cell_w > 0.0) || !(grid.cell_h > 0.0))
    throw ValidationError("invalid grid spec");
  const int n = grid.n;
  PlacementState s;
  s.grid_ = grid;
  s.order_ = macro_order(netlist, max_macros);
  s.anchors_.assign(netlist.modules.size(), std::nullopt);
  s.occupancy_.assign(static_cast<std::size_t>(n) * n, 0);
  s.boxes_.assign(netlist.nets.size(), NetBox{});

  auto index = std::make_shared<NetIndex>();
  index->num_nets = static_cast<int>(netlist.nets.size());
  index->by_module.resize(netlist.modules.size());
  index->footprints.assign(netlist.modules.size(), Footprint{0, 0});
  for (const auto& m : netlist.modules)
    if (m.movable_macro()) index->footprints[m.id] = footprint(m, grid);
  for (const auto& net : netlist.nets) {
    for (const auto& pin : net.pins) {
      const Module& m = netlist.modules[pin.module_id];
      const Cell off = m.movable_macro() ? pin_cell_offset(pin, m, grid) : Cell{};
      index->by_module[pin.module_id].push_back({net.id, off});
    }
  }

  const double tol_w = kSnapTolerance * netlist.canvas_w;
  const double tol_h = kSnapTolerance * netlist.canvas_h;
  for (const auto& m : netlist.modules) {
    if (!m.fixed || !m.fixed_pos) continue;
    const Point p = *m.fixed_pos;
    if (p.x < -tol_w || p.y < -tol_h || p.x + m.width > netlist.canvas_w + tol_w ||
        p.y + m.height > netlist.canvas_h + tol_h)
      throw ValidationError("fixed module '" + m.name + "' lies outside the canvas");
    if (m.width > 0.0 && m.height > 0.0) {
      const int x0 = std::clamp(floor_cells(p.x, grid.cell_w), 0, n - 1);
      const int y0 = std::clamp(floor_cells(p.y, grid.cell_h), 0, n - 1);
      const int x1 = std::clamp(ceil_cells(p.x + m.width, grid.cell_w), x0 + 1, n);
      const int y1 = std::clamp(ceil_cells(p.y + m.height, grid.cell_h), y0 + 1, n);
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) s.occupancy_[y * n + x] = 1;
    }
  }
  for (const auto& net : netlist.nets) {
    for (const auto& pin : net.pins) {
      const Module& m = netlist.modules[pin.module_id];
      if (!m.fixed || !m.fixed_pos) continue;
      const int x = std::clamp(floor_cells(m.fixed_pos->x + pin.dx, grid.cell_w), 0, n - 1);
      const int y = std::clamp(floor_cells(m.fixed_pos->y + pin.dy, grid.cell_h), 0, n - 1);
      s.boxes_[net.id].add(x, y);
    }
  }
  s.index_ = std::move(index);
  for (const auto& b : s.boxes_) s.fixed_hpwl_ += b.half_perimeter();
  return s;
}

MaskSet masks(const PlacementState& state) {
  if (state.done()) throw ValidationError("masks requested for a finished placement");
  const int n = state.grid().n;
  const int m = state.next_macro();
  const Footprint fp = state.index().footprints[m];

  MaskSet out;
  out.view = GridMap::Zero(n, n);
  out.position = GridMap::Zero(n, n);
  out.wire_raw = GridMap::Zero(n, n);

  // prefix[y][x] = occupied cells in [0, x) x [0, y)
  std::vector<int> prefix(static_cast<std::size_t>(n + 1) * (n + 1), 0);
  auto P = [&](int y, int x) -> int& { return prefix[static_cast<std::size_t>(y) * (n + 1) + x]; };
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const int occ = state.occupied(x, y) ? 1 : 0;
      out.view(y, x) = occ;
      P(y + 1, x + 1) = occ + P(y, x + 1) + P(y + 1, x) - P(y, x);
    }
  }
  for (int y = 0; y + fp.h <= n; ++y) {
    for (int x = 0; x + fp.w <= n; ++x) {
      const int covered = P(y + fp.h, x + fp.w) - P(y, x + fp.w) - P(y + fp.h, x) + P(y, x);
      if (covered == 0) out.position(y, x) = 1.0;
    }
  }

  // The increase is separable: a sum of an x-only and a y-only term per net.
  Eigen::VectorXd along_x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd along_y = Eigen::VectorXd::Zero(n);
  double constant = 0.0;
  const auto& boxes = state.net_boxes();
  for (const NetTouch& t : touches(state.index(), m)) {
    const NetBox& b = boxes[t.net];
    if (b.count == 0) {
      constant += (t.ox_max - t.ox_min) + (t.oy_max - t.oy_min);
      continue;
    }
    for (int c = 0; c < n; ++c) {
      along_x[c] += axis_growth(c, t.ox_min, t.ox_max, b.xmin, b.xmax);
      along_y[c] += axis_growth(c, t.oy_min, t.oy_max, b.ymin, b.ymax);
    }
  }
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) out.wire_raw(y, x) = along_x[x] + along_y[y] + constant;

  const double peak = out.wire_raw.maxCoeff();
  out.wire = peak > 0.0 ? GridMap(out.wire_raw / peak) : GridMap(GridMap::Zero(n, n));
  return out;
}

double delta_hpwl(const PlacementState& state, Cell cell) {
  const int m = state.next_macro();
  const auto& boxes = state.net_boxes();
  int delta = 0;
  for (const NetTouch& t : touches(state.index(), m)) {
    const NetBox& b = boxes[t.net];
    if (b.count == 0) {
      delta += (t.ox_max - t.ox_min) + (t.oy_max - t.oy_min);
      continue;
    }
    delta += axis_growth(cell.x, t.ox_min, t.ox_max, b.xmin, b.xmax);
    delta += axis_growth(cell.y, t.oy_min, t.oy_max, b.ymin, b.ymax);
  }
  return delta;
}

int grid_hpwl(const PlacementState& state) {
  int total = 0;
  for (const auto& b : state.net_boxes()) total += b.half_perimeter();
  return total;
}

double apply_action(PlacementState& state, Action action) {
  if (state.done()) throw IllegalActionError("placement already complete");
  const int n = state.grid_.n;
  if (action < 0 || action >= n * n)
    throw IllegalActionError("action " + std::to_string(action) + " outside the grid");
  const int m = state.next_macro();
  const Footprint fp = state.index_->footprints[m];
  const Cell c = decode_action(action, n);
  if (!fits(state, fp, c))
    throw IllegalActionError("action " + std::to_string(action) + " (" + std::to_string(c.x) +
                             ", " + std::to_string(c.y) + ") is masked for macro " +
                             std::to_string(m) + " at step " + std::to_string(state.t_));
  const double delta = delta_hpwl(state, c);
  for (int y = c.y; y < c.y + fp.h; ++y)
    for (int x = c.x; x < c.x + fp.w; ++x) state.occupancy_[y * n + x] = 1;
  for (const auto& ref : state.index_->by_module[m])
    state.boxes_[ref.net].add(c.x + ref.offset.x, c.y + ref.offset.y);
  state.anchors_[m] = c;
  ++state.t_;
  return delta;
}

double reward_scale(const PlacementState& state) {
  return 1.0 / (static_cast<double>(state.grid().n) * std::max(1, state.index().num_nets));
}

StepResult step(const PlacementState& state, Action action) {
  StepResult r{state, 0.0, false};
  const double delta = apply_action(r.state, action);
  r.reward = -delta * reward_scale(state);
  r.done = r.state.done();
  return r;
}

std::string_view to_string(Collector c) {
  switch (c) {
    case Collector::kGreedy:
      return "greedy";
    case Collector::kStochasticGreedy:
      return "stochastic-greedy";
    case Collector::kAnnealed:
      return "annealed";
    case Collector::kLearned:
      return "learned";
  }
  return "greedy";
}

Trajectory rollout(const PolicyFn& policy, const Netlist& netlist, const GridSpec& grid,
                   std::uint64_t seed, int max_macros) {
  Rng rng(seed);
  PlacementState state = reset(netlist, grid, max_macros);
  Trajectory traj;
  traj.circuit_id = netlist.name;
  traj.seed = seed;
  std::vector<MaskSet> history;
  history.reserve(state.horizon());
  const double scale = reward_scale(state);
  while (!state.done()) {
    MaskSet current = masks(state);
    if (current.feasible_count() == 0) {
      traj.dead_end = true;
      break;
    }
    Eigen::VectorXd weights =
        policy(PolicyInput{state, current, std::span<const MaskSet>(history),
                           std::span<const Action>(traj.actions)},
               rng);
    if (weights.size() != grid.cells())
      throw ShapeError("policy returned " + std::to_string(weights.size()) + " weights for " +
                       std::to_string(grid.cells()) + " cells");
    const Eigen::Map<const Eigen::VectorXd> feasible(current.position.data(), grid.cells());
    weights = weights.cwiseMax(0.0).cwiseProduct(feasible);
    const double total = weights.sum();
    if (!(total > 0.0) || !std::isfinite(total))
      throw ValidationError("policy assigned no mass to any feasible cell");
    double u = rng.uniform() * total;
    Action chosen = -1;
    for (int a = 0; a < grid.cells(); ++a) {
      if (weights[a] <= 0.0) continue;
      chosen = a;
      if (u < weights[a]) break;
      u -= weights[a];
    }
    const double delta = apply_action(state, chosen);
    traj.actions.push_back(chosen);
    traj.rewards.push_back(-delta * scale);
    history.push_back(std::move(current));
  }
  for (double r : traj.rewards) traj.return_R += r;
  traj.final_hpwl = grid_hpwl(state);
  return traj;
}

PlacementState replay_state(const Netlist& netlist, const GridSpec& grid,
                            std::span<const Action> actions, int max_macros) {
  PlacementState state = reset(netlist, grid, max_macros);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (state.done())
      throw IllegalActionError("more actions than macros (" + std::to_string(state.horizon()) +
                               ")");
    apply_action(state, actions[i]);
  }
  return state;
}

Trajectory replay(const Netlist& netlist, const GridSpec& grid, std::span<const Action> actions,
                  int max_macros) {
  PlacementState state = reset(netlist, grid, max_macros);
  if (static_cast<int>(actions.size()) != state.horizon())
    throw ValidationError("trajectory has " + std::to_string(actions.size()) +
                          " actions for " + std::to_string(state.horizon()) + " macros");
  Trajectory traj;
  traj.circuit_id = netlist.name;
  const double scale = reward_scale(state);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    double delta = 0.0;
    try {
      delta = apply_action(state, actions[i]);
    } catch (const IllegalActionError& e) {
      throw IllegalActionError("circuit '" + netlist.name + "' step " + std::to_string(i) +
                               ": " + e.what());
    }
    traj.actions.push_back(actions[i]);
    traj.rewards.push_back(-delta * scale);
  }
  for (double r : traj.rewards) traj.return_R += r;
  traj.final_hpwl = grid_hpwl(state);
  return traj;
}

}  // namespace dtplace
