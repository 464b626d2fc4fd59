#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtplace/netlist.hpp"
#include "dtplace/rng.hpp"

namespace dtplace {

/// Row-major n x n raster; entry (gy, gx) has flattened index gy * n + gx.
using GridMap = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct GridSpec {
  int n = 84;
  double cell_w = 1.0;
  double cell_h = 1.0;

  static GridSpec for_canvas(const Netlist& netlist, int n = 84);
  int cells() const { return n * n; }
};

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// An action is a flattened lower-left anchor cell: gy * n + gx.
using Action = int;

inline Action encode_action(Cell c, int n) { return c.y * n + c.x; }
inline Cell decode_action(Action a, int n) { return {a % n, a / n}; }

struct Footprint {
  int w = 1;
  int h = 1;
};

/// Cells covered by a macro: ceil(size / cell), at least 1. Throws
/// InfeasibleError when the macro is larger than the grid.
Footprint footprint(const Module& module, const GridSpec& grid);

/// Cell of a pin relative to its macro's anchor. The pin snaps to the cell
/// holding its physical location, kept inside the macro footprint.
Cell pin_cell_offset(const Pin& pin, const Module& module, const GridSpec& grid);

/// Per-module net membership with pin offsets already expressed in cells.
struct NetIndex {
  struct PinRef {
    int net = 0;
    Cell offset;
  };
  std::vector<std::vector<PinRef>> by_module;
  std::vector<Footprint> footprints;  // movable macros only, {0,0} otherwise
  int num_nets = 0;
};

/// Bounding box of the placed pins of one net, in cells.
struct NetBox {
  int count = 0;
  int xmin = 0, xmax = 0, ymin = 0, ymax = 0;

  void add(int x, int y);
  int half_perimeter() const { return count > 0 ? (xmax - xmin) + (ymax - ymin) : 0; }
};

/// Sequential placement state. A value type: copies are independent.
class PlacementState {
 public:
  const GridSpec& grid() const { return grid_; }
  const std::vector<int>& order() const { return order_; }
  int t() const { return t_; }
  int horizon() const { return static_cast<int>(order_.size()); }
  bool done() const { return t_ >= horizon(); }
  int next_macro() const { return order_.at(t_); }

  std::optional<Cell> anchor(int module_id) const { return anchors_.at(module_id); }
  bool placed(int module_id) const { return anchors_.at(module_id).has_value(); }
  bool occupied(int x, int y) const { return occupancy_[y * grid_.n + x] != 0; }
  const std::vector<std::uint8_t>& occupancy() const { return occupancy_; }
  const std::vector<NetBox>& net_boxes() const { return boxes_; }
  const NetIndex& index() const { return *index_; }
  /// Fixed-module occupancy and pins only, before any movable placement.
  int fixed_hpwl() const { return fixed_hpwl_; }

 private:
  friend PlacementState reset(const Netlist&, const GridSpec&, int);
  friend double apply_action(PlacementState&, Action);

  GridSpec grid_;
  std::vector<int> order_;
  int t_ = 0;
  std::vector<std::optional<Cell>> anchors_;
  std::vector<std::uint8_t> occupancy_;
  std::vector<NetBox> boxes_;
  std::shared_ptr<const NetIndex> index_;
  int fixed_hpwl_ = 0;
};

/// Initial state: fixed modules rasterized, order = macro_order(netlist).
/// Throws ValidationError when a fixed module leaves the canvas.
PlacementState reset(const Netlist& netlist, const GridSpec& grid, int max_macros = 256);

struct MaskSet {
  GridMap view;      // {0,1}: occupied cells
  GridMap position;  // {0,1}: feasible anchors for the next macro
  GridMap wire;      // wire_raw scaled to [0,1]
  GridMap wire_raw;  // exact HPWL increase in cells for each anchor

  int n() const { return static_cast<int>(view.rows()); }
  int feasible_count() const { return static_cast<int>(position.sum()); }
};

MaskSet masks(const PlacementState& state);

/// HPWL increase (in cells) of anchoring the next macro at `cell`.
double delta_hpwl(const PlacementState& state, Cell cell);

/// Sum of net half-perimeters over placed pins, in cells.
int grid_hpwl(const PlacementState& state);

/// Places order[t] at `action` in place and returns the HPWL increase.
/// Throws IllegalActionError (state untouched) when the anchor is infeasible.
double apply_action(PlacementState& state, Action action);

struct StepResult {
  PlacementState state;
  double reward = 0.0;
  bool done = false;
};

/// reward = -delta_hpwl / (n * max(1, num_nets)).
StepResult step(const PlacementState& state, Action action);

double reward_scale(const PlacementState& state);

// ---------------------------------------------------------------------------
// Trajectories and rollouts
// ---------------------------------------------------------------------------

enum class Collector : std::uint8_t { kGreedy = 0, kStochasticGreedy = 1, kAnnealed = 2, kLearned = 3 };

std::string_view to_string(Collector c);

struct Trajectory {
  std::string circuit_id;
  std::vector<Action> actions;
  std::vector<double> rewards;
  double return_R = 0.0;
  std::uint64_t seed = 0;
  Collector collector = Collector::kGreedy;
  bool dead_end = false;
  int final_hpwl = 0;  // grid units, including fixed pins
};

/// What a policy sees at each step of a rollout.
struct PolicyInput {
  const PlacementState& state;
  const MaskSet& current;
  std::span<const MaskSet> history;  // masks of earlier steps
  std::span<const Action> actions;   // earlier actions
};

/// Returns nonnegative weights over the n*n cells; the harness zeroes
/// infeasible cells and renormalizes before sampling.
using PolicyFn = std::function<Eigen::VectorXd(const PolicyInput&, Rng&)>;

Trajectory rollout(const PolicyFn& policy, const Netlist& netlist, const GridSpec& grid,
                   std::uint64_t seed, int max_macros = 256);

/// Re-executes a stored action sequence. Throws IllegalActionError naming the
/// step when any action is infeasible.
Trajectory replay(const Netlist& netlist, const GridSpec& grid, std::span<const Action> actions,
                  int max_macros = 256);

/// Final state reached by replaying a (possibly partial) action sequence.
PlacementState replay_state(const Netlist& netlist, const GridSpec& grid,
                            std::span<const Action> actions, int max_macros = 256);

}  // namespace dtplace
