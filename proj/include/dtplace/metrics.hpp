#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dtplace/canvas.hpp"
#include "dtplace/netlist.hpp"

namespace dtplace {

/// Lower-left physical positions indexed by module id; unplaced modules are
/// empty and their pins are ignored.
struct PlacementSolution {
  const Netlist* netlist = nullptr;
  std::vector<std::optional<Point>> positions;
};

/// Fixed modules at their fixed positions, everything else unplaced.
PlacementSolution fixed_solution(const Netlist& netlist);

/// Grid state converted to physical units: anchor cell (gx, gy) maps to
/// (gx * cell_w, gy * cell_h). Fixed modules keep their positions.
PlacementSolution to_solution(const PlacementState& state, const Netlist& netlist);

/// Sum over nets of bounding-box half-perimeters of placed pins.
double hpwl(const PlacementSolution& solution);

/// Pairwise macro intersection area (each unordered pair once) over canvas
/// area, clamped to [0, 1].
double overlap_ratio(const PlacementSolution& solution);

struct Congestion {
  double horizontal = 0.0;
  double vertical = 0.0;
};

/// RUDY estimate on the grid with unit capacity per cell. A net whose bbox
/// spans k rows adds 1/k horizontal demand to each cell of the bbox (and
/// symmetrically for columns). Returns the fraction of cells whose demand
/// exceeds capacity.
Congestion congestion(const PlacementSolution& solution, const GridSpec& grid);

/// Demand above this counts as overflow; absorbs round-off in sums of 1/k.
inline constexpr double kCongestionCapacity = 1.0 + 1e-9;

/// Sum of rewards, or nullopt for a dead-ended trajectory.
std::optional<double> trajectory_return(const Trajectory& trajectory);

struct MetricsReport {
  double hpwl = 0.0;       // physical units
  double hpwl_grid = 0.0;  // cells
  double overlap_ratio = 0.0;
  double congestion_h = 0.0;
  double congestion_v = 0.0;
  int num_placed = 0;
  double return_R = 0.0;
};

MetricsReport evaluate_placement(const PlacementState& state, const Netlist& netlist,
                                 const Trajectory& trajectory);

/// `key=value` lines in a fixed key order.
std::string to_key_value(const MetricsReport& report);
std::string to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& text);

}  // namespace dtplace
