#pragma once

// Brute-force references for tests. These take plain data (netlists,
// positions, anchor cells) and recompute everything from first principles;
// nothing here calls into the library's algorithms.

#include <optional>
#include <utility>
#include <vector>

#include "dtplace/netlist.hpp"

namespace oracle {

using dtplace::Netlist;
using dtplace::Point;

/// Physical HPWL: nets with at least two placed pins, per-net min/max scan.
double hpwl(const Netlist& nl, const std::vector<std::optional<Point>>& pos);

/// Sum of pairwise intersection areas over canvas area.
double overlap_ratio(const Netlist& nl, const std::vector<std::optional<Point>>& pos);

/// Fraction of cells whose RUDY demand exceeds one, {horizontal, vertical}.
std::pair<double, double> congestion(const Netlist& nl, const std::vector<std::optional<Point>>& pos,
                                     int n);

using Anchor = std::optional<std::pair<int, int>>;  // (gx, gy) or unplaced

/// Grid HPWL in cells with movable macros at `anchors` (indexed by module id)
/// and fixed modules at their positions.
long grid_hpwl(const Netlist& nl, int n, const std::vector<Anchor>& anchors);

/// For every cell (gy * n + gx), grid_hpwl after anchoring `macro` there
/// minus grid_hpwl before.
std::vector<double> wire_mask(const Netlist& nl, int n, const std::vector<Anchor>& anchors, int macro);

/// Minimal grid HPWL over every legal non-overlapping anchoring of all
/// movable macros. Intended for <= 4 macros on grids <= 8.
long best_placement(const Netlist& nl, int n);

struct TrendResult {
  double s = 0.0;
  double z = 0.0;
  double p_decreasing = 1.0;  // one-sided
};
/// Mann-Kendall trend test without tie correction.
TrendResult mann_kendall(const std::vector<double>& xs);

}  // namespace oracle
