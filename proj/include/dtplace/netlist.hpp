#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dtplace {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

enum class ModuleKind { kMacro, kStandardCell, kPort };

std::string_view to_string(ModuleKind kind);
ModuleKind module_kind_from_string(std::string_view text);

struct Module {
  int id = 0;
  std::string name;
  double width = 0.0;
  double height = 0.0;
  ModuleKind kind = ModuleKind::kMacro;
  bool fixed = false;
  std::optional<Point> fixed_pos;

  double area() const { return width * height; }
  bool is_macro() const { return kind == ModuleKind::kMacro; }
  bool movable_macro() const { return is_macro() && !fixed; }
  friend bool operator==(const Module&, const Module&) = default;
};

/// Pin offsets are measured from the module's lower-left corner.
struct Pin {
  int module_id = 0;
  double dx = 0.0;
  double dy = 0.0;
  friend bool operator==(const Pin&, const Pin&) = default;
};

struct Net {
  int id = 0;
  std::string name;
  std::vector<Pin> pins;
  friend bool operator==(const Net&, const Net&) = default;
};

struct Netlist {
  std::string name;
  double canvas_w = 0.0;
  double canvas_h = 0.0;
  std::vector<Module> modules;
  std::vector<Net> nets;

  std::optional<int> find_module(std::string_view name) const;
  /// Number of nets touching each module.
  std::vector<int> net_degrees() const;
  int num_movable_macros() const;
  friend bool operator==(const Netlist&, const Netlist&) = default;
};

/// Throws ValidationError naming the first violated invariant.
void validate(const Netlist& netlist);

// ---------------------------------------------------------------------------
// Bookshelf subset.
//
// .nodes   [UCLA nodes 1.0] [NumNodes : N] [NumTerminals : K]
//          <name> <width> <height> [terminal | terminal_NI]
// .nets    [UCLA nets 1.0] [NumNets : N] [NumPins : P]
//          NetDegree : <k> [<net name>]
//          followed by k lines  <node> [I|O|B] [: <dx> <dy>]
//          where (dx, dy) is relative to the node centre, as in ISPD benchmarks.
// .pl      [UCLA pl 1.0]
//          <name> <x> <y> [: <orient>] [/FIXED | /FIXED_NI]
// '#' starts a comment anywhere. Non-terminal nodes are macros. Terminals
// with positive area are fixed macros, zero-area terminals are ports.
// Without an explicit canvas, the canvas is the extent of all .pl positions,
// or a square at 50% utilization when nothing is placed.
// ---------------------------------------------------------------------------

struct CanvasSize {
  double w = 0.0;
  double h = 0.0;
};

Netlist parse_bookshelf(std::string_view nodes_text, std::string_view nets_text,
                        std::optional<std::string_view> pl_text = std::nullopt,
                        std::optional<CanvasSize> canvas = std::nullopt,
                        std::string name = "bookshelf");

/// Writes .nodes/.nets/.pl texts for `netlist` (inverse of parse_bookshelf).
struct BookshelfTexts {
  std::string nodes;
  std::string nets;
  std::string pl;
};
BookshelfTexts to_bookshelf(const Netlist& netlist);

// ---------------------------------------------------------------------------
// Canonical single-file format (UTF-8, one record per line):
//
//   dtplace-netlist 1
//   name <name>
//   canvas <W> <H>
//   module <name> <macro|stdcell|port> <width> <height> [fixed <x> <y>]
//   net <name> <degree>
//   pin <module name> <dx> <dy>          (exactly <degree> lines per net)
//   end
//
// Numbers are printed with 17 significant digits so the round trip is exact.
// ---------------------------------------------------------------------------

std::string serialize(const Netlist& netlist);
Netlist parse_canonical(std::string_view text);

struct SyntheticSpec {
  std::uint64_t seed = 0;
  int n_macros = 8;
  int n_nets = 12;
  CanvasSize canvas{64.0, 64.0};
  double target_util = 0.3;
};

/// Deterministic random circuit. Nets have degree >= 2 and cover every macro.
Netlist generate_synthetic(const SyntheticSpec& spec);

// ---------------------------------------------------------------------------
// Graph view used by the circuit-token encoder.
// ---------------------------------------------------------------------------

inline constexpr int kNodeFeatures = 4;

struct CircuitGraph {
  Eigen::MatrixXd adjacency;  // N x N, symmetric, zero diagonal
  Eigen::MatrixXd features;   // N x 4: w/W, h/H, degree/max, area/max
  std::vector<int> module_ids;  // row -> module id
};

/// Macros only (fixed macros included, ports and standard cells excluded).
CircuitGraph to_graph(const Netlist& netlist);

/// Movable macros by descending (area, net degree), ties by ascending id,
/// truncated to max_macros.
std::vector<int> macro_order(const Netlist& netlist, int max_macros = 256);

}  // namespace dtplace
