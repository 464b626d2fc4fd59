#include "dtplace/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>

namespace dtplace {

PlacementSolution fixed_solution(const Netlist& netlist) {
  PlacementSolution sol{&netlist, std::vector<std::optional<Point>>(netlist.modules.size())};
  for (const auto& m : netlist.modules)
    if (m.fixed) sol.positions[m.id] = m.fixed_pos;
  return sol;
}

PlacementSolution to_solution(const PlacementState& state, const Netlist& netlist) {
  PlacementSolution sol = fixed_solution(netlist);
  const GridSpec& g = state.grid();
  for (const auto& m : netlist.modules) {
    if (auto c = state.anchor(m.id)) sol.positions[m.id] = Point{c->x * g.cell_w, c->y * g.cell_h};
  }
  return sol;
}

double hpwl(const PlacementSolution& solution) {
  const Netlist& nl = *solution.netlist;
  double total = 0.0;
  for (const auto& net : nl.nets) {
    double xmin = std::numeric_limits<double>::infinity();
    double xmax = -xmin, ymin = xmin, ymax = -xmin;
    int placed = 0;
    for (const auto& pin : net.pins) {
      const auto& pos = solution.positions[pin.module_id];
      if (!pos) continue;
      const double x = pos->x + pin.dx;
      const double y = pos->y + pin.dy;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
      ++placed;
    }
    if (placed >= 2) total += (xmax - xmin) + (ymax - ymin);
  }
  return total;
}

double overlap_ratio(const PlacementSolution& solution) {
  const Netlist& nl = *solution.netlist;
  std::vector<int> ids;
  for (const auto& m : nl.modules)
    if (solution.positions[m.id] && m.width > 0.0 && m.height > 0.0) ids.push_back(m.id);
  double area = 0.0;
  for (std::size_t a = 0; a < ids.size(); ++a) {
    const Module& ma = nl.modules[ids[a]];
    const Point pa = *solution.positions[ids[a]];
    for (std::size_t b = a + 1; b < ids.size(); ++b) {
      const Module& mb = nl.modules[ids[b]];
      const Point pb = *solution.positions[ids[b]];
      const double w = std::min(pa.x + ma.width, pb.x + mb.width) - std::max(pa.x, pb.x);
      const double h = std::min(pa.y + ma.height, pb.y + mb.height) - std::max(pa.y, pb.y);
      if (w > 0.0 && h > 0.0) area += w * h;
    }
  }
  return std::clamp(area / (nl.canvas_w * nl.canvas_h), 0.0, 1.0);
}

Congestion congestion(const PlacementSolution& solution, const GridSpec& grid) {
  const Netlist& nl = *solution.netlist;
  const int n = grid.n;
  GridMap demand_h = GridMap::Zero(n, n);
  GridMap demand_v = GridMap::Zero(n, n);
  auto cell_of = [n](double v, double cell) {
    return std::clamp(static_cast<int>(std::floor(v / cell)), 0, n - 1);
  };
  for (const auto& net : nl.nets) {
    double xmin = std::numeric_limits<double>::infinity();
    double xmax = -xmin, ymin = xmin, ymax = -xmin;
    int placed = 0;
    for (const auto& pin : net.pins) {
      const auto& pos = solution.positions[pin.module_id];
      if (!pos) continue;
      xmin = std::min(xmin, pos->x + pin.dx);
      xmax = std::max(xmax, pos->x + pin.dx);
      ymin = std::min(ymin, pos->y + pin.dy);
      ymax = std::max(ymax, pos->y + pin.dy);
      ++placed;
    }
    if (placed < 2) continue;
    const int x0 = cell_of(xmin, grid.cell_w), x1 = cell_of(xmax, grid.cell_w);
    const int y0 = cell_of(ymin, grid.cell_h), y1 = cell_of(ymax, grid.cell_h);
    const double rows = y1 - y0 + 1;
    const double cols = x1 - x0 + 1;
    demand_h.block(y0, x0, y1 - y0 + 1, x1 - x0 + 1).array() += 1.0 / rows;
    demand_v.block(y0, x0, y1 - y0 + 1, x1 - x0 + 1).array() += 1.0 / cols;
  }
  const double cells = static_cast<double>(n) * n;
  return {(demand_h.array() > kCongestionCapacity).count() / cells,
          (demand_v.array() > kCongestionCapacity).count() / cells};
}

std::optional<double> trajectory_return(const Trajectory& trajectory) {
  if (trajectory.dead_end) return std::nullopt;
  double sum = 0.0;
  for (double r : trajectory.rewards) sum += r;
  return sum;
}

MetricsReport evaluate_placement(const PlacementState& state, const Netlist& netlist,
                                 const Trajectory& trajectory) {
  const PlacementSolution sol = to_solution(state, netlist);
  MetricsReport r;
  r.hpwl = hpwl(sol);
  r.hpwl_grid = grid_hpwl(state);
  r.overlap_ratio = overlap_ratio(sol);
  const Congestion c = congestion(sol, state.grid());
  r.congestion_h = c.horizontal;
  r.congestion_v = c.vertical;
  r.num_placed = state.t();
  r.return_R = trajectory_return(trajectory).value_or(std::nan(""));
  return r;
}

namespace {
std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

std::string to_key_value(const MetricsReport& r) {
  std::ostringstream os;
  os << "hpwl=" << fmt(r.hpwl) << '\n'
     << "hpwl_grid=" << fmt(r.hpwl_grid) << '\n'
     << "overlap_ratio=" << fmt(r.overlap_ratio) << '\n'
     << "congestion_h=" << fmt(r.congestion_h) << '\n'
     << "congestion_v=" << fmt(r.congestion_v) << '\n'
     << "num_placed=" << r.num_placed << '\n'
     << "return=" << fmt(r.return_R) << '\n';
  return os.str();
}

std::string to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["hpwl"] = r.hpwl;
  j["hpwl_grid"] = r.hpwl_grid;
  j["overlap_ratio"] = r.overlap_ratio;
  j["congestion_h"] = r.congestion_h;
  j["congestion_v"] = r.congestion_v;
  j["num_placed"] = r.num_placed;
  j["return"] = r.return_R;
  return j.dump(2) + "\n";
}

MetricsReport metrics_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MetricsReport r;
  r.hpwl = j.at("hpwl").get<double>();
  r.hpwl_grid = j.at("hpwl_grid").get<double>();
  r.overlap_ratio = j.at("overlap_ratio").get<double>();
  r.congestion_h = j.at("congestion_h").get<double>();
  r.congestion_v = j.at("congestion_v").get<double>();
  r.num_placed = j.at("num_placed").get<int>();
  r.return_R = j.at("return").is_null() ? std::nan("") : j.at("return").get<double>();
  return r;
}

}  // namespace dtplace
