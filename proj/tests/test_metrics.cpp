#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dtplace/data.hpp"
#include "dtplace/metrics.hpp"
#include "helpers.hpp"

using namespace dtplace;

namespace {

PlacementSolution random_solution(const Netlist& nl, Rng& rng) {
  PlacementSolution sol = fixed_solution(nl);
  for (const auto& m : nl.modules)
    if (!m.fixed && rng.uniform() < 0.85)
      sol.positions[m.id] = Point{rng.uniform(0.0, nl.canvas_w - m.width), rng.uniform(0.0, nl.canvas_h - m.height)};
  return sol;
}

}  // namespace

TEST_CASE("hpwl matches the oracle on 500 random cases") {
  Rng rng(17);
  for (int i = 0; i < 500; ++i) {
    Netlist nl = generate_synthetic({.seed = static_cast<std::uint64_t>(i), .n_macros = 1 + i % 15,
                                     .n_nets = 1 + i % 11, .canvas = {30.0 + i % 7, 40.0}});
    if (i % 3 == 0) nl = testing::with_fixed(nl, i);
    const PlacementSolution sol = random_solution(nl, rng);
    const double expect = oracle::hpwl(nl, sol.positions);
    CHECK(hpwl(sol) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("hpwl closed forms") {
  const Netlist nl = parse_canonical(
      "dtplace-netlist 1\nname h\ncanvas 100 100\nmodule a macro 4 4\nmodule b macro 2 2\nmodule c macro 1 1\n"
      "net n 3\npin a 4 4\npin b 0 0\npin c 0.5 0.5\nend\n");
  PlacementSolution sol = fixed_solution(nl);
  CHECK(hpwl(sol) == 0.0);
  sol.positions[0] = Point{0, 0};
  CHECK(hpwl(sol) == 0.0);  // a lone pin has no extent
  sol.positions[1] = Point{10, 20};
  CHECK(hpwl(sol) == doctest::Approx(6 + 16));
  sol.positions[2] = Point{50, 1};
  CHECK(hpwl(sol) == doctest::Approx((50.5 - 4) + (20 - 1.5)));

  Netlist empty;
  empty.canvas_w = empty.canvas_h = 1;
  CHECK(hpwl(fixed_solution(empty)) == 0.0);
}

TEST_CASE("overlap and congestion match brute force") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Netlist nl = generate_synthetic({.seed = 1000u + i, .n_macros = 2 + i % 10, .n_nets = 3 + i % 9,
                                           .target_util = 0.5});
    const PlacementSolution sol = random_solution(nl, rng);
    CHECK(overlap_ratio(sol) == doctest::Approx(oracle::overlap_ratio(nl, sol.positions)).epsilon(1e-12));
    const int n = 4 + i % 13;
    const Congestion c = congestion(sol, GridSpec::for_canvas(nl, n));
    const auto [h, v] = oracle::congestion(nl, sol.positions, n);
    CHECK(c.horizontal == h);
    CHECK(c.vertical == v);
  }
}

TEST_CASE("overlap of touching and nested rectangles") {
  const Netlist nl = parse_canonical(
      "dtplace-netlist 1\nname o\ncanvas 10 10\nmodule a macro 2 2\nmodule b macro 2 2\nmodule c macro 1 1\n"
      "net n 2\npin a 0 0\npin b 0 0\nend\n");
  PlacementSolution sol = fixed_solution(nl);
  sol.positions = {Point{0, 0}, Point{2, 0}, Point{5, 5}};
  CHECK(overlap_ratio(sol) == 0.0);
  sol.positions[1] = Point{1, 1};
  CHECK(overlap_ratio(sol) == doctest::Approx(1.0 / 100));
  sol.positions[2] = Point{0.5, 0.5};
  CHECK(overlap_ratio(sol) == doctest::Approx((1.0 + 1.0 + 0.25) / 100));
}

TEST_CASE("single net congestion: a straight horizontal wire fills one row") {
  const Netlist nl = parse_canonical(
      "dtplace-netlist 1\nname w\ncanvas 8 8\nmodule a macro 1 1\nmodule b macro 1 1\n"
      "net n 2\npin a 0.5 0.5\npin b 0.5 0.5\nnet m 2\npin a 0.5 0.5\npin b 0.5 0.5\nend\n");
  PlacementSolution sol = fixed_solution(nl);
  sol.positions = {Point{0, 3}, Point{7, 3}};
  const Congestion c = congestion(sol, GridSpec::for_canvas(nl, 8));
  CHECK(c.horizontal == doctest::Approx(8.0 / 64));  // demand 2 in each cell of row 3
  CHECK(c.vertical == 0.0);                         // 2 * (1/8) per cell
}

TEST_CASE("to_solution maps anchors to physical coordinates") {
  const Netlist nl = testing::with_fixed(generate_synthetic({.seed = 4, .n_macros = 6}), 4);
  const GridSpec g = GridSpec::for_canvas(nl, 16);
  const Trajectory t = data::collect_greedy(nl, g, 0, 0.0);
  const PlacementState s = replay_state(nl, g, t.actions);
  const PlacementSolution sol = to_solution(s, nl);
  for (const auto& m : nl.modules) {
    if (m.fixed) {
      CHECK(sol.positions[m.id] == m.fixed_pos);
    } else if (auto c = s.anchor(m.id)) {
      CHECK(sol.positions[m.id]->x == doctest::Approx(c->x * g.cell_w));
      CHECK(sol.positions[m.id]->y == doctest::Approx(c->y * g.cell_h));
    }
  }
  const MetricsReport r = evaluate_placement(s, nl, t);
  CHECK(r.overlap_ratio == 0.0);
  CHECK(r.hpwl_grid == t.final_hpwl);
  CHECK(r.num_placed == 5);
  CHECK(r.return_R == doctest::Approx(t.return_R));
}

TEST_CASE("trajectory return and report serialization") {
  Trajectory t;
  t.rewards = {-0.25, -0.5};
  CHECK(trajectory_return(t) == -0.75);
  t.dead_end = true;
  CHECK_FALSE(trajectory_return(t).has_value());

  MetricsReport r{123.25, 40, 0.0, 0.125, 0.0625, 7, -0.1};
  const MetricsReport back = metrics_from_json(to_json(r));
  CHECK(back.hpwl == r.hpwl);
  CHECK(back.hpwl_grid == r.hpwl_grid);
  CHECK(back.congestion_v == r.congestion_v);
  CHECK(back.num_placed == 7);
  CHECK(back.return_R == r.return_R);
  CHECK(to_key_value(r).rfind("hpwl=123.25\nhpwl_grid=40\n", 0) == 0);
  r.return_R = std::nan("");
  CHECK(std::isnan(metrics_from_json(to_json(r)).return_R));
}
