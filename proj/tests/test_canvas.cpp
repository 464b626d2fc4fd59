#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dtplace/canvas.hpp"
#include "dtplace/data.hpp"
#include "dtplace/errors.hpp"
#include "helpers.hpp"

using namespace dtplace;

namespace {

// One 1x1 movable macro wired to a fixed zero-area port at (px, py).
Netlist point_and_macro(double px, double py) {
  return parse_canonical(
      "dtplace-netlist 1\nname pm\ncanvas 10 10\n"
      "module m macro 1 1\n"
      "module p port 0 0 fixed " + std::to_string(px) + " " + std::to_string(py) + "\n"
      "net n 2\npin m 0 0\npin p 0 0\nend\n");
}

PlacementState random_partial(const Netlist& nl, int n, std::uint64_t seed) {
  const GridSpec g = GridSpec::for_canvas(nl, n);
  PlacementState s = reset(nl, g);
  Rng rng(seed);
  const int steps = static_cast<int>(rng.below(s.horizon()));
  for (int t = 0; t < steps; ++t) {
    const MaskSet mk = masks(s);
    std::vector<Action> ok;
    for (int a = 0; a < g.cells(); ++a)
      if (mk.position.data()[a] > 0) ok.push_back(a);
    if (ok.empty()) break;
    apply_action(s, ok[rng.below(ok.size())]);
  }
  return s;
}

}  // namespace

TEST_CASE("grid spec and footprints") {
  const Netlist nl = point_and_macro(3, 3);
  const GridSpec g = GridSpec::for_canvas(nl, 20);
  CHECK(g.cell_w == doctest::Approx(0.5));
  CHECK(footprint(nl.modules[0], g).w == 2);
  Module m = nl.modules[0];
  m.width = 1.01;
  CHECK(footprint(m, g).w == 3);
  m.width = 0.1;
  CHECK(footprint(m, g).w == 1);
  m.width = 11;
  CHECK_THROWS_AS(footprint(m, g), InfeasibleError);
  CHECK_THROWS_AS(GridSpec::for_canvas(nl, 3), ValidationError);

  Module big = nl.modules[0];
  big.width = big.height = 2.0;
  CHECK(pin_cell_offset({0, 1.2, 2.0}, big, g) == Cell{2, 3});
  CHECK(pin_cell_offset({0, 0.0, 0.0}, big, g) == Cell{0, 0});
  CHECK(decode_action(encode_action({3, 5}, 7), 7) == Cell{3, 5});
}

TEST_CASE("single-point bounding box gives a Manhattan distance field") {
  const Netlist nl = point_and_macro(3.5, 6.2);
  const GridSpec g = GridSpec::for_canvas(nl, 10);
  const MaskSet m = masks(reset(nl, g));
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 10; ++x) CHECK(m.wire_raw(y, x) == std::abs(x - 3) + std::abs(y - 6));
  CHECK(m.wire.maxCoeff() == doctest::Approx(1.0));
  CHECK(m.wire(6, 3) == 0.0);
}

TEST_CASE("masks agree with brute force and the oracle on random states") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const int n = 8 + static_cast<int>(seed % 5) * 4;
    Netlist nl = generate_synthetic({.seed = seed, .n_macros = 3 + static_cast<int>(seed % 8),
                                     .n_nets = 6, .target_util = 0.3});
    if (seed % 2) nl = testing::with_fixed(nl, seed);
    const PlacementState s = random_partial(nl, n, seed);
    if (s.done()) continue;
    const MaskSet mk = masks(s);
    const int macro = s.next_macro();
    const Footprint fp = footprint(nl.modules[macro], s.grid());
    const auto expect = oracle::wire_mask(nl, n, testing::anchors_of(s, nl), macro);
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        bool free = x + fp.w <= n && y + fp.h <= n;
        for (int yy = y; free && yy < y + fp.h; ++yy)
          for (int xx = x; free && xx < x + fp.w; ++xx) free = !s.occupied(xx, yy);
        CHECK(mk.position(y, x) == (free ? 1.0 : 0.0));
        CHECK(mk.view(y, x) == (s.occupied(x, y) ? 1.0 : 0.0));
        CHECK(mk.wire_raw(y, x) == expect[y * n + x]);
        CHECK(delta_hpwl(s, {x, y}) == expect[y * n + x]);
      }
    }
    CHECK(grid_hpwl(s) == oracle::grid_hpwl(nl, n, testing::anchors_of(s, nl)));
    CHECK(mk.wire.minCoeff() >= 0.0);
    CHECK(mk.wire.maxCoeff() <= 1.0);
    ++checked;
  }
  CHECK(checked > 20);
}

TEST_CASE("illegal actions throw and leave the state untouched") {
  const Netlist nl = generate_synthetic({.seed = 5, .n_macros = 4});
  const GridSpec g = GridSpec::for_canvas(nl, 16);
  PlacementState s = reset(nl, g);
  apply_action(s, 0);
  const PlacementState before = s;
  CHECK_THROWS_AS(apply_action(s, 0), IllegalActionError);
  CHECK_THROWS_AS(apply_action(s, -1), IllegalActionError);
  CHECK_THROWS_AS(apply_action(s, g.cells()), IllegalActionError);
  CHECK(s.t() == before.t());
  CHECK(s.occupancy() == before.occupancy());
  CHECK(grid_hpwl(s) == grid_hpwl(before));
}

TEST_CASE("step is pure and the reward is the scaled HPWL increase") {
  const Netlist nl = testing::with_fixed(generate_synthetic({.seed = 9, .n_macros = 5, .n_nets = 7}), 2);
  const GridSpec g = GridSpec::for_canvas(nl, 16);
  PlacementState s = reset(nl, g);
  double total = 0.0;
  while (!s.done()) {
    const MaskSet mk = masks(s);
    Eigen::Index by, bx;
    (mk.wire_raw.array() + (1.0 - mk.position.array()) * 1e9).minCoeff(&by, &bx);
    const Action a = encode_action({static_cast<int>(bx), static_cast<int>(by)}, 16);
    const int hp = grid_hpwl(s);
    const StepResult r = step(s, a);
    CHECK(s.t() == r.state.t() - 1);
    CHECK(r.reward == doctest::Approx(-(grid_hpwl(r.state) - hp) / (16.0 * 7)));
    total += r.reward;
    s = r.state;
  }
  CHECK(total == doctest::Approx(-(grid_hpwl(s) - s.fixed_hpwl()) / (16.0 * 7)));
  CHECK_THROWS_AS(masks(s), ValidationError);
}

TEST_CASE("rollout, replay and dead ends") {
  const Netlist nl = generate_synthetic({.seed = 2, .n_macros = 9, .n_nets = 12});
  const GridSpec g = GridSpec::for_canvas(nl, 16);
  const Trajectory t = rollout(data::uniform_policy(), nl, g, 42);
  REQUIRE_FALSE(t.dead_end);
  CHECK(t.actions.size() == 9);
  const Trajectory r = replay(nl, g, t.actions);
  CHECK(r.rewards == t.rewards);
  CHECK(r.final_hpwl == t.final_hpwl);
  CHECK(rollout(data::uniform_policy(), nl, g, 42).actions == t.actions);

  std::vector<Action> bad = t.actions;
  bad[3] = bad[2];
  CHECK_THROWS_WITH_AS(replay(nl, g, bad), doctest::Contains("step 3"), IllegalActionError);

  // Two 6x6 macros on a 10x10 canvas cannot both fit.
  const Netlist crowded = parse_canonical(
      "dtplace-netlist 1\nname c\ncanvas 10 10\nmodule a macro 6 6\nmodule b macro 6 6\n"
      "net n 2\npin a 0 0\npin b 0 0\nend\n");
  const Trajectory d = rollout(data::uniform_policy(), crowded, GridSpec::for_canvas(crowded, 10), 1);
  CHECK(d.dead_end);
  CHECK(d.actions.size() == 1);
}

TEST_CASE("fixed modules block cells and contribute pins from the start") {
  const Netlist nl = parse_canonical(
      "dtplace-netlist 1\nname f\ncanvas 8 8\nmodule a macro 1 1\n"
      "module blk macro 2 3 fixed 4 2\nmodule p port 0 0 fixed 0 7.5\n"
      "net n 3\npin a 0 0\npin blk 1 1\npin p 0 0\nend\n");
  const PlacementState s = reset(nl, GridSpec::for_canvas(nl, 8));
  int blocked = 0;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) blocked += s.occupied(x, y);
  CHECK(blocked == 6);
  CHECK(s.occupied(5, 4));
  CHECK_FALSE(s.occupied(6, 2));
  CHECK(s.fixed_hpwl() == (5 - 0) + (7 - 3));
  Netlist off = nl;
  off.modules[1].fixed_pos = Point{7.0, 0.0};
  CHECK_THROWS_AS(reset(off, GridSpec::for_canvas(off, 8)), ValidationError);
}

TEST_CASE("states are values") {
  const Netlist nl = generate_synthetic({.seed = 1, .n_macros = 3});
  PlacementState a = reset(nl, GridSpec::for_canvas(nl, 12));
  PlacementState b = a;
  apply_action(b, 0);
  CHECK(a.t() == 0);
  CHECK_FALSE(a.occupied(0, 0));
  CHECK(b.occupied(0, 0));
}
