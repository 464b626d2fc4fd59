#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "dtplace/errors.hpp"
#include "dtplace/netlist.hpp"
#include "helpers.hpp"

using namespace dtplace;

namespace {

Netlist small_netlist() {
  return parse_canonical(
      "dtplace-netlist 1\n"
      "name tiny\n"
      "canvas 10 10\n"
      "module a macro 2 2\n"
      "module b macro 3 1\n"
      "module io port 0 0 fixed 0 5\n"
      "module blk macro 2 2 fixed 8 8\n"
      "net n0 3\n"
      "pin a 1 1\n"
      "pin b 0 0.5\n"
      "pin io 0 0\n"
      "net n1 2\n"
      "pin b 3 1\n"
      "pin blk 0 0\n"
      "end\n");
}

}  // namespace

TEST_CASE("canonical text round-trips exactly") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SyntheticSpec spec;
    spec.seed = seed;
    spec.n_macros = 3 + static_cast<int>(seed % 9);
    const Netlist nl = testing::with_fixed(generate_synthetic(spec), seed);
    const std::string text = serialize(nl);
    const Netlist back = parse_canonical(text);
    CHECK(back == nl);
    CHECK(serialize(back) == text);
  }
}

TEST_CASE("canonical parser reads kinds, fixed positions and pins") {
  const Netlist nl = small_netlist();
  REQUIRE(nl.modules.size() == 4);
  CHECK(nl.name == "tiny");
  CHECK(nl.canvas_w == 10.0);
  CHECK(nl.modules[2].kind == ModuleKind::kPort);
  CHECK(nl.modules[3].fixed);
  CHECK(nl.modules[3].fixed_pos == Point{8.0, 8.0});
  CHECK(nl.num_movable_macros() == 2);
  CHECK(nl.nets[0].pins[1] == Pin{1, 0.0, 0.5});
  CHECK(nl.find_module("blk") == 3);
  CHECK_FALSE(nl.find_module("zz").has_value());
  CHECK(nl.net_degrees() == std::vector<int>{1, 2, 1, 1});
}

TEST_CASE("parse errors carry line and column") {
  const auto line_of = [](const std::string& text) {
    try {
      parse_canonical(text);
    } catch (const ParseError& e) {
      return std::make_pair(e.line(), e.column());
    }
    return std::make_pair(-1, -1);
  };
  CHECK(line_of("netlist 1\n").first == 1);
  CHECK(line_of("dtplace-netlist 1\nname x\ncanvas 10 ten\nend\n") == std::make_pair(3, 11));
  CHECK(line_of("dtplace-netlist 1\nname x\ncanvas 10 10\nmodule a macro 1 1\nnet n 2\npin a 0 0\nend\n").first == 7);
  CHECK(line_of("dtplace-netlist 1\nname x\ncanvas 10 10\nnet n 1\npin ghost 0 0\nend\n").first == 5);
  CHECK(line_of("dtplace-netlist 1\nname x\ncanvas 10 10\nmodule a blob 1 1\nend\n").first == 4);
}

TEST_CASE("validation names the broken invariant") {
  Netlist nl = small_netlist();
  CHECK_NOTHROW(validate(nl));

  Netlist dup = nl;
  dup.modules[1].name = "a";
  CHECK_THROWS_WITH_AS(validate(dup), doctest::Contains("duplicate"), ValidationError);

  Netlist outside = nl;
  outside.nets[0].pins[0].dx = 5.0;
  CHECK_THROWS_WITH_AS(validate(outside), doctest::Contains("outside"), ValidationError);

  Netlist port = nl;
  port.modules[2].width = 1.0;
  CHECK_THROWS_AS(validate(port), ValidationError);

  Netlist empty_net = nl;
  empty_net.nets[1].pins.clear();
  CHECK_THROWS_AS(validate(empty_net), ValidationError);
}

TEST_CASE("bookshelf subset: terminals, ports, centre-relative offsets") {
  const std::string nodes =
      "UCLA nodes 1.0\n# comment\nNumNodes : 4\nNumTerminals : 2\n"
      "a 4 2\nb 2 2\nblk 3 3 terminal\nio 0 0 terminal_NI\n";
  const std::string nets =
      "UCLA nets 1.0\nNumNets : 1\nNumPins : 3\n"
      "NetDegree : 3 n0\n  a O : 1 0.5\n  b I\n  io B : 0 0\n";
  const std::string pl = "UCLA pl 1.0\na 0 0 : N\nb 0 0 : N\nblk 10 10 : N /FIXED\nio 0 7 : N /FIXED_NI\n";
  const Netlist nl = parse_bookshelf(nodes, nets, pl, CanvasSize{20.0, 20.0}, "bs");
  REQUIRE(nl.modules.size() == 4);
  CHECK(nl.modules[0].movable_macro());
  CHECK(nl.modules[2].fixed);
  CHECK(nl.modules[2].is_macro());
  CHECK(nl.modules[3].kind == ModuleKind::kPort);
  CHECK(nl.modules[3].fixed_pos == Point{0.0, 7.0});
  // offset (1, 0.5) from the centre of a 4 x 2 macro
  CHECK(nl.nets[0].pins[0].dx == doctest::Approx(3.0));
  CHECK(nl.nets[0].pins[0].dy == doctest::Approx(1.5));
  // no offset means the centre
  CHECK(nl.nets[0].pins[1].dx == doctest::Approx(1.0));
  CHECK(nl.canvas_w == 20.0);
  CHECK_NOTHROW(validate(nl));

  CHECK_THROWS_AS(parse_bookshelf(nodes, "UCLA nets 1.0\nNetDegree : 2\n  a\n", pl), ParseError);
  CHECK_THROWS_AS(parse_bookshelf(nodes, "UCLA nets 1.0\nNetDegree : 1\n  zz\n", pl), ParseError);
}

TEST_CASE("bookshelf writer and parser are inverse up to round-off") {
  const Netlist nl = testing::with_fixed(generate_synthetic({.seed = 3, .n_macros = 7}), 3);
  const BookshelfTexts bs = to_bookshelf(nl);
  const Netlist back = parse_bookshelf(bs.nodes, bs.nets, bs.pl, CanvasSize{nl.canvas_w, nl.canvas_h}, nl.name);
  REQUIRE(back.modules.size() == nl.modules.size());
  REQUIRE(back.nets.size() == nl.nets.size());
  for (std::size_t i = 0; i < nl.modules.size(); ++i) {
    CHECK(back.modules[i].name == nl.modules[i].name);
    CHECK(back.modules[i].fixed == nl.modules[i].fixed);
    CHECK(back.modules[i].kind == nl.modules[i].kind);
  }
  for (std::size_t k = 0; k < nl.nets.size(); ++k)
    for (std::size_t p = 0; p < nl.nets[k].pins.size(); ++p) {
      CHECK(back.nets[k].pins[p].dx == doctest::Approx(nl.nets[k].pins[p].dx).epsilon(1e-12));
      CHECK(back.nets[k].pins[p].dy == doctest::Approx(nl.nets[k].pins[p].dy).epsilon(1e-12));
    }
}

TEST_CASE("generator is deterministic and meets its contract") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    SyntheticSpec spec{.seed = seed, .n_macros = 2 + static_cast<int>(seed % 20), .n_nets = 5 + static_cast<int>(seed % 7),
                       .canvas = {50.0, 80.0}, .target_util = 0.1 + 0.02 * static_cast<double>(seed % 10)};
    const Netlist a = generate_synthetic(spec);
    CHECK(a == generate_synthetic(spec));
    CHECK_NOTHROW(validate(a));
    CHECK(static_cast<int>(a.modules.size()) == spec.n_macros);
    CHECK(static_cast<int>(a.nets.size()) == spec.n_nets);
    double area = 0.0;
    std::set<int> covered;
    for (const auto& m : a.modules) {
      area += m.area();
      CHECK(m.width <= spec.canvas.w);
      CHECK(m.height <= spec.canvas.h);
    }
    CHECK(area == doctest::Approx(spec.target_util * 50.0 * 80.0));
    for (const auto& net : a.nets) {
      std::set<int> members;
      for (const auto& p : net.pins) members.insert(p.module_id);
      CHECK(members.size() >= std::min<std::size_t>(2, a.modules.size()));
      covered.insert(members.begin(), members.end());
    }
    if (spec.n_nets >= spec.n_macros) CHECK(static_cast<int>(covered.size()) == spec.n_macros);
  }
  CHECK_THROWS_AS(generate_synthetic({.target_util = 0.95}), InfeasibleError);
  CHECK_THROWS_AS(generate_synthetic({.n_macros = 0}), ValidationError);
}

TEST_CASE("macro order: area, then degree, then id; truncation") {
  const Netlist nl = generate_synthetic({.seed = 11, .n_macros = 12, .n_nets = 20});
  const auto order = macro_order(nl);
  REQUIRE(order.size() == 12);
  const auto deg = nl.net_degrees();
  for (std::size_t i = 1; i < order.size(); ++i) {
    const Module& a = nl.modules[order[i - 1]];
    const Module& b = nl.modules[order[i]];
    const bool ok = a.area() > b.area() ||
                    (a.area() == b.area() && (deg[a.id] > deg[b.id] || (deg[a.id] == deg[b.id] && a.id < b.id)));
    CHECK(ok);
  }
  CHECK(macro_order(nl, 5).size() == 5);
  CHECK(std::equal(order.begin(), order.begin() + 5, macro_order(nl, 5).begin()));

  const Netlist fx = small_netlist();
  CHECK(macro_order(fx) == std::vector<int>{0, 1});
}

TEST_CASE("graph view: macros only, symmetric, features in [0, 1]") {
  const Netlist nl = small_netlist();
  const CircuitGraph g = to_graph(nl);
  CHECK(g.module_ids == std::vector<int>{0, 1, 3});
  CHECK(g.adjacency.isApprox(g.adjacency.transpose()));
  CHECK(g.adjacency.diagonal().isZero());
  CHECK(g.adjacency(0, 1) == 1.0);
  CHECK(g.adjacency(1, 2) == 1.0);
  CHECK(g.adjacency(0, 2) == 0.0);
  CHECK(g.features.cols() == kNodeFeatures);
  CHECK(g.features.minCoeff() >= 0.0);
  CHECK(g.features.maxCoeff() <= 1.0);
  CHECK(g.features(0, 0) == doctest::Approx(0.2));
}
