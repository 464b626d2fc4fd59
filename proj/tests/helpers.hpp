#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "dtplace/canvas.hpp"
#include "dtplace/netlist.hpp"
#include "dtplace/rng.hpp"
#include "dtplace/tensor.hpp"
#include "oracles/oracles.hpp"

namespace testing {

using namespace dtplace;

/// Relative L2 error between float32 reverse-mode gradients and float64
/// central differences of the same function. `f` is a generic callable taking
/// std::vector<ad::Tensor<S>>& and returning a scalar tensor.
template <typename F>
double fd_error(F&& f, const std::vector<Eigen::MatrixXd>& inits, double h = 1e-6) {
  std::vector<ad::Tensor<float>> pf;
  for (const auto& m : inits) pf.push_back(ad::Tensor<float>::parameter(m.cast<float>()));
  ad::backward(f(pf));

  std::vector<ad::Tensor<double>> pd;
  for (const auto& m : inits) pd.push_back(ad::Tensor<double>::parameter(m));
  ad::NoGrad<double> off;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pd.size(); ++i) {
    auto& v = pd[i].mutable_value();
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      const double orig = v.data()[k];
      v.data()[k] = orig + h;
      const double up = f(pd).item();
      v.data()[k] = orig - h;
      const double down = f(pd).item();
      v.data()[k] = orig;
      const double fd = (up - down) / (2 * h);
      const double an = pf[i].has_grad() ? static_cast<double>(pf[i].grad().data()[k]) : 0.0;
      num += (fd - an) * (fd - an);
      den += fd * fd;
    }
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

inline Eigen::MatrixXd randn(int rows, int cols, Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = scale * rng.normal();
  return m;
}

/// Synthetic circuit with one macro turned into a fixed block at a random
/// legal spot and a zero-area fixed port wired into the first net.
inline Netlist with_fixed(Netlist nl, std::uint64_t seed) {
  Rng rng(seed);
  Module& m = nl.modules[rng.below(nl.modules.size())];
  m.fixed = true;
  m.fixed_pos = Point{rng.uniform(0.0, nl.canvas_w - m.width), rng.uniform(0.0, nl.canvas_h - m.height)};
  Module port;
  port.id = static_cast<int>(nl.modules.size());
  port.name = "p0";
  port.kind = ModuleKind::kPort;
  port.fixed = true;
  port.fixed_pos = Point{rng.uniform(0.0, nl.canvas_w), 0.0};
  nl.modules.push_back(port);
  nl.nets.front().pins.push_back(Pin{port.id, 0.0, 0.0});
  return nl;
}

/// 2 to 4 movable macros on an 8 x 8 canvas (one unit per cell on grid 8).
inline Netlist tiny_instance(std::uint64_t seed) {
  Rng rng(seed);
  SyntheticSpec spec;
  spec.seed = seed;
  spec.n_macros = 2 + static_cast<int>(rng.below(3));
  spec.n_nets = 2 + static_cast<int>(rng.below(4));
  spec.canvas = {8.0, 8.0};
  spec.target_util = rng.uniform(0.15, 0.35);
  Netlist nl = generate_synthetic(spec);
  nl.name = "tiny" + std::to_string(seed);
  return nl;
}

/// Three equal macros; circuit 1 wires m0-m1 and m0-m2, circuit 2 also
/// wires m2 to m1. Both place m0, m1, m2 in that order and share the first
/// two states.
inline std::pair<Netlist, Netlist> token_pair() {
  const std::string head =
      "dtplace-netlist 1\nname NAME\ncanvas 16 16\n"
      "module m0 macro 4 4\nmodule m1 macro 4 4\nmodule m2 macro 4 4\n"
      "net a 2\npin m0 2 2\npin m1 2 2\nnet b 2\npin m0 2 2\npin m2 2 2\n";
  auto named = [&](const std::string& name, const std::string& tail) {
    std::string t = head;
    t.replace(t.find("NAME"), 4, name);
    return parse_canonical(t + tail + "end\n");
  };
  return {named("circuit1", ""), named("circuit2", "net c 2\npin m1 2 2\npin m2 2 2\n")};
}

inline std::vector<oracle::Anchor> anchors_of(const PlacementState& s, const Netlist& nl) {
  std::vector<oracle::Anchor> out(nl.modules.size());
  for (const auto& m : nl.modules)
    if (auto c = s.anchor(m.id)) out[m.id] = std::make_pair(c->x, c->y);
  return out;
}

}  // namespace testing
