#include "dtplace/netlist.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "dtplace/errors.hpp"
#include "dtplace/rng.hpp"

namespace dtplace {

std::string_view to_string(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::kMacro:
      return "macro";
    case ModuleKind::kStandardCell:
      return "stdcell";
    case ModuleKind::kPort:
      return "port";
  }
  return "macro";
}

ModuleKind module_kind_from_string(std::string_view text) {
  if (text == "macro") return ModuleKind::kMacro;
  if (text == "stdcell") return ModuleKind::kStandardCell;
  if (text == "port") return ModuleKind::kPort;
  throw ValidationError("unknown module kind '" + std::string(text) + "'");
}

std::optional<int> Netlist::find_module(std::string_view name) const {
  for (const auto& m : modules)
    if (m.name == name) return m.id;
  return std::nullopt;
}

std::vector<int> Netlist::net_degrees() const {
  std::vector<int> degree(modules.size(), 0);
  for (const auto& net : nets) {
    std::set<int> seen;
    for (const auto& pin : net.pins)
      if (seen.insert(pin.module_id).second) ++degree[pin.module_id];
  }
  return degree;
}

int Netlist::num_movable_macros() const {
  return static_cast<int>(std::count_if(modules.begin(), modules.end(),
                                        [](const Module& m) { return m.movable_macro(); }));
}

void validate(const Netlist& netlist) {
  if (!(netlist.canvas_w > 0.0) || !(netlist.canvas_h > 0.0))
    throw ValidationError("canvas dimensions must be positive");
  std::set<std::string> names;
  for (std::size_t i = 0; i < netlist.modules.size(); ++i) {
    const Module& m = netlist.modules[i];
    if (m.id != static_cast<int>(i))
      throw ValidationError("module '" + m.name + "' has id " + std::to_string(m.id) +
                            " at index " + std::to_string(i));
    if (!names.insert(m.name).second)
      throw ValidationError("duplicate module name '" + m.name + "'");
    if (m.kind == ModuleKind::kPort) {
      if (m.width != 0.0 || m.height != 0.0)
        throw ValidationError("port '" + m.name + "' must have zero area");
    } else if (!(m.width > 0.0) || !(m.height > 0.0)) {
      throw ValidationError("module '" + m.name + "' has non-positive dimension");
    }
    if (m.fixed && !m.fixed_pos)
      throw ValidationError("fixed module '" + m.name + "' has no position");
  }
  for (const auto& net : netlist.nets) {
    if (net.pins.empty()) throw ValidationError("net '" + net.name + "' has no pins");
    std::set<std::tuple<int, double, double>> seen;
    for (const auto& pin : net.pins) {
      if (pin.module_id < 0 || pin.module_id >= static_cast<int>(netlist.modules.size()))
        throw ValidationError("net '" + net.name + "' references missing module " +
                              std::to_string(pin.module_id));
      const Module& m = netlist.modules[pin.module_id];
      if (pin.dx < 0.0 || pin.dx > m.width || pin.dy < 0.0 || pin.dy > m.height)
        throw ValidationError("pin of '" + m.name + "' in net '" + net.name +
                              "' lies outside the module");
      if (!seen.insert({pin.module_id, pin.dx, pin.dy}).second)
        throw ValidationError("net '" + net.name + "' repeats a pin of '" + m.name + "'");
    }
  }
}

namespace {

struct Token {
  std::string_view text;
  int column;
};

/// Splits one line into whitespace-separated tokens, dropping '#' comments.
std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    const char c = line[i];
    if (c == '#') break;
    if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r' &&
           line[j] != '#')
      ++j;
    out.push_back({line.substr(i, j - i), static_cast<int>(i) + 1});
    i = j;
  }
  return out;
}

struct Line {
  int number;
  std::vector<Token> tokens;
};

std::vector<Line> split_lines(std::string_view text) {
  std::vector<Line> lines;
  int number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++number;
    auto tokens = tokenize(text.substr(start, end - start));
    if (!tokens.empty()) lines.push_back({number, std::move(tokens)});
    if (end == text.size()) break;
    start = end + 1;
  }
  return lines;
}

double parse_number(const Token& tok, int line) {
  double value = 0.0;
  const char* first = tok.text.data();
  const char* last = first + tok.text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value))
    throw ParseError("expected a number, found '" + std::string(tok.text) + "'", line,
                     tok.column);
  return value;
}

long parse_integer(const Token& tok, int line) {
  long value = 0;
  const char* first = tok.text.data();
  const char* last = first + tok.text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw ParseError("expected an integer, found '" + std::string(tok.text) + "'", line,
                     tok.column);
  return value;
}

bool is_header(const Line& l, std::string_view keyword) {
  return l.tokens[0].text == "UCLA" ||
         (l.tokens[0].text == keyword && l.tokens.size() >= 2 && l.tokens[1].text == ":");
}

void expect_tokens(const Line& l, std::size_t n, std::string_view what) {
  if (l.tokens.size() < n) {
    const int col = l.tokens.back().column + static_cast<int>(l.tokens.back().text.size());
    throw ParseError("incomplete " + std::string(what), l.number, col);
  }
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Netlist parse_bookshelf(std::string_view nodes_text, std::string_view nets_text,
                        std::optional<std::string_view> pl_text, std::optional<CanvasSize> canvas,
                        std::string name) {
  Netlist netlist;
  netlist.name = std::move(name);
  std::unordered_map<std::string, int> index;

  for (const Line& l : split_lines(nodes_text)) {
    if (is_header(l, "NumNodes") || is_header(l, "NumTerminals")) continue;
    expect_tokens(l, 3, "node record");
    Module m;
    m.id = static_cast<int>(netlist.modules.size());
    m.name = std::string(l.tokens[0].text);
    m.width = parse_number(l.tokens[1], l.number);
    m.height = parse_number(l.tokens[2], l.number);
    bool terminal = false;
    if (l.tokens.size() >= 4) {
      if (l.tokens[3].text != "terminal" && l.tokens[3].text != "terminal_NI")
        throw ParseError("unexpected token '" + std::string(l.tokens[3].text) + "'", l.number,
                         l.tokens[3].column);
      terminal = true;
    }
    if (m.width < 0.0 || m.height < 0.0 || (!terminal && (m.width == 0.0 || m.height == 0.0)))
      throw ParseError("non-positive dimension for node '" + m.name + "'", l.number,
                       l.tokens[1].column);
    if (terminal) {
      m.fixed = true;
      m.kind = (m.width * m.height > 0.0) ? ModuleKind::kMacro : ModuleKind::kPort;
      if (m.kind == ModuleKind::kPort) m.width = m.height = 0.0;
    }
    if (!index.emplace(m.name, m.id).second)
      throw ParseError("duplicate node '" + m.name + "'", l.number, l.tokens[0].column);
    netlist.modules.push_back(std::move(m));
  }

  const auto lines = split_lines(nets_text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const Line& l = lines[i];
    if (is_header(l, "NumNets") || is_header(l, "NumPins")) continue;
    if (l.tokens[0].text != "NetDegree")
      throw ParseError("expected 'NetDegree', found '" + std::string(l.tokens[0].text) + "'",
                       l.number, l.tokens[0].column);
    expect_tokens(l, 3, "NetDegree record");
    if (l.tokens[1].text != ":")
      throw ParseError("expected ':'", l.number, l.tokens[1].column);
    const long degree = parse_integer(l.tokens[2], l.number);
    if (degree < 1) throw ParseError("net degree must be >= 1", l.number, l.tokens[2].column);
    Net net;
    net.id = static_cast<int>(netlist.nets.size());
    net.name = l.tokens.size() >= 4 ? std::string(l.tokens[3].text)
                                     : "net" + std::to_string(net.id);
    for (long k = 0; k < degree; ++k) {
      if (++i >= lines.size()) {
        throw ParseError("net '" + net.name + "' ends after " + std::to_string(k) + " of " +
                             std::to_string(degree) + " pins",
                         l.number, 1);
      }
      const Line& p = lines[i];
      auto it = index.find(std::string(p.tokens[0].text));
      if (it == index.end())
        throw ParseError("pin references undeclared node '" + std::string(p.tokens[0].text) +
                             "'",
                         p.number, p.tokens[0].column);
      const Module& m = netlist.modules[it->second];
      std::size_t t = 1;
      if (t < p.tokens.size() && (p.tokens[t].text == "I" || p.tokens[t].text == "O" ||
                                  p.tokens[t].text == "B"))
        ++t;
      double cx = 0.0;
      double cy = 0.0;
      if (t < p.tokens.size()) {
        if (p.tokens[t].text != ":")
          throw ParseError("expected ':' before pin offset", p.number, p.tokens[t].column);
        expect_tokens(p, t + 3, "pin offset");
        cx = parse_number(p.tokens[t + 1], p.number);
        cy = parse_number(p.tokens[t + 2], p.number);
      }
      net.pins.push_back({m.id, cx + 0.5 * m.width, cy + 0.5 * m.height});
    }
    netlist.nets.push_back(std::move(net));
  }

  double extent_w = 0.0;
  double extent_h = 0.0;
  if (pl_text) {
    for (const Line& l : split_lines(*pl_text)) {
      if (l.tokens[0].text == "UCLA") continue;
      expect_tokens(l, 3, "placement record");
      auto it = index.find(std::string(l.tokens[0].text));
      if (it == index.end())
        throw ParseError("placement for undeclared node '" + std::string(l.tokens[0].text) + "'",
                         l.number, l.tokens[0].column);
      Module& m = netlist.modules[it->second];
      const Point pos{parse_number(l.tokens[1], l.number), parse_number(l.tokens[2], l.number)};
      bool fixed_flag = false;
      for (std::size_t t = 3; t < l.tokens.size(); ++t)
        if (l.tokens[t].text == "/FIXED" || l.tokens[t].text == "/FIXED_NI") fixed_flag = true;
      if (m.fixed || fixed_flag) {
        m.fixed = true;
        m.fixed_pos = pos;
      }
      extent_w = std::max(extent_w, pos.x + m.width);
      extent_h = std::max(extent_h, pos.y + m.height);
    }
  }

  if (canvas) {
    netlist.canvas_w = canvas->w;
    netlist.canvas_h = canvas->h;
  } else if (extent_w > 0.0 && extent_h > 0.0) {
    netlist.canvas_w = extent_w;
    netlist.canvas_h = extent_h;
  } else {
    double area = 0.0;
    for (const auto& m : netlist.modules) area += m.area();
    const double side = std::sqrt(std::max(area, 1.0) / 0.5);
    netlist.canvas_w = netlist.canvas_h = side;
  }
  validate(netlist);
  return netlist;
}

BookshelfTexts to_bookshelf(const Netlist& netlist) {
  BookshelfTexts out;
  std::ostringstream nodes, nets, pl;
  int terminals = 0;
  for (const auto& m : netlist.modules) terminals += m.fixed ? 1 : 0;
  nodes << "UCLA nodes 1.0\n\nNumNodes : " << netlist.modules.size()
        << "\nNumTerminals : " << terminals << "\n";
  for (const auto& m : netlist.modules) {
    nodes << m.name << ' ' << format_double(m.width) << ' ' << format_double(m.height);
    if (m.fixed) nodes << " terminal";
    nodes << '\n';
  }
  std::size_t pins = 0;
  for (const auto& n : netlist.nets) pins += n.pins.size();
  nets << "UCLA nets 1.0\n\nNumNets : " << netlist.nets.size() << "\nNumPins : " << pins << "\n";
  for (const auto& n : netlist.nets) {
    nets << "NetDegree : " << n.pins.size() << ' ' << n.name << '\n';
    for (const auto& p : n.pins) {
      const Module& m = netlist.modules[p.module_id];
      nets << "  " << m.name << " B : " << format_double(p.dx - 0.5 * m.width) << ' '
           << format_double(p.dy - 0.5 * m.height) << '\n';
    }
  }
  pl << "UCLA pl 1.0\n\n";
  for (const auto& m : netlist.modules) {
    const Point pos = m.fixed_pos.value_or(Point{});
    pl << m.name << ' ' << format_double(pos.x) << ' ' << format_double(pos.y) << " : N";
    if (m.fixed) pl << " /FIXED";
    pl << '\n';
  }
  out.nodes = nodes.str();
  out.nets = nets.str();
  out.pl = pl.str();
  return out;
}

std::string serialize(const Netlist& netlist) {
  std::ostringstream os;
  os << "dtplace-netlist 1\n";
  os << "name " << netlist.name << '\n';
  os << "canvas " << format_double(netlist.canvas_w) << ' ' << format_double(netlist.canvas_h)
     << '\n';
  for (const auto& m : netlist.modules) {
    os << "module " << m.name << ' ' << to_string(m.kind) << ' ' << format_double(m.width) << ' '
       << format_double(m.height);
    if (m.fixed) os << " fixed " << format_double(m.fixed_pos->x) << ' '
                    << format_double(m.fixed_pos->y);
    os << '\n';
  }
  for (const auto& n : netlist.nets) {
    os << "net " << n.name << ' ' << n.pins.size() << '\n';
    for (const auto& p : n.pins)
      os << "pin " << netlist.modules[p.module_id].name << ' ' << format_double(p.dx) << ' '
         << format_double(p.dy) << '\n';
  }
  os << "end\n";
  return os.str();
}

Netlist parse_canonical(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0].tokens[0].text != "dtplace-netlist")
    throw ParseError("missing 'dtplace-netlist' header", lines.empty() ? 1 : lines[0].number, 1);
  expect_tokens(lines[0], 2, "header");
  if (parse_integer(lines[0].tokens[1], lines[0].number) != 1)
    throw ParseError("unsupported format version", lines[0].number, lines[0].tokens[1].column);

  Netlist netlist;
  std::unordered_map<std::string, int> index;
  bool ended = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const Line& l = lines[i];
    const auto key = l.tokens[0].text;
    if (ended) throw ParseError("content after 'end'", l.number, 1);
    if (key == "name") {
      expect_tokens(l, 2, "name record");
      netlist.name = std::string(l.tokens[1].text);
    } else if (key == "canvas") {
      expect_tokens(l, 3, "canvas record");
      netlist.canvas_w = parse_number(l.tokens[1], l.number);
      netlist.canvas_h = parse_number(l.tokens[2], l.number);
    } else if (key == "module") {
      expect_tokens(l, 5, "module record");
      Module m;
      m.id = static_cast<int>(netlist.modules.size());
      m.name = std::string(l.tokens[1].text);
      try {
        m.kind = module_kind_from_string(l.tokens[2].text);
      } catch (const ValidationError& e) {
        throw ParseError(e.what(), l.number, l.tokens[2].column);
      }
      m.width = parse_number(l.tokens[3], l.number);
      m.height = parse_number(l.tokens[4], l.number);
      if (l.tokens.size() > 5) {
        if (l.tokens[5].text != "fixed")
          throw ParseError("expected 'fixed'", l.number, l.tokens[5].column);
        expect_tokens(l, 8, "fixed position");
        m.fixed = true;
        m.fixed_pos = Point{parse_number(l.tokens[6], l.number), parse_number(l.tokens[7], l.number)};
      }
      if (!index.emplace(m.name, m.id).second)
        throw ParseError("duplicate module '" + m.name + "'", l.number, l.tokens[1].column);
      netlist.modules.push_back(std::move(m));
    } else if (key == "net") {
      expect_tokens(l, 3, "net record");
      Net net;
      net.id = static_cast<int>(netlist.nets.size());
      net.name = std::string(l.tokens[1].text);
      const long degree = parse_integer(l.tokens[2], l.number);
      if (degree < 1) throw ParseError("net degree must be >= 1", l.number, l.tokens[2].column);
      for (long k = 0; k < degree; ++k) {
        if (++i >= lines.size() || lines[i].tokens[0].text != "pin")
          throw ParseError("net '" + net.name + "' expects " + std::to_string(degree) + " pins",
                           i < lines.size() ? lines[i].number : l.number, 1);
        const Line& p = lines[i];
        expect_tokens(p, 4, "pin record");
        auto it = index.find(std::string(p.tokens[1].text));
        if (it == index.end())
          throw ParseError("pin references undeclared module '" + std::string(p.tokens[1].text) +
                               "'",
                           p.number, p.tokens[1].column);
        net.pins.push_back(
            {it->second, parse_number(p.tokens[2], p.number), parse_number(p.tokens[3], p.number)});
      }
      netlist.nets.push_back(std::move(net));
    } else if (key == "end") {
      ended = true;
    } else {
      throw ParseError("unknown record '" + std::string(key) + "'", l.number, 1);
    }
  }
  if (!ended) throw ParseError("missing 'end'", lines.back().number + 1, 1);
  validate(netlist);
  return netlist;
}

Netlist generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_macros < 1) throw ValidationError("n_macros must be >= 1");
  if (spec.n_nets < 1) throw ValidationError("n_nets must be >= 1");
  if (!(spec.canvas.w > 0.0) || !(spec.canvas.h > 0.0))
    throw ValidationError("canvas dimensions must be positive");
  if (!(spec.target_util > 0.0)) throw ValidationError("target_util must be positive");
  if (spec.target_util >= 0.9)
    throw InfeasibleError("target utilization " + std::to_string(spec.target_util) +
                          " cannot be packed (limit 0.9)");

  Rng rng(spec.seed);
  const int n = spec.n_macros;
  const double W = spec.canvas.w;
  const double H = spec.canvas.h;

  Netlist netlist;
  netlist.name = "synth" + std::to_string(spec.seed);
  netlist.canvas_w = W;
  netlist.canvas_h = H;

  // Macros come in groups of one type (think SRAM arrays): a group shares a
  // size and aspect ratio and sits together on a latent unit ring. Nets
  // prefer nearby macros, which gives the clustered connectivity of real
  // netlists and ties size to topology.
  const int groups = std::max(1, (n + 5) / 6);
  struct Group {
    double center, weight, ratio;
  };
  std::vector<Group> kinds(groups);
  for (auto& g : kinds) {
    g.center = rng.uniform();
    g.weight = std::exp(rng.uniform(-1.4, 1.4));
    g.ratio = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
  }
  std::vector<double> weight(n), latent(n), aspect(n);
  for (int i = 0; i < n; ++i) {
    const Group& g = kinds[rng.below(groups)];
    weight[i] = g.weight * rng.uniform(0.95, 1.05);
    aspect[i] = g.ratio;
    latent[i] = g.center + rng.uniform(-0.02, 0.02);
    latent[i] -= std::floor(latent[i]);
  }
  const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
  const double budget = spec.target_util * W * H;
  for (int i = 0; i < n; ++i) {
    const double area = budget * weight[i] / total;
    // keep the macro inside the canvas: area/H^2 <= ratio <= W^2/area
    const double ratio = std::clamp(aspect[i], area / (H * H), (W * W) / area);
    Module m;
    m.id = i;
    m.name = "m" + std::to_string(i);
    m.width = std::sqrt(area * ratio);
    m.height = area / m.width;
    netlist.modules.push_back(std::move(m));
  }

  auto ring_distance = [&](int a, int b) {
    const double d = std::abs(latent[a] - latent[b]);
    return std::min(d, 1.0 - d);
  };

  auto draw_degree = [&]() {
    for (;;) {
      int d = 2;
      while (rng.uniform() >= 0.5) ++d;
      if (d <= 6) return d;
    }
  };

  std::vector<int> uncovered(n);
  std::iota(uncovered.begin(), uncovered.end(), 0);
  rng.shuffle(uncovered.begin(), uncovered.end());

  std::vector<std::vector<int>> members(spec.n_nets);
  for (int k = 0; k < spec.n_nets; ++k) {
    const int degree = draw_degree();
    int anchor;
    if (!uncovered.empty()) {
      anchor = uncovered.back();
      uncovered.pop_back();
    } else {
      anchor = static_cast<int>(rng.below(n));
    }
    std::vector<int>& net = members[k];
    net.push_back(anchor);
    const int want = std::min(degree, n);
    while (static_cast<int>(net.size()) < want) {
      std::vector<double> w(n, 0.0);
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        if (std::find(net.begin(), net.end(), j) != net.end()) continue;
        w[j] = std::exp(-ring_distance(anchor, j) / 0.02);
        sum += w[j];
      }
      double u = rng.uniform() * sum;
      int pick = -1;
      for (int j = 0; j < n; ++j) {
        if (w[j] <= 0.0) continue;
        pick = j;
        if (u < w[j]) break;
        u -= w[j];
      }
      net.push_back(pick);
      if (!uncovered.empty()) {
        auto it = std::find(uncovered.begin(), uncovered.end(), pick);
        if (it != uncovered.end()) uncovered.erase(it);
      }
    }
  }
  // Remaining uncovered macros join the closest net that still has room.
  for (int m : uncovered) {
    int best = 0;
    double best_d = 3.0;
    for (int k = 0; k < spec.n_nets; ++k) {
      const double d = ring_distance(m, members[k][0]) + (members[k].size() >= 6 ? 1.0 : 0.0);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    members[best].push_back(m);
  }

  for (int k = 0; k < spec.n_nets; ++k) {
    Net net;
    net.id = k;
    net.name = "n" + std::to_string(k);
    for (int m : members[k]) {
      const Module& mod = netlist.modules[m];
      net.pins.push_back({m, rng.uniform() * mod.width, rng.uniform() * mod.height});
    }
    if (net.pins.size() == 1) {
      // single-macro circuits: a second distinct pin on the same macro
      const Module& mod = netlist.modules[members[k][0]];
      net.pins.push_back({mod.id, rng.uniform() * mod.width, rng.uniform() * mod.height});
    }
    netlist.nets.push_back(std::move(net));
  }
  validate(netlist);
  return netlist;
}

CircuitGraph to_graph(const Netlist& netlist) {
  CircuitGraph g;
  std::vector<int> row_of(netlist.modules.size(), -1);
  for (const auto& m : netlist.modules) {
    if (!m.is_macro()) continue;
    row_of[m.id] = static_cast<int>(g.module_ids.size());
    g.module_ids.push_back(m.id);
  }
  const auto N = static_cast<Eigen::Index>(g.module_ids.size());
  g.adjacency = Eigen::MatrixXd::Zero(N, N);
  for (const auto& net : netlist.nets) {
    std::vector<int> rows;
    for (const auto& p : net.pins)
      if (row_of[p.module_id] >= 0) rows.push_back(row_of[p.module_id]);
    for (std::size_t a = 0; a < rows.size(); ++a)
      for (std::size_t b = a + 1; b < rows.size(); ++b)
        if (rows[a] != rows[b]) g.adjacency(rows[a], rows[b]) = g.adjacency(rows[b], rows[a]) = 1.0;
  }
  const auto degree = netlist.net_degrees();
  double max_degree = 0.0;
  double max_area = 0.0;
  for (int id : g.module_ids) {
    max_degree = std::max(max_degree, static_cast<double>(degree[id]));
    max_area = std::max(max_area, netlist.modules[id].area());
  }
  g.features = Eigen::MatrixXd::Zero(N, kNodeFeatures);
  for (Eigen::Index r = 0; r < N; ++r) {
    const Module& m = netlist.modules[g.module_ids[r]];
    g.features(r, 0) = std::min(1.0, m.width / netlist.canvas_w);
    g.features(r, 1) = std::min(1.0, m.height / netlist.canvas_h);
    g.features(r, 2) = max_degree > 0.0 ? degree[m.id] / max_degree : 0.0;
    g.features(r, 3) = max_area > 0.0 ? m.area() / max_area : 0.0;
  }
  return g;
}

std::vector<int> macro_order(const Netlist& netlist, int max_macros) {
  const auto degree = netlist.net_degrees();
  std::vector<int> order;
  for (const auto& m : netlist.modules)
    if (m.movable_macro()) order.push_back(m.id);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double area_a = netlist.modules[a].area();
    const double area_b = netlist.modules[b].area();
    if (area_a != area_b) return area_a > area_b;
    if (degree[a] != degree[b]) return degree[a] > degree[b];
    return a < b;
  });
  if (static_cast<int>(order.size()) > max_macros) order.resize(max_macros);
  return order;
}

}  // namespace dtplace
