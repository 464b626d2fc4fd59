#include "dtplace/render.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <limits>

#include "dtplace/errors.hpp"

namespace dtplace {

namespace {

std::string escape_xml(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2",
                                    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};

}  // namespace

std::string render_svg(const PlacementSolution& solution, const RenderOptions& options) {
  if (!solution.netlist) throw ValidationError("render: solution has no netlist");
  const Netlist& nl = *solution.netlist;
  if (!(nl.canvas_w > 0.0 && nl.canvas_h > 0.0)) throw ValidationError("render: empty canvas");
  if (!(options.width_px > 0.0)) throw ValidationError("render: width_px must be positive");

  const double s = options.width_px / nl.canvas_w;
  const double margin = 10.0;
  const double W = nl.canvas_w * s;
  const double H = nl.canvas_h * s;
  auto px = [&](double x) { return margin + x * s; };
  auto py = [&](double y, double h) { return margin + H - (y + h) * s; };

  std::string svg = fmt::format(
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.2f}\" height=\"{:.2f}\" "
      "viewBox=\"0 0 {:.2f} {:.2f}\">\n"
      "<title>{}</title>\n"
      "<defs><pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" "
      "patternTransform=\"rotate(45)\"><line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" "
      "stroke=\"#555\" stroke-width=\"2\"/></pattern></defs>\n"
      "<rect id=\"canvas\" x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" "
      "fill=\"#fafafa\" stroke=\"#000\" stroke-width=\"1.5\"/>\n",
      W + 2 * margin, H + 2 * margin, W + 2 * margin, H + 2 * margin, escape_xml(nl.name), margin,
      margin, W, H);

  const double font = std::clamp(options.width_px / 60.0, 6.0, 14.0);
  int color = 0;
  for (const Module& m : nl.modules) {
    const auto& pos = solution.positions.at(m.id);
    if (!pos) continue;
    if (m.kind == ModuleKind::kPort || m.area() <= 0.0) {
      svg += fmt::format("<circle class=\"port\" cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2\" fill=\"#000\"/>\n",
                         px(pos->x), py(pos->y, 0.0));
      continue;
    }
    const double x = px(pos->x), y = py(pos->y, m.height);
    const double w = m.width * s, h = m.height * s;
    const std::string id = escape_xml(m.name);
    if (m.fixed) {
      svg += fmt::format(
          "<rect class=\"fixed\" data-id=\"{}\" x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" "
          "height=\"{:.2f}\" fill=\"url(#hatch)\" stroke=\"#333\"/>\n",
          id, x, y, w, h);
    } else {
      svg += fmt::format(
          "<rect class=\"macro\" data-id=\"{}\" x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" "
          "height=\"{:.2f}\" fill=\"{}\" fill-opacity=\"0.75\" stroke=\"#222\"/>\n",
          id, x, y, w, h, kPalette[color++ % std::size(kPalette)]);
    }
    if (options.labels)
      svg += fmt::format(
          "<text x=\"{:.2f}\" y=\"{:.2f}\" font-size=\"{:.1f}\" font-family=\"monospace\" "
          "text-anchor=\"middle\" dominant-baseline=\"middle\">{}</text>\n",
          x + w / 2, y + h / 2, font, id);
  }

  if (options.net_boxes) {
    for (const Net& net : nl.nets) {
      double x0 = std::numeric_limits<double>::infinity(), y0 = x0;
      double x1 = -x0, y1 = -x0;
      int placed = 0;
      for (const Pin& p : net.pins) {
        const auto& pos = solution.positions.at(p.module_id);
        if (!pos) continue;
        x0 = std::min(x0, pos->x + p.dx);
        x1 = std::max(x1, pos->x + p.dx);
        y0 = std::min(y0, pos->y + p.dy);
        y1 = std::max(y1, pos->y + p.dy);
        ++placed;
      }
      if (placed < 2) continue;
      svg += fmt::format(
          "<rect class=\"net\" data-id=\"{}\" x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" "
          "height=\"{:.2f}\" fill=\"none\" stroke=\"#c00\" stroke-dasharray=\"4 3\" "
          "stroke-width=\"0.8\"/>\n",
          escape_xml(net.name), px(x0), py(y0, y1 - y0), (x1 - x0) * s, (y1 - y0) * s);
    }
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace dtplace
