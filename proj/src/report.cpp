#include "genadapt/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "genadapt/common.hpp"

namespace genadapt {

namespace {

constexpr const char* kHeader =
    "iter,loss_dir,loss_dm,loss_ewc,loss_rel,loss_total,sse,diversity_avg,diversity_all,"
    "frechet,precision,recall";

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void cell(std::ostringstream& o, const std::optional<double>& v) {
  o << ",";
  if (v) o << fmt_real(*v);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_metrics_csv(const std::vector<MetricsRow>& rows) {
  if (rows.empty()) throw UsageError("metrics CSV needs at least one row");
  std::ostringstream o;
  o << kHeader << "\n";
  for (const MetricsRow& r : rows) {
    o << r.iter;
    cell(o, r.loss_dir);
    cell(o, r.loss_dm);
    cell(o, r.loss_ewc);
    cell(o, r.loss_rel);
    cell(o, r.loss_total);
    cell(o, r.sse);
    cell(o, r.diversity_avg);
    cell(o, r.diversity_all);
    cell(o, r.frechet);
    cell(o, r.precision);
    cell(o, r.recall);
    o << "\n";
  }
  return o.str();
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
  std::string text = render_metrics_csv(rows);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw UsageError("write failed for '" + path + "'");
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) {
    throw UsageError("metrics CSV header mismatch");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string c;
    std::istringstream ls(line);
    while (std::getline(ls, c, ',')) cells.push_back(c);
    // A trailing empty cell is dropped by getline; restore it.
    while (cells.size() < 12) cells.push_back("");
    if (cells.size() != 12) throw UsageError("metrics CSV row has wrong arity: '" + line + "'");
    MetricsRow r;
    r.iter = std::strtoll(cells[0].c_str(), nullptr, 10);
    auto opt = [&](std::size_t i) -> std::optional<double> {
      if (cells[i].empty()) return std::nullopt;
      return std::strtod(cells[i].c_str(), nullptr);
    };
    r.loss_dir = opt(1);
    r.loss_dm = opt(2);
    r.loss_ewc = opt(3);
    r.loss_rel = opt(4);
    r.loss_total = opt(5);
    r.sse = opt(6);
    r.diversity_avg = opt(7);
    r.diversity_all = opt(8);
    r.frechet = opt(9);
    r.precision = opt(10);
    r.recall = opt(11);
    rows.push_back(r);
  }
  return rows;
}

std::string render_svg_chart(const std::vector<Series>& series) {
  if (series.empty()) throw UsageError("svg chart needs at least one series");
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  bool first = true;
  for (const Series& s : series) {
    if (s.points.empty()) throw UsageError("svg chart series '" + s.name + "' is empty");
    for (auto [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) {
        throw UsageError("svg chart series '" + s.name + "' has non-finite values");
      }
      if (first) {
        xmin = xmax = x;
        ymin = ymax = y;
        first = false;
      } else {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    }
  }
  if (xmax == xmin) {
    xmin -= 1.0;
    xmax += 1.0;
  }
  if (ymax == ymin) {
    ymin -= 1.0;
    ymax += 1.0;
  }

  const double kw = 800, kh = 480, ml = 70, mr = 160, mt = 20, mb = 45;
  const double pw = kw - ml - mr, ph = kh - mt - mb;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };

  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};
  constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kw << "\" height=\"" << kh
    << "\" viewBox=\"0 0 " << kw << " " << kh << "\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << kw << "\" height=\"" << kh << "\" fill=\"white\"/>\n";
  // Axes as plain lines so the polyline count equals the series count.
  o << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
    << mt + ph << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
    << "\" stroke=\"black\"/>\n";
  o << "<text x=\"" << ml << "\" y=\"" << kh - 12 << "\" font-size=\"12\">" << num(xmin)
    << "</text>\n";
  o << "<text x=\"" << ml + pw << "\" y=\"" << kh - 12 << "\" text-anchor=\"end\" font-size=\"12\">"
    << num(xmax) << "</text>\n";
  o << "<text x=\"" << ml - 6 << "\" y=\"" << mt + ph << "\" text-anchor=\"end\" font-size=\"12\">"
    << num(ymin) << "</text>\n";
  o << "<text x=\"" << ml - 6 << "\" y=\"" << mt + 10
    << "\" text-anchor=\"end\" font-size=\"12\">" << num(ymax) << "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    o << "<polyline fill=\"none\" stroke=\"" << kPalette[i % kPaletteSize]
      << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t p = 0; p < series[i].points.size(); ++p) {
      if (p) o << " ";
      o << num(px(series[i].points[p].first)) << "," << num(py(series[i].points[p].second));
    }
    o << "\"/>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    double ly = mt + 14 + 18.0 * static_cast<double>(i);
    o << "<rect x=\"" << ml + pw + 12 << "\" y=\"" << ly - 9 << "\" width=\"12\" height=\"12\" fill=\""
      << kPalette[i % kPaletteSize] << "\"/>\n";
    o << "<text x=\"" << ml + pw + 30 << "\" y=\"" << ly + 1 << "\" font-size=\"12\">"
      << xml_escape(series[i].name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void write_svg_chart(const std::vector<Series>& series, const std::string& path) {
  std::string text = render_svg_chart(series);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw UsageError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw UsageError("write failed for '" + path + "'");
}

}  // namespace genadapt
