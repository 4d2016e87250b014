#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace genadapt {

// One CSV record. Absent fields render as empty cells so the same column
// layout serves loss logs, metric logs, and combined reports.
struct MetricsRow {
  std::int64_t iter = 0;
  std::optional<double> loss_dir, loss_dm, loss_ewc, loss_rel, loss_total;
  std::optional<double> sse, diversity_avg, diversity_all, frechet, precision, recall;
};

std::string render_metrics_csv(const std::vector<MetricsRow>& rows);
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

// Self-contained SVG: axes drawn as line elements, one polyline per series,
// legend in input order. Identical input renders identical bytes.
std::string render_svg_chart(const std::vector<Series>& series);
void write_svg_chart(const std::vector<Series>& series, const std::string& path);

}  // namespace genadapt
