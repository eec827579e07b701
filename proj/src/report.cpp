#include "exlab/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "exlab/errors.hpp"
#include "exlab/io.hpp"

namespace exlab::report {

void EvalReport::add(ReportRow row) {
  const auto& names = metric_names();
  if (std::find(names.begin(), names.end(), row.metric) == names.end()) {
    throw ContractError("report: unknown metric " + row.metric);
  }
  if (!std::isfinite(row.value) || !std::isfinite(row.std_error)) {
    throw ContractError("report: non-finite value for " + row.model + " / " + row.metric);
  }
  if (row.experiment.find(',') != std::string::npos || row.model.find(',') != std::string::npos) {
    throw ContractError("report: identifiers must not contain commas");
  }
  rows_.push_back(std::move(row));
}

std::vector<std::string> EvalReport::model_ids() const {
  std::vector<std::string> ids;
  for (const auto& r : rows_)
    if (std::find(ids.begin(), ids.end(), r.model) == ids.end()) ids.push_back(r.model);
  return ids;
}

namespace {

const char* kHeader = "experiment,model,dim,length,metric,value,std_error,n";

}  // namespace

std::string to_csv(const EvalReport& report) {
  std::string out = std::string(kHeader) + "\n";
  for (const auto& r : report.rows()) {
    out += r.experiment + "," + r.model + "," + std::to_string(r.dim) + "," + std::to_string(r.length) + "," +
           r.metric + "," + io::format_double(r.value) + "," + io::format_double(r.std_error) + "," +
           std::to_string(r.n) + "\n";
  }
  return out;
}

std::string to_json(const EvalReport& report) {
  io::Json rows = io::Json::array();
  for (const auto& r : report.rows()) {
    rows.push_back({{"experiment", r.experiment},
                    {"model", r.model},
                    {"dim", r.dim},
                    {"length", r.length},
                    {"metric", r.metric},
                    {"value", r.value},
                    {"std_error", r.std_error},
                    {"n", r.n}});
  }
  const io::Json doc = {{"format_version", io::kFormatVersion}, {"rows", rows}};
  return doc.dump(2) + "\n";
}

EvalReport parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw IoError("report csv: bad header");
  EvalReport rep;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> c;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) c.push_back(cell);
    if (c.size() != 8) throw IoError("report csv: expected 8 columns");
    rep.add({c[0], c[1], std::stoull(c[2]), std::stoull(c[3]), c[4], io::parse_double(c[5]),
             io::parse_double(c[6]), std::stoull(c[7])});
  }
  return rep;
}

std::string to_svg(const EvalReport& report, const std::string& title) {
  constexpr double width = 640.0;
  constexpr double height = 400.0;
  constexpr double left = 70.0;
  constexpr double right = 150.0;
  constexpr double top = 40.0;
  constexpr double bottom = 50.0;
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"};

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) svg << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n";

  double xmin = 0.0, xmax = 0.0, ymin = 0.0, ymax = 0.0;
  double min_pos = INFINITY;
  bool any = false;
  for (const auto& r : report.rows()) {
    if (r.value > 0.0) min_pos = std::min(min_pos, r.value);
  }
  // Zero values (an exact oracle) are drawn on the floor of the axis.
  const double floor_value = std::isfinite(min_pos) ? min_pos / 10.0 : 1e-12;
  auto yval = [&](double v) { return std::log10(std::max(v, floor_value)); };
  for (const auto& r : report.rows()) {
    const double x = static_cast<double>(r.length);
    const double y = yval(r.value);
    if (!any) {
      xmin = xmax = x;
      ymin = ymax = y;
      any = true;
    }
    xmin = std::min(xmin, x);
    xmax = std::max(xmax, x);
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  ymin = std::floor(ymin);
  ymax = std::ceil(ymax);
  if (ymax <= ymin) ymax = ymin + 1.0;
  if (xmax <= xmin) xmax = xmin + 1.0;
  const double pw = width - left - right;
  const double ph = height - top - bottom;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double ly) { return top + (ymax - ly) / (ymax - ymin) * ph; };

  svg << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
  for (int e = static_cast<int>(ymin); e <= static_cast<int>(ymax); ++e) {
    const double y = py(e);
    svg << "<line x1=\"" << left - 4 << "\" y1=\"" << y << "\" x2=\"" << left << "\" y2=\"" << y
        << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">1e" << e << "</text>\n";
  }
  if (any) {
    svg << "<text x=\"" << left << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << xmin << "</text>\n";
    svg << "<text x=\"" << left + pw << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << xmax
        << "</text>\n";
  }
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 12 << "\" text-anchor=\"middle\">length</text>\n";

  const auto ids = report.model_ids();
  for (std::size_t m = 0; m < ids.size(); ++m) {
    std::map<std::size_t, double> pts;
    for (const auto& r : report.rows())
      if (r.model == ids[m] && !pts.contains(r.length)) pts[r.length] = r.value;
    const char* colour = palette[m % std::size(palette)];
    svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" data-model=\"" << ids[m]
        << "\" points=\"";
    bool first = true;
    for (const auto& [x, v] : pts) {
      svg << (first ? "" : " ") << px(static_cast<double>(x)) << "," << py(yval(v));
      first = false;
    }
    svg << "\"/>\n";
    const double ly = top + 14.0 * static_cast<double>(m) + 10.0;
    svg << "<text x=\"" << left + pw + 10 << "\" y=\"" << ly << "\" fill=\"" << colour << "\">" << ids[m]
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

Format format_from_string(const std::string& s) {
  if (s == "csv") return Format::csv;
  if (s == "json") return Format::json;
  if (s == "svg") return Format::svg;
  throw ContractError("unknown report format: " + s);
}

void emit_report(const EvalReport& report, Format format, const std::filesystem::path& path) {
  switch (format) {
    case Format::csv: io::write_text(path, to_csv(report)); break;
    case Format::json: io::write_text(path, to_json(report)); break;
    case Format::svg: io::write_text(path, to_svg(report)); break;
  }
}

}  // namespace exlab::report
