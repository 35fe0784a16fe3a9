// Copyright 2026 The vcm-postproc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "vcm/error.hpp"
#include "vcm/metrics.hpp"

namespace vcm {

namespace detail {

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) fail(ErrorKind::kParse, where + ": '" + s + "' is not a number");
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Metrics CSV: sequence,label,qp,kbps,map,ap_<class>...,f1_<class>...
// Rows are sorted by (sequence, label, qp); absent classes leave empty cells.

inline bool rate_point_order(const RatePoint& a, const RatePoint& b) {
  return std::tie(a.sequence, a.label, a.qp) < std::tie(b.sequence, b.label, b.qp);
}

inline std::string metrics_csv(std::vector<RatePoint> points) {
  std::stable_sort(points.begin(), points.end(), rate_point_order);
  std::set<int> classes;
  for (const auto& p : points) {
    for (const auto& [c, v] : p.per_class_ap) classes.insert(c);
    for (const auto& [c, v] : p.f1) classes.insert(c);
  }
  std::string out = "sequence,label,qp,kbps,map";
  for (int c : classes) out += ",ap_" + std::to_string(c);
  for (int c : classes) out += ",f1_" + std::to_string(c);
  out += '\n';
  for (const auto& p : points) {
    out += p.sequence + ',' + p.label + ',' + std::to_string(p.qp) + ',' + detail::fmt("%.4f", p.bitrate_kbps) + ',' +
           detail::fmt("%.4f", p.map_value);
    for (int c : classes) {
      auto it = p.per_class_ap.find(c);
      out += ',' + (it == p.per_class_ap.end() ? std::string() : detail::fmt("%.4f", it->second));
    }
    for (int c : classes) {
      auto it = p.f1.find(c);
      out += ',' + (it == p.f1.end() ? std::string() : detail::fmt("%.6f", it->second));
    }
    out += '\n';
  }
  return out;
}

inline void write_metrics_csv(const std::filesystem::path& path, const std::vector<RatePoint>& points) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIngestion, "cannot write " + path.string());
  out << metrics_csv(points);
}

inline std::vector<RatePoint> parse_metrics_csv(const std::string& text, const std::string& source = "metrics") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::kParse, source + ": empty metrics file");
  const auto header = detail::split_csv(line);
  if (header.size() < 5 || header[0] != "sequence" || header[1] != "label" || header[2] != "qp" ||
      header[3] != "kbps" || header[4] != "map") {
    fail(ErrorKind::kParse, source + ": unexpected metrics header");
  }
  struct Column {
    bool is_ap;
    int cls;
  };
  std::vector<Column> columns;
  for (std::size_t i = 5; i < header.size(); ++i) {
    const auto& h = header[i];
    if (h.rfind("ap_", 0) != 0 && h.rfind("f1_", 0) != 0) fail(ErrorKind::kParse, source + ": bad column " + h);
    columns.push_back({h[0] == 'a', static_cast<int>(detail::parse_number(h.substr(3), source))});
  }
  std::vector<RatePoint> points;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto f = detail::split_csv(line);
    if (f.size() != header.size()) fail(ErrorKind::kParse, where + ": wrong number of fields");
    RatePoint p;
    p.sequence = f[0];
    p.label = f[1];
    p.qp = static_cast<int>(detail::parse_number(f[2], where));
    p.bitrate_kbps = detail::parse_number(f[3], where);
    p.map_value = detail::parse_number(f[4], where);
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (f[5 + i].empty()) continue;
      const double v = detail::parse_number(f[5 + i], where);
      (columns[i].is_ap ? p.per_class_ap : p.f1)[columns[i].cls] = v;
    }
    points.push_back(std::move(p));
  }
  return points;
}

inline std::vector<RatePoint> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIngestion, "metrics file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_metrics_csv(ss.str(), path.string());
}

// ---------------------------------------------------------------------------
// SVG plots. The plotted values are embedded as CSV inside <metadata>.

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (x, y), sorted by x
};

inline std::string xml_escape(const std::string& s) {
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

inline std::string svg_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                            const std::vector<PlotSeries>& series) {
  constexpr double kW = 480, kH = 320, kLeft = 60, kRight = 20, kTop = 30, kBottom = 45;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      x0 = std::min(x0, x), x1 = std::max(x1, x);
      y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-9) x0 -= 1, x1 += 1;
  if (y1 - y0 < 1e-9) y0 -= 1, y1 += 1;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight); };
  auto py = [&](double y) { return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom); };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"320\" viewBox=\"0 0 480 320\">\n";
  svg += "<metadata>\nseries,x,y\n";
  for (const auto& s : series) {
    for (auto [x, y] : s.points) svg += xml_escape(s.label) + ',' + detail::fmt("%.4f", x) + ',' + detail::fmt("%.4f", y) + '\n';
  }
  svg += "</metadata>\n";
  svg += "<title>" + xml_escape(title) + "</title>\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"480\" height=\"320\" fill=\"white\"/>\n";
  svg += "<text x=\"240\" y=\"18\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" +
         xml_escape(title) + "</text>\n";
  const std::string axes = detail::fmt("%.1f", kLeft) + ',' + detail::fmt("%.1f", kTop) + ' ' +
                           detail::fmt("%.1f", kLeft) + ',' + detail::fmt("%.1f", kH - kBottom) + ' ' +
                           detail::fmt("%.1f", kW - kRight) + ',' + detail::fmt("%.1f", kH - kBottom);
  svg += "<polyline points=\"" + axes + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    svg += "<text x=\"" + detail::fmt("%.1f", px(xv)) + "\" y=\"" + detail::fmt("%.1f", kH - kBottom + 15) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" + detail::fmt("%.4g", xv) +
           "</text>\n";
    svg += "<text x=\"" + detail::fmt("%.1f", kLeft - 5) + "\" y=\"" + detail::fmt("%.1f", py(yv) + 3) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" + detail::fmt("%.4g", yv) +
           "</text>\n";
  }
  svg += "<text x=\"" + detail::fmt("%.1f", (kLeft + kW - kRight) / 2) + "\" y=\"" + detail::fmt("%.1f", kH - 8) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + xml_escape(x_label) + "</text>\n";
  svg += "<text x=\"14\" y=\"" + detail::fmt("%.1f", (kTop + kH - kBottom) / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" transform=\"rotate(-90 14 " +
         detail::fmt("%.1f", (kTop + kH - kBottom) / 2) + ")\">" + xml_escape(y_label) + "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % 5];
    std::string pts;
    for (auto [x, y] : s.points) pts += (pts.empty() ? "" : " ") + detail::fmt("%.2f", px(x)) + ',' + detail::fmt("%.2f", py(y));
    if (s.points.size() > 1) {
      svg += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
    }
    for (auto [x, y] : s.points) {
      svg += "<circle cx=\"" + detail::fmt("%.2f", px(x)) + "\" cy=\"" + detail::fmt("%.2f", py(y)) +
             "\" r=\"3\" fill=\"" + color + "\"/>\n";
    }
    const double ly = kTop + 14.0 * static_cast<double>(k);
    svg += "<text x=\"" + detail::fmt("%.1f", kW - kRight - 4) + "\" y=\"" + detail::fmt("%.1f", ly + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\" fill=\"" + color + "\">" +
           xml_escape(s.label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

// ---------------------------------------------------------------------------
// Gap table: postprocessed minus encoded mAP per (sequence, QP).

struct GapRow {
  std::string sequence;
  int qp = 0;
  std::optional<double> encoded;
  std::optional<double> postprocessed;
  std::optional<double> gap() const {
    if (encoded && postprocessed) return *postprocessed - *encoded;
    return std::nullopt;
  }
};

inline std::vector<GapRow> gap_rows(const std::vector<RatePoint>& points) {
  std::map<std::pair<std::string, int>, GapRow> rows;
  for (const auto& p : points) {
    auto& row = rows[{p.sequence, p.qp}];
    row.sequence = p.sequence;
    row.qp = p.qp;
    if (p.label == kLabelEncoded) row.encoded = p.map_value;
    else if (p.label == kLabelPostprocessed) row.postprocessed = p.map_value;
  }
  std::vector<GapRow> out;
  for (auto& [key, row] : rows) out.push_back(row);
  return out;
}

inline std::string gap_table_csv(const std::vector<GapRow>& rows) {
  auto cell = [](const std::optional<double>& v, const char* spec) { return v ? detail::fmt(spec, *v) : std::string(); };
  std::string out = "sequence,qp,encoded_map,postprocessed_map,gap\n";
  for (const auto& r : rows) {
    out += r.sequence + ',' + std::to_string(r.qp) + ',' + cell(r.encoded, "%.2f") + ',' +
           cell(r.postprocessed, "%.2f") + ',' + cell(r.gap(), "%+.2f") + '\n';
  }
  return out;
}

/// Markdown layout: one block of three rows per sequence, QPs as columns.
inline std::string gap_table_markdown(const std::vector<GapRow>& rows) {
  std::map<std::string, std::vector<GapRow>> by_seq;
  std::set<int> qps;
  for (const auto& r : rows) {
    by_seq[r.sequence].push_back(r);
    qps.insert(r.qp);
  }
  std::string out = "| Sequence | |";
  std::string rule = "|---|---|";
  for (int qp : qps) {
    out += " QP" + std::to_string(qp) + " |";
    rule += "---:|";
  }
  out += '\n' + rule + '\n';
  for (const auto& [seq, seq_rows] : by_seq) {
    auto line = [&](const std::string& name, auto value) {
      std::string l = "| " + (name == kLabelEncoded ? seq : std::string()) + " | " + name + " |";
      for (int qp : qps) {
        auto it = std::find_if(seq_rows.begin(), seq_rows.end(), [&](const GapRow& r) { return r.qp == qp; });
        const std::optional<double> v = it == seq_rows.end() ? std::nullopt : value(*it);
        l += " " + (v ? detail::fmt(name == "gap" ? "%+.2f" : "%.2f", *v) : std::string("-")) + " |";
      }
      return l + '\n';
    };
    out += line(kLabelEncoded, [](const GapRow& r) { return r.encoded; });
    out += line(kLabelPostprocessed, [](const GapRow& r) { return r.postprocessed; });
    out += line("gap", [](const GapRow& r) { return r.gap(); });
  }
  return out;
}

struct ReportFiles {
  std::vector<std::filesystem::path> plots;
  std::filesystem::path gap_csv;
  std::filesystem::path gap_markdown;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIngestion, "cannot write " + path.string());
  out << text;
}

/// Rate-mAP, rate-AP(class) and rate-F1(class) plots per sequence, plus the
/// gap table in CSV and Markdown.
inline ReportFiles write_report(const std::vector<RatePoint>& points, const std::filesystem::path& out_dir) {
  if (points.empty()) fail(ErrorKind::kUsage, "report needs at least one metrics row");
  std::filesystem::create_directories(out_dir);
  ReportFiles files;
  std::map<std::string, std::vector<RatePoint>> by_seq;
  for (const auto& p : points) by_seq[p.sequence].push_back(p);
  for (const auto& [seq, seq_points] : by_seq) {
    const RateCurve curve = build_rate_curve(seq_points);
    std::set<int> classes;
    for (const auto& p : seq_points) {
      for (const auto& [c, v] : p.per_class_ap) classes.insert(c);
    }
    auto emit = [&](const std::string& name, const std::string& title, const std::string& y_label, auto value) {
      std::vector<PlotSeries> series;
      for (const auto& [label, group] : curve.groups) {
        PlotSeries s{label, {}};
        for (const auto& p : group) {
          if (auto v = value(p)) s.points.emplace_back(p.bitrate_kbps, *v);
        }
        if (!s.points.empty()) series.push_back(std::move(s));
      }
      const auto path = out_dir / name;
      write_text(path, svg_plot(title, "bitrate (kbps)", y_label, series));
      files.plots.push_back(path);
    };
    emit("rate_map_" + seq + ".svg", seq + ": rate vs mAP", "mAP",
         [](const RatePoint& p) { return std::optional<double>(p.map_value); });
    for (int c : classes) {
      const std::string cs = std::to_string(c);
      emit("rate_ap_" + seq + "_class" + cs + ".svg", seq + ": rate vs AP (class " + cs + ")", "AP",
           [c](const RatePoint& p) {
             auto it = p.per_class_ap.find(c);
             return it == p.per_class_ap.end() ? std::nullopt : std::optional<double>(it->second);
           });
      emit("rate_f1_" + seq + "_class" + cs + ".svg", seq + ": rate vs F1 (class " + cs + ")", "F1",
           [c](const RatePoint& p) {
             auto it = p.f1.find(c);
             return it == p.f1.end() ? std::nullopt : std::optional<double>(it->second);
           });
    }
  }
  const auto rows = gap_rows(points);
  files.gap_csv = out_dir / "gap_table.csv";
  files.gap_markdown = out_dir / "gap_table.md";
  write_text(files.gap_csv, gap_table_csv(rows));
  write_text(files.gap_markdown, gap_table_markdown(rows));
  return files;
}

}  // namespace vcm
