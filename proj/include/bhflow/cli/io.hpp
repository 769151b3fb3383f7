#pragma once

// File plumbing for the command-line driver: numeric CSV tables, JSON
// documents and polyline SVG plots.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bhflow/errors.hpp"

namespace bhflow::cli {

using Json = nlohmann::ordered_json;

/// Failure to read or write an output artifact (exit code 3).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed user input: config file or any table it references (exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int columns() const { return static_cast<int>(header.size()); }
  std::vector<double> column(int c) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }
};

inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace detail

/// Reads a header row plus numeric rows; errors name the file and line.
inline Table read_csv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError(file.string() + ": cannot open file");
  Table t;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    if (t.header.empty()) {
      t.header = cells;
      continue;
    }
    if (static_cast<int>(cells.size()) != t.columns())
      throw ConfigError(file.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.columns()) +
                        " values, found " + std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(c, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != c.size() || !std::isfinite(v))
        throw ConfigError(file.string() + ":" + std::to_string(lineno) + ": '" + c + "' is not a finite number");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw ConfigError(file.string() + ": empty file (header row expected)");
  return t;
}

inline void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError(file.string() + ": cannot open for writing");
  out << text;
  if (!out) throw IoError(file.string() + ": write failed");
}

inline void write_csv(const std::filesystem::path& file, const Table& t) {
  std::ostringstream os;
  for (int c = 0; c < t.columns(); ++c) os << (c ? "," : "") << t.header[c];
  os << '\n';
  for (const auto& r : t.rows) {
    for (std::size_t c = 0; c < r.size(); ++c) os << (c ? "," : "") << format_number(r[c]);
    os << '\n';
  }
  write_text(file, os.str());
}

/// JSON numbers cannot be non-finite; those become strings "inf", "-inf", "nan".
inline Json json_number(double v) {
  if (std::isfinite(v)) return v;
  return format_number(v);
}

inline void write_json(const std::filesystem::path& file, const Json& j) {
  write_text(file, j.dump(2) + "\n");
}

inline Json read_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError(file.string() + ": cannot open file");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(file.string() + ": " + e.what());
  }
}

inline void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError(dir.string() + ": cannot create output directory");
}

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Line plot of one or more series with a framed axis box, min/max tick
/// labels and a legend.
inline std::string render_svg(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                              const std::vector<Series>& series) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const double W = 640, H = 400, left = 70, right = 20, top = 40, bottom = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (W - left - right); };
  auto py = [&](double y) { return H - bottom - (y - y0) / (y1 - y0) * (H - top - bottom); };
  auto num = [](double v) {
    std::ostringstream os;
    os << std::setprecision(4) << v;
    return os.str();
  };

  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << W - left - right << "\" height=\""
     << H - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << left << "\" y=\"" << H - bottom + 16 << "\" text-anchor=\"start\">" << num(x0) << "</text>\n";
  os << "<text x=\"" << W - right << "\" y=\"" << H - bottom + 16 << "\" text-anchor=\"end\">" << num(x1) << "</text>\n";
  os << "<text x=\"" << left - 4 << "\" y=\"" << H - bottom << "\" text-anchor=\"end\">" << num(y0) << "</text>\n";
  os << "<text x=\"" << left - 4 << "\" y=\"" << top + 10 << "\" text-anchor=\"end\">" << num(y1) << "</text>\n";
  os << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << xlabel
     << "</text>\n";
  os << "<text x=\"16\" y=\"" << (top + H - bottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << (top + H - bottom) / 2 << ")\">" << ylabel << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = palette[k % 10];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    os << "\"/>\n";
    if (!s.label.empty())
      os << "<text x=\"" << W - right - 8 << "\" y=\"" << top + 16 + 14 * k << "\" text-anchor=\"end\" fill=\"" << color
         << "\">" << s.label << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace bhflow::cli
