#pragma once

// Delimited-text ingestion and emission. Reals are written with 17
// significant digits and parsed with from_chars, so write/read is bit-exact.

#include "enggnn/graph.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace enggnn {

inline std::string format_real(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, static_cast<std::size_t>(n));
}

inline bool parse_real(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write '" + path + "'");
  os << text;
  if (!os) throw Error("write failed for '" + path + "'");
}

struct LabeledMatrix {
  Matrix x;
  Labels y;
  std::vector<std::string> names;
};

// Header row: feature names plus one label column (any position). Comma or
// tab delimited, detected from the header.
inline LabeledMatrix load_dataset(const std::string& path, const std::string& label_column = "label") {
  std::ifstream is(path);
  if (!is) throw Error("cannot open matrix file '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw Error(path + ": missing header row");
  const char delim = line.find('\t') != std::string::npos ? '\t' : ',';
  const auto header = split_line(line, delim);
  std::ptrdiff_t label_idx = -1;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == label_column) {
      if (label_idx >= 0) throw Error(path + ": label column '" + label_column + "' appears twice");
      label_idx = static_cast<std::ptrdiff_t>(i);
    }
  if (label_idx < 0) throw Error(path + ": missing label column '" + label_column + "'");
  LabeledMatrix out;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (static_cast<std::ptrdiff_t>(i) != label_idx) out.names.push_back(header[i]);
  if (out.names.empty()) throw Error(path + ": no feature columns");

  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line, delim);
    if (cells.size() != header.size())
      throw Error(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                  " fields, found " + std::to_string(cells.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      if (!parse_real(cells[c], v))
        throw Error(path + ":" + std::to_string(line_no) + ": column '" + header[c] +
                    "' has non-numeric value '" + cells[c] + "'");
      if (static_cast<std::ptrdiff_t>(c) == label_idx) {
        if (v != 0.0 && v != 1.0)
          throw Error(path + ":" + std::to_string(line_no) + ": label must be 0 or 1, found '" +
                      cells[c] + "'");
        out.y.push_back(static_cast<int>(v));
      } else {
        values.push_back(v);
      }
    }
  }
  if (out.y.empty()) throw Error(path + ": no data rows");
  const auto n = static_cast<Eigen::Index>(out.y.size());
  const auto p = static_cast<Eigen::Index>(out.names.size());
  out.x.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) out.x(i, j) = values[static_cast<std::size_t>(i * p + j)];
  return out;
}

inline std::string dataset_to_text(const Matrix& x, const Labels& y,
                                   const std::vector<std::string>& names,
                                   const std::string& label_column = "label", char delim = ',') {
  if (static_cast<std::size_t>(x.cols()) != names.size()) throw Error("dataset: name count != columns");
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw Error("dataset: label count != rows");
  std::string s;
  for (const auto& n : names) {
    s += n;
    s += delim;
  }
  s += label_column;
  s += '\n';
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      s += format_real(x(i, j));
      s += delim;
    }
    s += std::to_string(y[static_cast<std::size_t>(i)]);
    s += '\n';
  }
  return s;
}

inline void write_dataset(const std::string& path, const Matrix& x, const Labels& y,
                          const std::vector<std::string>& names,
                          const std::string& label_column = "label") {
  write_text_file(path, dataset_to_text(x, y, names, label_column));
}

struct EdgeListResult {
  FeatureGraph graph;
  std::size_t skipped_unknown = 0;
  std::size_t duplicates = 0;
  bool identity_fallback = false;
};

// "src<TAB>dst[<TAB>weight]" per line; blank lines and '#' comments are
// ignored. Identifiers are matched against feature names; unmatched edges are
// skipped and counted. Every feature stays a node even without edges.
inline EdgeListResult load_edge_list(const std::string& path, const std::vector<std::string>& names) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open edge list '" + path + "'");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < names.size(); ++j) index.emplace(names[j], j);
  EdgeListResult out;
  out.graph = FeatureGraph(names.size(), Directedness::undirected);
  out.graph.set_names(names);
  bool weight_warned = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto cells = split_line(line, '\t');
    if (cells.size() < 2 || cells.size() > 3)
      throw Error(path + ":" + std::to_string(line_no) + ": expected 2 or 3 tab-separated fields");
    if (cells.size() == 3 && !weight_warned) {
      warn(path + ": edge weight column ignored");
      weight_warned = true;
    }
    const auto a = index.find(cells[0]), b = index.find(cells[1]);
    if (a == index.end() || b == index.end()) {
      ++out.skipped_unknown;
      continue;
    }
    if (!out.graph.add_edge(a->second, b->second)) ++out.duplicates;
  }
  if (out.skipped_unknown > 0)
    warn(path + ": skipped " + std::to_string(out.skipped_unknown) +
         " edges with endpoints absent from the feature matrix");
  if (out.graph.edge_count() == 0) {
    warn(path + ": no resolvable edges; the mask falls back to the identity");
    out.identity_fallback = true;
  }
  return out;
}

inline std::string edge_list_to_text(const FeatureGraph& g) {
  const auto& names = g.names();
  std::string s;
  for (const auto& [u, v] : g.edges()) {
    s += names.empty() ? std::to_string(u) : names[u];
    s += '\t';
    s += names.empty() ? std::to_string(v) : names[v];
    s += '\n';
  }
  return s;
}

// Minimal CSV table used for reports: first row is the header. Cells never
// contain commas.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw Error("csv: missing column '" + name + "'");
  }

  std::string to_text() const {
    std::string s;
    auto emit = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) {
        if (i) s += ',';
        s += r[i];
      }
      s += '\n';
    };
    emit(header);
    for (const auto& r : rows) emit(r);
    return s;
  }

  static CsvTable parse(const std::string& text, const std::string& origin = "csv") {
    CsvTable t;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto cells = split_line(line, ',');
      if (t.header.empty()) {
        t.header = std::move(cells);
        continue;
      }
      if (cells.size() != t.header.size())
        throw Error(origin + ":" + std::to_string(line_no) + ": ragged row");
      t.rows.push_back(std::move(cells));
    }
    if (t.header.empty()) throw Error(origin + ": empty table");
    return t;
  }
};

}  // namespace enggnn
