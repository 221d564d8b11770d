#include "nnstd/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "nnstd/errors.hpp"

namespace nnstd {

void write_matrix_csv(const std::filesystem::path& path, const LabeledMatrix& m) {
  if (m.values.rows != m.values.cols)
    throw DimensionError("labeled matrix must be square");
  if (static_cast<int>(m.labels.size()) != m.values.rows)
    throw DimensionError("one label per matrix row required");
  for (const auto& l : m.labels)
    if (l.find(',') != std::string::npos || l.find('\n') != std::string::npos)
      throw ConfigError("matrix labels must not contain commas or newlines");

  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : m.labels) out << ',' << l;
  out << '\n';
  char cell[32];
  for (int r = 0; r < m.values.rows; ++r) {
    out << m.labels[r];
    for (int c = 0; c < m.values.cols; ++c) {
      std::snprintf(cell, sizeof(cell), "%.6f", m.values(r, c));
      out << ',' << cell;
    }
    out << '\n';
  }
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace

LabeledMatrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");

  const auto header = split_line(line);
  if (header.size() < 2 || !header[0].empty())
    throw ParseError(path.string() + ": expected an empty leading header cell");

  LabeledMatrix m;
  m.labels.assign(header.begin() + 1, header.end());
  const int n = static_cast<int>(m.labels.size());
  m.values = Matrix(n, n);

  for (int r = 0; r < n; ++r) {
    if (!std::getline(in, line))
      throw ParseError(path.string() + ": expected " + std::to_string(n) + " data rows");
    const auto cells = split_line(line);
    if (static_cast<int>(cells.size()) != n + 1)
      throw ParseError(path.string() + ": row " + std::to_string(r) +
                       " is not a square matrix row");
    if (cells[0] != m.labels[r])
      throw ParseError(path.string() + ": row label '" + cells[0] +
                       "' does not match header order");
    for (int c = 0; c < n; ++c) {
      const std::string& cell = cells[c + 1];
      char* end = nullptr;
      m.values(r, c) = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size())
        throw ParseError(path.string() + ": non-numeric cell '" + cell + "'");
    }
  }
  while (std::getline(in, line)) {
    for (char ch : line)
      if (ch != '\r' && ch != ' ')
        throw ParseError(path.string() + ": trailing content after matrix rows");
  }
  return m;
}

}  // namespace nnstd
