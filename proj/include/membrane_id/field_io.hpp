#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "membrane_id/error.hpp"
#include "membrane_id/grid.hpp"

namespace membrane_id {

// CSV layout: "# grid_n=<n>" then n^2 values, node order j-major (j * n + i),
// one per line, printed with 17 significant digits so reads are bit-exact.

inline void write_field_csv(std::ostream& out, const Grid& grid, const NodalField& field) {
  check_field(grid, field, "field");
  out << "# grid_n=" << grid.n() << '\n';
  char buf[40];
  for (int k = 0; k < field.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g\n", field[k]);
    out << buf;
  }
}

inline void write_field_csv(const std::string& path, const Grid& grid, const NodalField& field) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
  write_field_csv(out, grid, field);
}

struct LoadedField {
  int grid_n = 0;
  NodalField values;
};

inline LoadedField read_field_csv(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# grid_n=", 0) != 0) {
    throw Error(ErrorCode::Io, source + ": missing '# grid_n=<n>' header");
  }
  LoadedField out;
  try {
    out.grid_n = std::stoi(line.substr(9));
  } catch (const std::exception&) {
    throw Error(ErrorCode::Io, source + ": malformed header '" + line + "'");
  }
  if (out.grid_n < 2) throw Error(ErrorCode::Io, source + ": grid_n must be >= 2");
  const long expected = static_cast<long>(out.grid_n) * out.grid_n;
  out.values.resize(expected);
  long count = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (count == expected) throw Error(ErrorCode::Io, source + ": more than " + std::to_string(expected) + " values");
    char* end = nullptr;
    const double v = std::strtod(line.c_str(), &end);
    if (end == line.c_str()) throw Error(ErrorCode::Io, source + ":" + std::to_string(line_no) + ": not a number");
    out.values[count++] = v;
  }
  if (count != expected) {
    throw Error(ErrorCode::Io, source + ": expected " + std::to_string(expected) + " values, found " +
                                   std::to_string(count));
  }
  return out;
}

inline LoadedField read_field_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return read_field_csv(in, path);
}

/// Reads a field and insists that it lives on `grid`.
inline NodalField read_field_csv(const std::string& path, const Grid& grid) {
  auto loaded = read_field_csv(path);
  if (loaded.grid_n != grid.n()) {
    throw Error(ErrorCode::InvalidArgument, path + ": grid_n=" + std::to_string(loaded.grid_n) +
                                                " does not match configured grid n=" + std::to_string(grid.n()));
  }
  return loaded.values;
}

/// ASCII PGM (P2), min -> 0, max -> 255, top image row is x2 = 1.
inline void write_field_pgm(std::ostream& out, const Grid& grid, const NodalField& field) {
  check_field(grid, field, "field");
  const double lo = field.minCoeff();
  const double hi = field.maxCoeff();
  const double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
  char buf[96];
  std::snprintf(buf, sizeof buf, "# min=%.17g max=%.17g\n", lo, hi);
  out << "P2\n" << buf << grid.n() << ' ' << grid.n() << "\n255\n";
  for (int j = grid.n() - 1; j >= 0; --j) {
    for (int i = 0; i < grid.n(); ++i) {
      const long level = std::lround((field[grid.index(i, j)] - lo) * scale);
      out << level << (i + 1 == grid.n() ? '\n' : ' ');
    }
  }
}

inline void write_field_pgm(const std::string& path, const Grid& grid, const NodalField& field) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path + " for writing");
  write_field_pgm(out, grid, field);
}

inline NodalField mask_to_field(const NodeMask& mask) {
  NodalField out(static_cast<Eigen::Index>(mask.size()));
  for (std::size_t k = 0; k < mask.size(); ++k) out[static_cast<Eigen::Index>(k)] = mask[k] ? 1.0 : 0.0;
  return out;
}

}  // namespace membrane_id
