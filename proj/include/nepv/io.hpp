#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "nepv/linalg.hpp"

namespace nepv {

/// Reads a real Matrix Market file in array or coordinate format
/// (general or symmetric).
inline Mat read_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open matrix file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::io, "empty matrix file '" + path + "'");
  std::istringstream banner(line);
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  if (tag != "%%MatrixMarket" || object != "matrix") {
    throw Error(ErrorKind::io, "'" + path + "' is not a Matrix Market matrix");
  }
  if (field != "real" && field != "double" && field != "integer") {
    throw Error(ErrorKind::io, "'" + path + "': unsupported field '" + field + "'");
  }
  const bool symmetric = symmetry == "symmetric";
  if (!symmetric && symmetry != "general") {
    throw Error(ErrorKind::io, "'" + path + "': unsupported symmetry '" + symmetry + "'");
  }
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '%') break;
  }
  std::istringstream size_line(line);
  long rows = 0, cols = 0, entries = 0;
  if (format == "array") {
    if (!(size_line >> rows >> cols)) throw Error(ErrorKind::io, "'" + path + "': bad size line");
  } else if (format == "coordinate") {
    if (!(size_line >> rows >> cols >> entries)) {
      throw Error(ErrorKind::io, "'" + path + "': bad size line");
    }
  } else {
    throw Error(ErrorKind::io, "'" + path + "': unsupported format '" + format + "'");
  }
  if (rows < 0 || cols < 0 || (symmetric && rows != cols)) {
    throw Error(ErrorKind::io, "'" + path + "': invalid dimensions");
  }
  Mat m = Mat::Zero(rows, cols);
  if (format == "array") {
    for (long j = 0; j < cols; ++j) {
      for (long i = symmetric ? j : 0; i < rows; ++i) {
        double v;
        if (!(in >> v)) throw Error(ErrorKind::io, "'" + path + "': truncated array data");
        m(i, j) = v;
        if (symmetric) m(j, i) = v;
      }
    }
  } else {
    for (long e = 0; e < entries; ++e) {
      long i, j;
      double v;
      if (!(in >> i >> j >> v)) throw Error(ErrorKind::io, "'" + path + "': truncated coordinate data");
      if (i < 1 || i > rows || j < 1 || j > cols) {
        throw Error(ErrorKind::io, "'" + path + "': entry index out of range");
      }
      m(i - 1, j - 1) = v;
      if (symmetric) m(j - 1, i - 1) = v;
    }
  }
  return m;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_matrix_market(const std::string& path, const Mat& m) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path + "'");
  out << "%%MatrixMarket matrix array real general\n" << m.rows() << " " << m.cols() << "\n";
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index i = 0; i < m.rows(); ++i) out << format_double(m(i, j)) << "\n";
  }
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// CSV with '#'-prefixed metadata lines ahead of the column header.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& meta,
            const std::vector<std::string>& columns)
      : out_(path), path_(path) {
    if (!out_) throw Error(ErrorKind::io, "cannot write '" + path + "'");
    for (const auto& m : meta) out_ << "# " << m << "\n";
    for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
    out_ << "\n";
  }

  CsvWriter& cell(double v) { return raw(format_double(v)); }
  CsvWriter& cell(long long v) { return raw(std::to_string(v)); }
  CsvWriter& cell(int v) { return raw(std::to_string(v)); }
  CsvWriter& cell(bool v) { return raw(v ? "1" : "0"); }
  CsvWriter& cell(const std::string& v) { return raw(quote(v)); }
  CsvWriter& cell(const char* v) { return raw(quote(v)); }

  void end_row() {
    out_ << "\n";
    first_ = true;
  }

  const std::string& path() const { return path_; }

 private:
  CsvWriter& raw(const std::string& s) {
    if (!first_) out_ << ",";
    out_ << s;
    first_ = false;
    return *this;
  }
  static std::string quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  }

  std::ofstream out_;
  std::string path_;
  bool first_ = true;
};

}  // namespace nepv
