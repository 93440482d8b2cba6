#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "floodsparse/csr.hpp"
#include "floodsparse/error.hpp"
#include "floodsparse/matrix.hpp"

namespace floodsparse {

// Little-endian primitives shared by the CSR, matrix and checkpoint formats.
namespace le {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b.data(), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b.data(), 8);
}

inline void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t get_bytes(std::istream& is, int n) {
  std::array<unsigned char, 8> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), n)) throw IoError("unexpected end of file");
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

inline std::uint32_t get_u32(std::istream& is) { return static_cast<std::uint32_t>(get_bytes(is, 4)); }
inline std::uint64_t get_u64(std::istream& is) { return get_bytes(is, 8); }
inline float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }
inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

inline void put_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), 4); }

inline void expect_magic(std::istream& is, std::string_view magic, std::string_view what) {
  char m[4];
  if (!is.read(m, 4) || std::string_view(m, 4) != magic)
    throw DataError(std::string(what) + ": bad magic (expected " + std::string(magic) + ")");
}

}  // namespace le

// CSR binary layout: "CSR1", u64 rows, u64 cols, u64 nnz,
// u64 row_ptr[rows + 1], u32 col_idx[nnz], f32 values[nnz].
inline constexpr std::string_view kCsrMagic = "CSR1";

template <class T>
void write_csr(std::ostream& os, const CsrMatrix<T>& m) {
  le::put_magic(os, kCsrMagic);
  le::put_u64(os, m.rows);
  le::put_u64(os, m.cols);
  le::put_u64(os, m.nnz());
  for (auto p : m.row_ptr) le::put_u64(os, p);
  for (auto c : m.col_idx) le::put_u32(os, static_cast<std::uint32_t>(c));
  for (auto v : m.values) le::put_f32(os, static_cast<float>(v));
}

inline CsrMatrix<float> read_csr(std::istream& is) {
  le::expect_magic(is, kCsrMagic, "csr");
  CsrMatrix<float> m;
  m.rows = le::get_u64(is);
  m.cols = le::get_u64(is);
  const std::uint64_t nnz = le::get_u64(is);
  if (nnz > m.rows * m.cols) throw DataError("csr: nnz exceeds rows*cols");
  m.row_ptr.resize(m.rows + 1);
  for (auto& p : m.row_ptr) p = le::get_u64(is);
  m.col_idx.resize(nnz);
  for (auto& c : m.col_idx) c = le::get_u32(is);
  m.values.resize(nnz);
  for (auto& v : m.values) v = le::get_f32(is);
  m.validate();
  return m;
}

/// Debug dump: header line then one "row,col,value" line per stored entry.
template <class T>
void write_csr_csv(std::ostream& os, const CsrMatrix<T>& m) {
  os << "row,col,value\n";
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t p = m.row_ptr[r]; p < m.row_ptr[r + 1]; ++p)
      os << r << ',' << m.col_idx[p] << ',' << m.values[p] << '\n';
}

// Dense matrix binary layout: "MAT1", u64 rows, u64 cols, f32 data row-major.
inline constexpr std::string_view kMatrixMagic = "MAT1";

inline void write_matrix_binary(std::ostream& os, const MatrixF& m) {
  le::put_magic(os, kMatrixMagic);
  le::put_u64(os, m.rows());
  le::put_u64(os, m.cols());
  for (float v : m.values()) le::put_f32(os, v);
}

inline MatrixF read_matrix_binary(std::istream& is) {
  le::expect_magic(is, kMatrixMagic, "matrix");
  const auto rows = le::get_u64(is);
  const auto cols = le::get_u64(is);
  MatrixF m(rows, cols);
  for (float& v : m.values()) v = le::get_f32(is);
  return m;
}

/// Comma-separated rows, one matrix row per line. Blank lines are skipped.
inline MatrixF read_matrix_csv(std::istream& is) {
  std::vector<float> data;
  std::size_t cols = 0, rows = 0, lineno = 0;
  std::string line;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::size_t n = 0;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        data.push_back(std::stof(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw DataError("matrix csv line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
      ++n;
    }
    if (rows == 0) cols = n;
    if (n != cols)
      throw DataError("matrix csv line " + std::to_string(lineno) + ": expected " + std::to_string(cols) +
                      " values, got " + std::to_string(n));
    ++rows;
  }
  return MatrixF(rows, cols, std::move(data));
}

template <class T>
void write_matrix_csv(std::ostream& os, const Matrix<T>& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) os << (c ? "," : "") << m(r, c);
    os << '\n';
  }
}

/// Reads either format, chosen by the leading magic bytes.
inline MatrixF load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char m[4] = {};
  in.read(m, 4);
  const bool binary = in.gcount() == 4 && std::string_view(m, 4) == kMatrixMagic;
  in.clear();
  in.seekg(0);
  return binary ? read_matrix_binary(in) : read_matrix_csv(in);
}

template <class T>
void save_csr(const std::filesystem::path& path, const CsrMatrix<T>& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_csr(out, m);
  if (!out) throw IoError("write failed: " + path.string());
}

inline CsrMatrix<float> load_csr(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_csr(in);
}

}  // namespace floodsparse
