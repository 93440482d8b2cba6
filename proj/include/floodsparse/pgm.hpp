#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "floodsparse/error.hpp"
#include "floodsparse/matrix.hpp"

namespace floodsparse {

enum class PgmScale { MinMax, Binary };

/// 8-bit grayscale pixels, row-major. MinMax maps [min, max] onto [0, 255]
/// (a constant matrix maps to 0); Binary maps 0 to 0 and anything else to 255.
template <class T>
std::vector<std::uint8_t> to_gray(const Matrix<T>& m, PgmScale mode) {
  std::vector<std::uint8_t> px(m.size());
  auto v = m.values();
  if (mode == PgmScale::Binary) {
    for (std::size_t i = 0; i < v.size(); ++i) px[i] = v[i] != T(0) ? 255 : 0;
    return px;
  }
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double range = double(*hi) - double(*lo);
  for (std::size_t i = 0; i < v.size(); ++i)
    px[i] = range > 0 ? static_cast<std::uint8_t>(std::lround((double(v[i]) - double(*lo)) / range * 255.0)) : 0;
  return px;
}

template <class T>
void write_pgm(const Matrix<T>& m, const std::filesystem::path& path, PgmScale mode = PgmScale::MinMax) {
  if (m.empty()) throw ShapeError("write_pgm: empty matrix");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << m.cols() << ' ' << m.rows() << "\n255\n";
  const auto px = to_gray(m, mode);
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

struct PgmImage {
  std::size_t width = 0, height = 0, maxval = 0;
  std::vector<std::uint8_t> pixels;
};

inline PgmImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string magic;
  PgmImage img;
  in >> magic >> img.width >> img.height >> img.maxval;
  if (magic != "P5" || !in) throw DataError("read_pgm: not a binary PGM");
  in.get();
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw IoError("read_pgm: truncated pixel data");
  return img;
}

}  // namespace floodsparse
