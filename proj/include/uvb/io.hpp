#pragma once

#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "uvb/data.hpp"
#include "uvb/errors.hpp"

namespace uvb {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// %.17g: shortest form is not needed, losslessness is.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw IoError("csv: cannot create " + path);
  for (int i = 0; i < m.rows; ++i) {
    const auto row = m.row(i);
    for (int j = 0; j < m.cols; ++j) {
      if (j) out << ',';
      out << format_double(row[static_cast<std::size_t>(j)]);
    }
    out << '\n';
  }
  if (!out) throw IoError("csv: write failed for " + path);
}

inline void write_csv(const std::string& path,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("csv: cannot create " + path);
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << row[j];
    }
    out << '\n';
  }
  if (!out) throw IoError("csv: write failed for " + path);
}

inline Matrix read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("csv: cannot open " + path);
  std::vector<double> values;
  int cols = -1, rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    int c = 0;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      const std::string cell = line.substr(pos, comma - pos);
      std::size_t used = 0;
      double v;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw IoError("csv: bad number '" + cell + "' in " + path);
      }
      while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
      if (used != cell.size())
        throw IoError("csv: bad number '" + cell + "' in " + path);
      values.push_back(v);
      ++c;
      pos = comma + 1;
      if (comma == line.size()) break;
    }
    if (cols < 0) cols = c;
    if (c != cols)
      throw IoError("csv: ragged row " + std::to_string(rows) + " in " + path);
    ++rows;
  }
  Matrix m(rows, cols < 0 ? 0 : cols);
  m.data = std::move(values);
  return m;
}

// A simple append-style CSV writer for metric tables.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, std::span<const std::string> header)
      : out_(path) {
    if (!out_) throw IoError("csv: cannot create " + path);
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) out_ << ',';
      out_ << header[i];
    }
    out_ << '\n';
  }

  void row(std::span<const double> values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out_ << ',';
      out_ << format_double(values[i]);
    }
    out_ << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

// ---- PGM (P5) ---------------------------------------------------------------

inline void write_pgm(const std::string& path, int width, int height,
                      std::span<const unsigned char> pixels) {
  if (static_cast<std::size_t>(width) * height != pixels.size())
    throw DimensionError("pgm: pixel count != width*height");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("pgm: cannot create " + path);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("pgm: write failed for " + path);
}

// Lays out matrix rows (each an img_h x img_w image in [0,1]) left-to-right,
// top-to-bottom in a grid with `grid_cols` columns and a 2-pixel gap.
inline void write_image_grid(const std::string& path, const Matrix& images,
                             int img_h, int img_w, int grid_cols) {
  if (images.cols != img_h * img_w)
    throw DimensionError("grid: row length != img_h*img_w");
  if (grid_cols < 1) throw DimensionError("grid: grid_cols must be >= 1");
  const int n = images.rows;
  const int grid_rows = (n + grid_cols - 1) / grid_cols;
  const int gap = 2;
  const int W = grid_cols * img_w + (grid_cols - 1) * gap;
  const int H = grid_rows * img_h + (grid_rows - 1) * gap;
  std::vector<unsigned char> canvas(static_cast<std::size_t>(W) * H, 0);
  for (int i = 0; i < n; ++i) {
    const int gr = i / grid_cols, gc = i % grid_cols;
    const int y0 = gr * (img_h + gap), x0 = gc * (img_w + gap);
    const auto row = images.row(i);
    for (int py = 0; py < img_h; ++py)
      for (int px = 0; px < img_w; ++px) {
        double v = row[static_cast<std::size_t>(py) * img_w + px];
        v = std::min(1.0, std::max(0.0, v));
        canvas[static_cast<std::size_t>(y0 + py) * W + (x0 + px)] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
  }
  write_pgm(path, W, H, canvas);
}

}  // namespace uvb
