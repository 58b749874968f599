#pragma once

// Per-fine-cell coefficient fields and their time laws.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bmsfem/error.hpp"
#include "bmsfem/mesh.hpp"
#include "bmsfem/rng.hpp"

namespace bmsfem {

/// Contrast law: the field is rescaled so that max/min = c0 * exp(rate * t).
struct ContrastLaw {
  double c0 = 1000.0;
  double rate = 250.0;
};

struct CoefficientField {
  int nx = 0;
  int ny = 0;
  /// Row-major from the lower-left cell, same numbering as MeshHierarchy::fine_cell.
  std::vector<double> values;
  /// Absent means the field is constant in time.
  std::optional<ContrastLaw> law;

  double operator[](int cell) const { return values[static_cast<std::size_t>(cell)]; }
  double min() const { return *std::min_element(values.begin(), values.end()); }
  double max() const { return *std::max_element(values.begin(), values.end()); }
  double contrast() const { return max() / min(); }
};

inline CoefficientField uniform_field(const MeshHierarchy& mesh, double value) {
  return {mesh.nx_fine(), mesh.ny_fine(),
          std::vector<double>(static_cast<std::size_t>(mesh.num_fine_cells()), value),
          std::nullopt};
}

inline void check_field(const CoefficientField& f, const MeshHierarchy& mesh) {
  if (f.nx != mesh.nx_fine() || f.ny != mesh.ny_fine() ||
      f.values.size() != static_cast<std::size_t>(mesh.num_fine_cells()))
    throw ConfigError("coefficient field is " + std::to_string(f.ny) + "x" +
                      std::to_string(f.nx) + " but the fine grid is " +
                      std::to_string(mesh.ny_fine()) + "x" + std::to_string(mesh.nx_fine()));
}

/// Reads an ASCII matrix (ny rows of nx whitespace-separated values, top row first).
inline CoefficientField load_field(std::istream& in, const MeshHierarchy& mesh) {
  const int nx = mesh.nx_fine(), ny = mesh.ny_fine();
  CoefficientField f{nx, ny, std::vector<double>(static_cast<std::size_t>(nx * ny)), std::nullopt};
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    if (row >= ny) throw LoadError("field has more than " + std::to_string(ny) + " rows");
    std::istringstream ls(line);
    std::string tok;
    int col = 0;
    while (ls >> tok) {
      if (col >= nx)
        throw LoadError("row " + std::to_string(row) + " has more than " + std::to_string(nx) +
                        " columns");
      double v = 0.0;
      try {
        std::size_t pos = 0;
        v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw LoadError("unparsable entry '" + tok + "' at row " + std::to_string(row) +
                        ", col " + std::to_string(col));
      }
      if (!std::isfinite(v) || v <= 0.0)
        throw LoadError("non-positive or non-finite entry " + tok + " at row " +
                        std::to_string(row) + ", col " + std::to_string(col));
      f.values[static_cast<std::size_t>(mesh.fine_cell(col, ny - 1 - row))] = v;
      ++col;
    }
    if (col != nx)
      throw LoadError("row " + std::to_string(row) + " has " + std::to_string(col) +
                      " columns, expected " + std::to_string(nx));
    ++row;
  }
  if (row != ny)
    throw LoadError("field has " + std::to_string(row) + " rows, expected " + std::to_string(ny));
  return f;
}

inline CoefficientField load_field(const std::string& path, const MeshHierarchy& mesh) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open field file " + path);
  return load_field(in, mesh);
}

inline void write_field(std::ostream& out, const CoefficientField& f) {
  out << std::setprecision(17);
  for (int j = f.ny - 1; j >= 0; --j) {
    for (int i = 0; i < f.nx; ++i) {
      if (i) out << ' ';
      out << f.values[static_cast<std::size_t>(j * f.nx + i)];
    }
    out << '\n';
  }
}

/// Field at time t. The contrast law is an affine rescale anchored at the minimum:
/// v -> min + (v - min) * s with s chosen so that max/min = c0 * exp(rate * t).
inline CoefficientField evaluate_at(const CoefficientField& f, double t) {
  if (t < 0.0) throw ConfigError("evaluate_at: negative time");
  if (!f.law) return f;
  const double lo = f.min(), hi = f.max();
  if (hi <= lo) throw ConfigError("contrast law undefined for a constant field");
  const double ratio = f.law->c0 * std::exp(f.law->rate * t);
  const double s = (ratio - 1.0) * lo / (hi - lo);
  CoefficientField out = f;
  for (double& v : out.values) v = lo + (v - lo) * s;
  return out;
}

struct ChannelFieldSpec {
  double background = 1.0;
  double contrast = 1000.0;
  std::uint64_t seed = 1;
  int num_channels = 8;
};

/// Synthetic high-contrast medium: straight horizontal and vertical channels plus
/// a few square inclusions, all at background*contrast.
inline CoefficientField generate_channel_field(const MeshHierarchy& mesh,
                                               const ChannelFieldSpec& spec) {
  if (!(spec.background > 0.0) || !(spec.contrast >= 1.0))
    throw ConfigError("field.background must be > 0 and field.contrast >= 1");
  CoefficientField f = uniform_field(mesh, spec.background);
  const int nx = mesh.nx_fine(), ny = mesh.ny_fine();
  const double high = spec.background * spec.contrast;
  Rng rng = make_rng(spec.seed, "field");
  auto randint = [&](int lo, int hi) {  // inclusive
    return lo + static_cast<int>(uniform01(rng) * (hi - lo + 1));
  };
  auto paint = [&](int i0, int i1, int j0, int j1) {
    for (int j = std::max(0, j0); j <= std::min(ny - 1, j1); ++j)
      for (int i = std::max(0, i0); i <= std::min(nx - 1, i1); ++i)
        f.values[static_cast<std::size_t>(mesh.fine_cell(i, j))] = high;
  };
  const int width = std::max(1, std::min(nx, ny) / 50);
  for (int k = 0; k < spec.num_channels; ++k) {
    if (k % 2 == 0) {
      int len = randint(nx / 2, nx - 1);
      int i0 = randint(0, nx - len);
      int j0 = randint(1, ny - 1 - width);
      paint(i0, i0 + len - 1, j0, j0 + width - 1);
    } else {
      int len = randint(ny / 2, ny - 1);
      int j0 = randint(0, ny - len);
      int i0 = randint(1, nx - 1 - width);
      paint(i0, i0 + width - 1, j0, j0 + len - 1);
    }
  }
  const int inclusions = std::max(1, spec.num_channels / 2);
  const int side = std::max(1, std::min(nx, ny) / 25);
  for (int k = 0; k < inclusions; ++k) {
    int i0 = randint(0, nx - side), j0 = randint(0, ny - side);
    paint(i0, i0 + side - 1, j0, j0 + side - 1);
  }
  return f;
}

}  // namespace bmsfem
