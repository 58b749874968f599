#pragma once

// Errors against oracles, cross-sampler comparisons, and CSV output.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <spdlog/spdlog.h>
#include <string>
#include <vector>

#include "bmsfem/bayes.hpp"
#include "bmsfem/error.hpp"
#include "bmsfem/fem.hpp"
#include "bmsfem/mesh.hpp"

namespace bmsfem {

struct L2Error {
  double value = 0.0;
  /// True when the reference has zero norm and `value` is the absolute error.
  bool absolute = false;
};

inline L2Error l2_error(const Vector& sample, const Vector& reference, const SparseOperator& mass) {
  if (sample.size() != reference.size() || mass.rows() != sample.size())
    throw ConfigError("l2_error: dimension mismatch");
  const Vector e = sample - reference;
  const double num = std::sqrt(std::max(0.0, e.dot(mass * e)));
  const double den = std::sqrt(std::max(0.0, reference.dot(mass * reference)));
  if (den == 0.0) return {num, true};
  return {num / den, false};
}

inline double relative_l2(const Vector& sample, const Vector& reference, const SparseOperator& mass) {
  return l2_error(sample, reference, mass).value;
}

/// Pearson correlation of two frequency vectors; NaN (with a warning) when undefined.
inline double frequency_correlation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ConfigError("frequency vectors differ in length");
  Eigen::Map<const Eigen::VectorXd> x(a.data(), static_cast<Eigen::Index>(a.size()));
  Eigen::Map<const Eigen::VectorXd> y(b.data(), static_cast<Eigen::Index>(b.size()));
  double r = pearson(x, y);
  if (std::isnan(r)) spdlog::warn("frequency correlation undefined: zero variance");
  return r;
}

/// Fraction of dofs where |mean - reference| <= k * std, for each k.
inline std::vector<double> coverage_check(const Vector& mean, const Vector& std_dev,
                                          const Vector& reference, const std::vector<double>& ks) {
  if (mean.size() != reference.size() || std_dev.size() != reference.size())
    throw ConfigError("coverage_check: dimension mismatch");
  std::vector<double> out;
  for (double k : ks) {
    Eigen::Index hit = 0;
    for (Eigen::Index i = 0; i < mean.size(); ++i)
      if (std::abs(mean[i] - reference[i]) <= k * std_dev[i]) ++hit;
    out.push_back(mean.size() ? static_cast<double>(hit) / static_cast<double>(mean.size()) : 1.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw LoadError("cannot open " + path + " for writing");
  }
  void header(const std::vector<std::string>& cols) { row_strings(cols); }
  void row_strings(const std::vector<std::string>& cols) {
    for (std::size_t k = 0; k < cols.size(); ++k) out_ << (k ? "," : "") << cols[k];
    out_ << '\n';
  }
  template <class... Ts>
  void row(const Ts&... vals) {
    std::vector<std::string> cols{cell(vals)...};
    row_strings(cols);
  }

 private:
  static std::string cell(double v) { return fmt17(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(long v) { return std::to_string(v); }
  static std::string cell(unsigned long v) { return std::to_string(v); }
  static std::string cell(unsigned long long v) { return std::to_string(v); }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }
  std::ofstream out_;
};

/// ny x nx grid, top row first, from values indexed lower-left row-major.
inline void write_grid_csv(const std::string& path, const std::vector<double>& values, int nx, int ny) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot open " + path + " for writing");
  for (int j = ny - 1; j >= 0; --j) {
    for (int i = 0; i < nx; ++i) out << (i ? "," : "") << fmt17(values[static_cast<std::size_t>(j * nx + i)]);
    out << '\n';
  }
}

/// Fine field for output on the node grid (cg: nodal; ipdg: averaged over cells sharing a node)
/// or the cell grid (mixed pressure). Returns values and grid shape.
struct GridField {
  std::vector<double> values;
  int nx = 0, ny = 0;
};

inline GridField nodal_grid(const MeshHierarchy& mesh, const Vector& nodal) {
  GridField g{std::vector<double>(nodal.data(), nodal.data() + nodal.size()), mesh.nx_fine() + 1,
              mesh.ny_fine() + 1};
  return g;
}

inline Vector dg_to_nodes(const MeshHierarchy& mesh, const Vector& dg) {
  Vector sum = Vector::Zero(mesh.num_fine_nodes());
  Vector cnt = Vector::Zero(mesh.num_fine_nodes());
  for (int c = 0; c < mesh.num_fine_cells(); ++c) {
    auto nodes = mesh.cell_nodes(c);
    for (int a = 0; a < 4; ++a) {
      sum[nodes[static_cast<std::size_t>(a)]] += dg[4 * c + a];
      cnt[nodes[static_cast<std::size_t>(a)]] += 1.0;
    }
  }
  return sum.cwiseQuotient(cnt);
}

/// Cell-centred velocity magnitude from RT0 edge fluxes (all fine edges, boundary zero).
inline Vector flux_magnitude(const MeshHierarchy& mesh, const MixedSystem& s, const Vector& v) {
  Vector out(mesh.num_fine_cells());
  auto value = [&](int e) {
    int d = s.dof_of_edge[static_cast<std::size_t>(e)];
    return d >= 0 ? v[d] : 0.0;
  };
  for (int c = 0; c < mesh.num_fine_cells(); ++c) {
    auto e = mesh.cell_edges(c);
    const double vx = 0.5 * (value(e[1]) + value(e[3]));
    const double vy = 0.5 * (value(e[0]) + value(e[2]));
    out[c] = std::hypot(vx, vy);
  }
  return out;
}

}  // namespace bmsfem
