#pragma once

// Discrete residuals tested against the snapshot test space, and their norms.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <string>
#include <vector>

#include "bmsfem/error.hpp"
#include "bmsfem/fem.hpp"
#include "bmsfem/gmsfem.hpp"

namespace bmsfem {

/// Test vectors of all regions as columns over the global fine dofs of one formulation.
/// Region k owns columns [offsets[k], offsets[k+1]).
struct TestSpace {
  SparseOperator vectors;
  std::vector<int> offsets{0};

  int num_regions() const { return static_cast<int>(offsets.size()) - 1; }
  int size() const { return static_cast<int>(vectors.cols()); }
  int begin(int k) const { return offsets[static_cast<std::size_t>(k)]; }
  int count(int k) const { return offsets[static_cast<std::size_t>(k) + 1] - offsets[static_cast<std::size_t>(k)]; }
};

struct ResidualVector {
  Vector values;
  std::vector<int> offsets{0};
  int interval = 0;

  int num_regions() const { return static_cast<int>(offsets.size()) - 1; }
  auto slice(int k) const {
    return values.segment(offsets[static_cast<std::size_t>(k)],
                          offsets[static_cast<std::size_t>(k) + 1] - offsets[static_cast<std::size_t>(k)]);
  }
};

struct RegionNorms {
  std::vector<double> local;
  /// max over the slice of |R_v| / ||v||; test vectors are mass-normalized so this is a sup norm.
  std::vector<double> local_sup;
  double global = 0.0;
};

inline RegionNorms region_norms(const ResidualVector& r) {
  RegionNorms out;
  const int n = r.num_regions();
  out.local.resize(static_cast<std::size_t>(n));
  out.local_sup.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    auto s = r.slice(k);
    out.local[static_cast<std::size_t>(k)] = s.norm();
    out.local_sup[static_cast<std::size_t>(k)] = s.size() ? s.cwiseAbs().maxCoeff() : 0.0;
  }
  out.global = r.values.norm();
  return out;
}

/// Global dof index of each support entry of a region set, for a formulation:
/// cg support holds fine nodes, mixed holds fine edges, ipdg holds broken dofs already.
struct DofMap {
  std::vector<int> global_of_local;  // indexed by support id, -1 when eliminated
  int size = 0;
};

inline DofMap dof_map_cg(const CgSystem& s) { return {s.dof_of_node, s.size()}; }
inline DofMap dof_map_mixed(const MixedSystem& s) { return {s.dof_of_edge, s.num_flux()}; }
inline DofMap dof_map_ipdg(int n) {
  DofMap m{std::vector<int>(static_cast<std::size_t>(n)), n};
  for (int i = 0; i < n; ++i) m.global_of_local[static_cast<std::size_t>(i)] = i;
  return m;
}

/// Scatter region-local columns to global dof coordinates.
inline Matrix scatter(const Matrix& local, const std::vector<int>& support, const DofMap& map) {
  Matrix out = Matrix::Zero(map.size, local.cols());
  for (std::size_t k = 0; k < support.size(); ++k) {
    int g = map.global_of_local[static_cast<std::size_t>(support[k])];
    if (g >= 0) out.row(g) = local.row(static_cast<Eigen::Index>(k));
  }
  return out;
}

/// Same, appended as triplets at columns col0.. of a sparse global matrix.
inline void scatter_triplets(const Matrix& local, const std::vector<int>& support, const DofMap& map,
                             int col0, Triplets& out) {
  for (Eigen::Index j = 0; j < local.cols(); ++j)
    for (std::size_t k = 0; k < support.size(); ++k) {
      const int g = map.global_of_local[static_cast<std::size_t>(support[k])];
      const double v = local(static_cast<Eigen::Index>(k), j);
      if (g >= 0 && v != 0.0) out.emplace_back(g, col0 + static_cast<int>(j), v);
    }
}

inline TestSpace build_test_space(const BasisCatalog& cat, const DofMap& map) {
  TestSpace t;
  Triplets trip;
  int col = 0;
  for (const auto& r : cat.regions) {
    scatter_triplets(r.test, r.support, map, col, trip);
    col += r.num_test();
    t.offsets.push_back(col);
  }
  t.vectors.resize(map.size, col);
  t.vectors.setFromTriplets(trip.begin(), trip.end());
  return t;
}

/// Full fine test space split into one region; used for validation runs.
inline TestSpace fine_test_space(int n) {
  TestSpace t;
  t.vectors.resize(n, n);
  t.vectors.setIdentity();
  t.offsets.push_back(n);
  return t;
}

namespace detail {
inline void check_len(const Vector& v, Eigen::Index n, const char* what) {
  if (v.size() != n) throw ConfigError(std::string("residual: dimension mismatch in ") + what);
}
}  // namespace detail

/// R_v = (f, v) - ((u_plus + u_next - u_prev)/dt, v) - a(u_plus + u_next, v), all in cg dofs.
inline ResidualVector residual_parabolic_cg(const CgSystem& s, const Vector& u_plus,
                                            const Vector& u_fixed_next, const Vector& u_fixed_prev,
                                            const Vector& f, double dt, const TestSpace& test) {
  if (!(dt > 0.0)) throw ConfigError("time step must be > 0");
  const Eigen::Index n = s.size();
  detail::check_len(u_plus, n, "u_plus");
  detail::check_len(u_fixed_next, n, "u_fixed_next");
  detail::check_len(u_fixed_prev, n, "u_fixed_prev");
  detail::check_len(f, n, "f");
  if (test.vectors.rows() != n) throw ConfigError("residual: test space dimension mismatch");
  const Vector u = u_plus + u_fixed_next;
  const Vector w = s.M * f - s.M * (u - u_fixed_prev) / dt - s.A * u;
  return {test.vectors.transpose() * w, test.offsets, 0};
}

/// R_w = int kappa^{-1} (v_plus + v_fixed) . w - int div(w) p_fixed. Pressure in fine cells.
inline ResidualVector residual_mixed(const MixedSystem& s, const Vector& v_plus,
                                     const Vector& v_fixed, const Vector& p_fixed,
                                     const TestSpace& test) {
  detail::check_len(v_plus, s.num_flux(), "v_plus");
  detail::check_len(v_fixed, s.num_flux(), "v_fixed");
  detail::check_len(p_fixed, s.num_cells(), "p_fixed");
  if (test.vectors.rows() != s.num_flux()) throw ConfigError("residual: test space dimension mismatch");
  const Vector w = s.Mv * (v_plus + v_fixed) - s.B.transpose() * p_fixed;
  return {test.vectors.transpose() * w, test.offsets, 0};
}

/// R_v = ((u_next - 2 u_curr + u_prev)/dt^2, v) + a_DG(u_curr, v) - (f, v).
inline ResidualVector residual_wave(const DgSystem& s, const Vector& u_next, const Vector& u_curr,
                                    const Vector& u_prev, const Vector& f, double dt,
                                    const TestSpace& test) {
  if (!(dt > 0.0)) throw ConfigError("time step must be > 0");
  const Eigen::Index n = s.size();
  detail::check_len(u_next, n, "u_next");
  detail::check_len(u_curr, n, "u_curr");
  detail::check_len(u_prev, n, "u_prev");
  detail::check_len(f, n, "f");
  if (test.vectors.rows() != n) throw ConfigError("residual: test space dimension mismatch");
  const Vector w = s.M * (u_next - 2.0 * u_curr + u_prev) / (dt * dt) + s.A * u_curr - s.M * f;
  return {test.vectors.transpose() * w, test.offsets, 0};
}

}  // namespace bmsfem
