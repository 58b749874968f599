#pragma once

// Offline multiscale spaces: multiscale partition of unity, randomized snapshot
// spaces on oversampled neighborhoods, the local spectral problem, and the split
// of each region's offline functions into permanent and candidate columns.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cstdint>
#include <random>
#include <spdlog/spdlog.h>
#include <string>
#include <vector>

#include "bmsfem/coeff.hpp"
#include "bmsfem/error.hpp"
#include "bmsfem/fem.hpp"
#include "bmsfem/mesh.hpp"
#include "bmsfem/parallel.hpp"
#include "bmsfem/rng.hpp"

namespace bmsfem {

/// A nodal function supported on a subset of fine nodes.
struct LocalFunction {
  std::vector<int> nodes;  // sorted global fine node ids
  Vector values;
};

struct PartitionOfUnity {
  /// chi[i] is supported on the nodes of omega_i (coarse node i).
  std::vector<LocalFunction> chi;
  /// Per fine cell: (1/|cell|) * sum_i int_cell |grad chi_i|^2.
  Vector grad_sq;

  /// Nodal value of chi_i at each of `nodes` (zero off its support).
  Vector restrict_to(int i, const std::vector<int>& nodes) const {
    const auto& f = chi[static_cast<std::size_t>(i)];
    Vector out = Vector::Zero(static_cast<Eigen::Index>(nodes.size()));
    std::size_t k = 0;
    for (std::size_t a = 0; a < nodes.size(); ++a) {
      while (k < f.nodes.size() && f.nodes[k] < nodes[a]) ++k;
      if (k < f.nodes.size() && f.nodes[k] == nodes[a]) out[static_cast<Eigen::Index>(a)] = f.values[static_cast<Eigen::Index>(k)];
    }
    return out;
  }
};

/// Map from global index to position in a sorted id list (-1 if absent).
inline std::vector<int> index_map(const std::vector<int>& ids, int universe) {
  std::vector<int> map(static_cast<std::size_t>(universe), -1);
  for (std::size_t k = 0; k < ids.size(); ++k) map[static_cast<std::size_t>(ids[k])] = static_cast<int>(k);
  return map;
}

namespace detail {

/// Standard coarse bilinear hat of coarse node n evaluated at fine node m.
inline double coarse_hat(const MeshHierarchy& mesh, int n, int m) {
  auto [ci, cj] = mesh.coarse_node_ij(n);
  auto [x, y] = mesh.fine_node_coord(m);
  double tx = 1.0 - std::abs(x / mesh.coarse_hx() - ci);
  double ty = 1.0 - std::abs(y / mesh.coarse_hy() - cj);
  return std::max(0.0, tx) * std::max(0.0, ty);
}

/// Solves A_II x_I = -A_IB x_B for every column of boundary data on the region.
/// Returns values on `nodes` (region nodes); boundary rows copy the data.
struct HarmonicExtension {
  std::vector<int> nodes, interior, boundary;
  std::vector<int> pos_interior, pos_boundary;  // positions in `nodes`
  SparseOperator A;                             // full local stiffness on `nodes`
  Eigen::SimplicialLDLT<SparseOperator> solver;
  SparseOperator A_ib;
  bool has_interior = false;

  HarmonicExtension(const MeshHierarchy& mesh, const CoefficientField& field,
                    const Region& region) {
    nodes = mesh.region_nodes(region);
    interior = mesh.region_interior_nodes(region);
    std::set_difference(nodes.begin(), nodes.end(), interior.begin(), interior.end(),
                        std::back_inserter(boundary));
    auto map = index_map(nodes, mesh.num_fine_nodes());
    std::vector<double> ones(static_cast<std::size_t>(mesh.num_fine_cells()), 1.0);
    assemble_q1(mesh, mesh.region_cells(region), map, static_cast<int>(nodes.size()),
                field.values, ones, &A, nullptr);
    for (int n : interior) pos_interior.push_back(map[static_cast<std::size_t>(n)]);
    for (int n : boundary) pos_boundary.push_back(map[static_cast<std::size_t>(n)]);
    has_interior = !interior.empty();
    if (!has_interior) return;
    Triplets tii, tib;
    std::vector<int> where(nodes.size(), -1);
    std::vector<char> is_int(nodes.size(), 0);
    for (std::size_t k = 0; k < pos_interior.size(); ++k) {
      where[static_cast<std::size_t>(pos_interior[k])] = static_cast<int>(k);
      is_int[static_cast<std::size_t>(pos_interior[k])] = 1;
    }
    for (std::size_t k = 0; k < pos_boundary.size(); ++k)
      where[static_cast<std::size_t>(pos_boundary[k])] = static_cast<int>(k);
    for (int c = 0; c < A.outerSize(); ++c)
      for (SparseOperator::InnerIterator it(A, c); it; ++it) {
        auto r = static_cast<std::size_t>(it.row()), cc = static_cast<std::size_t>(it.col());
        if (!is_int[r]) continue;
        if (is_int[cc]) tii.emplace_back(where[r], where[cc], it.value());
        else tib.emplace_back(where[r], where[cc], it.value());
      }
    SparseOperator aii(static_cast<Eigen::Index>(interior.size()), static_cast<Eigen::Index>(interior.size()));
    aii.setFromTriplets(tii.begin(), tii.end());
    A_ib.resize(static_cast<Eigen::Index>(interior.size()), static_cast<Eigen::Index>(boundary.size()));
    A_ib.setFromTriplets(tib.begin(), tib.end());
    solver.compute(aii);
    if (solver.info() != Eigen::Success) throw NumericsError("singular local harmonic problem");
  }

  /// boundary_data: (#boundary nodes) x k. Returns (#nodes) x k.
  Matrix extend(const Matrix& boundary_data) const {
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(nodes.size()), boundary_data.cols());
    for (std::size_t k = 0; k < pos_boundary.size(); ++k)
      out.row(pos_boundary[k]) = boundary_data.row(static_cast<Eigen::Index>(k));
    if (has_interior) {
      Matrix xi = solver.solve(-(A_ib * boundary_data));
      for (std::size_t k = 0; k < pos_interior.size(); ++k)
        out.row(pos_interior[k]) = xi.row(static_cast<Eigen::Index>(k));
    }
    return out;
  }
};

/// Gram-Schmidt (two passes) in the inner product of SPD `S`, left to right.
/// Columns that collapse below `drop_tol` relative norm are removed.
inline Matrix orthonormalize(const Matrix& X, const SparseOperator& S, double drop_tol = 1e-10,
                             std::vector<int>* kept = nullptr) {
  Matrix Q(X.rows(), X.cols());
  int q = 0;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    Vector v = X.col(j);
    const double n0 = std::sqrt(std::max(0.0, v.dot(S * v)));
    if (n0 == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass) {
      Vector sv = S * v;
      for (int k = 0; k < q; ++k) v -= Q.col(k).dot(sv) * Q.col(k);
    }
    const double n1 = std::sqrt(std::max(0.0, v.dot(S * v)));
    if (n1 <= drop_tol * n0) continue;
    Q.col(q++) = v / n1;
    if (kept) kept->push_back(static_cast<int>(j));
  }
  return Q.leftCols(q);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Partition of unity

/// chi_i: in every block K of omega_i, the kappa-harmonic extension of the coarse
/// bilinear hat's trace on dK.
inline PartitionOfUnity compute_pou(const MeshHierarchy& mesh, const CoefficientField& field) {
  check_field(field, mesh);
  const int ncn = mesh.num_coarse_nodes();
  PartitionOfUnity pou;
  pou.chi.resize(static_cast<std::size_t>(ncn));
  for (int i = 0; i < ncn; ++i) pou.chi[static_cast<std::size_t>(i)].nodes = mesh.region_nodes(mesh.node_region(i));
  for (auto& c : pou.chi) c.values = Vector::Zero(static_cast<Eigen::Index>(c.nodes.size()));
  pou.grad_sq = Vector::Zero(mesh.num_fine_cells());
  const auto kref = q1::stiffness(mesh.hx(), mesh.hy(), 1.0);
  const double area = mesh.hx() * mesh.hy();

  for (int b = 0; b < mesh.num_blocks(); ++b) {
    Region K = mesh.block_region(b);
    detail::HarmonicExtension ext = [&]() {
      try {
        return detail::HarmonicExtension(mesh, field, K);
      } catch (const NumericsError&) {
        throw NumericsError("singular partition-of-unity problem in block " + std::to_string(b));
      }
    }();
    auto corners = mesh.block_nodes(b);
    Matrix data(static_cast<Eigen::Index>(ext.boundary.size()), 4);
    for (std::size_t k = 0; k < ext.boundary.size(); ++k)
      for (int a = 0; a < 4; ++a) data(static_cast<Eigen::Index>(k), a) = detail::coarse_hat(mesh, corners[a], ext.boundary[k]);
    Matrix vals = ext.extend(data);
    auto local = index_map(ext.nodes, mesh.num_fine_nodes());
    for (int a = 0; a < 4; ++a) {
      auto& chi = pou.chi[static_cast<std::size_t>(corners[a])];
      for (std::size_t k = 0; k < chi.nodes.size(); ++k) {
        int p = local[static_cast<std::size_t>(chi.nodes[k])];
        if (p >= 0) chi.values[static_cast<Eigen::Index>(k)] = vals(p, a);
      }
    }
    for (int c : mesh.block_cells(b)) {
      auto cn = mesh.cell_nodes(c);
      double s = 0.0;
      for (int a = 0; a < 4; ++a) {
        Eigen::Vector4d x;
        for (int m = 0; m < 4; ++m) x[m] = vals(local[static_cast<std::size_t>(cn[m])], a);
        s += x.dot(kref * x);
      }
      pou.grad_sq[c] = s / area;
    }
  }
  return pou;
}

// ---------------------------------------------------------------------------
// Snapshots and the spectral problem

struct SnapshotSpace {
  int region_id = 0;
  Region region;           // oversampled region omega+
  std::vector<int> nodes;  // fine nodes of omega+, sorted
  Matrix columns;          // orthonormal basis of the snapshot span, (#nodes) x count
};

inline int boundary_dof_count(const MeshHierarchy& mesh, const Region& region) {
  return static_cast<int>(mesh.region_boundary_nodes(region).size());
}

/// Harmonic extensions of the given boundary data (rows ordered as region_boundary_nodes).
inline SnapshotSpace snapshots_from_boundary_data(const MeshHierarchy& mesh,
                                                  const CoefficientField& field,
                                                  const Region& region, const Matrix& data,
                                                  int region_id = 0) {
  detail::HarmonicExtension ext(mesh, field, region);
  if (data.rows() != static_cast<Eigen::Index>(ext.boundary.size()))
    throw ConfigError("boundary data has wrong row count");
  Matrix psi = ext.extend(data);
  Eigen::ColPivHouseholderQR<Matrix> qr(psi);
  qr.setThreshold(1e-10);
  const auto rank = qr.rank();
  Matrix q = qr.householderQ() * Matrix::Identity(psi.rows(), rank);
  return {region_id, region, ext.nodes, q};
}

/// `count` harmonic extensions of i.i.d. standard Gaussian boundary values on d(omega+).
inline SnapshotSpace generate_snapshots(const MeshHierarchy& mesh, const CoefficientField& field,
                                        const Region& region, int count, std::uint64_t seed,
                                        int region_id = 0) {
  if (count < 1) throw ConfigError("snapshot count must be >= 1");
  const int nb = boundary_dof_count(mesh, region);
  if (count > nb)
    throw ConfigError("snapshot count " + std::to_string(count) + " exceeds the " +
                      std::to_string(nb) + " boundary dofs of the region");
  if (mesh.region_interior_nodes(region).empty())
    throw ConfigError("snapshot region has no interior fine nodes");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix data(nb, count);
  for (int j = 0; j < count; ++j)
    for (int k = 0; k < nb; ++k) data(k, j) = normal(rng);
  return snapshots_from_boundary_data(mesh, field, region, data, region_id);
}

struct Eigenpairs {
  Vector values;           // ascending
  Matrix vectors;          // on SnapshotSpace::nodes, S-orthonormal
  std::vector<int> nodes;
};

/// Local stiffness (kappa) and weighted mass (kappa * sum |grad chi|^2) on the region.
inline std::pair<SparseOperator, SparseOperator> spectral_forms(const MeshHierarchy& mesh,
                                                                const CoefficientField& field,
                                                                const PartitionOfUnity& pou,
                                                                const Region& region,
                                                                const std::vector<int>& nodes) {
  auto map = index_map(nodes, mesh.num_fine_nodes());
  std::vector<double> weight(static_cast<std::size_t>(mesh.num_fine_cells()));
  for (int c = 0; c < mesh.num_fine_cells(); ++c) weight[static_cast<std::size_t>(c)] = field[c] * pou.grad_sq[c];
  SparseOperator A, S;
  assemble_q1(mesh, mesh.region_cells(region), map, static_cast<int>(nodes.size()), field.values,
              weight, &A, &S);
  return {A, S};
}

inline Eigenpairs spectral_decompose(const MeshHierarchy& mesh, const SnapshotSpace& snaps,
                                     const CoefficientField& field, const PartitionOfUnity& pou) {
  if (snaps.columns.cols() < 1) throw NumericsError("empty snapshot space");
  auto [A, S] = spectral_forms(mesh, field, pou, snaps.region, snaps.nodes);
  Matrix ar = snaps.columns.transpose() * (A * snaps.columns);
  Matrix sr = snaps.columns.transpose() * (S * snaps.columns);
  ar = 0.5 * (ar + ar.transpose());
  sr = 0.5 * (sr + sr.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> sdiag(sr);
  if (sdiag.eigenvalues().minCoeff() <= 1e-14 * std::max(1.0, sdiag.eigenvalues().maxCoeff()))
    throw NumericsError("spectral weight is singular on the snapshot span of region " +
                        std::to_string(snaps.region_id));
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(ar, sr);
  if (ges.info() != Eigen::Success) throw NumericsError("generalized eigensolver failed");
  return {ges.eigenvalues(), snaps.columns * ges.eigenvectors(), snaps.nodes};
}

// ---------------------------------------------------------------------------
// Region basis sets

/// Offline functions of one region in global coordinates of `support` (fine nodes for
/// cg, fine edges for mixed, broken dofs for ipdg).
struct RegionBasisSet {
  int id = 0;
  Region region;
  std::vector<int> support;
  Vector eigenvalues;
  Matrix permanent;   // S-orthonormal
  Matrix candidates;  // S-orthonormal, and S-orthogonal to the permanent columns
  Matrix test;        // mass-orthonormal test vectors spanning the whole local snapshot image

  int num_permanent() const { return static_cast<int>(permanent.cols()); }
  int num_candidates() const { return static_cast<int>(candidates.cols()); }
  int num_test() const { return static_cast<int>(test.cols()); }
};

inline constexpr int kAllSnapshots = -1;

struct BasisOptions {
  int n_perm = 2;
  int n_candidates = 6;
  /// Extra snapshots beyond n_perm + n_candidates; kAllSnapshots spans every boundary dof.
  int buffer = 4;
  int layers = 1;
  /// Zero the functions on the Dirichlet boundary of the domain (cg).
  bool dirichlet = true;
};

/// phi_j = chi * psi_j restricted to omega; the first n_perm become permanent,
/// the next n_candidates become candidates, all eigenvectors feed the test space.
inline RegionBasisSet build_region_basis(const MeshHierarchy& mesh, const CoefficientField& field,
                                         const Eigenpairs& eig, const PartitionOfUnity& pou,
                                         int coarse_node, const Region& omega, int n_perm,
                                         int n_candidates, bool dirichlet = true) {
  if (n_perm < 1) throw ConfigError("n_perm must be >= 1");
  if (n_candidates < 0 || n_perm + n_candidates > eig.values.size())
    throw ConfigError("n_perm + n_candidates exceeds the number of eigenpairs");
  RegionBasisSet out;
  out.id = coarse_node;
  out.region = omega;
  out.support = mesh.region_nodes(omega);
  out.eigenvalues = eig.values;
  Vector chi = pou.restrict_to(coarse_node, out.support);
  auto emap = index_map(eig.nodes, mesh.num_fine_nodes());
  Matrix phi(static_cast<Eigen::Index>(out.support.size()), eig.vectors.cols());
  for (std::size_t k = 0; k < out.support.size(); ++k) {
    int n = out.support[k];
    int p = emap[static_cast<std::size_t>(n)];
    bool zero = p < 0 || (dirichlet && mesh.is_boundary_fine_node(n));
    for (Eigen::Index j = 0; j < phi.cols(); ++j)
      phi(static_cast<Eigen::Index>(k), j) = zero ? 0.0 : chi[static_cast<Eigen::Index>(k)] * eig.vectors(p, j);
  }
  auto smap = index_map(out.support, mesh.num_fine_nodes());
  std::vector<double> weight(static_cast<std::size_t>(mesh.num_fine_cells()));
  for (int c = 0; c < mesh.num_fine_cells(); ++c) weight[static_cast<std::size_t>(c)] = field[c] * pou.grad_sq[c];
  std::vector<double> ones(weight.size(), 1.0);
  SparseOperator S, M;
  const auto cells = mesh.region_cells(omega);
  assemble_q1(mesh, cells, smap, static_cast<int>(out.support.size()), field.values, weight, nullptr, &S);
  assemble_q1(mesh, cells, smap, static_cast<int>(out.support.size()), field.values, ones, nullptr, &M);

  Matrix selected = phi.leftCols(n_perm + n_candidates);
  std::vector<int> kept;
  Matrix q = detail::orthonormalize(selected, S, 1e-8, &kept);
  int perm = static_cast<int>(std::count_if(kept.begin(), kept.end(), [&](int j) { return j < n_perm; }));
  if (perm < static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(n_perm), kept.size())) || perm == 0)
    throw NumericsError("degenerate permanent basis in region " + std::to_string(coarse_node));
  if (static_cast<int>(kept.size()) < n_perm + n_candidates)
    spdlog::warn("region {}: dropped {} linearly dependent offline functions", coarse_node,
                 n_perm + n_candidates - static_cast<int>(kept.size()));
  out.permanent = q.leftCols(perm);
  out.candidates = q.rightCols(q.cols() - perm);
  out.test = detail::orthonormalize(phi, M, 1e-8);
  return out;
}

// ---------------------------------------------------------------------------
// Mixed edge bases

namespace detail {

/// Velocity fields on the blocks of omega_E with unit normal flux on one fine edge
/// of E, zero flux on the rest of each block boundary and constant divergence per block.
/// Returns a matrix over `edges` (all fine edges of omega_E, sorted).
inline Matrix mixed_edge_snapshots(const MeshHierarchy& mesh, const CoefficientField& field,
                                   const Region& omega, const std::vector<int>& e_fine,
                                   const std::vector<int>& edges) {
  auto emap = index_map(edges, mesh.num_fine_edges());
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(edges.size()), static_cast<Eigen::Index>(e_fine.size()));
  std::vector<char> on_e(static_cast<std::size_t>(mesh.num_fine_edges()), 0);
  for (int e : e_fine) on_e[static_cast<std::size_t>(e)] = 1;
  for (int b : omega.blocks) {
    auto cells = mesh.block_cells(b);
    // Interior edges of the block: edges of its cells that are not on dK.
    std::vector<int> block_edges;
    for (int c : cells)
      for (int e : mesh.cell_edges(c)) block_edges.push_back(e);
    std::sort(block_edges.begin(), block_edges.end());
    std::vector<int> count_edges;
    std::vector<int> interior;
    for (std::size_t k = 0; k < block_edges.size();) {
      std::size_t m = k;
      while (m < block_edges.size() && block_edges[m] == block_edges[k]) ++m;
      if (m - k == 2) interior.push_back(block_edges[k]);
      k = m;
    }
    auto imap = index_map(interior, mesh.num_fine_edges());
    auto cmap = index_map(cells, mesh.num_fine_cells());
    const int ni = static_cast<int>(interior.size()), nc = static_cast<int>(cells.size());
    // Saddle system [Mv -B^T 0; B 0 1; 0 1^T 0].
    SparseOperator Mv, B;
    assemble_rt0(mesh, field, cells, imap, ni, cmap, nc, &Mv, &B);
    Triplets t;
    for (int k = 0; k < Mv.outerSize(); ++k)
      for (SparseOperator::InnerIterator it(Mv, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    for (int k = 0; k < B.outerSize(); ++k)
      for (SparseOperator::InnerIterator it(B, k); it; ++it) {
        t.emplace_back(it.col(), ni + it.row(), -it.value());
        t.emplace_back(ni + it.row(), it.col(), it.value());
      }
    for (int c = 0; c < nc; ++c) {
      t.emplace_back(ni + c, ni + nc, 1.0);
      t.emplace_back(ni + nc, ni + c, 1.0);
    }
    const int n = ni + nc + 1;
    SparseOperator K(n, n);
    K.setFromTriplets(t.begin(), t.end());
    Eigen::SparseLU<SparseOperator> lu(K);
    if (lu.info() != Eigen::Success) throw NumericsError("singular mixed snapshot problem in block " + std::to_string(b));
    const double hx = mesh.hx(), hy = mesh.hy();
    const auto div = rt0::divergence(hx, hy);
    const double block_area = hx * hy * nc;
    for (std::size_t j = 0; j < e_fine.size(); ++j) {
      // Prescribed flux on e_fine[j]; its divergence contribution in this block.
      Vector rhs = Vector::Zero(n);
      double total = 0.0;
      std::vector<std::pair<int, double>> cell_src;
      for (int c : cells) {
        auto ce = mesh.cell_edges(c);
        for (int a = 0; a < 4; ++a)
          if (ce[static_cast<std::size_t>(a)] == e_fine[j]) {
            cell_src.emplace_back(c, div[static_cast<std::size_t>(a)]);
            total += div[static_cast<std::size_t>(a)];
            // Momentum coupling of the prescribed flux with interior edges.
            auto m = rt0::mass(hx, hy, field[c]);
            for (int bb = 0; bb < 4; ++bb) {
              int eb = imap[static_cast<std::size_t>(ce[static_cast<std::size_t>(bb)])];
              if (eb >= 0) rhs[eb] -= m(bb, a);
            }
          }
      }
      if (cell_src.empty()) continue;
      const double cdiv = total / block_area;
      for (int c : cells) rhs[ni + cmap[static_cast<std::size_t>(c)]] = cdiv * hx * hy;
      for (auto [c, d] : cell_src) rhs[ni + cmap[static_cast<std::size_t>(c)]] -= d;
      Vector x = lu.solve(rhs);
      for (int k = 0; k < ni; ++k) out(emap[static_cast<std::size_t>(interior[static_cast<std::size_t>(k)])], static_cast<Eigen::Index>(j)) += x[k];
      out(emap[static_cast<std::size_t>(e_fine[j])], static_cast<Eigen::Index>(j)) = 1.0;
    }
  }
  return out;
}

}  // namespace detail

/// Flux basis for coarse edge E: snapshots are the unit-flux solutions on omega_E, the
/// spectral pair is a(v,w) = int_E kappa^{-1} (v.n)(w.n) against s(v,w) = int kappa^{-1} v.w.
/// Boundary coarse edges carry no flux dofs and yield an empty set.
inline RegionBasisSet build_mixed_edge_basis(const MeshHierarchy& mesh,
                                             const CoefficientField& field, int coarse_edge,
                                             int n_perm, int n_candidates) {
  RegionBasisSet out;
  out.id = coarse_edge;
  out.region = mesh.edge_region(coarse_edge);
  if (mesh.is_boundary_coarse_edge(coarse_edge)) {
    out.eigenvalues.resize(0);
    return out;
  }
  if (n_perm < 1) throw ConfigError("n_perm must be >= 1");
  auto e_fine = mesh.coarse_edge_fine_edges(coarse_edge);
  if (n_candidates < 0 || n_perm + n_candidates > static_cast<int>(e_fine.size()))
    throw ConfigError("mixed basis count exceeds the fine edges of coarse edge " + std::to_string(coarse_edge));
  // All non-boundary fine edges of omega_E; edges on d(omega_E) carry zero flux.
  std::vector<int> edges;
  {
    std::vector<int> all;
    for (int c : mesh.region_cells(out.region))
      for (int e : mesh.cell_edges(c)) all.push_back(e);
    std::sort(all.begin(), all.end());
    for (std::size_t k = 0; k < all.size();) {
      std::size_t m = k;
      while (m < all.size() && all[m] == all[k]) ++m;
      if (m - k == 2) edges.push_back(all[k]);
      k = m;
    }
  }
  out.support = edges;
  Matrix psi = detail::mixed_edge_snapshots(mesh, field, out.region, e_fine, edges);
  auto emap = index_map(edges, mesh.num_fine_edges());
  auto cells = mesh.region_cells(out.region);
  auto cmap = index_map(cells, mesh.num_fine_cells());
  SparseOperator Mv;
  assemble_rt0(mesh, field, cells, emap, static_cast<int>(edges.size()), cmap,
               static_cast<int>(cells.size()), &Mv, nullptr);
  // a(.,.) is diagonal in the snapshot coordinates: unit flux on e_j only.
  const int ns = static_cast<int>(e_fine.size());
  Matrix ar = Matrix::Zero(ns, ns);
  const double len = mesh.is_vertical_coarse_edge(coarse_edge) ? mesh.hy() : mesh.hx();
  for (int j = 0; j < ns; ++j) {
    double kinv = 0.0;
    int adj = 0;
    for (int c : cells)
      for (int e : mesh.cell_edges(c))
        if (e == e_fine[static_cast<std::size_t>(j)]) {
          kinv += 1.0 / field[c];
          ++adj;
        }
    ar(j, j) = len * kinv / std::max(1, adj);
  }
  Matrix sr = psi.transpose() * (Mv * psi);
  sr = 0.5 * (sr + sr.transpose());
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(ar, sr);
  if (ges.info() != Eigen::Success) throw NumericsError("mixed spectral problem failed on edge " + std::to_string(coarse_edge));
  out.eigenvalues = ges.eigenvalues();
  Matrix phi = psi * ges.eigenvectors();
  out.permanent = phi.leftCols(n_perm);
  out.candidates = phi.middleCols(n_perm, n_candidates);
  out.test = detail::orthonormalize(psi, Mv, 1e-10);
  return out;
}

// ---------------------------------------------------------------------------
// Catalogs for each formulation

struct BasisCatalog {
  Formulation formulation = Formulation::cg;
  std::vector<RegionBasisSet> regions;

  int num_permanent() const {
    int n = 0;
    for (const auto& r : regions) n += r.num_permanent();
    return n;
  }
  int num_candidates() const {
    int n = 0;
    for (const auto& r : regions) n += r.num_candidates();
    return n;
  }
  int num_test() const {
    int n = 0;
    for (const auto& r : regions) n += r.num_test();
    return n;
  }
};

namespace detail {

inline int clamp_snapshot_count(const MeshHierarchy& mesh, const Region& plus, const BasisOptions& opt,
                                int id) {
  const int nb = boundary_dof_count(mesh, plus);
  if (opt.buffer == kAllSnapshots) return nb;
  const int wanted = opt.n_perm + opt.n_candidates + opt.buffer;
  if (wanted > nb) {
    spdlog::warn("region {}: snapshot count {} clamped to {} boundary dofs", id, wanted, nb);
    return nb;
  }
  return wanted;
}

/// Node-based offline bases (one per coarse node) shared by the cg and ipdg catalogs.
inline std::vector<RegionBasisSet> node_bases(const MeshHierarchy& mesh,
                                              const CoefficientField& field,
                                              const PartitionOfUnity& pou,
                                              const BasisOptions& opt, std::uint64_t seed,
                                              int threads) {
  const int ncn = mesh.num_coarse_nodes();
  std::vector<RegionBasisSet> out(static_cast<std::size_t>(ncn));
  parallel_for(ncn, threads, [&](int i) {
    Region omega = mesh.node_region(i);
    Region plus = mesh.oversample(omega, opt.layers);
    int count = clamp_snapshot_count(mesh, plus, opt, i);
    auto snaps = generate_snapshots(mesh, field, plus, count, derive_seed(seed, "snapshot", static_cast<std::uint64_t>(i)), i);
    auto eig = spectral_decompose(mesh, snaps, field, pou);
    const int avail = static_cast<int>(eig.values.size());
    const int perm = std::min(opt.n_perm, avail);
    const int cand = std::min(opt.n_candidates, avail - perm);
    out[static_cast<std::size_t>(i)] = build_region_basis(mesh, field, eig, pou, i, omega, perm, cand, opt.dirichlet);
  });
  return out;
}

}  // namespace detail

inline BasisCatalog build_cg_catalog(const MeshHierarchy& mesh, const CoefficientField& field,
                                     const BasisOptions& opt, std::uint64_t seed,
                                     int threads = 1) {
  auto pou = compute_pou(mesh, field);
  return {Formulation::cg, detail::node_bases(mesh, field, pou, opt, seed, threads)};
}

inline BasisCatalog build_mixed_catalog(const MeshHierarchy& mesh, const CoefficientField& field,
                                        const BasisOptions& opt, int threads = 1) {
  BasisCatalog cat{Formulation::mixed, {}};
  std::vector<int> edges;
  for (int e = 0; e < mesh.num_coarse_edges(); ++e)
    if (!mesh.is_boundary_coarse_edge(e)) edges.push_back(e);
  cat.regions.resize(edges.size());
  parallel_for(static_cast<int>(edges.size()), threads, [&](int k) {
    const int e = edges[static_cast<std::size_t>(k)];
    const int nf = static_cast<int>(mesh.coarse_edge_fine_edges(e).size());
    const int perm = std::min(opt.n_perm, nf);
    const int cand = std::min(opt.n_candidates, nf - perm);
    cat.regions[static_cast<std::size_t>(k)] = build_mixed_edge_basis(mesh, field, e, perm, cand);
  });
  return cat;
}

/// Broken-space catalog: regions are coarse blocks. Each node basis chi_i psi_j is cut
/// into its pieces on the blocks of omega_i; block K collects the pieces from its four
/// corners, ordered by eigen-index then corner.
inline BasisCatalog build_ipdg_catalog(const MeshHierarchy& mesh, const CoefficientField& field,
                                       BasisOptions opt, std::uint64_t seed, int threads = 1) {
  opt.dirichlet = false;
  auto pou = compute_pou(mesh, field);
  // Node bases with all eigen-directions, not just the selected ones.
  const int ncn = mesh.num_coarse_nodes();
  struct NodeFunctions {
    std::vector<int> nodes;
    Matrix phi;  // all chi*psi_j
    Vector eigenvalues;
  };
  std::vector<NodeFunctions> nf(static_cast<std::size_t>(ncn));
  parallel_for(ncn, threads, [&](int i) {
    Region omega = mesh.node_region(i);
    Region plus = mesh.oversample(omega, opt.layers);
    int count = detail::clamp_snapshot_count(mesh, plus, opt, i);
    auto snaps = generate_snapshots(mesh, field, plus, count, derive_seed(seed, "snapshot", static_cast<std::uint64_t>(i)), i);
    auto eig = spectral_decompose(mesh, snaps, field, pou);
    auto nodes = mesh.region_nodes(omega);
    Vector chi = pou.restrict_to(i, nodes);
    auto emap = index_map(eig.nodes, mesh.num_fine_nodes());
    Matrix phi(static_cast<Eigen::Index>(nodes.size()), eig.vectors.cols());
    for (std::size_t k = 0; k < nodes.size(); ++k)
      phi.row(static_cast<Eigen::Index>(k)) = chi[static_cast<Eigen::Index>(k)] * eig.vectors.row(emap[static_cast<std::size_t>(nodes[k])]);
    nf[static_cast<std::size_t>(i)] = {nodes, phi, eig.values};
  });

  BasisCatalog cat{Formulation::ipdg, {}};
  cat.regions.resize(static_cast<std::size_t>(mesh.num_blocks()));
  const auto mref = q1::mass(mesh.hx(), mesh.hy());
  parallel_for(mesh.num_blocks(), threads, [&](int b) {
    RegionBasisSet rb;
    rb.id = b;
    rb.region = mesh.block_region(b);
    auto cells = mesh.block_cells(b);
    for (int c : cells)
      for (int a = 0; a < 4; ++a) rb.support.push_back(4 * c + a);
    const auto corners = mesh.block_nodes(b);
    const auto nsup = static_cast<Eigen::Index>(rb.support.size());
    // Piece of node function (corner, j) on this block, in broken dofs.
    auto piece = [&](int corner, Eigen::Index j) {
      const auto& f = nf[static_cast<std::size_t>(corners[static_cast<std::size_t>(corner)])];
      auto nmap = index_map(f.nodes, mesh.num_fine_nodes());
      Vector v(nsup);
      for (std::size_t k = 0; k < cells.size(); ++k) {
        auto cn = mesh.cell_nodes(cells[k]);
        for (int a = 0; a < 4; ++a) v[static_cast<Eigen::Index>(4 * k) + a] = f.phi(nmap[static_cast<std::size_t>(cn[static_cast<std::size_t>(a)])], j);
      }
      return v;
    };
    Eigen::Index jmax = 0;
    for (int a = 0; a < 4; ++a) jmax = std::max(jmax, nf[static_cast<std::size_t>(corners[static_cast<std::size_t>(a)])].phi.cols());
    std::vector<Vector> perm, cand, test;
    std::vector<double> evals;
    for (Eigen::Index j = 0; j < jmax; ++j)
      for (int a = 0; a < 4; ++a) {
        const auto& f = nf[static_cast<std::size_t>(corners[static_cast<std::size_t>(a)])];
        if (j >= f.phi.cols()) continue;
        Vector v = piece(a, j);
        test.push_back(v);
        evals.push_back(f.eigenvalues[j]);
        if (j < opt.n_perm) perm.push_back(v);
        else if (j < opt.n_perm + opt.n_candidates) cand.push_back(v);
      }
    // Block-local S (kappa-tilde weighted) and M in broken dofs.
    Triplets ts, tm;
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const int c = cells[k];
      const double w = field[c] * pou.grad_sq[c];
      for (int a = 0; a < 4; ++a)
        for (int bb = 0; bb < 4; ++bb) {
          ts.emplace_back(static_cast<int>(4 * k) + a, static_cast<int>(4 * k) + bb, w * mref(a, bb));
          tm.emplace_back(static_cast<int>(4 * k) + a, static_cast<int>(4 * k) + bb, mref(a, bb));
        }
    }
    SparseOperator S(nsup, nsup), M(nsup, nsup);
    S.setFromTriplets(ts.begin(), ts.end());
    M.setFromTriplets(tm.begin(), tm.end());
    auto to_matrix = [&](const std::vector<Vector>& cols) {
      Matrix m(nsup, static_cast<Eigen::Index>(cols.size()));
      for (std::size_t k = 0; k < cols.size(); ++k) m.col(static_cast<Eigen::Index>(k)) = cols[k];
      return m;
    };
    Matrix pc(nsup, static_cast<Eigen::Index>(perm.size() + cand.size()));
    pc << to_matrix(perm), to_matrix(cand);
    std::vector<int> kept;
    Matrix q = detail::orthonormalize(pc, S, 1e-8, &kept);
    const int np = static_cast<int>(std::count_if(kept.begin(), kept.end(), [&](int j) { return j < static_cast<int>(perm.size()); }));
    rb.permanent = q.leftCols(np);
    rb.candidates = q.rightCols(q.cols() - np);
    rb.test = detail::orthonormalize(to_matrix(test), M, 1e-8);
    std::sort(evals.begin(), evals.end());
    rb.eigenvalues = Eigen::Map<Vector>(evals.data(), static_cast<Eigen::Index>(evals.size()));
    // Broken dofs are 4*c+a already; ids in `support` are global.
    cat.regions[static_cast<std::size_t>(b)] = std::move(rb);
  });
  return cat;
}

}  // namespace bmsfem
