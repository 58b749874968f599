#pragma once

// Fine-grid discretizations: conforming Q1 (CG), lowest-order Raviart-Thomas
// on rectangles (mixed), and symmetric interior-penalty DG with broken Q1 (IPDG).
// All coefficients are constant per fine cell and every element integral is exact.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "bmsfem/coeff.hpp"
#include "bmsfem/error.hpp"
#include "bmsfem/mesh.hpp"

namespace bmsfem {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseOperator = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

enum class Formulation { cg, mixed, ipdg };

inline const char* to_string(Formulation f) {
  switch (f) {
    case Formulation::cg: return "cg";
    case Formulation::mixed: return "mixed";
    case Formulation::ipdg: return "ipdg";
  }
  return "?";
}

/// A discrete state. For mixed, `u` holds edge fluxes and `aux` the cell pressures;
/// for ipdg, `aux` holds the previous time level.
struct FineState {
  Vector u;
  Vector aux;
  double t = 0.0;
  Formulation tag = Formulation::cg;
};

namespace q1 {

// Local node a sits at (kX[a], kY[a]) of the reference square.
inline constexpr std::array<int, 4> kX{0, 1, 1, 0};
inline constexpr std::array<int, 4> kY{0, 0, 1, 1};

inline double mass1d(int a, int b) { return a == b ? 1.0 / 3.0 : 1.0 / 6.0; }
inline double stiff1d(int a, int b) { return a == b ? 1.0 : -1.0; }

inline Eigen::Matrix4d stiffness(double hx, double hy, double kappa) {
  Eigen::Matrix4d k;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      k(a, b) = kappa * (stiff1d(kX[a], kX[b]) / hx * mass1d(kY[a], kY[b]) * hy +
                         mass1d(kX[a], kX[b]) * hx * stiff1d(kY[a], kY[b]) / hy);
  return k;
}

inline Eigen::Matrix4d mass(double hx, double hy, double weight = 1.0) {
  Eigen::Matrix4d m;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) m(a, b) = weight * hx * hy * mass1d(kX[a], kX[b]) * mass1d(kY[a], kY[b]);
  return m;
}

/// Basis values and physical gradients at reference point (xi, eta).
struct Eval {
  std::array<double, 4> v, dx, dy;
};

inline Eval eval(double xi, double eta, double hx, double hy) {
  Eval e{};
  for (int a = 0; a < 4; ++a) {
    double nx = kX[a] ? xi : 1.0 - xi, ny = kY[a] ? eta : 1.0 - eta;
    double dnx = kX[a] ? 1.0 : -1.0, dny = kY[a] ? 1.0 : -1.0;
    e.v[a] = nx * ny;
    e.dx[a] = dnx / hx * ny;
    e.dy[a] = nx * dny / hy;
  }
  return e;
}

}  // namespace q1

/// Q1 assembly over `cells`, with global node n mapped to row node_index[n] (skipped if < 0).
/// Either output pointer may be null.
inline void assemble_q1(const MeshHierarchy& mesh, const std::vector<int>& cells,
                        const std::vector<int>& node_index, int n,
                        const std::vector<double>& stiff_weight,
                        const std::vector<double>& mass_weight, SparseOperator* stiffness,
                        SparseOperator* mass) {
  Triplets ta, tm;
  const double hx = mesh.hx(), hy = mesh.hy();
  const auto kref = q1::stiffness(hx, hy, 1.0);
  const auto mref = q1::mass(hx, hy, 1.0);
  for (int c : cells) {
    auto nodes = mesh.cell_nodes(c);
    const double ks = stiffness ? stiff_weight[static_cast<std::size_t>(c)] : 0.0;
    const double ms = mass ? mass_weight[static_cast<std::size_t>(c)] : 0.0;
    for (int a = 0; a < 4; ++a) {
      int ra = node_index[static_cast<std::size_t>(nodes[a])];
      if (ra < 0) continue;
      for (int b = 0; b < 4; ++b) {
        int rb = node_index[static_cast<std::size_t>(nodes[b])];
        if (rb < 0) continue;
        if (stiffness) ta.emplace_back(ra, rb, ks * kref(a, b));
        if (mass) tm.emplace_back(ra, rb, ms * mref(a, b));
      }
    }
  }
  if (stiffness) {
    stiffness->resize(n, n);
    stiffness->setFromTriplets(ta.begin(), ta.end());
  }
  if (mass) {
    mass->resize(n, n);
    mass->setFromTriplets(tm.begin(), tm.end());
  }
}

// ---------------------------------------------------------------------------
// CG

/// Q1 system on interior fine nodes (homogeneous Dirichlet data eliminated).
struct CgSystem {
  SparseOperator M;
  SparseOperator A;
  std::vector<int> dof_of_node;  // -1 on boundary nodes
  std::vector<int> node_of_dof;
  int size() const { return static_cast<int>(node_of_dof.size()); }
};

inline CgSystem assemble_cg(const MeshHierarchy& mesh, const CoefficientField& field,
                            bool dirichlet = true) {
  check_field(field, mesh);
  CgSystem s;
  s.dof_of_node.assign(static_cast<std::size_t>(mesh.num_fine_nodes()), -1);
  for (int n = 0; n < mesh.num_fine_nodes(); ++n) {
    if (dirichlet && mesh.is_boundary_fine_node(n)) continue;
    s.dof_of_node[static_cast<std::size_t>(n)] = static_cast<int>(s.node_of_dof.size());
    s.node_of_dof.push_back(n);
  }
  std::vector<int> cells(static_cast<std::size_t>(mesh.num_fine_cells()));
  for (int c = 0; c < mesh.num_fine_cells(); ++c) cells[static_cast<std::size_t>(c)] = c;
  std::vector<double> ones(cells.size(), 1.0);
  assemble_q1(mesh, cells, s.dof_of_node, s.size(), field.values, ones, &s.A, &s.M);
  return s;
}

/// Nodal values at interior dofs -> full nodal vector (zero on the boundary).
inline Vector cg_to_nodes(const CgSystem& s, const Vector& u, int num_nodes) {
  Vector out = Vector::Zero(num_nodes);
  for (int d = 0; d < s.size(); ++d) out[s.node_of_dof[static_cast<std::size_t>(d)]] = u[d];
  return out;
}

inline Vector nodes_to_cg(const CgSystem& s, const Vector& nodal) {
  Vector out(s.size());
  for (int d = 0; d < s.size(); ++d) out[d] = nodal[s.node_of_dof[static_cast<std::size_t>(d)]];
  return out;
}

// ---------------------------------------------------------------------------
// Mixed (RT0 fluxes on fine edges, constant pressure per fine cell)

struct MixedSystem {
  SparseOperator Mv;             // kappa^{-1}-weighted flux mass, interior edges only
  SparseOperator B;              // cells x interior edges, B(c,e) = int_c div(w_e)
  Vector cell_area;              // pressure mass (diagonal)
  std::vector<int> dof_of_edge;  // -1 on no-flux boundary edges
  std::vector<int> edge_of_dof;
  int num_flux() const { return static_cast<int>(edge_of_dof.size()); }
  int num_cells() const { return static_cast<int>(cell_area.size()); }
};

namespace rt0 {

/// Local flux mass for one rectangle, dofs ordered bottom, right, top, left, each
/// with unit normal velocity in the global (+x / +y) orientation.
inline Eigen::Matrix4d mass(double hx, double hy, double kappa) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  const double d = hx * hy / (3.0 * kappa), o = hx * hy / (6.0 * kappa);
  m(0, 0) = m(2, 2) = m(1, 1) = m(3, 3) = d;
  m(0, 2) = m(2, 0) = o;  // bottom/top
  m(1, 3) = m(3, 1) = o;  // right/left
  return m;
}

/// int_cell div(w_e) for the four local dofs.
inline std::array<double, 4> divergence(double hx, double hy) { return {-hx, hy, hx, -hy}; }

}  // namespace rt0

/// Assembly over a subset of cells with an explicit edge numbering.
inline void assemble_rt0(const MeshHierarchy& mesh, const CoefficientField& field,
                         const std::vector<int>& cells, const std::vector<int>& edge_index,
                         int n_edges, const std::vector<int>& cell_index, int n_cells,
                         SparseOperator* Mv, SparseOperator* B) {
  Triplets tm, tb;
  const double hx = mesh.hx(), hy = mesh.hy();
  const auto div = rt0::divergence(hx, hy);
  for (int c : cells) {
    auto edges = mesh.cell_edges(c);
    auto m = rt0::mass(hx, hy, field[c]);
    int rc = cell_index[static_cast<std::size_t>(c)];
    for (int a = 0; a < 4; ++a) {
      int ea = edge_index[static_cast<std::size_t>(edges[a])];
      if (ea < 0) continue;
      if (B && rc >= 0) tb.emplace_back(rc, ea, div[a]);
      if (!Mv) continue;
      for (int b = 0; b < 4; ++b) {
        int eb = edge_index[static_cast<std::size_t>(edges[b])];
        if (eb >= 0 && m(a, b) != 0.0) tm.emplace_back(ea, eb, m(a, b));
      }
    }
  }
  if (Mv) {
    Mv->resize(n_edges, n_edges);
    Mv->setFromTriplets(tm.begin(), tm.end());
  }
  if (B) {
    B->resize(n_cells, n_edges);
    B->setFromTriplets(tb.begin(), tb.end());
  }
}

inline MixedSystem assemble_mixed(const MeshHierarchy& mesh, const CoefficientField& field) {
  check_field(field, mesh);
  MixedSystem s;
  s.dof_of_edge.assign(static_cast<std::size_t>(mesh.num_fine_edges()), -1);
  for (int e = 0; e < mesh.num_fine_edges(); ++e) {
    if (mesh.is_boundary_fine_edge(e)) continue;
    s.dof_of_edge[static_cast<std::size_t>(e)] = static_cast<int>(s.edge_of_dof.size());
    s.edge_of_dof.push_back(e);
  }
  std::vector<int> cells(static_cast<std::size_t>(mesh.num_fine_cells()));
  for (int c = 0; c < mesh.num_fine_cells(); ++c) cells[static_cast<std::size_t>(c)] = c;
  assemble_rt0(mesh, field, cells, s.dof_of_edge, s.num_flux(), cells, mesh.num_fine_cells(),
               &s.Mv, &s.B);
  s.cell_area = Vector::Constant(mesh.num_fine_cells(), mesh.hx() * mesh.hy());
  return s;
}

// ---------------------------------------------------------------------------
// IPDG (broken Q1, dof 4*c + a)

struct DgSystem {
  SparseOperator M;
  SparseOperator A;
  int size() const { return static_cast<int>(M.rows()); }
};

/// Face coefficient: harmonic mean of the adjacent cell values.
inline double face_coefficient(double a, double b) { return 2.0 * a * b / (a + b); }

inline SparseOperator assemble_ipdg(const MeshHierarchy& mesh, const CoefficientField& field,
                                    double gamma) {
  check_field(field, mesh);
  if (!(gamma > 0.0)) throw ConfigError("IPDG penalty gamma must be > 0");
  const int nx = mesh.nx_fine(), ny = mesh.ny_fine();
  const double hx = mesh.hx(), hy = mesh.hy();
  Triplets t;
  for (int c = 0; c < mesh.num_fine_cells(); ++c) {
    auto k = q1::stiffness(hx, hy, field[c]);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) t.emplace_back(4 * c + a, 4 * c + b, k(a, b));
  }
  const double g0 = 0.5 - 0.5 / std::sqrt(3.0), g1 = 0.5 + 0.5 / std::sqrt(3.0);

  // One face: cells cm (minus side) and cp (plus side, -1 on the boundary). `vertical`
  // faces have normal +x. For boundary faces `outward_sign` flips the normal.
  auto face = [&](int cm, int cp, bool vertical, double outward_sign) {
    const double len = vertical ? hy : hx;
    const double h = vertical ? hx : hy;
    const double ae = cp >= 0 ? face_coefficient(field[cm], field[cp]) : field[cm];
    const int nd = cp >= 0 ? 8 : 4;
    for (double s : {g0, g1}) {
      const double w = 0.5 * len;
      std::array<double, 8> jump{}, dn{};
      // Minus side trace sits at the cell's far side (xi=1 or eta=1) for interior faces.
      double mxi, meta;
      if (cp >= 0) {
        mxi = vertical ? 1.0 : s;
        meta = vertical ? s : 1.0;
      } else if (outward_sign > 0) {
        mxi = vertical ? 1.0 : s;
        meta = vertical ? s : 1.0;
      } else {
        mxi = vertical ? 0.0 : s;
        meta = vertical ? s : 0.0;
      }
      auto em = q1::eval(mxi, meta, hx, hy);
      const double avg = cp >= 0 ? 0.5 : 1.0;
      for (int a = 0; a < 4; ++a) {
        jump[a] = em.v[a];
        dn[a] = avg * outward_sign * (vertical ? em.dx[a] : em.dy[a]);
      }
      if (cp >= 0) {
        auto ep = q1::eval(vertical ? 0.0 : s, vertical ? s : 0.0, hx, hy);
        for (int a = 0; a < 4; ++a) {
          jump[4 + a] = -ep.v[a];
          dn[4 + a] = 0.5 * (vertical ? ep.dx[a] : ep.dy[a]);
        }
      }
      auto dof = [&](int a) { return a < 4 ? 4 * cm + a : 4 * cp + (a - 4); };
      for (int a = 0; a < nd; ++a)
        for (int b = 0; b < nd; ++b) {
          double v = ae * (-dn[b] * jump[a] - dn[a] * jump[b] + gamma / h * jump[a] * jump[b]);
          if (v != 0.0) t.emplace_back(dof(a), dof(b), w * v);
        }
    }
  };

  for (int j = 0; j < ny; ++j)
    for (int i = 0; i <= nx; ++i) {
      if (i == 0) face(mesh.fine_cell(0, j), -1, true, -1.0);
      else if (i == nx) face(mesh.fine_cell(nx - 1, j), -1, true, 1.0);
      else face(mesh.fine_cell(i - 1, j), mesh.fine_cell(i, j), true, 1.0);
    }
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i < nx; ++i) {
      if (j == 0) face(mesh.fine_cell(i, 0), -1, false, -1.0);
      else if (j == ny) face(mesh.fine_cell(i, ny - 1), -1, false, 1.0);
      else face(mesh.fine_cell(i, j - 1), mesh.fine_cell(i, j), false, 1.0);
    }
  const int n = 4 * mesh.num_fine_cells();
  SparseOperator A(n, n);
  A.setFromTriplets(t.begin(), t.end());
  A.prune(0.0);
  return A;
}

inline SparseOperator assemble_dg_mass(const MeshHierarchy& mesh) {
  Triplets t;
  auto m = q1::mass(mesh.hx(), mesh.hy());
  for (int c = 0; c < mesh.num_fine_cells(); ++c)
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) t.emplace_back(4 * c + a, 4 * c + b, m(a, b));
  const int n = 4 * mesh.num_fine_cells();
  SparseOperator M(n, n);
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

inline DgSystem assemble_dg(const MeshHierarchy& mesh, const CoefficientField& field,
                            double gamma) {
  return {assemble_dg_mass(mesh), assemble_ipdg(mesh, field, gamma)};
}

/// Continuous nodal vector -> broken dofs (each cell takes its corner values).
inline Vector nodes_to_dg(const MeshHierarchy& mesh, const Vector& nodal) {
  Vector out(4 * mesh.num_fine_cells());
  for (int c = 0; c < mesh.num_fine_cells(); ++c) {
    auto nodes = mesh.cell_nodes(c);
    for (int a = 0; a < 4; ++a) out[4 * c + a] = nodal[nodes[a]];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Time stepping (reference solvers)

/// Backward Euler: (M + dt A) u^{k+1} = M u^k + dt M f. Returns u^0..u^n.
inline std::vector<Vector> fine_solve_parabolic(const SparseOperator& M, const SparseOperator& A,
                                                const Vector& u0, const Vector& f, double dt,
                                                int n_steps) {
  if (!(dt > 0.0)) throw ConfigError("time step must be > 0");
  if (M.rows() != u0.size() || A.rows() != u0.size() || f.size() != u0.size())
    throw ConfigError("fine_solve_parabolic: dimension mismatch");
  std::vector<Vector> states{u0};
  if (n_steps == 0 || u0.size() == 0) {
    states.resize(static_cast<std::size_t>(n_steps) + 1, u0);
    return states;
  }
  SparseOperator K = M + dt * A;
  Eigen::SimplicialLDLT<SparseOperator> solver(K);
  if (solver.info() != Eigen::Success) throw NumericsError("parabolic system is singular");
  const Vector load = dt * (M * f);
  for (int k = 0; k < n_steps; ++k) states.push_back(solver.solve(M * states.back() + load));
  return states;
}

/// Largest eigenvalue of M^{-1} A for SPD M and symmetric A, by power iteration.
inline double estimate_lambda_max(const SparseOperator& M, const SparseOperator& A,
                                  int iterations = 300) {
  const Eigen::Index n = M.rows();
  if (n == 0) return 0.0;
  Eigen::SimplicialLLT<SparseOperator> mm(M);
  if (mm.info() != Eigen::Success) throw NumericsError("mass matrix is not SPD");
  Vector x = Vector::LinSpaced(n, 1.0, 2.0);
  double lambda = 0.0;
  for (int k = 0; k < iterations; ++k) {
    Vector y = mm.solve(A * x);
    double mx = x.dot(M * x);
    if (mx <= 0.0) break;
    lambda = x.dot(A * x) / mx;
    double ny = y.norm();
    if (ny == 0.0) return 0.0;
    x = y / ny;
  }
  return lambda;
}

/// Admissible step for the central-difference scheme: dt^2 < 4 / lambda_max.
inline double wave_dt_limit(double lambda_max) {
  return lambda_max > 0.0 ? 2.0 / std::sqrt(lambda_max) : std::numeric_limits<double>::infinity();
}

/// M (u^{k+1} - 2u^k + u^{k-1}) / dt^2 + A u^k = M f. Returns u^0..u^n (u^1 given).
inline std::vector<Vector> fine_solve_wave(const SparseOperator& A, const SparseOperator& M,
                                           const Vector& u0, const Vector& u1, const Vector& f,
                                           double dt, int n_steps, bool check_stability = true) {
  if (!(dt > 0.0)) throw ConfigError("time step must be > 0");
  if (M.rows() != u0.size() || A.rows() != u0.size() || u1.size() != u0.size() ||
      f.size() != u0.size())
    throw ConfigError("fine_solve_wave: dimension mismatch");
  if (check_stability) {
    // Power iteration approaches lambda_max from below; keep a small margin.
    double lam = 1.02 * estimate_lambda_max(M, A);
    if (dt >= wave_dt_limit(lam))
      throw ConfigError("wave time step " + std::to_string(dt) +
                        " violates the stability bound; admissible dt < " +
                        std::to_string(wave_dt_limit(lam)));
  }
  std::vector<Vector> states{u0};
  if (n_steps >= 1) states.push_back(u1);
  Eigen::SimplicialLLT<SparseOperator> mm(M);
  if (mm.info() != Eigen::Success) throw NumericsError("mass matrix is not SPD");
  const Vector mf = M * f;
  for (int k = 1; k < n_steps; ++k) {
    const Vector& uc = states[static_cast<std::size_t>(k)];
    const Vector& up = states[static_cast<std::size_t>(k - 1)];
    Vector acc = mm.solve(mf - A * uc);
    states.push_back(2.0 * uc - up + dt * dt * acc);
  }
  return states;
}

/// One backward-Euler step of the fine mixed system. Returns {flux, pressure}.
inline std::pair<Vector, Vector> fine_step_mixed(const MixedSystem& s, const Vector& p_prev,
                                                 const Vector& f_cells, double dt) {
  const int nv = s.num_flux(), np = s.num_cells();
  Triplets t;
  t.reserve(static_cast<std::size_t>(s.Mv.nonZeros() + 2 * s.B.nonZeros() + np));
  for (int k = 0; k < s.Mv.outerSize(); ++k)
    for (SparseOperator::InnerIterator it(s.Mv, k); it; ++it)
      t.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < s.B.outerSize(); ++k)
    for (SparseOperator::InnerIterator it(s.B, k); it; ++it) {
      t.emplace_back(it.col(), nv + it.row(), -it.value());
      t.emplace_back(nv + it.row(), it.col(), it.value());
    }
  for (int c = 0; c < np; ++c) t.emplace_back(nv + c, nv + c, s.cell_area[c] / dt);
  SparseOperator K(nv + np, nv + np);
  K.setFromTriplets(t.begin(), t.end());
  Eigen::SparseLU<SparseOperator> lu(K);
  if (lu.info() != Eigen::Success) throw NumericsError("mixed saddle-point system is singular");
  Vector rhs = Vector::Zero(nv + np);
  rhs.tail(np) = s.cell_area.cwiseProduct(p_prev / dt + f_cells);
  Vector x = lu.solve(rhs);
  return {x.head(nv), x.tail(np)};
}

inline std::vector<FineState> fine_solve_mixed(const MixedSystem& s, const Vector& p0,
                                               const Vector& f_cells, double dt, int n_steps) {
  if (!(dt > 0.0)) throw ConfigError("time step must be > 0");
  std::vector<FineState> out;
  out.push_back({Vector::Zero(s.num_flux()), p0, 0.0, Formulation::mixed});
  for (int k = 0; k < n_steps; ++k) {
    auto [v, p] = fine_step_mixed(s, out.back().aux, f_cells, dt);
    out.push_back({v, p, (k + 1) * dt, Formulation::mixed});
  }
  return out;
}

}  // namespace bmsfem
