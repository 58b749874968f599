#pragma once

// Reduced interval models. A catalog gathers the permanent and candidate columns of
// every region in global fine dofs; an interval model precomputes the Galerkin images
// of the catalog once and then evaluates any selection of candidates cheaply.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <limits>
#include <tuple>
#include <utility>
#include <spdlog/spdlog.h>
#include <vector>

#include "bmsfem/bayes.hpp"
#include "bmsfem/error.hpp"
#include "bmsfem/fem.hpp"
#include "bmsfem/gmsfem.hpp"
#include "bmsfem/residual.hpp"

namespace bmsfem {

struct ReducedCatalog {
  Formulation formulation = Formulation::cg;
  SparseOperator phi;           // global dofs x catalog columns
  std::vector<int> col_region;  // region of each column
  std::vector<int> perm_cols;
  std::vector<int> cand_cols;    // candidate id -> column
  std::vector<int> cand_region;  // candidate id -> region
  std::vector<std::vector<int>> region_candidates;  // region -> candidate ids
  std::vector<std::vector<int>> region_perm;        // region -> permanent columns
  Matrix gram;                                      // Euclidean Gram of all columns
  TestSpace test;

  int num_regions() const { return static_cast<int>(region_candidates.size()); }
  int num_candidates() const { return static_cast<int>(cand_cols.size()); }
  int num_columns() const { return static_cast<int>(phi.cols()); }
  int dofs() const { return static_cast<int>(phi.rows()); }
};

inline ReducedCatalog build_reduced_catalog(const BasisCatalog& cat, const DofMap& map) {
  ReducedCatalog r;
  r.formulation = cat.formulation;
  int total = 0;
  for (const auto& reg : cat.regions) total += reg.num_permanent() + reg.num_candidates();
  Triplets trip;
  r.region_candidates.resize(cat.regions.size());
  r.region_perm.resize(cat.regions.size());
  int col = 0;
  for (std::size_t k = 0; k < cat.regions.size(); ++k) {
    const auto& reg = cat.regions[k];
    scatter_triplets(reg.permanent, reg.support, map, col, trip);
    for (int j = 0; j < reg.num_permanent(); ++j) {
      r.perm_cols.push_back(col);
      r.region_perm[k].push_back(col);
      r.col_region.push_back(static_cast<int>(k));
      ++col;
    }
    scatter_triplets(reg.candidates, reg.support, map, col, trip);
    for (int j = 0; j < reg.num_candidates(); ++j) {
      r.region_candidates[k].push_back(static_cast<int>(r.cand_cols.size()));
      r.cand_cols.push_back(col);
      r.cand_region.push_back(static_cast<int>(k));
      r.col_region.push_back(static_cast<int>(k));
      ++col;
    }
  }
  r.phi.resize(map.size, total);
  r.phi.setFromTriplets(trip.begin(), trip.end());
  r.gram = Matrix(r.phi.transpose() * r.phi);
  r.test = build_test_space(cat, map);
  return r;
}

/// Catalog whose permanent space is the whole fine space and whose test space is the
/// identity. Used to check the reduced machinery against the fine solvers.
inline ReducedCatalog full_space_catalog(Formulation f, int n) {
  ReducedCatalog r;
  r.formulation = f;
  r.phi.resize(n, n);
  r.phi.setIdentity();
  r.region_candidates.resize(1);
  r.region_perm.resize(1);
  for (int j = 0; j < n; ++j) {
    r.perm_cols.push_back(j);
    r.region_perm[0].push_back(j);
    r.col_region.push_back(0);
  }
  r.gram = Matrix::Identity(n, n);
  r.test = fine_test_space(n);
  return r;
}

/// Result of evaluating one selection over an interval.
struct Evaluation {
  std::vector<int> columns;  // catalog columns in use
  Vector beta;
  Vector residual;  // test coordinates
  double residual_sq = 0.0;
  Vector field;       // fine state at the end of the interval
  Vector field_prev;  // wave: fine state one step before the end
  std::vector<int> dropped;  // candidates removed because of near-singular systems
  std::vector<Vector> steps;  // fine state after every step, when requested
};

inline std::vector<int> selection_columns(const ReducedCatalog& cat, const std::vector<char>& active) {
  std::vector<int> cols = cat.perm_cols;
  for (std::size_t c = 0; c < active.size(); ++c)
    if (active[c]) cols.push_back(cat.cand_cols[c]);
  return cols;
}

/// Penalty for adding candidate c given the active columns of its region.
inline double catalog_dependence_penalty(const ReducedCatalog& cat, const std::vector<char>& active,
                                         int c) {
  const int region = cat.cand_region[static_cast<std::size_t>(c)];
  std::vector<int> cols = cat.region_perm[static_cast<std::size_t>(region)];
  for (int d : cat.region_candidates[static_cast<std::size_t>(region)])
    if (d != c && active[static_cast<std::size_t>(d)]) cols.push_back(cat.cand_cols[static_cast<std::size_t>(d)]);
  cols.push_back(cat.cand_cols[static_cast<std::size_t>(c)]);
  const auto n = static_cast<Eigen::Index>(cols.size());
  Matrix g(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) g(i, j) = cat.gram(cols[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)]);
  return gram_penalty_from_gram(g);
}

namespace detail {

inline Matrix sub(const Matrix& m, const std::vector<int>& rows, const std::vector<int>& cols) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < rows.size(); ++i)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(rows[i], cols[j]);
  return out;
}

inline Matrix sub_cols(const Matrix& m, const std::vector<int>& cols) {
  Matrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}

/// Columns `cols` of a sparse matrix.
inline SparseOperator sub_cols(const SparseOperator& m, const std::vector<int>& cols) {
  SparseOperator sel(m.cols(), static_cast<Eigen::Index>(cols.size()));
  Triplets t;
  for (std::size_t j = 0; j < cols.size(); ++j) t.emplace_back(cols[j], static_cast<int>(j), 1.0);
  sel.setFromTriplets(t.begin(), t.end());
  return m * sel;
}

/// Coefficients on `cols` spread to a vector over all catalog columns.
inline Vector spread(const Vector& beta, const std::vector<int>& cols, Eigen::Index n) {
  Vector z = Vector::Zero(n);
  for (std::size_t i = 0; i < cols.size(); ++i) z[cols[i]] = beta[static_cast<Eigen::Index>(i)];
  return z;
}

inline Vector sub_vec(const Vector& v, const std::vector<int>& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
  return out;
}

inline constexpr double kPivotTolerance = 1e-13;

}  // namespace detail

/// Cholesky of the permanent block of a catalog matrix plus the Schur complement of all
/// candidates, so a selection with k active candidates factors in O(k^3).
class SchurFactor {
 public:
  /// Factor of one selection: permanent columns first, then the active candidates.
  class Solver {
   public:
    /// Solves with the selection matrix; `b` is ordered like the selection columns.
    Vector solve(const Vector& b) const {
      const Eigen::Index np = f_->np();
      const Vector yp = f_->lpp_.matrixL().solve(b.head(np));
      Vector xa;
      if (ids_.empty()) return f_->lpp_.matrixU().solve(yp);
      xa = ls_.solve(b.tail(static_cast<Eigen::Index>(ids_.size())) - wa_.transpose() * yp);
      Vector out(b.size());
      out.head(np) = f_->lpp_.matrixU().solve(yp - wa_ * xa);
      out.tail(xa.size()) = xa;
      return out;
    }

   private:
    friend class SchurFactor;
    const SchurFactor* f_ = nullptr;
    std::vector<int> ids_;
    Matrix wa_;
    Eigen::LLT<Matrix> ls_;
  };

  SchurFactor() = default;
  SchurFactor(const Matrix& g, std::vector<int> perm, std::vector<int> cand)
      : g_(g), perm_(std::move(perm)), cand_(std::move(cand)) {
    const Matrix gpp = detail::sub(g, perm_, perm_);
    lpp_.compute(gpp);
    if (!perm_.empty()) {
      perm_scale_ = gpp.diagonal().maxCoeff();
      if (lpp_.info() != Eigen::Success || !(perm_scale_ > 0.0))
        throw NumericsError("reduced system is singular on the permanent basis");
      perm_pivot_ = lpp_.matrixLLT().diagonal().minCoeff();
      if (perm_pivot_ * perm_pivot_ <= detail::kPivotTolerance * perm_scale_)
        throw NumericsError("reduced system is singular on the permanent basis");
    }
    w_ = lpp_.matrixL().solve(detail::sub(g, perm_, cand_));
    s_ = detail::sub(g, cand_, cand_) - w_.transpose() * w_;
    s_ = 0.5 * (s_ + s_.transpose()).eval();
  }

  Eigen::Index np() const { return static_cast<Eigen::Index>(perm_.size()); }

  /// Factors the selection of candidate ids `ids` (ascending). While it is numerically
  /// singular, the candidate with the largest weight in the smallest eigendirection is
  /// removed and reported in `dropped`.
  Solver factor(std::vector<int> ids, std::vector<int>* dropped) const {
    for (;;) {
      Solver sv;
      sv.f_ = this;
      const auto k = static_cast<Eigen::Index>(ids.size());
      double scale = perm_scale_;
      for (int c : ids) scale = std::max(scale, g_(cand_[static_cast<std::size_t>(c)], cand_[static_cast<std::size_t>(c)]));
      double pivot = perm_.empty() ? std::numeric_limits<double>::infinity() : perm_pivot_;
      bool ok = scale > 0.0;
      if (k > 0) {
        Matrix saa(k, k);
        for (Eigen::Index j = 0; j < k; ++j)
          for (Eigen::Index i = 0; i < k; ++i) saa(i, j) = s_(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
        sv.ls_.compute(saa);
        ok = ok && sv.ls_.info() == Eigen::Success;
        if (ok) pivot = std::min(pivot, sv.ls_.matrixLLT().diagonal().minCoeff());
      }
      if (ok && pivot * pivot > detail::kPivotTolerance * scale) {
        sv.wa_.resize(np(), k);
        for (Eigen::Index j = 0; j < k; ++j) sv.wa_.col(j) = w_.col(ids[static_cast<std::size_t>(j)]);
        sv.ids_ = std::move(ids);
        return sv;
      }
      if (ids.empty()) throw NumericsError("reduced system is singular on the permanent basis");
      std::vector<int> cols = perm_;
      for (int c : ids) cols.push_back(cand_[static_cast<std::size_t>(c)]);
      Eigen::SelfAdjointEigenSolver<Matrix> es(detail::sub(g_, cols, cols));
      const Vector v = es.eigenvectors().col(0).tail(k);
      Eigen::Index worst = 0;
      v.cwiseAbs().maxCoeff(&worst);
      spdlog::warn("dropping near-dependent candidate {}", ids[static_cast<std::size_t>(worst)]);
      if (dropped) dropped->push_back(ids[static_cast<std::size_t>(worst)]);
      ids.erase(ids.begin() + worst);
    }
  }

 private:
  Matrix g_;
  std::vector<int> perm_, cand_;
  Eigen::LLT<Matrix> lpp_;
  Matrix w_, s_;
  double perm_scale_ = 0.0, perm_pivot_ = 0.0;
};

namespace detail {

inline std::vector<int> active_ids(const std::vector<char>& active) {
  std::vector<int> ids;
  for (std::size_t c = 0; c < active.size(); ++c)
    if (active[c]) ids.push_back(static_cast<int>(c));
  return ids;
}

inline std::vector<int> columns_of(const ReducedCatalog& cat, const std::vector<int>& ids) {
  std::vector<int> cols = cat.perm_cols;
  for (int c : ids) cols.push_back(cat.cand_cols[static_cast<std::size_t>(c)]);
  return cols;
}

inline std::vector<int> without(const std::vector<int>& ids, const std::vector<int>& dropped) {
  std::vector<int> out;
  for (int c : ids)
    if (std::find(dropped.begin(), dropped.end(), c) == dropped.end()) out.push_back(c);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Implicit one-step models (backward Euler cg, mixed velocity with frozen pressure)

/// Images of the catalog under an SPD operator K (and optionally the mass M).
struct OperatorImages {
  Matrix G;           // phi^T K phi
  SchurFactor factor;  // of G
  SparseOperator H;   // T^T K phi
  Matrix Gm;          // phi^T M phi
  SparseOperator Hm;  // T^T M phi
};

namespace detail {
/// phi^T K phi (symmetrized, dense) and T^T K phi (sparse).
inline std::pair<Matrix, SparseOperator> images_of(const ReducedCatalog& cat, const SparseOperator& K) {
  const SparseOperator kp = K * cat.phi;
  Matrix g = Matrix(cat.phi.transpose() * kp);
  g = 0.5 * (g + g.transpose()).eval();
  SparseOperator h = (SparseOperator(cat.test.vectors.transpose()) * kp).pruned(0.0);
  return {std::move(g), std::move(h)};
}
}  // namespace detail

inline OperatorImages operator_images(const ReducedCatalog& cat, const SparseOperator& K,
                                      const SparseOperator* M = nullptr) {
  OperatorImages img;
  std::tie(img.G, img.H) = detail::images_of(cat, K);
  if (M) std::tie(img.Gm, img.Hm) = detail::images_of(cat, *M);
  return img;
}

inline void prepare_factor(OperatorImages& img, const ReducedCatalog& cat) {
  img.factor = SchurFactor(img.G, cat.perm_cols, cat.cand_cols);
}

/// Solves phi_a^T K phi_a beta = phi_a^T b over `substeps` steps; later steps replace the
/// load with M u_prev / dt + M f in reduced coordinates. Residual is taken at the last step:
/// R = T^T (b - K u).
class ImplicitModel {
 public:
  ImplicitModel(const ReducedCatalog& cat, const OperatorImages& img, Vector g0, Vector h0,
                Vector gf = {}, Vector hf = {}, double dt = 1.0, int substeps = 1)
      : cat_(&cat), img_(&img), g0_(std::move(g0)), h0_(std::move(h0)), gf_(std::move(gf)),
        hf_(std::move(hf)), dt_(dt), substeps_(substeps) {
    if (substeps_ < 1) throw ConfigError("substeps must be >= 1");
    if (substeps_ > 1 && (img.Gm.size() == 0 || gf_.size() == 0))
      throw ConfigError("substepping needs mass images and a source image");
  }

  int num_candidates() const { return cat_->num_candidates(); }
  const ReducedCatalog& catalog() const { return *cat_; }
  void record_steps(bool on) { record_steps_ = on; }

  Evaluation evaluate(const std::vector<char>& active) const {
    Evaluation ev;
    const std::vector<int> ids = detail::active_ids(active);
    const auto llt = img_->factor.factor(ids, &ev.dropped);
    ev.columns = detail::columns_of(*cat_, detail::without(ids, ev.dropped));
    const Eigen::Index nc = cat_->num_columns();
    auto full = [&](const Vector& b) { return detail::spread(b, ev.columns, nc); };
    Vector beta = llt.solve(detail::sub_vec(g0_, ev.columns));
    if (record_steps_) ev.steps.push_back(cat_->phi * full(beta));
    Vector h = h0_;
    for (int s = 1; s < substeps_; ++s) {
      Vector rhs = detail::sub(img_->Gm, ev.columns, ev.columns) * beta / dt_ + detail::sub_vec(gf_, ev.columns);
      h = img_->Hm * full(beta) / dt_ + hf_;
      beta = llt.solve(rhs);
      if (record_steps_) ev.steps.push_back(cat_->phi * full(beta));
    }
    const Vector z = full(beta);
    ev.residual = h - img_->H * z;
    ev.residual_sq = ev.residual.squaredNorm();
    ev.field = cat_->phi * z;
    ev.beta = std::move(beta);
    return ev;
  }

  double dependence_penalty(const std::vector<char>& active, int c) const {
    return catalog_dependence_penalty(*cat_, active, c);
  }

 private:
  const ReducedCatalog* cat_;
  const OperatorImages* img_;
  Vector g0_, h0_, gf_, hf_;
  double dt_;
  int substeps_;
  bool record_steps_ = false;
};

/// Backward-Euler cg interval starting from the fine state u_prev (cg dofs).
inline ImplicitModel cg_interval_model(const ReducedCatalog& cat, const OperatorImages& img,
                                       const CgSystem& s, const Vector& u_prev, const Vector& f,
                                       double dt, int substeps) {
  const Vector mf = s.M * f;
  const Vector b0 = s.M * u_prev / dt + mf;
  return ImplicitModel(cat, img, cat.phi.transpose() * b0, cat.test.vectors.transpose() * b0,
                       cat.phi.transpose() * mf, cat.test.vectors.transpose() * mf, dt, substeps);
}

/// K = M/dt + A for the cg interval models.
inline SparseOperator cg_step_operator(const CgSystem& s, double dt) {
  SparseOperator K = s.M / dt + s.A;
  return K;
}

/// Velocity correction with pressure frozen at p_fixed (fine cells): K = Mv, b = B^T p.
inline ImplicitModel mixed_interval_model(const ReducedCatalog& cat, const OperatorImages& img,
                                          const MixedSystem& s, const Vector& p_fixed) {
  const Vector b = s.B.transpose() * p_fixed;
  return ImplicitModel(cat, img, cat.phi.transpose() * b, cat.test.vectors.transpose() * b);
}

// ---------------------------------------------------------------------------
// Mixed coarse solve (velocity catalog x pressure space)

/// Prolongation of block constants to fine cells.
inline SparseOperator block_pressure_space(const MeshHierarchy& mesh) {
  Triplets t;
  for (int c = 0; c < mesh.num_fine_cells(); ++c) t.emplace_back(c, mesh.block_of_cell(c), 1.0);
  SparseOperator P(mesh.num_fine_cells(), mesh.num_blocks());
  P.setFromTriplets(t.begin(), t.end());
  return P;
}

inline SparseOperator identity_pressure_space(int n) {
  SparseOperator P(n, n);
  P.setIdentity();
  return P;
}

/// One backward-Euler step of the mixed system on velocity columns `cols` of the catalog and
/// pressure space P. Returns {flux (fine), pressure (fine cells)}.
inline std::pair<Vector, Vector> mixed_coarse_step(const MixedSystem& s, const ReducedCatalog& cat,
                                                   const std::vector<int>& cols,
                                                   const SparseOperator& P, const Vector& p_prev,
                                                   const Vector& f_cells, double dt) {
  const Matrix phi = Matrix(detail::sub_cols(cat.phi, cols));
  const Matrix Pd = Matrix(P);
  const auto nv = phi.cols(), np = Pd.cols();
  Matrix K = Matrix::Zero(nv + np, nv + np);
  K.topLeftCorner(nv, nv) = phi.transpose() * (s.Mv * phi);
  Matrix bp = Pd.transpose() * (s.B * phi);  // np x nv
  K.topRightCorner(nv, np) = -bp.transpose();
  K.bottomLeftCorner(np, nv) = bp;
  K.bottomRightCorner(np, np) = Pd.transpose() * s.cell_area.asDiagonal() * Pd / dt;
  Vector rhs = Vector::Zero(nv + np);
  rhs.tail(np) = Pd.transpose() * s.cell_area.cwiseProduct(p_prev / dt + f_cells);
  Eigen::PartialPivLU<Matrix> lu(K);
  Vector x = lu.solve(rhs);
  if (!((K * x - rhs).norm() <= 1e-8 * std::max(1.0, rhs.norm())))
    throw NumericsError("coarse mixed system is singular");
  return {phi * x.head(nv), Pd * x.tail(np)};
}

// ---------------------------------------------------------------------------
// Explicit wave model

struct WaveImages {
  Matrix GM, GA;          // phi^T M phi, phi^T A phi
  SchurFactor mass;       // of GM
  SparseOperator HM, HA;  // T^T M phi, T^T A phi
};

inline WaveImages wave_images(const ReducedCatalog& cat, const DgSystem& s) {
  WaveImages w;
  std::tie(w.GM, w.HM) = detail::images_of(cat, s.M);
  std::tie(w.GA, w.HA) = detail::images_of(cat, s.A);
  return w;
}

inline void prepare_factor(WaveImages& w, const ReducedCatalog& cat) {
  w.mass = SchurFactor(w.GM, cat.perm_cols, cat.cand_cols);
}

/// Central differences in the active span. Start states are mass-projected onto the span;
/// `steps` new states are computed and the residual is taken at the last step.
class WaveModel {
 public:
  WaveModel(const ReducedCatalog& cat, const WaveImages& img, const DgSystem& s,
            const Vector& u_prev, const Vector& u_curr, const Vector& f, double dt, int steps)
      : cat_(&cat), img_(&img), dt_(dt), steps_(steps) {
    if (steps_ < 1) throw ConfigError("wave interval needs at least one step");
    if (!(dt > 0.0)) throw ConfigError("time step must be > 0");
    u_curr_ = u_curr;
    const Vector m_prev = s.M * u_prev, m_curr = s.M * u_curr, a_curr = s.A * u_curr;
    p_prev_ = cat.phi.transpose() * m_prev;
    p_curr_ = cat.phi.transpose() * m_curr;
    pa_curr_ = cat.phi.transpose() * a_curr;
    const Vector mf = s.M * f;
    pf_ = cat.phi.transpose() * mf;
    const auto& T = cat.test.vectors;
    hf_ = T.transpose() * mf;
    hm_prev_ = T.transpose() * m_prev;
    hm_curr_ = T.transpose() * m_curr;
    ha_curr_ = T.transpose() * a_curr;
  }

  int num_candidates() const { return cat_->num_candidates(); }
  const ReducedCatalog& catalog() const { return *cat_; }
  void record_steps(bool on) { record_steps_ = on; }

  Evaluation evaluate(const std::vector<char>& active) const {
    Evaluation ev;
    const std::vector<int> ids = detail::active_ids(active);
    const auto llt = img_->mass.factor(ids, &ev.dropped);
    ev.columns = detail::columns_of(*cat_, detail::without(ids, ev.dropped));
    const Matrix ga = detail::sub(img_->GA, ev.columns, ev.columns);
    const Matrix gm = detail::sub(img_->GM, ev.columns, ev.columns);
    const Vector pf = detail::sub_vec(pf_, ev.columns);
    const double dt2 = dt_ * dt_;
    const Eigen::Index nc = cat_->num_columns();
    auto full = [&](const Vector& b) { return detail::spread(b, ev.columns, nc); };
    // The start states are fine data and need not lie in the span, so the first step
    // sees them only through their moments against the basis.
    Vector mp2 = detail::sub_vec(p_prev_, ev.columns);
    Vector mp1 = detail::sub_vec(p_curr_, ev.columns);
    Vector a1 = detail::sub_vec(pa_curr_, ev.columns);
    std::vector<Vector> hist;  // reduced states from the first new step on
    for (int k = 0; k < steps_; ++k) {
      Vector um = llt.solve(2.0 * mp1 - mp2 + dt2 * (pf - a1));
      if (record_steps_) ev.steps.push_back(cat_->phi * full(um));
      if (k + 1 < steps_) {
        mp2 = std::move(mp1);
        mp1 = gm * um;
        a1 = ga * um;
      }
      hist.push_back(std::move(um));
      if (hist.size() > 3) hist.erase(hist.begin());
    }
    // Test images of the last three time levels, taken from the fine start data when a
    // level precedes the interval.
    const auto nh = static_cast<int>(hist.size());
    auto m_image = [&](int back) -> Vector {
      if (back < nh) return img_->HM * full(hist[static_cast<std::size_t>(nh - 1 - back)]);
      return back - nh == 0 ? hm_curr_ : hm_prev_;
    };
    const Vector a_prev = nh >= 2 ? Vector(img_->HA * full(hist[static_cast<std::size_t>(nh - 2)])) : ha_curr_;
    // R = (u^m - 2u^{m-1} + u^{m-2})/dt^2 tested with M, plus a(u^{m-1}), minus (f, v).
    ev.residual = (m_image(0) - 2.0 * m_image(1) + m_image(2)) / dt2 + a_prev - hf_;
    ev.residual_sq = ev.residual.squaredNorm();
    const Vector& um = hist.back();
    ev.field = cat_->phi * full(um);
    ev.field_prev = nh >= 2 ? Vector(cat_->phi * full(hist[static_cast<std::size_t>(nh - 2)])) : u_curr_;
    ev.beta = um;
    return ev;
  }

  double dependence_penalty(const std::vector<char>& active, int c) const {
    return catalog_dependence_penalty(*cat_, active, c);
  }

 private:
  const ReducedCatalog* cat_;
  const WaveImages* img_;
  Vector p_prev_, p_curr_, pa_curr_, pf_, hf_, hm_prev_, hm_curr_, ha_curr_, u_curr_;
  double dt_;
  int steps_;
  bool record_steps_ = false;
};

}  // namespace bmsfem
