#pragma once

// Time marching: fine references, the permanent-basis trajectory, per-interval priors,
// and the two posterior variants.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "bmsfem/bayes.hpp"
#include "bmsfem/coeff.hpp"
#include "bmsfem/diagnostics.hpp"
#include "bmsfem/error.hpp"
#include "bmsfem/fem.hpp"
#include "bmsfem/gmsfem.hpp"
#include "bmsfem/mesh.hpp"
#include "bmsfem/model.hpp"
#include "bmsfem/residual.hpp"
#include "bmsfem/rng.hpp"
#include "bmsfem/sampler.hpp"

namespace bmsfem {

enum class RegionMode { top_fraction, probabilistic };
enum class SamplerMethod { sequential, gibbs };

inline const char* to_string(SamplerMethod m) { return m == SamplerMethod::gibbs ? "gibbs" : "sequential"; }

struct RunPlan {
  Formulation formulation = Formulation::cg;
  int intervals = 2;
  /// Parabolic: interval length. Wave: fine time step.
  double dt = 0.01;
  int substeps = 1;
  int steps_per_interval = 10;
  PosteriorSpec posterior;
  SamplerMethod method = SamplerMethod::gibbs;
  SamplerConfig sampler;
  double burn_in = 0.25;
  RegionMode region_mode = RegionMode::top_fraction;
  double region_fraction = 0.3;
  double n_omega = 1.0;
  double n_basis = 2.0;
  std::uint64_t seed = 1;
  double source = 1.0;
  /// "zero" or "sine" (sin(pi x/Lx) sin(pi y/Ly)).
  std::string initial = "zero";
  BasisOptions basis;
  double gamma = 10.0;

  double step() const { return formulation == Formulation::ipdg ? dt : dt / substeps; }
  double interval_length() const {
    return formulation == Formulation::ipdg ? dt * steps_per_interval : dt;
  }
};

inline void check_plan(const RunPlan& p) {
  if (p.intervals < 1) throw ConfigError("time.intervals must be >= 1");
  if (!(p.dt > 0.0)) throw ConfigError("time.dt must be > 0");
  if (p.substeps < 1) throw ConfigError("time.substeps must be >= 1");
  if (p.steps_per_interval < 1) throw ConfigError("time.steps_per_interval must be >= 1");
  if (p.region_mode == RegionMode::top_fraction && !(p.region_fraction > 0.0 && p.region_fraction <= 1.0))
    throw ConfigError("sampler.region_fraction must be in (0, 1]");
  if (p.n_omega < 1.0) throw ConfigError("bayes.n_omega must be >= 1");
  if (p.n_basis < 1.0) throw ConfigError("bayes.n_basis must be >= 1");
  if (p.initial != "zero" && p.initial != "sine") throw ConfigError("time.initial must be zero or sine");
  if (!(p.gamma > 0.0)) throw ConfigError("basis.gamma must be > 0");
  check_posterior(p.posterior);
}

/// Discretization of one formulation at a frozen coefficient, with its reduced catalog.
struct Problem {
  Formulation formulation = Formulation::cg;
  CoefficientField field;
  CgSystem cg;
  MixedSystem mixed;
  DgSystem dg;
  SparseOperator pressure_space;  // mixed: coarse pressure prolongation
  ReducedCatalog catalog;
  OperatorImages images;
  WaveImages wave;
  SparseOperator candidate_images;  // test coordinates x candidates
  SparseOperator error_mass;
  Vector source;  // fine dofs (cg, ipdg) or fine cells (mixed)
  double dt_limit = 0.0;

  int dofs() const { return catalog.dofs(); }
};

inline BasisCatalog build_catalog(const MeshHierarchy& mesh, const CoefficientField& field,
                                  const RunPlan& plan, int threads) {
  const std::uint64_t seed = derive_seed(plan.seed, "basis", 0);
  switch (plan.formulation) {
    case Formulation::cg: return build_cg_catalog(mesh, field, plan.basis, seed, threads);
    case Formulation::mixed: return build_mixed_catalog(mesh, field, plan.basis, threads);
    case Formulation::ipdg: return build_ipdg_catalog(mesh, field, plan.basis, seed, threads);
  }
  throw ConfigError("unknown formulation");
}

/// multiscale: catalog built (or taken from `catalog`); full_space: the whole fine space is
/// the permanent basis; fine_only: fine systems without any reduced catalog.
enum class ProblemMode { multiscale, full_space, fine_only };

inline Problem make_problem(const MeshHierarchy& mesh, const CoefficientField& field,
                            const RunPlan& plan, const BasisCatalog* catalog = nullptr,
                            ProblemMode mode = ProblemMode::multiscale) {
  check_plan(plan);
  const bool full_space = mode == ProblemMode::full_space;
  const bool reduced = mode != ProblemMode::fine_only;
  Problem p;
  p.formulation = plan.formulation;
  p.field = field;
  const int threads = plan.sampler.threads;
  std::optional<BasisCatalog> built;
  if (mode == ProblemMode::multiscale && !catalog) {
    built = build_catalog(mesh, field, plan, threads);
    catalog = &*built;
  }
  if (mode == ProblemMode::multiscale && catalog->formulation != plan.formulation)
    throw ConfigError("basis catalog was built for another formulation");
  switch (plan.formulation) {
    case Formulation::cg: {
      p.cg = assemble_cg(mesh, field);
      p.error_mass = p.cg.M;
      p.source = Vector::Constant(p.cg.size(), plan.source);
      if (!reduced) break;
      p.catalog = full_space ? full_space_catalog(Formulation::cg, p.cg.size())
                             : build_reduced_catalog(*catalog, dof_map_cg(p.cg));
      const SparseOperator K = cg_step_operator(p.cg, plan.step());
      p.images = operator_images(p.catalog, K, &p.cg.M);
      prepare_factor(p.images, p.catalog);
      p.candidate_images = detail::sub_cols(p.images.H, p.catalog.cand_cols);
      break;
    }
    case Formulation::mixed: {
      p.mixed = assemble_mixed(mesh, field);
      p.error_mass = p.mixed.Mv;
      p.source = Vector::Constant(p.mixed.num_cells(), plan.source);
      if (!reduced) break;
      p.catalog = full_space ? full_space_catalog(Formulation::mixed, p.mixed.num_flux())
                             : build_reduced_catalog(*catalog, dof_map_mixed(p.mixed));
      p.pressure_space = full_space ? identity_pressure_space(p.mixed.num_cells())
                                    : block_pressure_space(mesh);
      p.images = operator_images(p.catalog, p.mixed.Mv);
      prepare_factor(p.images, p.catalog);
      p.candidate_images = detail::sub_cols(p.images.H, p.catalog.cand_cols);
      break;
    }
    case Formulation::ipdg: {
      p.dg = assemble_dg(mesh, field, plan.gamma);
      p.error_mass = p.dg.M;
      p.source = Vector::Constant(p.dg.size(), plan.source);
      p.dt_limit = wave_dt_limit(1.02 * estimate_lambda_max(p.dg.M, p.dg.A));
      if (plan.dt >= p.dt_limit)
        throw ConfigError("wave time step " + fmt17(plan.dt) +
                          " violates the stability bound; admissible dt < " + fmt17(p.dt_limit));
      if (!reduced) break;
      p.catalog = full_space ? full_space_catalog(Formulation::ipdg, p.dg.size())
                             : build_reduced_catalog(*catalog, dof_map_ipdg(p.dg.size()));
      p.wave = wave_images(p.catalog, p.dg);
      prepare_factor(p.wave, p.catalog);
      const double dt2 = plan.dt * plan.dt;
      p.candidate_images = SparseOperator(detail::sub_cols(p.wave.HM, p.catalog.cand_cols) / dt2) +
                           detail::sub_cols(p.wave.HA, p.catalog.cand_cols);
      break;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// States

/// State carried between intervals. cg: `curr` only. mixed: `curr` flux, `aux` pressure.
/// ipdg: `prev` and `curr` are the last two time levels.
struct MarchState {
  Vector prev, curr, aux;
};

inline MarchState initial_state(const MeshHierarchy& mesh, const Problem& p, const RunPlan& plan) {
  auto shape = [&](double x, double y) {
    if (plan.initial == "zero") return 0.0;
    return std::sin(M_PI * x / mesh.lx()) * std::sin(M_PI * y / mesh.ly());
  };
  Vector nodal(mesh.num_fine_nodes());
  for (int n = 0; n < mesh.num_fine_nodes(); ++n) {
    auto [x, y] = mesh.fine_node_coord(n);
    nodal[n] = shape(x, y);
  }
  MarchState s;
  switch (p.formulation) {
    case Formulation::cg: s.curr = nodes_to_cg(p.cg, nodal); break;
    case Formulation::mixed: {
      s.curr = Vector::Zero(p.mixed.num_flux());
      s.aux.resize(mesh.num_fine_cells());
      for (int c = 0; c < mesh.num_fine_cells(); ++c) {
        auto [i, j] = mesh.fine_cell_ij(c);
        s.aux[c] = shape((i + 0.5) * mesh.hx(), (j + 0.5) * mesh.hy());
      }
      break;
    }
    case Formulation::ipdg: {
      s.prev = nodes_to_dg(mesh, nodal);
      // Zero initial velocity: u^1 = u^0 + dt^2/2 M^{-1}(M f - A u^0).
      Eigen::SimplicialLLT<SparseOperator> mm(p.dg.M);
      s.curr = s.prev + 0.5 * plan.dt * plan.dt * mm.solve(p.dg.M * p.source - p.dg.A * s.prev);
      break;
    }
  }
  return s;
}

/// Advances the fine reference solver over one interval.
inline MarchState reference_interval(const Problem& p, const RunPlan& plan, const MarchState& s) {
  MarchState out;
  switch (p.formulation) {
    case Formulation::cg: {
      auto states = fine_solve_parabolic(p.cg.M, p.cg.A, s.curr, p.source, plan.step(), plan.substeps);
      out.curr = states.back();
      break;
    }
    case Formulation::mixed: {
      Vector pr = s.aux, v;
      for (int k = 0; k < plan.substeps; ++k) std::tie(v, pr) = fine_step_mixed(p.mixed, pr, p.source, plan.step());
      out.curr = v;
      out.aux = pr;
      break;
    }
    case Formulation::ipdg: {
      auto states = fine_solve_wave(p.dg.A, p.dg.M, s.prev, s.curr, p.source, plan.dt,
                                    plan.steps_per_interval + 1, false);
      out.prev = states[states.size() - 2];
      out.curr = states.back();
      break;
    }
  }
  return out;
}

/// Coarse mixed interval on the permanent velocity basis and the coarse pressure space.
inline MarchState mixed_fixed_interval(const Problem& p, const RunPlan& plan, const MarchState& s,
                                       const std::vector<int>& cols) {
  MarchState out;
  Vector pr = s.aux, v;
  for (int k = 0; k < plan.substeps; ++k)
    std::tie(v, pr) = mixed_coarse_step(p.mixed, p.catalog, cols, p.pressure_space, pr, p.source, plan.step());
  out.curr = v;
  out.aux = pr;
  return out;
}

// ---------------------------------------------------------------------------
// Interval models

/// Selection model of one interval, owning whichever concrete model the formulation needs.
class IntervalModel {
 public:
  IntervalModel(const Problem& p, const RunPlan& plan, const MarchState& start)
      : cat_(&p.catalog) {
    switch (p.formulation) {
      case Formulation::cg:
        implicit_.emplace(cg_interval_model(p.catalog, p.images, p.cg, start.curr, p.source,
                                            plan.step(), plan.substeps));
        break;
      case Formulation::mixed:
        // `start.aux` is the frozen pressure of this interval.
        implicit_.emplace(mixed_interval_model(p.catalog, p.images, p.mixed, start.aux));
        break;
      case Formulation::ipdg:
        wave_.emplace(p.catalog, p.wave, p.dg, start.prev, start.curr, p.source, plan.dt,
                      plan.steps_per_interval);
        break;
    }
  }
  int num_candidates() const { return cat_->num_candidates(); }
  Evaluation evaluate(const std::vector<char>& active) const {
    return implicit_ ? implicit_->evaluate(active) : wave_->evaluate(active);
  }
  double dependence_penalty(const std::vector<char>& active, int c) const {
    return catalog_dependence_penalty(*cat_, active, c);
  }
  void record_steps(bool on) {
    if (implicit_) implicit_->record_steps(on);
    if (wave_) wave_->record_steps(on);
  }

 private:
  const ReducedCatalog* cat_;
  std::optional<ImplicitModel> implicit_;
  std::optional<WaveModel> wave_;
};

// ---------------------------------------------------------------------------
// Priors

inline std::vector<char> top_fraction_regions(const std::vector<double>& norms, double fraction) {
  const int n = static_cast<int>(norms.size());
  const int count = std::clamp(static_cast<int>(std::lround(fraction * n)), 1, n);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return norms[static_cast<std::size_t>(a)] > norms[static_cast<std::size_t>(b)];
  });
  std::vector<char> sel(static_cast<std::size_t>(n), 0);
  for (int k = 0; k < count; ++k) sel[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = 1;
  return sel;
}

/// Builds the candidate-level prior from the residual of the permanent-only solution.
inline SelectionPrior build_prior(const Problem& p, const RunPlan& plan, const Vector& residual,
                                  RegionNorms* norms_out = nullptr) {
  const auto& cat = p.catalog;
  ResidualVector r{residual, cat.test.offsets, 0};
  RegionNorms norms = region_norms(r);
  const auto& rank = p.formulation == Formulation::ipdg ? norms.local_sup : norms.local;
  SelectionPrior prior;
  if (plan.region_mode == RegionMode::top_fraction) {
    auto sel = top_fraction_regions(rank, plan.region_fraction);
    prior.region_p.assign(sel.begin(), sel.end());
  } else {
    double global = 0.0;
    for (double v : rank) global += v * v;
    prior.region_p = region_prior(rank, std::sqrt(global), plan.n_omega);
  }
  prior.candidate_region = cat.cand_region;
  prior.candidate_p.assign(static_cast<std::size_t>(cat.num_candidates()), 0.0);
  for (int k = 0; k < cat.num_regions(); ++k) {
    const auto& cands = cat.region_candidates[static_cast<std::size_t>(k)];
    if (cands.empty()) continue;
    const int off = cat.test.begin(k), len = cat.test.count(k);
    Matrix images(len, static_cast<Eigen::Index>(cands.size()));
    for (std::size_t j = 0; j < cands.size(); ++j)
      images.col(static_cast<Eigen::Index>(j)) = Vector(p.candidate_images.col(cands[j])).segment(off, len);
    auto probs = basis_prior(residual.segment(off, len), images, plan.n_basis);
    for (std::size_t j = 0; j < cands.size(); ++j) prior.candidate_p[static_cast<std::size_t>(cands[j])] = probs[j];
  }
  if (norms_out) *norms_out = norms;
  return prior;
}

// ---------------------------------------------------------------------------
// Runs

struct IntervalResult {
  int interval = 0;
  double t_end = 0.0;
  Vector reference;
  Vector fixed;
  double fixed_error = 0.0;
  double fixed_residual = 0.0;
  RegionNorms fixed_norms;
  SelectionPrior prior;
  SampleChain chain;
  ChainStatistics stats;
  double mean_error = 0.0;
};

struct MarchResult {
  Formulation formulation = Formulation::cg;
  std::vector<IntervalResult> intervals;
  std::vector<Vector> fixed_steps;  // permanent-basis state after every fine step
};

/// Rebuilds the problem per interval when the coefficient changes in time.
class ProblemSource {
 public:
  ProblemSource(const MeshHierarchy& mesh, const CoefficientField& field, const RunPlan& plan,
                const BasisCatalog* cached = nullptr, ProblemMode mode = ProblemMode::multiscale)
      : mesh_(&mesh), field_(field), plan_(plan), cached_(cached), mode_(mode) {
    if (field_.law && cached_) throw ConfigError("a basis cache cannot be used with a time-dependent coefficient");
  }
  /// Problem for interval n, coefficient frozen at the interval's left end.
  const Problem& at(int n) {
    if (!current_ || (field_.law && n != index_)) {
      const double t = n * plan_.interval_length();
      current_.emplace(make_problem(*mesh_, field_.law ? evaluate_at(field_, t) : field_, plan_, cached_, mode_));
      index_ = n;
    }
    return *current_;
  }

 private:
  const MeshHierarchy* mesh_;
  CoefficientField field_;
  RunPlan plan_;
  const BasisCatalog* cached_;
  ProblemMode mode_;
  std::optional<Problem> current_;
  int index_ = -1;
};

/// Fine reference at every interval end.
inline std::vector<MarchState> reference_trajectory(const MeshHierarchy& mesh, ProblemSource& src,
                                                    const RunPlan& plan) {
  std::vector<MarchState> out;
  MarchState s = initial_state(mesh, src.at(0), plan);
  out.push_back(s);
  for (int n = 0; n < plan.intervals; ++n) {
    s = reference_interval(src.at(n), plan, s);
    out.push_back(s);
  }
  return out;
}

/// Permanent-basis trajectory: interval ends (index 0 is the initial state) and every step.
inline std::vector<MarchState> fixed_solution(const MeshHierarchy& mesh, ProblemSource& src,
                                              const RunPlan& plan,
                                              std::vector<Vector>* steps = nullptr) {
  std::vector<MarchState> out;
  MarchState s = initial_state(mesh, src.at(0), plan);
  out.push_back(s);
  const std::vector<char> none;
  for (int n = 0; n < plan.intervals; ++n) {
    const Problem& p = src.at(n);
    std::vector<char> off(static_cast<std::size_t>(p.catalog.num_candidates()), 0);
    MarchState next;
    if (p.formulation == Formulation::mixed) {
      next = mixed_fixed_interval(p, plan, s, p.catalog.perm_cols);
      if (steps) steps->push_back(next.curr);
    } else {
      IntervalModel m(p, plan, s);
      m.record_steps(steps != nullptr);
      Evaluation ev = m.evaluate(off);
      if (steps) steps->insert(steps->end(), ev.steps.begin(), ev.steps.end());
      next.curr = ev.field;
      next.prev = ev.field_prev;
    }
    out.push_back(next);
    s = next;
  }
  return out;
}

namespace detail {

inline SampleChain run_sampler(const IntervalModel& m, const SelectionPrior& prior,
                               const RunPlan& plan, std::uint64_t seed, const ErrorFunction& err,
                               int threads) {
  SamplerConfig cfg = plan.sampler;
  cfg.threads = threads;
  return plan.method == SamplerMethod::gibbs ? gibbs_sample(m, prior, plan.posterior, cfg, seed, err)
                                             : sequential_sample(m, prior, cfg, seed, err);
}

inline void finish_interval(IntervalResult& r, const Problem& p, const RunPlan& plan) {
  const double burn = plan.method == SamplerMethod::gibbs ? plan.burn_in : 0.0;
  r.stats = chain_statistics(r.chain, burn);
  if (r.stats.mean.size()) r.mean_error = relative_l2(r.stats.mean, r.reference, p.error_mass);
}

}  // namespace detail

/// Samples around the permanent-basis trajectory: interval n starts from the fixed state
/// at T_{n-1} (mixed: pressure frozen at the fixed pressure of T_n).
inline MarchResult run_posterior_fixed(const MeshHierarchy& mesh, ProblemSource& src,
                                       const RunPlan& plan) {
  MarchResult res;
  res.formulation = plan.formulation;
  auto ref = reference_trajectory(mesh, src, plan);
  auto fix = fixed_solution(mesh, src, plan, &res.fixed_steps);
  for (int n = 0; n < plan.intervals; ++n) {
    const Problem& p = src.at(n);
    IntervalResult r;
    r.interval = n;
    r.t_end = (n + 1) * plan.interval_length();
    r.reference = ref[static_cast<std::size_t>(n) + 1].curr;
    r.fixed = fix[static_cast<std::size_t>(n) + 1].curr;
    r.fixed_error = relative_l2(r.fixed, r.reference, p.error_mass);
    MarchState start = fix[static_cast<std::size_t>(n)];
    if (p.formulation == Formulation::mixed) start.aux = fix[static_cast<std::size_t>(n) + 1].aux;
    IntervalModel m(p, plan, start);
    std::vector<char> off(static_cast<std::size_t>(p.catalog.num_candidates()), 0);
    Evaluation base = m.evaluate(off);
    r.fixed_residual = std::sqrt(base.residual_sq);
    r.prior = build_prior(p, plan, base.residual, &r.fixed_norms);
    const Vector reference = r.reference;
    const SparseOperator& mass = p.error_mass;
    ErrorFunction err = [&reference, &mass](const Vector& u) { return relative_l2(u, reference, mass); };
    r.chain = detail::run_sampler(m, r.prior, plan, derive_seed(plan.seed, "interval", static_cast<std::uint64_t>(n)),
                                  err, plan.sampler.threads);
    r.chain.interval = n;
    detail::finish_interval(r, p, plan);
    res.intervals.push_back(std::move(r));
  }
  return res;
}

/// Samples around each chain's own previous state. Every sequential realization and the
/// Gibbs chain carry their own trajectory; the prior of each interval comes from the
/// permanent-only residual started from that trajectory.
inline MarchResult run_posterior_previous(const MeshHierarchy& mesh, ProblemSource& src,
                                          const RunPlan& plan) {
  if (plan.formulation == Formulation::mixed)
    throw ConfigError("the previous-state posterior is available for cg and ipdg only");
  MarchResult res;
  res.formulation = plan.formulation;
  auto ref = reference_trajectory(mesh, src, plan);
  auto fix = fixed_solution(mesh, src, plan, &res.fixed_steps);
  const bool gibbs = plan.method == SamplerMethod::gibbs;
  const int n_traj = gibbs ? 1 : plan.sampler.n_samples;
  std::vector<MarchState> states(static_cast<std::size_t>(n_traj), fix[0]);
  for (int n = 0; n < plan.intervals; ++n) {
    const Problem& p = src.at(n);
    IntervalResult r;
    r.interval = n;
    r.t_end = (n + 1) * plan.interval_length();
    r.reference = ref[static_cast<std::size_t>(n) + 1].curr;
    r.fixed = fix[static_cast<std::size_t>(n) + 1].curr;
    r.fixed_error = relative_l2(r.fixed, r.reference, p.error_mass);
    const Vector reference = r.reference;
    const SparseOperator& mass = p.error_mass;
    ErrorFunction err = [&reference, &mass](const Vector& u) { return relative_l2(u, reference, mass); };
    const std::uint64_t seed = derive_seed(plan.seed, "interval", static_cast<std::uint64_t>(n));
    std::vector<SampleChain> parts(static_cast<std::size_t>(n_traj));
    std::vector<SelectionPrior> priors(static_cast<std::size_t>(n_traj));
    std::vector<RegionNorms> norms(static_cast<std::size_t>(n_traj));
    std::vector<double> base_res(static_cast<std::size_t>(n_traj));
    std::vector<char> off(static_cast<std::size_t>(p.catalog.num_candidates()), 0);
    parallel_for(n_traj, plan.sampler.threads, [&](int k) {
      const auto ku = static_cast<std::size_t>(k);
      IntervalModel m(p, plan, states[ku]);
      Evaluation base = m.evaluate(off);
      base_res[ku] = std::sqrt(base.residual_sq);
      priors[ku] = build_prior(p, plan, base.residual, &norms[ku]);
      RunPlan one = plan;
      one.sampler.n_samples = 1;
      parts[ku] = detail::run_sampler(m, priors[ku], one, derive_seed(seed, "trajectory", ku), err, 1);
      const auto& last = parts[ku].records.back();
      states[ku].prev = last.field_prev;
      states[ku].curr = last.field;
    });
    r.prior = priors[0];
    r.fixed_norms = norms[0];
    r.fixed_residual = base_res[0];
    r.chain = parts[0];
    r.chain.seed = seed;
    for (int k = 1; k < n_traj; ++k)
      for (auto& rec : parts[static_cast<std::size_t>(k)].records) r.chain.records.push_back(std::move(rec));
    r.chain.interval = n;
    detail::finish_interval(r, p, plan);
    res.intervals.push_back(std::move(r));
  }
  return res;
}

inline MarchResult run_posterior(const MeshHierarchy& mesh, ProblemSource& src, const RunPlan& plan) {
  return plan.posterior.variant == PosteriorVariant::around_previous
             ? run_posterior_previous(mesh, src, plan)
             : run_posterior_fixed(mesh, src, plan);
}

}  // namespace bmsfem
