#pragma once

// Sequential (prior-draw) and Gibbs sampling over candidate selections.

#include <Eigen/Dense>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <spdlog/spdlog.h>
#include <string>
#include <vector>

#include "bmsfem/bayes.hpp"
#include "bmsfem/error.hpp"
#include "bmsfem/model.hpp"
#include "bmsfem/parallel.hpp"
#include "bmsfem/rng.hpp"

namespace bmsfem {

/// Anything that evaluates a selection of candidates and scores near-dependence.
template <class M>
concept SelectionModel = requires(const M& m, const std::vector<char>& active, int c) {
  { m.num_candidates() } -> std::convertible_to<int>;
  { m.evaluate(active) } -> std::same_as<Evaluation>;
  { m.dependence_penalty(active, c) } -> std::convertible_to<double>;
};

/// Candidate-level view of the interval prior.
struct SelectionPrior {
  std::vector<double> region_p;       // inclusion probability of each region
  std::vector<double> candidate_p;    // inclusion probability of each candidate
  std::vector<int> candidate_region;  // region of each candidate

  int num_candidates() const { return static_cast<int>(candidate_p.size()); }
  int num_regions() const { return static_cast<int>(region_p.size()); }
};

/// One region holding every candidate, always selected.
inline SelectionPrior single_region_prior(std::vector<double> candidate_p) {
  SelectionPrior p;
  p.region_p = {1.0};
  p.candidate_region.assign(candidate_p.size(), 0);
  p.candidate_p = std::move(candidate_p);
  return p;
}

struct SampleRecord {
  std::vector<char> active;
  Vector beta;
  double residual_norm = 0.0;
  double error = std::numeric_limits<double>::quiet_NaN();
  int basis_count = 0;
  Vector field;
  Vector field_prev;
  std::vector<int> dropped;
};

struct SampleChain {
  int interval = 0;
  std::uint64_t seed = 0;
  std::string method;
  std::vector<char> regions;  // region indicators in force (last draw for sequential)
  std::vector<SampleRecord> records;
};

struct SamplerConfig {
  int n_samples = 20;
  int n_sweeps = 30;
  int threads = 1;
  /// Keep fine fields in records (needed for statistics; off for long toy chains).
  bool keep_fields = true;
};

using ErrorFunction = std::function<double(const Vector&)>;

namespace detail {

inline SampleRecord make_record(const std::vector<char>& active, const Evaluation& ev,
                                const ErrorFunction& err, bool keep_fields) {
  SampleRecord r;
  r.active = active;
  r.beta = ev.beta;
  r.residual_norm = std::sqrt(ev.residual_sq);
  r.basis_count = static_cast<int>(ev.columns.size());
  if (err && ev.field.size()) r.error = err(ev.field);
  if (keep_fields) {
    r.field = ev.field;
    r.field_prev = ev.field_prev;
  }
  r.dropped = ev.dropped;
  return r;
}

inline std::vector<char> draw_regions(const SelectionPrior& prior, Rng& rng) {
  std::vector<char> j(static_cast<std::size_t>(prior.num_regions()), 0);
  for (int k = 0; k < prior.num_regions(); ++k) j[static_cast<std::size_t>(k)] = bernoulli(rng, prior.region_p[static_cast<std::size_t>(k)]);
  return j;
}

inline std::vector<char> draw_candidates(const SelectionPrior& prior, const std::vector<char>& regions,
                                         Rng& rng) {
  std::vector<char> a(static_cast<std::size_t>(prior.num_candidates()), 0);
  for (int c = 0; c < prior.num_candidates(); ++c)
    if (regions[static_cast<std::size_t>(prior.candidate_region[static_cast<std::size_t>(c)])])
      a[static_cast<std::size_t>(c)] = bernoulli(rng, prior.candidate_p[static_cast<std::size_t>(c)]);
  return a;
}

inline void check_prior(const SelectionPrior& prior, int n_candidates) {
  if (prior.num_candidates() != n_candidates)
    throw ConfigError("prior and model disagree on the candidate count");
  for (int r : prior.candidate_region)
    if (r < 0 || r >= prior.num_regions()) throw ConfigError("candidate region out of range");
}

}  // namespace detail

/// Independent realizations drawn from the prior, each followed by a Galerkin solve.
/// Realization r uses the stream derived from (seed, "sequential", r).
template <SelectionModel Model>
SampleChain sequential_sample(const Model& model, const SelectionPrior& prior,
                              const SamplerConfig& cfg, std::uint64_t seed,
                              const ErrorFunction& error = {}) {
  detail::check_prior(prior, model.num_candidates());
  if (cfg.n_samples < 1) throw ConfigError("sampler.samples must be >= 1");
  SampleChain chain;
  chain.seed = seed;
  chain.method = "sequential";
  chain.records.resize(static_cast<std::size_t>(cfg.n_samples));
  std::vector<std::vector<char>> regions(static_cast<std::size_t>(cfg.n_samples));
  parallel_for(cfg.n_samples, cfg.threads, [&](int r) {
    Rng rng = make_rng(seed, "sequential", static_cast<std::uint64_t>(r));
    auto j = detail::draw_regions(prior, rng);
    auto active = detail::draw_candidates(prior, j, rng);
    bool any = false;
    for (char a : active) any = any || a;
    if (!any) spdlog::debug("realization {}: empty selection, permanent basis only", r);
    Evaluation ev = model.evaluate(active);
    chain.records[static_cast<std::size_t>(r)] = detail::make_record(active, ev, error, cfg.keep_fields);
    regions[static_cast<std::size_t>(r)] = std::move(j);
  });
  chain.regions = regions.back();
  return chain;
}

/// Systematic-scan Gibbs sampler. Regions are drawn once and held fixed; each sweep
/// visits every candidate of the selected regions in ascending order.
template <SelectionModel Model>
SampleChain gibbs_sample(const Model& model, const SelectionPrior& prior,
                         const PosteriorSpec& post, const SamplerConfig& cfg, std::uint64_t seed,
                         const ErrorFunction& error = {}, std::vector<char> initial = {}) {
  detail::check_prior(prior, model.num_candidates());
  check_posterior(post);
  if (cfg.n_sweeps < 1) throw ConfigError("sampler.sweeps must be >= 1");
  SampleChain chain;
  chain.seed = seed;
  chain.method = "gibbs";
  Rng rng = make_rng(seed, "gibbs", 0);
  chain.regions = detail::draw_regions(prior, rng);
  std::vector<char> active = detail::draw_candidates(prior, chain.regions, rng);
  if (!initial.empty()) {
    if (initial.size() != active.size()) throw ConfigError("initial selection has wrong length");
    active = std::move(initial);
  }
  std::vector<int> visit;
  for (int c = 0; c < prior.num_candidates(); ++c)
    if (chain.regions[static_cast<std::size_t>(prior.candidate_region[static_cast<std::size_t>(c)])]) visit.push_back(c);
    else active[static_cast<std::size_t>(c)] = 0;

  Evaluation current = model.evaluate(active);
  double current_data = log_data_term(post, current.field);
  chain.records.reserve(static_cast<std::size_t>(cfg.n_sweeps));
  for (int sweep = 0; sweep < cfg.n_sweeps; ++sweep) {
    for (int c : visit) {
      const auto cu = static_cast<std::size_t>(c);
      const bool on = active[cu] != 0;
      std::vector<char> other = active;
      other[cu] = on ? 0 : 1;
      Evaluation alt = model.evaluate(other);
      const double alt_data = log_data_term(post, alt.field);
      const Evaluation& with = on ? current : alt;
      const Evaluation& without = on ? alt : current;
      const double data_with = on ? current_data : alt_data;
      const double data_without = on ? alt_data : current_data;
      std::vector<char> base = active;
      base[cu] = 0;
      const double penalty = model.dependence_penalty(base, c);
      const double p = gibbs_flip_probability(prior.candidate_p[cu], without.residual_sq,
                                              with.residual_sq, penalty, post.sigma_L,
                                              data_with - data_without);
      const bool next = bernoulli(rng, p);
      if (next != on) {
        active = std::move(other);
        current = std::move(alt);
        current_data = alt_data;
      }
    }
    chain.records.push_back(detail::make_record(active, current, error, cfg.keep_fields));
  }
  return chain;
}

struct ChainStatistics {
  Vector mean;
  Vector std;
  std::vector<double> frequency;  // per candidate
  std::vector<int> counts;        // per record
  double mean_residual = 0.0;
  int used = 0;                   // records after burn-in
};

inline int burn_in_count(std::size_t records, double burn_in) {
  if (burn_in < 0.0 || burn_in >= 1.0) throw ConfigError("burn-in fraction must be in [0, 1)");
  return static_cast<int>(std::floor(burn_in * static_cast<double>(records)));
}

inline ChainStatistics chain_statistics(const SampleChain& chain, double burn_in = 0.0) {
  if (chain.records.empty()) throw ConfigError("chain is empty");
  ChainStatistics s;
  const int skip = burn_in_count(chain.records.size(), burn_in);
  const auto n = static_cast<int>(chain.records.size()) - skip;
  s.used = n;
  const auto& first = chain.records[static_cast<std::size_t>(skip)];
  s.frequency.assign(first.active.size(), 0.0);
  for (const auto& r : chain.records) s.counts.push_back(r.basis_count);
  const bool fields = first.field.size() > 0;
  if (fields) {
    s.mean = Vector::Zero(first.field.size());
    s.std = Vector::Zero(first.field.size());
  }
  for (int k = skip; k < static_cast<int>(chain.records.size()); ++k) {
    const auto& r = chain.records[static_cast<std::size_t>(k)];
    for (std::size_t c = 0; c < r.active.size(); ++c) s.frequency[c] += r.active[c] ? 1.0 : 0.0;
    if (fields) s.mean += r.field;
    s.mean_residual += r.residual_norm;
  }
  for (double& f : s.frequency) f /= n;
  s.mean_residual /= n;
  if (fields) {
    s.mean /= n;
    for (int k = skip; k < static_cast<int>(chain.records.size()); ++k)
      s.std += (chain.records[static_cast<std::size_t>(k)].field - s.mean).cwiseAbs2();
    s.std = (s.std / n).cwiseSqrt();
  }
  return s;
}

}  // namespace bmsfem
