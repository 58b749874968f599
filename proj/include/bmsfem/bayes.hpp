#pragma once

// Residual-driven priors over regions and candidate basis functions, and the
// posterior pieces used by the samplers.

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <spdlog/spdlog.h>
#include <vector>

#include "bmsfem/error.hpp"

namespace bmsfem {

inline constexpr double kProbabilityClamp = 1e-6;

/// p_k = min(1, N * a_k / sum_j a_j) with a_k = local_k / global.
inline std::vector<double> region_prior(const std::vector<double>& local_norms, double global_norm,
                                        double n_omega) {
  if (n_omega < 1.0) throw ConfigError("N_omega must be >= 1");
  for (double v : local_norms)
    if (v < 0.0 || !std::isfinite(v)) throw NumericsError("region norms must be finite and >= 0");
  std::vector<double> p(local_norms.size(), 0.0);
  if (global_norm <= 0.0) return p;
  double sum = 0.0;
  for (double v : local_norms) sum += v / global_norm;
  if (sum <= 0.0) return p;
  for (std::size_t k = 0; k < p.size(); ++k)
    p[k] = std::min(1.0, local_norms[k] / global_norm * n_omega / sum);
  return p;
}

/// Pearson correlation; NaN when either operand has zero variance.
inline double pearson(const Eigen::Ref<const Eigen::VectorXd>& a,
                      const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) throw ConfigError("correlation operands differ in length");
  if (a.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const Eigen::VectorXd x = a.array() - a.mean();
  const Eigen::VectorXd y = b.array() - b.mean();
  const double sx = x.norm(), sy = y.norm();
  if (sx == 0.0 || sy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return std::clamp(x.dot(y) / (sx * sy), -1.0, 1.0);
}

/// Candidate probabilities from |corr(residual slice, candidate image)|, normalized to
/// sum to n_basis and clamped at 1. `images` holds one candidate image per column.
inline std::vector<double> basis_prior(const Eigen::Ref<const Eigen::VectorXd>& residual_slice,
                                       const Eigen::Ref<const Eigen::MatrixXd>& images,
                                       double n_basis) {
  if (images.cols() < 1) throw ConfigError("basis prior needs at least one candidate");
  if (images.rows() != residual_slice.size())
    throw ConfigError("candidate images and residual slice differ in length");
  std::vector<double> alpha(static_cast<std::size_t>(images.cols()), 0.0);
  double sum = 0.0;
  for (Eigen::Index c = 0; c < images.cols(); ++c) {
    double r = pearson(residual_slice, images.col(c));
    if (std::isnan(r)) {
      spdlog::debug("candidate {} has a zero-variance image; prior set to 0", c);
      r = 0.0;
    }
    alpha[static_cast<std::size_t>(c)] = std::abs(r);
    sum += std::abs(r);
  }
  if (sum <= 0.0) return std::vector<double>(alpha.size(), 0.0);
  for (double& a : alpha) a = std::min(1.0, a * n_basis / sum);
  return alpha;
}

inline double log_likelihood(double residual_norm, double sigma_L) {
  if (!(sigma_L > 0.0)) throw ConfigError("sigma_L must be > 0");
  return -residual_norm * residual_norm / (sigma_L * sigma_L);
}

inline double log_data_factor(const Eigen::Ref<const Eigen::VectorXd>& predicted,
                              const Eigen::Ref<const Eigen::VectorXd>& observed, double sigma_d) {
  if (predicted.size() != observed.size()) throw ConfigError("observation length mismatch");
  if (predicted.size() == 0) return 0.0;
  if (!(sigma_d > 0.0)) throw ConfigError("sigma_d must be > 0");
  return -(predicted - observed).squaredNorm() / (sigma_d * sigma_d);
}

/// Probability that a candidate is on, given its prior and the residual with and without it.
/// `extra_log_odds` carries optional terms such as the data factor difference.
inline double gibbs_flip_probability(double prior_alpha, double residual_sq_without,
                                     double residual_sq_with, double gram_penalty, double sigma_L,
                                     double extra_log_odds = 0.0) {
  if (!(sigma_L > 0.0)) throw ConfigError("sigma_L must be > 0");
  if (gram_penalty <= 0.0) return 0.0;
  const double a = std::clamp(prior_alpha, kProbabilityClamp, 1.0 - kProbabilityClamp);
  const double logit = std::log(a / (1.0 - a)) + std::log(std::min(1.0, gram_penalty)) +
                       (residual_sq_without - residual_sq_with) / (sigma_L * sigma_L) +
                       extra_log_odds;
  if (logit >= 0.0) return 1.0 / (1.0 + std::exp(-logit));
  const double e = std::exp(logit);
  return e / (1.0 + e);
}

namespace detail {

inline double singular_product(const Eigen::MatrixXd& g) {
  if (g.size() == 0) return 1.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(g);
  return svd.singularValues().prod();
}

/// Gram matrix of unit-normalized columns from a raw Gram matrix.
inline Eigen::MatrixXd normalized_gram(const Eigen::MatrixXd& gram) {
  Eigen::VectorXd d = gram.diagonal().cwiseMax(0.0).cwiseSqrt();
  Eigen::MatrixXd g = gram;
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      const double s = d[i] * d[j];
      g(i, j) = s > 0.0 ? gram(i, j) / s : 0.0;
    }
  return g;
}

}  // namespace detail

/// Penalty from a raw Gram matrix whose last row/column is the candidate:
/// product of singular values of the normalized Gram with the candidate over the
/// same product without it. Equals the plain product when the active set is orthonormal.
inline double gram_penalty_from_gram(const Eigen::MatrixXd& gram) {
  const Eigen::Index n = gram.rows();
  if (n == 0) return 1.0;
  Eigen::MatrixXd g = detail::normalized_gram(gram);
  if (g(n - 1, n - 1) == 0.0) return 0.0;
  const double with = detail::singular_product(g);
  const double without = detail::singular_product(g.topLeftCorner(n - 1, n - 1));
  if (without <= 0.0) return 0.0;
  return std::clamp(with / without, 0.0, 1.0);
}

inline double gram_penalty(const Eigen::Ref<const Eigen::MatrixXd>& active,
                           const Eigen::Ref<const Eigen::VectorXd>& candidate) {
  if (active.cols() > 0 && active.rows() != candidate.size())
    throw ConfigError("gram_penalty: column length mismatch");
  Eigen::MatrixXd cols(candidate.size(), active.cols() + 1);
  if (active.cols() > 0) cols.leftCols(active.cols()) = active;
  cols.col(active.cols()) = candidate;
  return gram_penalty_from_gram(cols.transpose() * cols);
}

enum class PosteriorVariant { around_fixed, around_previous };

/// Optional observation term: predicted values are the fine dofs at `indices`.
struct DataTerm {
  std::vector<int> indices;
  Eigen::VectorXd observed;
  double sigma_d = 1.0;
};

struct PosteriorSpec {
  PosteriorVariant variant = PosteriorVariant::around_fixed;
  double sigma_L = 1e-3;
  std::optional<DataTerm> data;
};

inline void check_posterior(const PosteriorSpec& p) {
  if (!(p.sigma_L > 0.0)) throw ConfigError("sigma_L must be > 0");
  if (p.data) {
    if (!(p.data->sigma_d > 0.0)) throw ConfigError("sigma_d must be > 0");
    if (static_cast<Eigen::Index>(p.data->indices.size()) != p.data->observed.size())
      throw ConfigError("observation indices and values differ in length");
  }
}

/// Data-factor log density of a fine state; 0 when no observations are configured.
inline double log_data_term(const PosteriorSpec& p, const Eigen::VectorXd& field) {
  if (!p.data || p.data->indices.empty()) return 0.0;
  Eigen::VectorXd pred(static_cast<Eigen::Index>(p.data->indices.size()));
  for (std::size_t k = 0; k < p.data->indices.size(); ++k) {
    const int i = p.data->indices[k];
    if (i < 0 || i >= field.size()) throw ConfigError("observation index out of range");
    pred[static_cast<Eigen::Index>(k)] = field[i];
  }
  return log_data_factor(pred, p.data->observed, p.data->sigma_d);
}

/// Per-interval prior: region probabilities and per-region candidate probabilities.
struct PriorModel {
  std::vector<double> region_p;
  std::vector<std::vector<double>> candidate_p;  // indexed [region][local candidate]
  double n_omega = 1.0;
  double n_basis = 1.0;
  std::vector<double> local_norms;
  double global_norm = 0.0;
};

}  // namespace bmsfem
