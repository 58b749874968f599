#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <random>

#include "bmsfem/bmsfem.hpp"

namespace testing_support {

using namespace bmsfem;

/// Two-valued checkerboard over fine cells.
inline CoefficientField checkerboard(const MeshHierarchy& mesh, double lo, double hi) {
  CoefficientField f = uniform_field(mesh, lo);
  for (int c = 0; c < mesh.num_fine_cells(); ++c) {
    auto [i, j] = mesh.fine_cell_ij(c);
    if ((i + j) % 2) f.values[static_cast<std::size_t>(c)] = hi;
  }
  return f;
}

/// Log-uniform random field in [1, contrast].
inline CoefficientField random_field(const MeshHierarchy& mesh, double contrast, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, std::log(contrast));
  CoefficientField f = uniform_field(mesh, 1.0);
  for (double& v : f.values) v = std::exp(u(gen));
  return f;
}

inline Vector random_vector(Eigen::Index n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = d(gen);
  return v;
}

inline double rel_diff(const Vector& a, const Vector& b) {
  const double d = b.norm();
  return d > 0.0 ? (a - b).norm() / d : (a - b).norm();
}

}  // namespace testing_support

namespace testing_support {

/// Selection model over two candidates whose residual depends only on the selection.
/// The field is a one-hot marker of the state, so chain statistics can be checked.
struct ToyModel {
  std::array<double, 4> residual_sq{};  // indexed by bit0 + 2 * bit1
  double penalty = 1.0;

  static int state(const std::vector<char>& a) { return (a[0] ? 1 : 0) + (a[1] ? 2 : 0); }
  int num_candidates() const { return 2; }
  bmsfem::Evaluation evaluate(const std::vector<char>& active) const {
    bmsfem::Evaluation ev;
    const int s = state(active);
    ev.residual_sq = residual_sq[static_cast<std::size_t>(s)];
    ev.residual = bmsfem::Vector::Constant(1, std::sqrt(ev.residual_sq));
    ev.field = bmsfem::Vector::Zero(4);
    ev.field[s] = 1.0;
    return ev;
  }
  double dependence_penalty(const std::vector<char>&, int) const { return penalty; }
};

/// Stationary law of the conditional-flip chain: prior odds times exp(-R^2 / sigma^2).
inline std::array<double, 4> toy_stationary(const ToyModel& m, double a0, double a1, double sigma) {
  std::array<double, 4> w{};
  double z = 0.0;
  for (int s = 0; s < 4; ++s) {
    const bool b0 = s & 1, b1 = s & 2;
    w[static_cast<std::size_t>(s)] = (b0 ? a0 : 1.0 - a0) * (b1 ? a1 : 1.0 - a1) *
                                     std::exp(-m.residual_sq[static_cast<std::size_t>(s)] / (sigma * sigma));
    z += w[static_cast<std::size_t>(s)];
  }
  for (double& v : w) v /= z;
  return w;
}

}  // namespace testing_support
