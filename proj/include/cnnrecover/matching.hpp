#pragma once

// Column matching between an estimate and the planted weights. The planted model is
// invariant under kernel permutations, so errors are minimized over them.

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "cnnrecover/errors.hpp"

namespace cnnrecover {

/// Minimum-cost perfect assignment (Hungarian algorithm, O(n^3)).
/// Returns assign[row] = column.
inline std::vector<int> solve_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != cost.rows()) throw ConfigError("assignment cost matrix must be square");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Potentials u (rows), v (cols); p[col] = row matched to col, 1-based with 0 as sentinel.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) assign[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  return assign;
}

struct Matching {
  std::vector<int> permutation;  // estimate column permutation[j] is matched to truth column j
  double error = 0.0;            // ||W_est P - W*||_F / ||W*||_F
  Eigen::MatrixXd aligned;       // W_est with columns reordered
};

/// Best column permutation of `estimate` against `truth` in Frobenius norm.
inline Matching min_matching(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols())
    throw ConfigError("matching needs matrices of equal shape");
  const Eigen::Index t = truth.cols();
  Eigen::MatrixXd cost(t, t);
  for (Eigen::Index a = 0; a < t; ++a)
    for (Eigen::Index b = 0; b < t; ++b) cost(a, b) = (estimate.col(a) - truth.col(b)).squaredNorm();
  const std::vector<int> assign = solve_assignment(cost);
  Matching m;
  m.permutation.assign(static_cast<std::size_t>(t), -1);
  m.aligned.resize(truth.rows(), t);
  for (Eigen::Index a = 0; a < t; ++a) {
    const int b = assign[static_cast<std::size_t>(a)];
    m.permutation[static_cast<std::size_t>(b)] = static_cast<int>(a);
    m.aligned.col(b) = estimate.col(a);
  }
  m.error = (m.aligned - truth).norm() / truth.norm();
  return m;
}

inline double min_matching_error(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth) {
  return min_matching(estimate, truth).error;
}

}  // namespace cnnrecover
