#pragma once

// Gaussian expectations E[f(z)], z ~ N(0,1), by Gauss rules built with Golub-Welsch.
//
// Two families are provided:
//   * full-range Gauss-Hermite, for integrands smooth on the whole line;
//   * half-range Gauss-Hermite (weight e^{-u^2} on [0, inf)), so integrands with a
//     kink at zero can be integrated piecewise over (-inf, 0] and [0, inf).
//
// Nodes are returned already scaled by sqrt(2) so they live in z units, and the
// weights absorb the 1/sqrt(pi) normalization: a full rule sums to 1, a half rule to 1/2.

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "cnnrecover/errors.hpp"

namespace cnnrecover::quadrature {

struct Rule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

// Gauss rule from the Jacobi matrix of a three-term recurrence. `diag` holds
// alpha_0..alpha_{n-1}, `offdiag` holds sqrt(beta_1)..sqrt(beta_{n-1}), `mass` is
// the total mass of the measure and `target` the mass the returned weights sum to.
// Nodes are the Jacobi eigenvalues; weights come from the Christoffel function
// 1 / sum_k p_k(x)^2 over the orthonormal polynomials, which stays O(n^2).
inline Rule golub_welsch(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag, double mass,
                         double target) {
  const Eigen::Index n = diag.size();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  Eigen::VectorXd sub = offdiag;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("Golub-Welsch eigensolver failed");
  Rule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  const double p0 = 1.0 / std::sqrt(mass);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = solver.eigenvalues()(i);
    double prev = 0.0;
    double cur = p0;
    double sum = cur * cur;
    for (Eigen::Index k = 0; k + 1 < n; ++k) {
      const double back = k == 0 ? 0.0 : offdiag(k - 1);
      const double next = ((x - diag(k)) * cur - back * prev) / offdiag(k);
      prev = cur;
      cur = next;
      sum += cur * cur;
    }
    rule.nodes[static_cast<std::size_t>(i)] = x;
    rule.weights[static_cast<std::size_t>(i)] = std::isfinite(sum) ? target / (mass * sum) : 0.0;
  }
  return rule;
}

inline Rule build_full_range(int n) {
  // Physicists' Hermite: alpha_k = 0, beta_k = k/2, mass sqrt(pi).
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd off(std::max(n - 1, 0));
  for (int k = 1; k < n; ++k) off(k - 1) = std::sqrt(0.5 * k);
  Rule rule = golub_welsch(diag, off, std::sqrt(std::numbers::pi), 1.0);
  for (double& x : rule.nodes) x *= std::numbers::sqrt2;
  // exact mirror symmetry so odd moments cancel
  const std::size_t m = rule.nodes.size();
  for (std::size_t i = 0; i < m / 2; ++i) {
    const std::size_t j = m - 1 - i;
    const double x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
    const double w = 0.5 * (rule.weights[i] + rule.weights[j]);
    rule.nodes[i] = -x;
    rule.nodes[j] = x;
    rule.weights[i] = rule.weights[j] = w;
  }
  if (m % 2) rule.nodes[m / 2] = 0.0;
  return rule;
}

// Discretized Stieltjes procedure for the half-range weight e^{-u^2} on [0, inf).
// The measure is discretized by composite Gauss-Legendre panels on [0, 40]; the
// weight underflows long before the upper end.
inline Rule build_half_range(int n) {
  constexpr int kPanelPoints = 40;
  constexpr double kUpper = 40.0;
  constexpr double kPanelWidth = 0.05;
  const int panels = static_cast<int>(kUpper / kPanelWidth);

  Eigen::VectorXd leg_diag = Eigen::VectorXd::Zero(kPanelPoints);
  Eigen::VectorXd leg_off(kPanelPoints - 1);
  for (int k = 1; k < kPanelPoints; ++k) leg_off(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
  const Rule legendre = golub_welsch(leg_diag, leg_off, 2.0, 2.0);

  std::vector<double> x;
  std::vector<double> s;  // sqrt of discrete weight
  x.reserve(static_cast<std::size_t>(panels * kPanelPoints));
  s.reserve(x.capacity());
  for (int p = 0; p < panels; ++p) {
    const double a = p * kPanelWidth;
    for (int q = 0; q < kPanelPoints; ++q) {
      const double u = a + 0.5 * kPanelWidth * (legendre.nodes[q] + 1.0);
      const double w = 0.5 * kPanelWidth * legendre.weights[q] * std::exp(-u * u);
      if (w <= 0.0) continue;
      x.push_back(u);
      s.push_back(std::sqrt(w));
    }
  }
  const std::size_t m = x.size();
  double mass = 0.0;
  for (double v : s) mass += v * v;

  Eigen::VectorXd diag(n);
  Eigen::VectorXd off(std::max(n - 1, 0));
  std::vector<double> prev(m, 0.0);
  std::vector<double> cur(m);
  const double inv = 1.0 / std::sqrt(mass);
  for (std::size_t i = 0; i < m; ++i) cur[i] = s[i] * inv;
  double sqrt_beta = 0.0;
  std::vector<double> next(m);
  for (int k = 0; k < n; ++k) {
    double alpha = 0.0;
    for (std::size_t i = 0; i < m; ++i) alpha += x[i] * cur[i] * cur[i];
    diag(k) = alpha;
    if (k + 1 == n) break;
    double norm2 = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      next[i] = (x[i] - alpha) * cur[i] - sqrt_beta * prev[i];
      norm2 += next[i] * next[i];
    }
    sqrt_beta = std::sqrt(norm2);
    off(k) = sqrt_beta;
    for (std::size_t i = 0; i < m; ++i) {
      prev[i] = cur[i];
      cur[i] = next[i] / sqrt_beta;
    }
  }
  Rule rule = golub_welsch(diag, off, mass, 0.5);
  for (double& u : rule.nodes) u *= std::numbers::sqrt2;
  return rule;
}

template <Rule (*Build)(int)>
const Rule& cached(int n) {
  static std::mutex mu;
  static std::map<int, Rule> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, Build(n)).first;
  return it->second;
}

}  // namespace detail

inline constexpr int kDefaultNodes = 200;
inline constexpr int kMaxNodes = 1024;

/// Full-range rule: sum_i w_i f(z_i) ~ E[f(z)].
inline const Rule& gauss_hermite(int n = kDefaultNodes) {
  if (n < 1 || n > kMaxNodes) throw ConfigError("quadrature node count out of range");
  return detail::cached<&detail::build_full_range>(n);
}

/// Half-range rule: sum_i w_i g(z_i) ~ E[g(z) 1{z > 0}].
inline const Rule& half_range_hermite(int n = kDefaultNodes) {
  if (n < 1 || n > kMaxNodes) throw ConfigError("quadrature node count out of range");
  return detail::cached<&detail::build_half_range>(n);
}

template <class F>
double expectation(F&& f, int n = kDefaultNodes) {
  const Rule& rule = gauss_hermite(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) acc += rule.weights[i] * f(rule.nodes[i]);
  return acc;
}

/// E[f(z)] integrated separately over z < 0 and z > 0; the kink at 0 sits on a panel edge.
template <class F>
double expectation_split(F&& f, int n = kDefaultNodes) {
  const Rule& rule = half_range_hermite(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double z = rule.nodes[i];
    acc += rule.weights[i] * (f(z) + f(-z));
  }
  return acc;
}

}  // namespace cnnrecover::quadrature
