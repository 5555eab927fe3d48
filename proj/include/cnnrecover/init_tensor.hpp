#pragma once

// Method-of-moments initialization.
//
// For every patch i, with gamma_j(s) = E[phi(s z) z^j]:
//   E[y (x_i x_i^T - I)]               = sum_j (gamma2 - gamma0)(|w_j|)   wbar_j wbar_j^T
//   E[y (x_i^{(x)3} - x_i (~x) I)]     = sum_j (gamma3 - 3 gamma1)(|w_j|) wbar_j^{(x)3}
// The per-patch estimates are averaged over patches. The second moment whitens the
// third, a robust tensor power method with deflation recovers the orthogonalized
// components, and un-whitening gives directions plus both coefficient sets, from
// which norms and signs follow by inverting the gamma functionals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cnnrecover/activation.hpp"
#include "cnnrecover/csv.hpp"
#include "cnnrecover/errors.hpp"
#include "cnnrecover/model.hpp"
#include "cnnrecover/parallel.hpp"
#include "cnnrecover/random.hpp"
#include "cnnrecover/tensor.hpp"

namespace cnnrecover {

struct MomentEstimates {
  Eigen::MatrixXd m2;  // k x k
  Tensor3 m3;          // k x k x k
  std::size_t n_used = 0;
};

inline MomentEstimates estimate_moments(const SampleSet& s, const ProblemConfig& cfg) {
  cfg.validate();
  check_samples(s, cfg);
  if (cfg.k > kMaxTensorDim) throw ConfigError("patch size k exceeds the dense tensor limit of 64");
  if (s.size() < cfg.k)
    throw RankDeficiencyError("moment estimation needs at least k = " + std::to_string(cfg.k) + " samples, got " +
                              std::to_string(s.size()));
  const std::size_t k = cfg.k;
  const std::size_t r = cfg.r;
  // Only a <= b <= c entries of sum y x^{(x)3} are accumulated.
  struct Acc {
    double y = 0.0;
    Eigen::VectorXd yx;
    Eigen::MatrixXd yxx;
    std::vector<double> yxxx;
    Acc& operator+=(const Acc& o) {
      y += o.y;
      yx += o.yx;
      yxx += o.yxx;
      for (std::size_t i = 0; i < yxxx.size(); ++i) yxxx[i] += o.yxxx[i];
      return *this;
    }
  };
  const auto ki = static_cast<Eigen::Index>(k);
  auto acc = chunked_reduce(
      s.size(),
      [&] { return Acc{0.0, Eigen::VectorXd::Zero(ki), Eigen::MatrixXd::Zero(ki, ki), std::vector<double>(k * k * k, 0.0)}; },
      [&](std::size_t begin, std::size_t end, Acc& a) {
        for (std::size_t n = begin; n < end; ++n) {
          const double y = s.labels(static_cast<Eigen::Index>(n));
          const double* row = s.inputs.row(static_cast<Eigen::Index>(n)).data();
          a.y += y * static_cast<double>(r);
          for (std::size_t i = 0; i < r; ++i) {
            Eigen::Map<const Eigen::VectorXd> x(row + i * k, ki);
            a.yx.noalias() += y * x;
            a.yxx.selfadjointView<Eigen::Lower>().rankUpdate(x, y);
            for (std::size_t p = 0; p < k; ++p) {
              const double yp = y * x(static_cast<Eigen::Index>(p));
              for (std::size_t q = p; q < k; ++q) {
                const double ypq = yp * x(static_cast<Eigen::Index>(q));
                double* dst = &a.yxxx[(p * k + q) * k];
                for (std::size_t c = q; c < k; ++c) dst[c] += ypq * x(static_cast<Eigen::Index>(c));
              }
            }
          }
        }
      });
  const double inv = 1.0 / (static_cast<double>(s.size()) * static_cast<double>(r));
  MomentEstimates out;
  out.n_used = s.size();
  acc.yxx.triangularView<Eigen::StrictlyUpper>() = acc.yxx.transpose();
  out.m2 = acc.yxx * inv - (acc.y * inv) * Eigen::MatrixXd::Identity(ki, ki);
  out.m3 = Tensor3(k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t q = p; q < k; ++q)
      for (std::size_t c = q; c < k; ++c) {
        const double v = acc.yxxx[(p * k + q) * k + c] * inv;
        out.m3(p, q, c) = out.m3(p, c, q) = out.m3(q, p, c) = out.m3(q, c, p) = out.m3(c, p, q) = out.m3(c, q, p) = v;
      }
  out.m3 -= tilde_outer(acc.yx * inv);
  out.m3.symmetrize();
  return out;
}

struct Whitening {
  Eigen::MatrixXd whitener;    // k x t, W^T (sign m2) W = I_t
  Eigen::MatrixXd basis;       // k x t, top-t eigenvectors of m2
  Eigen::VectorXd eigenvalues; // the t selected eigenvalues of m2 (signed)
  int sign = 1;                // -1 when the dominant eigenvalues are negative

  /// Left inverse of whitener^T on the selected subspace.
  Eigen::MatrixXd unwhitener() const { return basis * eigenvalues.cwiseAbs().cwiseSqrt().asDiagonal(); }
};

inline Whitening whiten(const Eigen::MatrixXd& m2, std::size_t t) {
  if (m2.rows() != m2.cols()) throw ConfigError("second moment must be square");
  if (t < 1 || static_cast<Eigen::Index>(t) > m2.rows()) throw ConfigError("whitening rank must lie in [1, k]");
  const double scale = std::max(1.0, m2.cwiseAbs().maxCoeff());
  if ((m2 - m2.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) throw NumericalError("second moment is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m2);
  if (solver.info() != Eigen::Success) throw NumericalError("eigensolver failed on the second moment");
  const Eigen::VectorXd& ev = solver.eigenvalues();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(ev.size()));
  for (Eigen::Index i = 0; i < ev.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return std::abs(ev(a)) > std::abs(ev(b)); });

  const auto tt = static_cast<Eigen::Index>(t);
  Whitening w;
  w.basis.resize(m2.rows(), tt);
  w.eigenvalues.resize(tt);
  for (Eigen::Index j = 0; j < tt; ++j) {
    w.basis.col(j) = solver.eigenvectors().col(order[static_cast<std::size_t>(j)]);
    w.eigenvalues(j) = ev(order[static_cast<std::size_t>(j)]);
  }
  const double largest = std::abs(w.eigenvalues(0));
  const double smallest = std::abs(w.eigenvalues(tt - 1));
  if (!(largest > 0.0) || smallest < 1e-10 * largest)
    throw RankDeficiencyError("second moment has fewer than t = " + std::to_string(t) +
                              " usable directions (eigenvalue ratio " + std::to_string(smallest / largest) + ")");
  const bool all_pos = (w.eigenvalues.array() > 0.0).all();
  const bool all_neg = (w.eigenvalues.array() < 0.0).all();
  if (!all_pos && !all_neg)
    throw RankDeficiencyError("top-t eigenvalues of the second moment have mixed signs");
  w.sign = all_pos ? 1 : -1;
  w.whitener = w.basis * w.eigenvalues.cwiseAbs().cwiseSqrt().cwiseInverse().asDiagonal();
  return w;
}

struct DecompositionResult {
  std::vector<Eigen::VectorXd> directions;  // unit k-vectors
  std::vector<double> coeffs3;              // weight of direction^{(x)3} in m3
  std::vector<double> coeffs2;              // weight of direction direction^T in m2
  double residual = 0.0;                    // relative error against m3 projected on the whitened subspace
  std::vector<std::string> warnings;
};

struct PowerMethodOptions {
  std::size_t n_restarts = 0;  // 0 means 10 t
  std::size_t n_iters = 100;
  double convergence = 1e-10;  // stop when |cos(u_next, u)| > 1 - convergence
  std::uint64_t seed = 0;
};

/// m3 projected onto the span of the whitening basis in all three modes.
inline Tensor3 project_tensor(const Tensor3& m3, const Whitening& w) {
  const Eigen::MatrixXd proj = w.basis * w.basis.transpose();
  return m3.multilinear(proj);
}

inline DecompositionResult decompose(const Tensor3& m3, const Whitening& w, std::size_t t,
                                     const PowerMethodOptions& opt = {}) {
  if (static_cast<std::size_t>(w.whitener.cols()) != t || static_cast<std::size_t>(w.whitener.rows()) != m3.dim())
    throw ConfigError("whitener shape does not match the tensor and rank");
  const std::size_t restarts = opt.n_restarts == 0 ? 10 * t : opt.n_restarts;
  Tensor3 whitened = m3.multilinear(w.whitener);
  const Eigen::MatrixXd unwhiten = w.unwhitener();
  const auto tt = static_cast<Eigen::Index>(t);

  DecompositionResult out;
  for (std::size_t comp = 0; comp < t; ++comp) {
    std::optional<Eigen::VectorXd> best;
    double best_value = 0.0;
    for (std::size_t rs = 0; rs < restarts; ++rs) {
      Rng rng = Rng::substream(opt.seed, Stream::decomposition, comp * restarts + rs);
      Eigen::VectorXd u = rng.normal_vector(tt);
      u.normalize();
      bool converged = false;
      for (std::size_t it = 0; it < opt.n_iters; ++it) {
        Eigen::VectorXd next = whitened.contract2(u);
        const double norm = next.norm();
        if (!(norm > 0.0) || !std::isfinite(norm)) break;
        next /= norm;
        const double cosine = std::abs(next.dot(u));
        u = next;
        if (cosine > 1.0 - opt.convergence) {
          converged = true;
          break;
        }
      }
      if (!converged) continue;
      const double value = whitened.contract3(u);
      if (!best || std::abs(value) > std::abs(best_value)) {
        best = u;
        best_value = value;
      }
    }
    if (!best)
      throw DecompositionError("tensor power iteration did not converge for component " + std::to_string(comp) +
                               " in any of " + std::to_string(restarts) + " restarts");
    Eigen::VectorXd u = *best;
    double value = best_value;
    if (value < 0.0) {
      u = -u;
      value = -value;
    }
    whitened.add_rank_one(-value, u);

    const Eigen::VectorXd raw = unwhiten * u;
    const double c2_abs = raw.squaredNorm();
    out.directions.push_back(raw / std::sqrt(c2_abs));
    out.coeffs2.push_back(w.sign * c2_abs);
    out.coeffs3.push_back(value * std::pow(c2_abs, 1.5));
  }

  for (std::size_t a = 0; a < t; ++a)
    for (std::size_t b = a + 1; b < t; ++b) {
      const double c = std::abs(out.directions[a].dot(out.directions[b]));
      if (c > 0.99)
        out.warnings.push_back("components " + std::to_string(a) + " and " + std::to_string(b) +
                               " collide (|cos| = " + std::to_string(c) + ")");
    }

  Tensor3 target = project_tensor(m3, w);
  Tensor3 recon(m3.dim());
  for (std::size_t j = 0; j < t; ++j) recon.add_rank_one(out.coeffs3[j], out.directions[j]);
  const double denom = target.norm();
  target -= recon;
  out.residual = denom > 0.0 ? target.norm() / denom : target.norm();
  return out;
}

struct MagnitudeRecovery {
  std::vector<double> norms;
  std::vector<int> signs;  // +1 keeps the decomposed direction, -1 flips it
  std::vector<bool> sign_confident;
};

namespace detail {

inline double gamma_gap2(const Activation& act, double sigma) {
  const MomentProfile m = quadrature_profile(act, sigma);
  return m.gamma2 - m.gamma0;
}

// Root of gamma2(s) - gamma0(s) = target by geometric bracketing from sqrt|target|
// within [1e-6, 1e3] times that guess, then 60 bisection steps.
inline double bisect_gamma_gap2(const Activation& act, double target) {
  const double guess = std::sqrt(std::abs(target));
  auto f = [&](double s) { return gamma_gap2(act, s) - target; };
  // Expand geometrically around the guess until a sign change is bracketed.
  std::optional<std::pair<double, double>> bracket;
  const double f_guess = f(guess);
  if (f_guess == 0.0) return guess;
  double lo = guess, hi = guess, f_lo = f_guess, f_hi = f_guess;
  for (int step = 0; step < 20 && !bracket; ++step) {
    if (hi * 2.0 <= 1e3 * guess) {
      const double nh = hi * 2.0;
      const double fn = f(nh);
      if ((fn > 0.0) != (f_hi > 0.0)) bracket = {hi, nh};
      hi = nh;
      f_hi = fn;
    }
    if (!bracket && lo / 2.0 >= 1e-6 * guess) {
      const double nl = lo / 2.0;
      const double fn = f(nl);
      if ((fn > 0.0) != (f_lo > 0.0)) bracket = {nl, lo};
      lo = nl;
      f_lo = fn;
    }
  }
  if (!bracket)
    throw DecompositionError("no root of gamma2 - gamma0 = " + std::to_string(target) + " in [1e-6, 1e3] x " +
                             std::to_string(guess) + " for activation " + act.name());
  auto [a, b] = *bracket;
  double fa = f(a);
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (a + b);
    const double fm = f(mid);
    if ((fm > 0.0) == (fa > 0.0)) {
      a = mid;
      fa = fm;
    } else {
      b = mid;
    }
  }
  return 0.5 * (a + b);
}

// Solves gamma2(s) - gamma0(s) = target for s > 0; closed form for homogeneous kinds.
inline double invert_gamma_gap2(const Activation& act, double target) {
  if (!act.positively_homogeneous()) return bisect_gamma_gap2(act, target);
  const double ratio = target / gamma_gap2(act, 1.0);
  if (!(ratio > 0.0) || !std::isfinite(ratio))
    throw DecompositionError("second-moment coefficient " + std::to_string(target) +
                             " has the wrong sign for activation " + act.name());
  return std::pow(ratio, 1.0 / (act.homogeneity_exponent() + 1));
}

}  // namespace detail

inline MagnitudeRecovery recover_magnitudes(const DecompositionResult& dec, const Activation& act) {
  MagnitudeRecovery out;
  for (std::size_t j = 0; j < dec.coeffs2.size(); ++j) {
    const double c2 = dec.coeffs2[j];
    if (c2 == 0.0 || !std::isfinite(c2))
      throw DecompositionError("second-moment coefficient of component " + std::to_string(j) + " is zero");
    const double sigma = detail::invert_gamma_gap2(act, c2);
    const MomentProfile m = quadrature_profile(act, sigma);
    const double gap3 = m.gamma3 - 3.0 * m.gamma1;
    if (std::abs(gap3) < 1e-8)
      throw DecompositionError("gamma3 - 3 gamma1 vanishes at sigma = " + std::to_string(sigma) + " for activation " +
                               act.name() + "; the sign of component " + std::to_string(j) + " is not identifiable");
    const double c3 = dec.coeffs3[j];
    out.norms.push_back(sigma);
    out.signs.push_back((c3 >= 0.0) == (gap3 > 0.0) ? 1 : -1);
    out.sign_confident.push_back(!act.even_derivative());
  }
  return out;
}

struct TensorInitOptions {
  PowerMethodOptions power;
};

struct TensorInitialization {
  WeightMatrix weights;  // k x t
  MomentEstimates moments;
  Whitening whitening;
  DecompositionResult decomposition;
  MagnitudeRecovery magnitudes;
};

/// estimate_moments -> whiten -> decompose -> recover_magnitudes.
inline TensorInitialization tensor_initialize(const SampleSet& s0, const ProblemConfig& cfg,
                                              const TensorInitOptions& options = {}) {
  TensorInitialization out;
  out.moments = estimate_moments(s0, cfg);
  out.whitening = whiten(out.moments.m2, cfg.t);
  out.decomposition = decompose(out.moments.m3, out.whitening, cfg.t, options.power);
  out.magnitudes = recover_magnitudes(out.decomposition, cfg.activation);
  out.weights.resize(static_cast<Eigen::Index>(cfg.k), static_cast<Eigen::Index>(cfg.t));
  for (std::size_t j = 0; j < cfg.t; ++j)
    out.weights.col(static_cast<Eigen::Index>(j)) =
        out.magnitudes.norms[j] * out.magnitudes.signs[j] * out.decomposition.directions[j];
  return out;
}

/// One row per component: index, coeff2, coeff3, norm, sign, sign_confident, direction entries.
inline std::string decomposition_csv(const DecompositionResult& dec, const MagnitudeRecovery* mags = nullptr) {
  std::vector<std::string> header{"component", "coeff2", "coeff3", "norm", "sign", "sign_confident"};
  const std::size_t k = dec.directions.empty() ? 0 : static_cast<std::size_t>(dec.directions[0].size());
  for (std::size_t a = 0; a < k; ++a) header.push_back("u_" + std::to_string(a + 1));
  CsvTable table(header);
  for (std::size_t j = 0; j < dec.directions.size(); ++j) {
    std::vector<std::string> row{std::to_string(j), format_number(dec.coeffs2[j]), format_number(dec.coeffs3[j])};
    row.push_back(mags ? format_number(mags->norms[j]) : "");
    row.push_back(mags ? std::to_string(mags->signs[j]) : "");
    row.push_back(mags ? (mags->sign_confident[j] ? "1" : "0") : "");
    for (Eigen::Index a = 0; a < dec.directions[j].size(); ++a) row.push_back(format_number(dec.directions[j](a)));
    table.add_row(std::move(row));
  }
  return table.str();
}

}  // namespace cnnrecover
