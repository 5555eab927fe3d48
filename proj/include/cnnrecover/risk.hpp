#pragma once

// Squared loss of the planted CNN and its exact derivatives.
//
//   f_S(W) = 1/(2|S|) sum (yhat(W, x) - y)^2
//   df/dw_j = 1/|S| sum res(x) v_j(x),        v_j(x) = sum_i phi'(w_j^T x_i) x_i
//   d2f/dw_j dw_l = 1/|S| sum v_j v_l^T  +  [j = l] res(x) sum_i phi''(w_j^T x_i) x_i x_i^T
//
// The Hessian is (t k) x (t k), laid out as t x t blocks of k x k: row j*k + a
// corresponds to entry (a, j) of W. For piecewise-linear activations the residual
// term is dropped (phi'' = 0 almost everywhere).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cnnrecover/activation.hpp"
#include "cnnrecover/csv.hpp"
#include "cnnrecover/errors.hpp"
#include "cnnrecover/model.hpp"
#include "cnnrecover/parallel.hpp"
#include "cnnrecover/random.hpp"

namespace cnnrecover {

inline constexpr std::size_t kMaxHessianDim = 2048;

using HessianMatrix = Eigen::MatrixXd;

namespace detail {

// Per-sample quantities for one input row.
struct SampleTerms {
  Eigen::MatrixXd z;   // t x r pre-activations
  Eigen::MatrixXd d1;  // t x r, phi'
  double prediction = 0.0;
};

inline void sample_terms(const WeightMatrix& w, const double* x, const ProblemConfig& cfg, SampleTerms& out,
                         bool need_derivative) {
  const auto k = static_cast<Eigen::Index>(cfg.k);
  const auto r = static_cast<Eigen::Index>(cfg.r);
  Eigen::Map<const Eigen::MatrixXd> patches(x, k, r);
  out.z.noalias() = w.transpose() * patches;
  const Activation& act = cfg.activation;
  double pred = 0.0;
  if (need_derivative) out.d1.resize(out.z.rows(), out.z.cols());
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < out.z.rows(); ++j) {
      pred += act.value(out.z(j, i));
      if (need_derivative) out.d1(j, i) = act.derivative(out.z(j, i));
    }
  out.prediction = pred;
}

struct GradAcc {
  double loss = 0.0;
  Eigen::MatrixXd grad;
  GradAcc& operator+=(const GradAcc& o) {
    loss += o.loss;
    grad += o.grad;
    return *this;
  }
};

struct HessAcc {
  Eigen::MatrixXd h;
  HessAcc& operator+=(const HessAcc& o) {
    h += o.h;
    return *this;
  }
};

// Adds the Hessian contribution of one sample into the lower triangle of h;
// `residual` multiplies the second-derivative term.
inline void add_sample_hessian(const double* x, double residual, const ProblemConfig& cfg,
                               SampleTerms& terms, Eigen::VectorXd& v, Eigen::MatrixXd& h) {
  const auto k = static_cast<Eigen::Index>(cfg.k);
  const auto r = static_cast<Eigen::Index>(cfg.r);
  const auto t = static_cast<Eigen::Index>(cfg.t);
  Eigen::Map<const Eigen::MatrixXd> patches(x, k, r);
  // v = vec(X D^T): block j is sum_i phi'(z_ji) x_i.
  Eigen::Map<Eigen::MatrixXd> vm(v.data(), k, t);
  vm.noalias() = patches * terms.d1.transpose();
  h.selfadjointView<Eigen::Lower>().rankUpdate(v);
  if (cfg.activation.smoothness() == Smoothness::smooth && residual != 0.0) {
    for (Eigen::Index j = 0; j < t; ++j)
      for (Eigen::Index i = 0; i < r; ++i) {
        const double zz = terms.z(j, i);
        if (std::abs(zz) < 1e-300) continue;  // kink collision: phi'' contribution taken as 0
        const double c = residual * cfg.activation.second_derivative(zz);
        if (c == 0.0) continue;
        h.block(j * k, j * k, k, k).selfadjointView<Eigen::Lower>().rankUpdate(patches.col(i), c);
      }
  }
}

inline void fill_upper(Eigen::MatrixXd& h) { h.triangularView<Eigen::StrictlyUpper>() = h.transpose(); }

inline void check_inputs(const WeightMatrix& w, const SampleSet& s, const ProblemConfig& cfg) {
  cfg.validate();
  check_weights(w, cfg);
  check_samples(s, cfg);
}

}  // namespace detail

struct LossAndGradient {
  double loss = 0.0;
  Eigen::MatrixXd gradient;  // k x t
};

inline LossAndGradient loss_and_gradient(const WeightMatrix& w, const SampleSet& s, const ProblemConfig& cfg) {
  detail::check_inputs(w, s, cfg);
  const auto k = static_cast<Eigen::Index>(cfg.k);
  const auto t = static_cast<Eigen::Index>(cfg.t);
  const auto r = static_cast<Eigen::Index>(cfg.r);
  auto acc = chunked_reduce(
      s.size(), [&] { return detail::GradAcc{0.0, Eigen::MatrixXd::Zero(k, t)}; },
      [&](std::size_t begin, std::size_t end, detail::GradAcc& a) {
        detail::SampleTerms terms;
        for (std::size_t n = begin; n < end; ++n) {
          const double* x = s.inputs.row(static_cast<Eigen::Index>(n)).data();
          detail::sample_terms(w, x, cfg, terms, true);
          const double res = terms.prediction - s.labels(static_cast<Eigen::Index>(n));
          a.loss += res * res;
          if (res != 0.0) {
            Eigen::Map<const Eigen::MatrixXd> patches(x, k, r);
            a.grad.noalias() += res * (patches * terms.d1.transpose());
          }
        }
      });
  const double inv_n = 1.0 / static_cast<double>(s.size());
  return {0.5 * acc.loss * inv_n, acc.grad * inv_n};
}

inline double empirical_risk(const WeightMatrix& w, const SampleSet& s, const ProblemConfig& cfg) {
  detail::check_inputs(w, s, cfg);
  auto acc = chunked_reduce(
      s.size(), [] { return detail::GradAcc{0.0, Eigen::MatrixXd()}; },
      [&](std::size_t begin, std::size_t end, detail::GradAcc& a) {
        detail::SampleTerms terms;
        for (std::size_t n = begin; n < end; ++n) {
          detail::sample_terms(w, s.inputs.row(static_cast<Eigen::Index>(n)).data(), cfg, terms, false);
          const double res = terms.prediction - s.labels(static_cast<Eigen::Index>(n));
          a.loss += res * res;
        }
      });
  return 0.5 * acc.loss / static_cast<double>(s.size());
}

inline Eigen::MatrixXd gradient(const WeightMatrix& w, const SampleSet& s, const ProblemConfig& cfg) {
  return loss_and_gradient(w, s, cfg).gradient;
}

inline HessianMatrix hessian(const WeightMatrix& w, const SampleSet& s, const ProblemConfig& cfg) {
  detail::check_inputs(w, s, cfg);
  const auto dim = static_cast<Eigen::Index>(cfg.t * cfg.k);
  if (cfg.t * cfg.k > kMaxHessianDim) throw ConfigError("t*k exceeds the dense Hessian limit");
  auto acc = chunked_reduce(
      s.size(), [&] { return detail::HessAcc{Eigen::MatrixXd::Zero(dim, dim)}; },
      [&](std::size_t begin, std::size_t end, detail::HessAcc& a) {
        detail::SampleTerms terms;
        Eigen::VectorXd v(dim);
        for (std::size_t n = begin; n < end; ++n) {
          const double* x = s.inputs.row(static_cast<Eigen::Index>(n)).data();
          detail::sample_terms(w, x, cfg, terms, true);
          const double res = terms.prediction - s.labels(static_cast<Eigen::Index>(n));
          detail::add_sample_hessian(x, res, cfg, terms, v, a.h);
        }
      });
  acc.h /= static_cast<double>(s.size());
  detail::fill_upper(acc.h);
  return acc.h;
}

struct PopulationHessian {
  HessianMatrix hessian;
  Eigen::MatrixXd entry_stderr;  // per-entry Monte-Carlo standard error
  double stderr_max = 0.0;       // max entry standard error
  std::size_t samples = 0;
};

/// Monte-Carlo estimate of E[per-sample Hessian at W] over fresh Gaussian inputs,
/// with labels from the planted weights `wstar`.
inline PopulationHessian population_hessian_mc(const WeightMatrix& w, const WeightMatrix& wstar,
                                               const ProblemConfig& cfg, std::size_t n_mc, std::uint64_t seed) {
  cfg.validate();
  check_weights(w, cfg);
  check_weights(wstar, cfg);
  if (n_mc < 100) throw ConfigError("population Hessian needs at least 100 Monte-Carlo samples");
  const auto dim = static_cast<Eigen::Index>(cfg.t * cfg.k);
  if (cfg.t * cfg.k > kMaxHessianDim) throw ConfigError("t*k exceeds the dense Hessian limit");
  struct Acc {
    Eigen::MatrixXd sum, sumsq;
    Acc& operator+=(const Acc& o) {
      sum += o.sum;
      sumsq += o.sumsq;
      return *this;
    }
  };
  const bool at_truth = w == wstar;
  auto acc = chunked_reduce(
      n_mc, [&] { return Acc{Eigen::MatrixXd::Zero(dim, dim), Eigen::MatrixXd::Zero(dim, dim)}; },
      [&](std::size_t begin, std::size_t end, Acc& a) {
        detail::SampleTerms terms;
        Eigen::VectorXd v(dim);
        Eigen::MatrixXd h(dim, dim);
        Eigen::RowVectorXd x(static_cast<Eigen::Index>(cfg.d()));
        for (std::size_t n = begin; n < end; ++n) {
          Rng rng = Rng::substream(seed, Stream::population, n);
          for (Eigen::Index j = 0; j < x.size(); ++j) x(j) = rng.normal();
          detail::sample_terms(w, x.data(), cfg, terms, true);
          const double res = at_truth ? 0.0 : terms.prediction - forward(wstar, x.transpose(), cfg);
          h.setZero();
          detail::add_sample_hessian(x.data(), res, cfg, terms, v, h);
          a.sum += h;
          a.sumsq += h.cwiseAbs2();
        }
      });
  const double nn = static_cast<double>(n_mc);
  PopulationHessian out;
  out.samples = n_mc;
  out.hessian = acc.sum / nn;
  Eigen::MatrixXd var = (acc.sumsq / nn - out.hessian.cwiseAbs2()).cwiseMax(0.0) * (nn / (nn - 1.0));
  out.entry_stderr = (var / nn).cwiseSqrt();
  detail::fill_upper(out.hessian);
  detail::fill_upper(out.entry_stderr);
  out.stderr_max = out.entry_stderr.maxCoeff();
  return out;
}

struct SpectrumReport {
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  Eigen::VectorXd eigenvalues;  // ascending
  double m0_nominal = 0.0;      // r rho(sigma_t) / (kappa^2 lambda)
  double M0_nominal = 0.0;      // t r^2 sigma_1^{2p}
  double mc_stderr = 0.0;
};

/// Max |H - H^T| entry.
inline double asymmetry(const Eigen::MatrixXd& h) { return (h - h.transpose()).cwiseAbs().maxCoeff(); }

inline Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
  return solver.eigenvalues();
}

struct NominalBounds {
  double m0 = 0.0;
  double M0 = 0.0;
};

/// Nominal Hessian bounds with every hidden constant set to 1.
inline NominalBounds nominal_bounds(const WeightMatrix& wstar, const ProblemConfig& cfg) {
  const ConditioningReport c = conditioning(wstar, cfg.activation);
  const double r = static_cast<double>(cfg.r);
  const double t = static_cast<double>(cfg.t);
  const double rho_t = moment_profile(cfg.activation, c.sigmat).rho;
  return {r * rho_t / (c.kappa * c.kappa * c.lambda),
          t * r * r * std::pow(c.sigma1, 2 * cfg.activation.homogeneity_exponent())};
}

inline SpectrumReport spectrum(const HessianMatrix& h, const WeightMatrix& wstar, const ProblemConfig& cfg,
                               double mc_stderr = 0.0) {
  if (h.rows() != h.cols() || h.rows() == 0) throw ConfigError("Hessian must be square and non-empty");
  if (static_cast<std::size_t>(h.rows()) > kMaxHessianDim) throw ConfigError("Hessian exceeds the dense limit");
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  if (asymmetry(h) > 1e-10 * scale) throw NumericalError("Hessian is not symmetric");
  SpectrumReport rep;
  rep.eigenvalues = symmetric_eigenvalues(h);
  rep.lambda_min = rep.eigenvalues(0);
  rep.lambda_max = rep.eigenvalues(rep.eigenvalues.size() - 1);
  const NominalBounds b = nominal_bounds(wstar, cfg);
  rep.m0_nominal = b.m0;
  rep.M0_nominal = b.M0;
  rep.mc_stderr = mc_stderr;
  return rep;
}

/// Stable identifier of a problem configuration.
inline std::string config_hash(const ProblemConfig& cfg) {
  const std::string key = std::to_string(cfg.d()) + "," + std::to_string(cfg.k) + "," + std::to_string(cfg.r) +
                          "," + std::to_string(cfg.t) + "," + cfg.activation.name() + "," + std::to_string(cfg.seed);
  return hex64(fnv1a64(key));
}

inline CsvTable spectrum_table() {
  return CsvTable({"config_hash", "activation", "n", "lambda_min", "lambda_max", "m0_nominal", "M0_nominal", "stderr"});
}

inline void add_spectrum_row(CsvTable& table, const ProblemConfig& cfg, std::size_t n, const SpectrumReport& rep) {
  table.add(config_hash(cfg), cfg.activation.name(), n, rep.lambda_min, rep.lambda_max, rep.m0_nominal,
            rep.M0_nominal, rep.mc_stderr);
}

struct DeviationPoint {
  std::size_t n = 0;
  double deviation = 0.0;  // spectral norm of H_emp(W*) - H_pop(W*)
  double reference_norm = 0.0;
};

/// Spectral norm of the empirical-minus-population Hessian at W* for each n. The
/// data sets are prefixes of one stream, and the population reference uses
/// `n_mc_reference` Monte-Carlo samples.
inline std::vector<DeviationPoint> hessian_deviation_curve(const WeightMatrix& wstar, const ProblemConfig& cfg,
                                                           const std::vector<std::size_t>& n_grid, std::uint64_t seed,
                                                           std::size_t n_mc_reference = 1'000'000) {
  if (!std::is_sorted(n_grid.begin(), n_grid.end())) throw ConfigError("sample-size grid must be ascending");
  const PopulationHessian ref = population_hessian_mc(wstar, wstar, cfg, n_mc_reference, mix64(seed ^ 0x5eedULL));
  const double ref_norm = symmetric_eigenvalues(ref.hessian).cwiseAbs().maxCoeff();
  std::vector<DeviationPoint> out;
  if (n_grid.empty()) return out;
  const SampleSet all = sample_dataset(wstar, cfg, n_grid.back(), seed);
  for (std::size_t n : n_grid) {
    const HessianMatrix h = hessian(wstar, all.slice(0, n), cfg);
    const double dev = symmetric_eigenvalues(h - ref.hessian).cwiseAbs().maxCoeff();
    out.push_back({n, dev, ref_norm});
  }
  return out;
}

/// Direction W* A for the antisymmetric A with A(a, b) = 1, A(b, a) = -1, vectorized
/// column-major and normalized. For the quadratic activation the prediction is
/// invariant under W -> W Q with Q orthogonal, so this is a null direction of the
/// Hessian at W*.
inline Eigen::VectorXd rotation_direction(const WeightMatrix& wstar, Eigen::Index a = 0, Eigen::Index b = 1) {
  const Eigen::Index t = wstar.cols();
  if (a == b || a < 0 || b < 0 || a >= t || b >= t) throw ConfigError("rotation direction needs two distinct kernels");
  Eigen::MatrixXd anti = Eigen::MatrixXd::Zero(t, t);
  anti(a, b) = 1.0;
  anti(b, a) = -1.0;
  const Eigen::MatrixXd dir = wstar * anti;
  return Eigen::Map<const Eigen::VectorXd>(dir.data(), dir.size()).normalized();
}

inline double rayleigh_quotient(const Eigen::MatrixXd& h, const Eigen::VectorXd& v) {
  return v.dot(h * v) / v.squaredNorm();
}

}  // namespace cnnrecover
