#pragma once

// The planted one-hidden-layer non-overlapping CNN:
//
//   y = sum_{j=1..t} sum_{i=1..r} phi(w_j^T x_i),   x ~ N(0, I_d),
//
// where x_i is the i-th contiguous k-block of x (d = r k) and w_j is column j of
// the k x t weight matrix. Patches are index arithmetic, never matrices.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cnnrecover/activation.hpp"
#include "cnnrecover/errors.hpp"
#include "cnnrecover/parallel.hpp"
#include "cnnrecover/random.hpp"

namespace cnnrecover {

using WeightMatrix = Eigen::MatrixXd;  // k x t, column j is kernel w_j
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ProblemConfig {
  std::size_t k = 1;  // patch / kernel size
  std::size_t r = 1;  // number of patches
  std::size_t t = 1;  // number of kernels
  Activation activation{ActivationKind::relu};
  std::uint64_t seed = 0;

  std::size_t d() const { return r * k; }

  /// Builds a config from (d, k, r, t), checking d = r k.
  static ProblemConfig make(std::size_t d, std::size_t k, std::size_t r, std::size_t t, Activation act,
                            std::uint64_t seed = 0) {
    ProblemConfig cfg{k, r, t, act, seed};
    if (d != r * k)
      throw ConfigError("d = " + std::to_string(d) + " must equal r*k = " + std::to_string(r * k));
    cfg.validate();
    return cfg;
  }

  void validate() const {
    if (k < 1 || r < 1 || t < 1) throw ConfigError("k, r and t must all be at least 1");
    if (t > k) throw ConfigError("number of kernels t must not exceed patch size k");
  }
};

inline void check_weights(const WeightMatrix& w, const ProblemConfig& cfg) {
  if (static_cast<std::size_t>(w.rows()) != cfg.k || static_cast<std::size_t>(w.cols()) != cfg.t)
    throw ConfigError("weight matrix is " + std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                      ", expected " + std::to_string(cfg.k) + "x" + std::to_string(cfg.t));
}

/// Patch i (0-based) of x: entries [i k, (i+1) k).
template <class Derived>
auto patch(const Eigen::MatrixBase<Derived>& x, std::size_t i, const ProblemConfig& cfg) {
  if (i >= cfg.r) throw ConfigError("patch index " + std::to_string(i) + " out of range [0, r)");
  if (static_cast<std::size_t>(x.size()) != cfg.d()) throw ConfigError("input has wrong dimension");
  return x.segment(static_cast<Eigen::Index>(i * cfg.k), static_cast<Eigen::Index>(cfg.k));
}

/// Pre-activations z(j, i) = w_j^T x_i for one input; x viewed as k x r, column i = patch i.
inline Eigen::MatrixXd preactivations(const WeightMatrix& w, Eigen::Ref<const Eigen::VectorXd> x,
                                      const ProblemConfig& cfg) {
  Eigen::Map<const Eigen::MatrixXd> patches(x.data(), static_cast<Eigen::Index>(cfg.k),
                                            static_cast<Eigen::Index>(cfg.r));
  return w.transpose() * patches;
}

inline double forward(const WeightMatrix& w, Eigen::Ref<const Eigen::VectorXd> x, const ProblemConfig& cfg) {
  check_weights(w, cfg);
  if (static_cast<std::size_t>(x.size()) != cfg.d()) throw ConfigError("input has wrong dimension");
  const Eigen::MatrixXd z = preactivations(w, x, cfg);
  double y = 0.0;
  for (Eigen::Index i = 0; i < z.cols(); ++i)
    for (Eigen::Index j = 0; j < z.rows(); ++j) y += cfg.activation.value(z(j, i));
  return y;
}

/// W* = U diag(1, 1 + (kappa-1)/(t-1), ..., kappa) V^T with U, V from QR of Gaussian matrices.
inline WeightMatrix make_ground_truth(std::size_t k, std::size_t t, double kappa, std::uint64_t seed) {
  if (t < 1 || k < 1 || t > k) throw ConfigError("ground truth needs 1 <= t <= k");
  if (!(kappa >= 1.0) || !std::isfinite(kappa)) throw ConfigError("kappa must be at least 1");
  if (t == 1 && kappa != 1.0) throw ConfigError("a single kernel has kappa = 1");
  const auto kk = static_cast<Eigen::Index>(k);
  const auto tt = static_cast<Eigen::Index>(t);
  Rng rng = Rng::substream(seed, Stream::ground_truth);
  const Eigen::MatrixXd gu = rng.normal_matrix(kk, tt);
  const Eigen::MatrixXd gv = rng.normal_matrix(tt, tt);
  const Eigen::MatrixXd u = Eigen::HouseholderQR<Eigen::MatrixXd>(gu).householderQ() * Eigen::MatrixXd::Identity(kk, tt);
  const Eigen::MatrixXd v = Eigen::HouseholderQR<Eigen::MatrixXd>(gv).householderQ() * Eigen::MatrixXd::Identity(tt, tt);
  Eigen::VectorXd s(tt);
  for (Eigen::Index i = 0; i < tt; ++i) s(i) = t == 1 ? 1.0 : 1.0 + static_cast<double>(i) * (kappa - 1.0) / static_cast<double>(t - 1);
  return u * s.asDiagonal() * v.transpose();
}

struct ConditioningReport {
  double sigma1 = 0.0;
  double sigmat = 0.0;
  double kappa = 1.0;
  double lambda = 1.0;
  double tau = 0.0;
  double min_rho = 0.0;  // min of rho over [sigma_t / 2, 3 sigma_1 / 2]
};

inline Eigen::VectorXd singular_values(const WeightMatrix& w) {
  return Eigen::JacobiSVD<Eigen::MatrixXd>(w).singularValues();
}

/// kappa = s1/st, lambda = prod(s_i)/st^t, tau = (3 s1/2)^{4p} / min rho^2 over [st/2, 3 s1/2].
/// The minimum is taken on 64 interior grid points plus both endpoints.
inline ConditioningReport conditioning(const WeightMatrix& w, const Activation& act) {
  const Eigen::VectorXd s = singular_values(w);
  const Eigen::Index t = w.cols();
  if (s.size() < t || !(s(t - 1) > 1e-12 * s(0)) || !std::isfinite(s(0)))
    throw NumericalError("weight matrix is rank deficient");
  ConditioningReport rep;
  rep.sigma1 = s(0);
  rep.sigmat = s(t - 1);
  rep.kappa = rep.sigma1 / rep.sigmat;
  double log_lambda = 0.0;
  for (Eigen::Index i = 0; i < t; ++i) log_lambda += std::log(s(i) / rep.sigmat);
  rep.lambda = std::exp(log_lambda);
  const double lo = rep.sigmat / 2.0;
  const double hi = 1.5 * rep.sigma1;
  double min_rho = std::numeric_limits<double>::infinity();
  constexpr int kGrid = 64;
  for (int i = 0; i <= kGrid + 1; ++i) {
    const double sigma = lo + (hi - lo) * static_cast<double>(i) / (kGrid + 1);
    min_rho = std::min(min_rho, moment_profile(act, sigma).rho);
  }
  rep.min_rho = min_rho;
  rep.tau = std::pow(hi, 4 * act.homogeneity_exponent()) / (min_rho * min_rho);
  return rep;
}

/// Identifies the configuration a sample set was drawn under.
struct SampleFingerprint {
  std::size_t d = 0, k = 0, r = 0, t = 0;
  std::string activation;
  std::uint64_t seed = 0;

  friend bool operator==(const SampleFingerprint&, const SampleFingerprint&) = default;
};

struct SampleSet {
  RowMatrix inputs;       // n x d, one sample per row
  Eigen::VectorXd labels; // n
  SampleFingerprint fingerprint;

  std::size_t size() const { return static_cast<std::size_t>(labels.size()); }

  /// Subset by row indices, keeping the fingerprint.
  SampleSet select(const std::vector<std::size_t>& rows) const {
    SampleSet out;
    out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
    out.labels.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(static_cast<Eigen::Index>(rows[i]));
      out.labels(static_cast<Eigen::Index>(i)) = labels(static_cast<Eigen::Index>(rows[i]));
    }
    out.fingerprint = fingerprint;
    return out;
  }

  /// Contiguous slice [begin, begin + count).
  SampleSet slice(std::size_t begin, std::size_t count) const {
    SampleSet out;
    out.inputs = inputs.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
    out.labels = labels.segment(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
    out.fingerprint = fingerprint;
    return out;
  }
};

inline void check_samples(const SampleSet& s, const ProblemConfig& cfg) {
  if (s.size() == 0) throw ConfigError("sample set is empty");
  if (static_cast<std::size_t>(s.inputs.cols()) != cfg.d() || s.inputs.rows() != s.labels.size())
    throw ConfigError("sample set dimensions do not match the configuration");
}

/// Draws one standard Gaussian input; sample i always comes from substream i.
inline void draw_input(std::uint64_t seed, std::size_t index, Eigen::Ref<Eigen::RowVectorXd> row) {
  Rng rng = Rng::substream(seed, Stream::data, index);
  for (Eigen::Index j = 0; j < row.size(); ++j) row(j) = rng.normal();
}

/// n i.i.d. samples from the planted model with noiseless labels.
inline SampleSet sample_dataset(const WeightMatrix& wstar, const ProblemConfig& cfg, std::size_t n,
                                std::uint64_t seed) {
  cfg.validate();
  check_weights(wstar, cfg);
  if (n < 1) throw ConfigError("sample count must be at least 1");
  SampleSet s;
  s.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.d()));
  s.labels.resize(static_cast<Eigen::Index>(n));
  struct Nothing {
    Nothing& operator+=(const Nothing&) { return *this; }
  };
  chunked_reduce(
      n, [] { return Nothing{}; },
      [&](std::size_t begin, std::size_t end, Nothing&) {
        for (std::size_t i = begin; i < end; ++i) {
          const auto row = static_cast<Eigen::Index>(i);
          draw_input(seed, i, s.inputs.row(row));
          s.labels(row) = forward(wstar, s.inputs.row(row).transpose(), cfg);
        }
      });
  s.fingerprint = {cfg.d(), cfg.k, cfg.r, cfg.t, cfg.activation.name(), seed};
  return s;
}

}  // namespace cnnrecover
