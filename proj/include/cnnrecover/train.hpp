#pragma once

// Plain gradient descent on the empirical risk and the full recovery pipeline:
// tensor initialization on S0 followed by T gradient steps, either on fresh
// disjoint sets S1..ST (resampling) or on the whole remaining pool.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cnnrecover/csv.hpp"
#include "cnnrecover/errors.hpp"
#include "cnnrecover/init_tensor.hpp"
#include "cnnrecover/matching.hpp"
#include "cnnrecover/model.hpp"
#include "cnnrecover/random.hpp"
#include "cnnrecover/risk.hpp"

namespace cnnrecover {

enum class InitMode { tensor, random_gaussian, given };

struct TrainConfig {
  std::optional<double> step_size;  // empty: 1 / (t r^2 sigma_1(W0)^{2p})
  std::size_t max_iters = 1000;     // T
  double tol = 1e-12;               // stop once the loss drops below this
  bool resample = false;
  std::uint64_t seed = 0;
  InitMode init = InitMode::tensor;
  std::optional<WeightMatrix> initial;  // used when init == given
  double init_scale = 1.0;              // std of the entries for random_gaussian
  // Share of |S| given to S0 for tensor initialization; 0 means 1 / (T + 1).
  double init_fraction = 0.0;
  TensorInitOptions tensor;

  void validate() const {
    if (step_size && !(*step_size > 0.0 && std::isfinite(*step_size)))
      throw ConfigError("step size must be positive and finite");
    if (max_iters < 1) throw ConfigError("iteration budget T must be at least 1");
    if (!(tol >= 0.0)) throw ConfigError("tolerance must be non-negative");
    if (!(init_fraction >= 0.0 && init_fraction < 1.0)) throw ConfigError("init_fraction must lie in [0, 1)");
    if (init == InitMode::given && !initial) throw ConfigError("init mode 'given' needs an initial matrix");
    if (!(init_scale > 0.0)) throw ConfigError("init_scale must be positive");
  }
};

struct TraceRecord {
  std::size_t iter = 0;
  double loss = 0.0;
  double dist = std::numeric_limits<double>::quiet_NaN();  // min-matching ||W - W*||_F, NaN without W*
  double grad_norm = 0.0;
};

struct TrainReport {
  std::vector<TraceRecord> trace;
  WeightMatrix initial_W;
  WeightMatrix final_W;
  double step_size = 0.0;
  std::size_t iterations = 0;  // gradient steps taken
  bool converged = false;
  bool aborted = false;  // non-finite loss
  bool resample = false;
  std::optional<double> rate_estimate;  // per-iteration loss contraction over the tail
  double tail_r2 = std::numeric_limits<double>::quiet_NaN();
  std::size_t samples_consumed = 0;
  std::optional<TensorInitialization> tensor_init;
};

inline WeightMatrix gd_step(const WeightMatrix& w, const SampleSet& s, double eta, const ProblemConfig& cfg) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ConfigError("step size must be non-negative and finite");
  const Eigen::MatrixXd g = gradient(w, s, cfg);
  if (!g.allFinite()) throw NumericalError("gradient has non-finite entries");
  return w - eta * g;
}

/// Fisher-Yates permutation of 0..n-1 from the partition substream.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = Rng::substream(seed, Stream::partition);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

/// m disjoint random subsets of size floor(|S| / m); the remainder is dropped.
inline std::vector<SampleSet> partition(const SampleSet& s, std::size_t m, std::uint64_t seed) {
  if (m < 1) throw ConfigError("partition needs at least one part");
  if (s.size() < m)
    throw ConfigError("cannot split " + std::to_string(s.size()) + " samples into " + std::to_string(m) + " parts");
  const std::vector<std::size_t> idx = shuffled_indices(s.size(), seed);
  const std::size_t part = s.size() / m;
  std::vector<SampleSet> out;
  out.reserve(m);
  for (std::size_t j = 0; j < m; ++j)
    out.push_back(s.select(std::vector<std::size_t>(idx.begin() + static_cast<std::ptrdiff_t>(j * part),
                                                    idx.begin() + static_cast<std::ptrdiff_t>((j + 1) * part))));
  return out;
}

inline double auto_step_size(const WeightMatrix& w0, const ProblemConfig& cfg) {
  const double s1 = singular_values(w0)(0);
  const double t = static_cast<double>(cfg.t);
  const double r = static_cast<double>(cfg.r);
  const double eta = 1.0 / (t * r * r * std::pow(s1, 2 * cfg.activation.homogeneity_exponent()));
  if (!(eta > 0.0) || !std::isfinite(eta)) throw NumericalError("automatic step size is not finite");
  return eta;
}

struct TailFit {
  double rate = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

/// Least-squares fit of log(loss) against iteration over the last `window` records
/// whose loss exceeds `floor`. Returns nothing with fewer than 3 usable points.
inline std::optional<TailFit> fit_log_tail(const std::vector<TraceRecord>& trace, std::size_t window = 50,
                                           double floor = 1e-12) {
  std::vector<std::pair<double, double>> pts;
  for (auto it = trace.rbegin(); it != trace.rend() && pts.size() < window; ++it)
    if (it->loss > floor && std::isfinite(it->loss)) pts.emplace_back(static_cast<double>(it->iter), std::log(it->loss));
  if (pts.size() < 3) return std::nullopt;
  const double n = static_cast<double>(pts.size());
  double mx = 0.0, my = 0.0;
  for (auto [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (auto [x, y] : pts) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (sxx == 0.0) return std::nullopt;
  const double slope = sxy / sxx;
  TailFit fit;
  fit.rate = std::exp(slope);
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  fit.points = pts.size();
  return fit;
}

namespace detail {

inline bool record_iteration(std::size_t q) { return q <= 1000 || q % 10 == 0; }

inline double matched_distance(const WeightMatrix& w, const WeightMatrix* wstar) {
  if (!wstar) return std::numeric_limits<double>::quiet_NaN();
  return min_matching(w, *wstar).error * wstar->norm();
}

}  // namespace detail

/// Runs initialization plus up to T = train.max_iters gradient steps on S.
///
/// With resampling, S0 takes init_fraction |S| samples (tensor init only) and the
/// rest is split into T equal sets, one per step; the recorded loss is measured on
/// the set used for the next step. Without resampling every step uses the whole
/// pool left after S0. When `wstar` is given the trace carries the min-matching
/// distance to it.
inline TrainReport learn_cnn(const SampleSet& s, const ProblemConfig& cfg, const TrainConfig& train,
                             const WeightMatrix* wstar = nullptr) {
  cfg.validate();
  train.validate();
  check_samples(s, cfg);
  if (wstar) check_weights(*wstar, cfg);
  const std::size_t T = train.max_iters;

  TrainReport report;
  report.resample = train.resample;

  const std::vector<std::size_t> order = shuffled_indices(s.size(), train.seed);
  std::size_t n0 = 0;
  if (train.init == InitMode::tensor) {
    const double frac = train.init_fraction > 0.0 ? train.init_fraction : 1.0 / static_cast<double>(T + 1);
    n0 = static_cast<std::size_t>(std::floor(frac * static_cast<double>(s.size())));
  }
  const std::size_t pool = s.size() - n0;
  if (train.resample ? pool < T : pool < 1)
    throw ConfigError("not enough samples for " + std::to_string(T) + " gradient sets after initialization");

  auto take = [&](std::size_t begin, std::size_t count) {
    return s.select(std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                             order.begin() + static_cast<std::ptrdiff_t>(begin + count)));
  };

  WeightMatrix w;
  switch (train.init) {
    case InitMode::tensor: {
      TensorInitOptions opts = train.tensor;
      opts.power.seed = train.seed;
      report.tensor_init = tensor_initialize(take(0, n0), cfg, opts);
      w = report.tensor_init->weights;
      break;
    }
    case InitMode::random_gaussian: {
      Rng rng = Rng::substream(train.seed, Stream::init);
      w = train.init_scale * rng.normal_matrix(static_cast<Eigen::Index>(cfg.k), static_cast<Eigen::Index>(cfg.t));
      break;
    }
    case InitMode::given:
      check_weights(*train.initial, cfg);
      w = *train.initial;
      break;
  }
  report.initial_W = w;
  report.step_size = train.step_size ? *train.step_size : auto_step_size(w, cfg);
  report.samples_consumed = n0;

  const std::size_t batch = train.resample ? pool / T : pool;
  const SampleSet full_pool = train.resample ? SampleSet{} : take(n0, pool);
  auto batch_for = [&](std::size_t step) {  // step in [0, T)
    return take(n0 + step * batch, batch);
  };

  for (std::size_t q = 0;; ++q) {
    const SampleSet current = train.resample ? batch_for(std::min(q, T - 1)) : SampleSet{};
    const SampleSet& set = train.resample ? current : full_pool;
    if (train.resample && q < T) report.samples_consumed += batch;
    if (!train.resample && q == 0) report.samples_consumed += pool;

    const LossAndGradient lg = loss_and_gradient(w, set, cfg);
    const bool finite = std::isfinite(lg.loss) && lg.gradient.allFinite();
    const bool done = !finite || lg.loss < train.tol || q == T;
    if (detail::record_iteration(q) || done)
      report.trace.push_back({q, lg.loss, detail::matched_distance(w, wstar), finite ? lg.gradient.norm() : lg.loss});
    if (!finite) {
      report.aborted = true;
      break;
    }
    if (lg.loss < train.tol) {
      report.converged = true;
      break;
    }
    if (q == T) break;
    w -= report.step_size * lg.gradient;
    report.iterations = q + 1;
  }
  report.final_W = w;
  if (auto fit = fit_log_tail(report.trace)) {
    report.rate_estimate = fit->rate;
    report.tail_r2 = fit->r2;
  }
  return report;
}

struct ContractionResult {
  double ratio = 0.0;  // ||W~ - W*||^2 / ||Wnear - W*||^2
  double bound = 0.0;  // 1 - m0 / M0 (nominal)
  double step_size = 0.0;
};

/// One gradient step of size 1/M0 (nominal, from W*) starting at Wnear.
inline ContractionResult contraction_check(const WeightMatrix& wnear, const WeightMatrix& wstar, const SampleSet& s,
                                           const ProblemConfig& cfg) {
  check_weights(wnear, cfg);
  check_weights(wstar, cfg);
  const NominalBounds b = nominal_bounds(wstar, cfg);
  ContractionResult out;
  out.step_size = 1.0 / b.M0;
  out.bound = 1.0 - b.m0 / b.M0;
  const double before = (wnear - wstar).squaredNorm();
  if (before == 0.0) return out;
  const WeightMatrix next = gd_step(wnear, s, out.step_size, cfg);
  out.ratio = (next - wstar).squaredNorm() / before;
  return out;
}

inline std::string trace_csv(const TrainReport& report) {
  CsvTable table({"iter", "loss", "dist_to_Wstar", "grad_norm"});
  for (const auto& rec : report.trace) table.add(rec.iter, rec.loss, rec.dist, rec.grad_norm);
  return table.str();
}

inline std::string final_weights_csv(const TrainReport& report) { return matrix_csv(report.final_W); }

}  // namespace cnnrecover
