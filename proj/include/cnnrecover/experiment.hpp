#pragma once

// Experiment harness behind the cnn-recover subcommands. Every command is a pure
// function of its configuration and returns the files it would write; the caller
// decides where they go.
//
// Config files are flat key = value text under a single [experiment] header:
//
//   [experiment]
//   activations  = relu, squared_relu       # comma-separated lists
//   sample_sizes = 1e2, 1e3, 1e4
//   resample     = both                     # true | false | both
//
// '#' starts a comment. Unknown keys, repeated keys and keys before the header are errors.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cnnrecover/activation.hpp"
#include "cnnrecover/csv.hpp"
#include "cnnrecover/errors.hpp"
#include "cnnrecover/matching.hpp"
#include "cnnrecover/model.hpp"
#include "cnnrecover/risk.hpp"
#include "cnnrecover/svg.hpp"
#include "cnnrecover/train.hpp"

namespace cnnrecover {

struct ExperimentConfig {
  std::optional<std::vector<Activation>> activations;
  std::optional<std::size_t> d, k, r, t;
  std::optional<double> kappa;
  std::optional<std::vector<std::size_t>> sample_sizes;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<std::uint64_t> seed;
  std::optional<double> step_size;
  std::optional<std::size_t> iterations;
  std::optional<std::string> resample;
  std::optional<std::string> output_dir;
  std::optional<std::size_t> n;
  std::optional<std::size_t> n_mc;
  std::optional<double> tol;
  std::optional<double> init_fraction;
  std::optional<std::vector<double>> sigmas;
  std::optional<std::size_t> instances;

  std::uint64_t master_seed() const { return seed.value_or(1); }
  double kappa_or_default() const { return kappa.value_or(2.0); }

  /// Geometry with defaults k = 5, r = 2, t = 2; d, when given, must equal r k.
  ProblemConfig problem(const Activation& act) const {
    const std::size_t kk = k.value_or(d && r && *r > 0 ? *d / *r : 5);
    const std::size_t rr = r.value_or(d && kk > 0 ? *d / kk : 2);
    return ProblemConfig::make(d.value_or(rr * kk), kk, rr, t.value_or(2), act, master_seed());
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty entry in list '" + v + "'");
    out.push_back(item);
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(x)) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + v + "' is not a number");
  }
}

// Counts accept scientific notation ("1e5") as long as the value is a whole number.
inline std::size_t parse_count(const std::string& key, const std::string& v) {
  const double x = parse_real(key, v);
  if (x < 0.0 || x != std::floor(x) || x > 1e15) throw ConfigError("key '" + key + "': '" + v + "' is not a count");
  return static_cast<std::size_t>(x);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    const unsigned long long x = std::stoull(v, &used, 0);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': '" + v + "' is not an unsigned 64-bit integer");
  }
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const std::string& text) {
  using namespace detail;
  ExperimentConfig cfg;
  std::set<std::string> seen;
  bool in_section = false;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line != "[experiment]") throw ConfigError(where + "unknown section " + line);
      if (in_section) throw ConfigError(where + "repeated [experiment] section");
      in_section = true;
      continue;
    }
    if (!in_section) throw ConfigError(where + "key outside the [experiment] section");
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty()) throw ConfigError(where + "key '" + key + "' has no value");
    if (!seen.insert(key).second) throw ConfigError(where + "repeated key '" + key + "'");
    try {
      if (key == "activations" || key == "activation") {
        std::vector<Activation> acts;
        for (const auto& name : split_list(value)) acts.push_back(Activation::parse(name));
        cfg.activations = acts;
      } else if (key == "d") cfg.d = parse_count(key, value);
      else if (key == "k") cfg.k = parse_count(key, value);
      else if (key == "r") cfg.r = parse_count(key, value);
      else if (key == "t") cfg.t = parse_count(key, value);
      else if (key == "kappa") cfg.kappa = parse_real(key, value);
      else if (key == "sample_sizes") {
        std::vector<std::size_t> ns;
        for (const auto& v : split_list(value)) ns.push_back(parse_count(key, v));
        cfg.sample_sizes = ns;
      } else if (key == "seeds") {
        std::vector<std::uint64_t> ss;
        for (const auto& v : split_list(value)) ss.push_back(parse_u64(key, v));
        cfg.seeds = ss;
      } else if (key == "seed") cfg.seed = parse_u64(key, value);
      else if (key == "step_size") {
        if (value != "auto") cfg.step_size = parse_real(key, value);
      } else if (key == "iterations" || key == "T") cfg.iterations = parse_count(key, value);
      else if (key == "resample") {
        if (value != "true" && value != "false" && value != "both")
          throw ConfigError("key 'resample' must be true, false or both");
        cfg.resample = value;
      } else if (key == "output_dir") cfg.output_dir = value;
      else if (key == "n") cfg.n = parse_count(key, value);
      else if (key == "n_mc") cfg.n_mc = parse_count(key, value);
      else if (key == "tol") cfg.tol = parse_real(key, value);
      else if (key == "init_fraction") cfg.init_fraction = parse_real(key, value);
      else if (key == "sigmas") {
        std::vector<double> s;
        for (const auto& v : split_list(value)) s.push_back(parse_real(key, v));
        cfg.sigmas = s;
      } else if (key == "instances") cfg.instances = parse_count(key, value);
      else throw ConfigError("unknown key '" + key + "'");
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  if (!in_section) throw ConfigError("missing [experiment] section");
  if (cfg.kappa && !(*cfg.kappa >= 1.0)) throw ConfigError("kappa must be at least 1");
  if (cfg.sigmas)
    for (double s : *cfg.sigmas)
      if (!(s > 0.0)) throw ConfigError("sigmas must be positive");
  if (cfg.sample_sizes)
    for (std::size_t n : *cfg.sample_sizes)
      if (n < 1) throw ConfigError("sample sizes must be positive");
  if (cfg.step_size && !(*cfg.step_size > 0.0)) throw ConfigError("step_size must be positive");
  cfg.problem(cfg.activations ? cfg.activations->front() : Activation(ActivationKind::relu));
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

struct CommandResult {
  std::vector<std::pair<std::string, std::string>> files;  // name, contents; written in this order
  std::vector<std::string> log;                            // human-readable notes (stderr)
  int exit_code = 0;

  const std::string& file(const std::string& name) const {
    for (const auto& [n, c] : files)
      if (n == name) return c;
    throw ConfigError("command produced no file '" + name + "'");
  }
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline std::vector<std::size_t> checked_grid(const ExperimentConfig& cfg) {
  std::vector<std::size_t> grid = cfg.sample_sizes.value_or(std::vector<std::size_t>{100, 1000, 10000, 100000});
  if (!std::is_sorted(grid.begin(), grid.end())) throw ConfigError("sample_sizes must be ascending");
  return grid;
}

inline Activation single_activation(const ExperimentConfig& cfg, ActivationKind fallback) {
  if (!cfg.activations) return Activation(fallback);
  if (cfg.activations->size() != 1) throw ConfigError("this command takes exactly one activation");
  return cfg.activations->front();
}

}  // namespace detail

/// Minimum Hessian eigenvalue at W* against the sample size, per activation, with a
/// Monte-Carlo population reference (n_mc = 0 disables it).
inline CommandResult cmd_fig_a(const ExperimentConfig& cfg) {
  const detail::Stopwatch clock;
  const std::vector<Activation> acts = cfg.activations.value_or(std::vector<Activation>{
      Activation(ActivationKind::relu), Activation(ActivationKind::squared_relu), Activation(ActivationKind::sigmoid),
      Activation(ActivationKind::quadratic)});
  const std::vector<std::size_t> grid = detail::checked_grid(cfg);
  const std::size_t n_mc = cfg.n_mc.value_or(1'000'000);
  const std::uint64_t seed = cfg.master_seed();

  CsvTable table({"activation", "n", "lambda_min", "lambda_max", "population_lambda_min", "population_stderr",
                  "m0_nominal", "M0_nominal"});
  LinePlot plot{"Minimum Hessian eigenvalue at W*", "sample size n", "lambda_min", true, true, {}};
  for (const Activation& act : acts) {
    const ProblemConfig pc = cfg.problem(act);
    const WeightMatrix wstar = make_ground_truth(pc.k, pc.t, cfg.kappa_or_default(), seed);
    double pop_min = std::numeric_limits<double>::quiet_NaN();
    double pop_err = std::numeric_limits<double>::quiet_NaN();
    if (n_mc > 0) {
      const PopulationHessian pop = population_hessian_mc(wstar, wstar, pc, n_mc, mix64(seed ^ 0x5eedULL));
      pop_min = symmetric_eigenvalues(pop.hessian)(0);
      pop_err = pop.stderr_max;
    }
    const SampleSet all = sample_dataset(wstar, pc, grid.back(), seed);
    PlotSeries series{act.name(), {}, {}};
    for (std::size_t n : grid) {
      const SpectrumReport rep = spectrum(hessian(wstar, all.slice(0, n), pc), wstar, pc, pop_err);
      table.add(act.name(), n, rep.lambda_min, rep.lambda_max, pop_min, pop_err, rep.m0_nominal, rep.M0_nominal);
      series.x.push_back(static_cast<double>(n));
      series.y.push_back(rep.lambda_min);
    }
    plot.series.push_back(std::move(series));
  }
  CommandResult out;
  out.files.emplace_back("fig_a.csv", table.str());
  out.files.emplace_back("fig_a.svg", render_svg(plot));
  out.log.push_back("fig-a: " + std::to_string(acts.size()) + " activations x " + std::to_string(grid.size()) +
                    " sample sizes in " + format_number(clock.seconds()) + " s");
  return out;
}

/// Gradient descent from Gaussian random initializations on one fixed data set,
/// one trace per entry of `seeds`.
inline CommandResult cmd_fig_b(const ExperimentConfig& cfg) {
  const detail::Stopwatch clock;
  const Activation act = detail::single_activation(cfg, ActivationKind::squared_relu);
  const ProblemConfig pc = cfg.problem(act);
  const std::uint64_t seed = cfg.master_seed();
  const WeightMatrix wstar = make_ground_truth(pc.k, pc.t, cfg.kappa_or_default(), seed);
  const SampleSet data = sample_dataset(wstar, pc, cfg.n.value_or(1000), seed);
  const std::vector<std::uint64_t> seeds = cfg.seeds.value_or(std::vector<std::uint64_t>{1, 2, 3, 4, 5});
  if (cfg.resample && *cfg.resample != "false") throw ConfigError("fig-b runs without resampling");

  TrainConfig tc;
  tc.step_size = cfg.step_size.value_or(0.01);
  tc.max_iters = cfg.iterations.value_or(10000);
  tc.tol = cfg.tol.value_or(1e-12);
  tc.init = InitMode::random_gaussian;
  tc.resample = false;

  std::vector<TrainReport> reports;
  for (std::uint64_t s : seeds) {
    tc.seed = s;
    reports.push_back(learn_cnn(data, pc, tc, &wstar));
  }

  std::vector<std::string> header{"iter"};
  for (std::uint64_t s : seeds) header.push_back("loss_seed_" + std::to_string(s));
  CsvTable traces(header);
  std::set<std::size_t> iters;
  for (const auto& rep : reports)
    for (const auto& rec : rep.trace) iters.insert(rec.iter);
  std::vector<std::size_t> cursor(reports.size(), 0);
  for (std::size_t it : iters) {
    std::vector<std::string> row{std::to_string(it)};
    for (std::size_t j = 0; j < reports.size(); ++j) {
      const auto& tr = reports[j].trace;
      if (cursor[j] < tr.size() && tr[cursor[j]].iter == it) row.push_back(format_number(tr[cursor[j]++].loss));
      else row.emplace_back();
    }
    traces.add_row(std::move(row));
  }

  CsvTable summary({"seed", "converged", "iterations", "final_loss", "final_dist", "tail_rate", "tail_r2", "step_size"});
  LinePlot plot{"Gradient descent from random initializations", "iteration", "empirical risk", false, true, {}};
  for (std::size_t j = 0; j < reports.size(); ++j) {
    const auto& rep = reports[j];
    const auto& last = rep.trace.back();
    summary.add(seeds[j], rep.converged, rep.iterations, last.loss, last.dist,
                rep.rate_estimate.value_or(std::numeric_limits<double>::quiet_NaN()), rep.tail_r2, rep.step_size);
    PlotSeries series{"seed " + std::to_string(seeds[j]), {}, {}};
    for (const auto& rec : rep.trace) {
      series.x.push_back(static_cast<double>(rec.iter));
      series.y.push_back(rec.loss);
    }
    plot.series.push_back(std::move(series));
  }
  CommandResult out;
  out.files.emplace_back("fig_b_traces.csv", traces.str());
  out.files.emplace_back("fig_b_summary.csv", summary.str());
  out.files.emplace_back("fig_b.svg", render_svg(plot));
  out.log.push_back("fig-b: " + std::to_string(seeds.size()) + " runs in " + format_number(clock.seconds()) + " s");
  return out;
}

/// Tensor initialization followed by gradient descent, per seed and resampling mode.
inline CommandResult cmd_pipeline(const ExperimentConfig& cfg) {
  const Activation act = detail::single_activation(cfg, ActivationKind::squared_relu);
  const ProblemConfig pc = cfg.problem(act);
  const WeightMatrix wstar = make_ground_truth(pc.k, pc.t, cfg.kappa_or_default(), cfg.master_seed());
  const std::size_t n = cfg.n.value_or(200000);
  const std::vector<std::uint64_t> seeds = cfg.seeds.value_or(std::vector<std::uint64_t>{cfg.master_seed()});
  const std::string mode = cfg.resample.value_or("true");
  std::vector<bool> modes;
  if (mode != "false") modes.push_back(true);
  if (mode != "true") modes.push_back(false);

  TrainConfig tc;
  tc.step_size = cfg.step_size;
  tc.max_iters = cfg.iterations.value_or(500);
  tc.tol = cfg.tol.value_or(1e-12);
  tc.init = InitMode::tensor;
  tc.init_fraction = cfg.init_fraction.value_or(0.0);

  CsvTable table({"seed", "mode", "n", "T", "init_samples", "init_error", "final_error", "iterations", "converged",
                  "final_loss", "step_size", "decomposition_residual", "signs_confident"});
  CommandResult out;
  std::vector<std::pair<std::string, std::string>> extra;
  for (std::uint64_t s : seeds) {
    const SampleSet data = sample_dataset(wstar, pc, n, s);
    for (bool resample : modes) {
      const detail::Stopwatch clock;
      tc.resample = resample;
      tc.seed = s;
      const TrainReport rep = learn_cnn(data, pc, tc, &wstar);
      const std::string tag = std::string(resample ? "resample" : "pool");
      const auto& ti = *rep.tensor_init;
      const bool confident =
          std::all_of(ti.magnitudes.sign_confident.begin(), ti.magnitudes.sign_confident.end(), [](bool b) { return b; });
      table.add(s, tag, n, tc.max_iters, ti.moments.n_used, min_matching_error(rep.initial_W, wstar),
                min_matching_error(rep.final_W, wstar), rep.iterations, rep.converged, rep.trace.back().loss,
                rep.step_size, ti.decomposition.residual, confident);
      const std::string stem = "pipeline_seed" + std::to_string(s) + "_" + tag;
      extra.emplace_back(stem + "_trace.csv", trace_csv(rep));
      extra.emplace_back(stem + "_final_W.csv", final_weights_csv(rep));
      extra.emplace_back(stem + "_init_W.csv", matrix_csv(rep.initial_W));
      extra.emplace_back(stem + "_decomposition.csv", decomposition_csv(ti.decomposition, &ti.magnitudes));
      for (const auto& w : ti.decomposition.warnings) out.log.push_back("pipeline: warning: " + w);
      out.log.push_back("pipeline: seed " + std::to_string(s) + " " + tag + ": final error " +
                        format_number(min_matching_error(rep.final_W, wstar)) + ", wall time " +
                        format_number(clock.seconds()) + " s");
    }
  }
  out.files.emplace_back("pipeline.csv", table.str());
  for (auto& f : extra) out.files.push_back(std::move(f));
  return out;
}

/// alpha/beta/rho per activation and scale, closed forms beside quadrature.
inline CommandResult cmd_moments_table(const ExperimentConfig& cfg) {
  const std::vector<Activation> acts = cfg.activations.value_or(all_activations());
  const std::vector<double> sigmas = cfg.sigmas.value_or(std::vector<double>{0.1, 0.5, 1.0, 2.0, 10.0});
  CsvTable table({"activation", "sigma", "quantity", "closed_form", "quadrature", "abs_diff"});
  for (const Activation& act : acts)
    for (double sigma : sigmas) {
      const MomentProfile q = quadrature_profile(act, sigma);
      const std::optional<ClosedFormMoments> cf = closed_form_moments(act, sigma);
      std::optional<MomentProfile> c;
      if (cf) {
        c = q;
        c->alpha0 = cf->alpha0;
        c->alpha1 = cf->alpha1;
        c->alpha2 = cf->alpha2;
        c->beta0 = cf->beta0;
        c->beta2 = cf->beta2;
        c->rho = rho_from(*c);
      }
      auto row = [&](const char* name, double qv, std::optional<double> cv) {
        table.add(act.name(), sigma, name, cv ? format_number(*cv) : std::string(), qv,
                  cv ? format_number(std::abs(*cv - qv)) : std::string());
      };
      auto opt = [&](double MomentProfile::*field) -> std::optional<double> {
        if (!c) return std::nullopt;
        return (*c).*field;
      };
      row("alpha0", q.alpha0, opt(&MomentProfile::alpha0));
      row("alpha1", q.alpha1, opt(&MomentProfile::alpha1));
      row("alpha2", q.alpha2, opt(&MomentProfile::alpha2));
      row("beta0", q.beta0, opt(&MomentProfile::beta0));
      row("beta2", q.beta2, opt(&MomentProfile::beta2));
      row("rho", q.rho, opt(&MomentProfile::rho));
      row("rho_hat", rho_hat_from(q), c ? std::optional<double>(rho_hat_from(*c)) : std::nullopt);
    }
  CommandResult out;
  out.files.emplace_back("moments_table.csv", table.str());
  return out;
}

struct DerivativeCheck {
  std::string activation;
  std::size_t instance = 0;
  double gradient_error = 0.0;
  std::optional<double> hessian_error;  // empty when skipped
  bool gradient_pass = false;
  bool hessian_pass = false;
  std::string note;
};

inline constexpr double kGradientTolerance = 1e-5;
inline constexpr double kHessianTolerance = 1e-4;

namespace detail {

// max |a - b| / max |b|, or max |a| when b vanishes.
inline double relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& fd) {
  const double scale = fd.cwiseAbs().maxCoeff();
  const double diff = (analytic - fd).cwiseAbs().maxCoeff();
  return scale > 0.0 ? diff / scale : diff;
}

inline double min_abs_preactivation(const WeightMatrix& w, const SampleSet& s, const ProblemConfig& cfg) {
  double m = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < s.inputs.rows(); ++i)
    m = std::min(m, preactivations(w, s.inputs.row(i).transpose(), cfg).cwiseAbs().minCoeff());
  return m;
}

}  // namespace detail

/// Central finite differences of the empirical risk (gradient) and of the analytic
/// gradient (Hessian) at a random point. Kinked activations, and squared_relu whose
/// second derivative jumps at 0, are only evaluated at points whose pre-activations
/// all stay at least 1e-3 away from 0.
inline DerivativeCheck check_derivatives_at(const Activation& act, const ProblemConfig& pc, double kappa,
                                            std::size_t n, std::uint64_t seed, std::size_t instance) {
  constexpr double h = 1e-5;
  constexpr double kKinkMargin = 1e-3;
  DerivativeCheck out;
  out.activation = act.name();
  out.instance = instance;
  const std::uint64_t inst_seed = mix64(seed + 0x9e3779b97f4a7c15ULL * (instance + 1));
  const WeightMatrix wstar = make_ground_truth(pc.k, pc.t, kappa, inst_seed);
  const SampleSet s = sample_dataset(wstar, pc, n, inst_seed);
  const bool kinked = !act.kinks().empty() || act.kind() == ActivationKind::squared_relu;

  WeightMatrix w;
  for (std::size_t attempt = 0;; ++attempt) {
    if (attempt == 1000) throw NumericalError("could not place a derivative-check point away from kinks");
    Rng rng = Rng::substream(inst_seed, Stream::perturbation, attempt);
    w = rng.normal_matrix(static_cast<Eigen::Index>(pc.k), static_cast<Eigen::Index>(pc.t));
    if (!kinked || detail::min_abs_preactivation(w, s, pc) > kKinkMargin) break;
  }

  const Eigen::MatrixXd g = gradient(w, s, pc);
  Eigen::MatrixXd g_fd(g.rows(), g.cols());
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index a = 0; a < w.rows(); ++a) {
      WeightMatrix wp = w, wm = w;
      wp(a, j) += h;
      wm(a, j) -= h;
      g_fd(a, j) = (empirical_risk(wp, s, pc) - empirical_risk(wm, s, pc)) / (2 * h);
    }
  out.gradient_error = detail::relative_error(g, g_fd);
  out.gradient_pass = out.gradient_error < kGradientTolerance;

  if (act.smoothness() == Smoothness::piecewise_linear) {
    out.hessian_pass = true;
    out.note = "hessian skipped: piecewise-linear activation";
    return out;
  }
  const HessianMatrix hess = hessian(w, s, pc);
  Eigen::MatrixXd h_fd(hess.rows(), hess.cols());
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index a = 0; a < w.rows(); ++a) {
      WeightMatrix wp = w, wm = w;
      wp(a, j) += h;
      wm(a, j) -= h;
      const Eigen::MatrixXd dg = (gradient(wp, s, pc) - gradient(wm, s, pc)) / (2 * h);
      h_fd.col(j * w.rows() + a) = Eigen::Map<const Eigen::VectorXd>(dg.data(), dg.size());
    }
  out.hessian_error = detail::relative_error(hess, h_fd);
  out.hessian_pass = *out.hessian_error < kHessianTolerance;
  return out;
}

inline CommandResult cmd_check_derivatives(const ExperimentConfig& cfg) {
  const std::vector<Activation> acts = cfg.activations.value_or(
      std::vector<Activation>{Activation(ActivationKind::squared_relu), Activation(ActivationKind::sigmoid)});
  const std::size_t instances = cfg.instances.value_or(10);
  const std::size_t n = cfg.n.value_or(200);
  CsvTable table({"activation", "instance", "gradient_rel_error", "hessian_rel_error", "gradient_pass",
                  "hessian_pass", "note"});
  CommandResult out;
  bool all_pass = true;
  for (const Activation& act : acts) {
    const ProblemConfig pc = cfg.problem(act);
    for (std::size_t i = 0; i < instances; ++i) {
      const DerivativeCheck c = check_derivatives_at(act, pc, cfg.kappa_or_default(), n, cfg.master_seed(), i);
      table.add(c.activation, c.instance, c.gradient_error,
                c.hessian_error ? format_number(*c.hessian_error) : std::string(), c.gradient_pass, c.hessian_pass,
                c.note);
      if (!c.gradient_pass || !c.hessian_pass) {
        all_pass = false;
        out.log.push_back("check-derivatives: FAIL " + c.activation + " instance " + std::to_string(i));
      }
    }
    if (act.smoothness() == Smoothness::piecewise_linear)
      out.log.push_back("check-derivatives: " + act.name() + ": Hessian check skipped (piecewise linear)");
  }
  out.files.emplace_back("check_derivatives.csv", table.str());
  out.exit_code = all_pass ? 0 : 4;
  out.log.push_back(all_pass ? "check-derivatives: all checks passed" : "check-derivatives: failures found");
  return out;
}

inline CommandResult run_command(const std::string& name, const ExperimentConfig& cfg) {
  if (name == "fig-a") return cmd_fig_a(cfg);
  if (name == "fig-b") return cmd_fig_b(cfg);
  if (name == "pipeline") return cmd_pipeline(cfg);
  if (name == "moments-table") return cmd_moments_table(cfg);
  if (name == "check-derivatives") return cmd_check_derivatives(cfg);
  throw ConfigError("unknown command '" + name + "'");
}

}  // namespace cnnrecover
