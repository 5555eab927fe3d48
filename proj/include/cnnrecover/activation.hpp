#pragma once

// Activation functions and their Gaussian moment functionals.
//
// For a scale sigma > 0 and z ~ N(0, 1):
//   alpha_q(sigma) = E[phi'(sigma z) z^q],    q = 0, 1, 2
//   beta_q(sigma)  = E[phi'(sigma z)^2 z^q],  q = 0, 2
//   gamma_j(sigma) = E[phi(sigma z) z^j],     j = 0..3
//   rho(sigma)     = min{beta0 - alpha0^2 - alpha1^2, beta2 - alpha1^2 - alpha2^2,
//                        alpha0 alpha2 - alpha1^2, alpha0^2}
// rho > 0 is the condition under which the population Hessian at the planted
// weights is positive definite.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cnnrecover/errors.hpp"
#include "cnnrecover/quadrature.hpp"

namespace cnnrecover {

enum class ActivationKind { relu, leaky_relu, squared_relu, sigmoid, tanh, erf, quadratic, linear };

enum class Smoothness {
  smooth,            // |phi''| <= L2 everywhere
  piecewise_linear,  // phi'' = 0 away from finitely many kinks
};

class Activation {
 public:
  static constexpr double kDefaultLeakySlope = 0.01;

  constexpr explicit Activation(ActivationKind kind, double slope = kDefaultLeakySlope)
      : kind_(kind), slope_(slope) {}

  /// Accepts the stable lowercase names; leaky_relu optionally takes a slope as
  /// "leaky_relu:0.05".
  static Activation parse(std::string_view name) {
    std::string_view base = name;
    std::optional<double> slope;
    if (auto colon = name.find(':'); colon != std::string_view::npos) {
      base = name.substr(0, colon);
      const std::string arg(name.substr(colon + 1));
      try {
        std::size_t used = 0;
        slope = std::stod(arg, &used);
        if (used != arg.size()) throw std::invalid_argument(arg);
      } catch (const std::exception&) {
        throw ConfigError("bad activation parameter in '" + std::string(name) + "'");
      }
    }
    static constexpr std::array<std::pair<std::string_view, ActivationKind>, 8> kNames{{
        {"relu", ActivationKind::relu},
        {"leaky_relu", ActivationKind::leaky_relu},
        {"squared_relu", ActivationKind::squared_relu},
        {"sigmoid", ActivationKind::sigmoid},
        {"tanh", ActivationKind::tanh},
        {"erf", ActivationKind::erf},
        {"quadratic", ActivationKind::quadratic},
        {"linear", ActivationKind::linear},
    }};
    for (const auto& [n, kind] : kNames) {
      if (n != base) continue;
      if (slope && kind != ActivationKind::leaky_relu)
        throw ConfigError("activation '" + std::string(base) + "' takes no parameter");
      if (slope && !(*slope >= 0.0 && *slope < 1.0)) throw ConfigError("leaky_relu slope must lie in [0, 1)");
      return Activation(kind, slope.value_or(kDefaultLeakySlope));
    }
    throw ConfigError("unknown activation '" + std::string(name) + "'");
  }

  ActivationKind kind() const { return kind_; }
  double slope() const { return slope_; }

  std::string name() const {
    switch (kind_) {
      case ActivationKind::relu: return "relu";
      case ActivationKind::leaky_relu:
        return slope_ == kDefaultLeakySlope ? "leaky_relu" : "leaky_relu:" + format_slope();
      case ActivationKind::squared_relu: return "squared_relu";
      case ActivationKind::sigmoid: return "sigmoid";
      case ActivationKind::tanh: return "tanh";
      case ActivationKind::erf: return "erf";
      case ActivationKind::quadratic: return "quadratic";
      case ActivationKind::linear: return "linear";
    }
    return "unknown";
  }

  /// Exponent p in 0 <= phi'(z) <= L1 |z|^p.
  int homogeneity_exponent() const {
    switch (kind_) {
      case ActivationKind::squared_relu:
      case ActivationKind::quadratic: return 1;
      default: return 0;
    }
  }

  double l1() const {
    switch (kind_) {
      case ActivationKind::relu:
      case ActivationKind::leaky_relu:
      case ActivationKind::tanh:
      case ActivationKind::erf:
      case ActivationKind::linear: return 1.0;
      case ActivationKind::squared_relu:
      case ActivationKind::quadratic: return 2.0;
      case ActivationKind::sigmoid: return 0.25;
    }
    return 1.0;
  }

  /// sup |phi''|; absent for piecewise-linear kinds.
  std::optional<double> l2() const {
    switch (kind_) {
      case ActivationKind::relu:
      case ActivationKind::leaky_relu: return std::nullopt;
      case ActivationKind::squared_relu:
      case ActivationKind::quadratic: return 2.0;
      case ActivationKind::sigmoid: return 1.0 / (6.0 * std::sqrt(3.0));
      case ActivationKind::tanh: return 4.0 / (3.0 * std::sqrt(3.0));
      case ActivationKind::erf: return std::numbers::sqrt2 * std::exp(-0.5);
      case ActivationKind::linear: return 0.0;
    }
    return std::nullopt;
  }

  Smoothness smoothness() const {
    return kind_ == ActivationKind::relu || kind_ == ActivationKind::leaky_relu ? Smoothness::piecewise_linear
                                                                                : Smoothness::smooth;
  }

  /// Points where phi'' is undefined (piecewise-linear kinds only).
  std::vector<double> kinks() const {
    if (smoothness() == Smoothness::piecewise_linear) return {0.0};
    return {};
  }

  /// phi(c z) = c^(p+1) phi(z) for c > 0.
  bool positively_homogeneous() const {
    switch (kind_) {
      case ActivationKind::relu:
      case ActivationKind::leaky_relu:
      case ActivationKind::squared_relu:
      case ActivationKind::quadratic:
      case ActivationKind::linear: return true;
      default: return false;
    }
  }

  /// phi' is an even function.
  bool even_derivative() const {
    return kind_ == ActivationKind::sigmoid || kind_ == ActivationKind::tanh || kind_ == ActivationKind::erf;
  }

  double value(double z) const {
    switch (kind_) {
      case ActivationKind::relu: return z > 0.0 ? z : 0.0;
      case ActivationKind::leaky_relu: return z > 0.0 ? z : slope_ * z;
      case ActivationKind::squared_relu: return z > 0.0 ? z * z : 0.0;
      case ActivationKind::sigmoid: return logistic(z);
      case ActivationKind::tanh: return std::tanh(z);
      case ActivationKind::erf: return 0.5 * std::sqrt(std::numbers::pi) * std::erf(z);
      case ActivationKind::quadratic: return z * z;
      case ActivationKind::linear: return z;
    }
    return 0.0;
  }

  double derivative(double z) const {
    switch (kind_) {
      case ActivationKind::relu: return z > 0.0 ? 1.0 : 0.0;
      case ActivationKind::leaky_relu: return z > 0.0 ? 1.0 : slope_;
      case ActivationKind::squared_relu: return z > 0.0 ? 2.0 * z : 0.0;
      case ActivationKind::sigmoid: {
        const double s = logistic(z);
        return s * (1.0 - s);
      }
      case ActivationKind::tanh: {
        const double th = std::tanh(z);
        return 1.0 - th * th;
      }
      case ActivationKind::erf: return std::exp(-z * z);
      case ActivationKind::quadratic: return 2.0 * z;
      case ActivationKind::linear: return 1.0;
    }
    return 0.0;
  }

  /// phi''; zero at kinks of piecewise-linear kinds (a measure-zero set).
  double second_derivative(double z) const {
    switch (kind_) {
      case ActivationKind::relu:
      case ActivationKind::leaky_relu: return 0.0;
      case ActivationKind::squared_relu: return z > 0.0 ? 2.0 : 0.0;
      case ActivationKind::sigmoid: {
        const double s = logistic(z);
        return s * (1.0 - s) * (1.0 - 2.0 * s);
      }
      case ActivationKind::tanh: {
        const double th = std::tanh(z);
        return -2.0 * th * (1.0 - th * th);
      }
      case ActivationKind::erf: return -2.0 * z * std::exp(-z * z);
      case ActivationKind::quadratic: return 2.0;
      case ActivationKind::linear: return 0.0;
    }
    return 0.0;
  }

  double eval(double z, int order) const {
    switch (order) {
      case 0: return value(z);
      case 1: return derivative(z);
      case 2: return second_derivative(z);
      default: throw ConfigError("derivative order must be 0, 1 or 2");
    }
  }

  friend bool operator==(const Activation& a, const Activation& b) {
    return a.kind_ == b.kind_ && (a.kind_ != ActivationKind::leaky_relu || a.slope_ == b.slope_);
  }

 private:
  static double logistic(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
  }

  std::string format_slope() const {
    std::string s = std::to_string(slope_);
    while (s.size() > 1 && s.back() == '0') s.pop_back();
    return s;
  }

  ActivationKind kind_;
  double slope_;
};

inline std::vector<Activation> all_activations() {
  return {Activation(ActivationKind::relu),    Activation(ActivationKind::leaky_relu),
          Activation(ActivationKind::squared_relu), Activation(ActivationKind::sigmoid),
          Activation(ActivationKind::tanh),    Activation(ActivationKind::erf),
          Activation(ActivationKind::quadratic), Activation(ActivationKind::linear)};
}

struct MomentProfile {
  double sigma = 1.0;
  double alpha0 = 0.0, alpha1 = 0.0, alpha2 = 0.0;
  double beta0 = 0.0, beta2 = 0.0;
  double gamma0 = 0.0, gamma1 = 0.0, gamma2 = 0.0, gamma3 = 0.0;
  double rho = 0.0;
};

inline double rho_from(double a0, double a1, double a2, double b0, double b2) {
  return std::min({b0 - a0 * a0 - a1 * a1, b2 - a1 * a1 - a2 * a2, a0 * a2 - a1 * a1, a0 * a0});
}

inline double rho_from(const MomentProfile& m) {
  return rho_from(m.alpha0, m.alpha1, m.alpha2, m.beta0, m.beta2);
}

/// The two-term minimum used by the orthogonal-case lower bound.
inline double rho_hat_from(const MomentProfile& m) {
  return std::min(m.beta0 - m.alpha0 * m.alpha0 - m.alpha1 * m.alpha1,
                  m.beta2 - m.alpha1 * m.alpha1 - m.alpha2 * m.alpha2);
}

namespace detail {

inline constexpr double kQuadratureTolerance = 1e-10;

// Gaussian expectation with node doubling: 100 -> 200 nodes by default, doubling
// further (up to the cap) while the change exceeds tolerance.
template <class F>
double settled_expectation(F&& f, const char* what, double sigma) {
  double coarse = quadrature::expectation_split(f, quadrature::kDefaultNodes / 2);
  int n = quadrature::kDefaultNodes;
  for (;;) {
    const double fine = quadrature::expectation_split(f, n);
    const double change = std::abs(fine - coarse);
    if (change <= kQuadratureTolerance * (1.0 + std::abs(fine))) return fine;
    if (2 * n > quadrature::kMaxNodes) {
      throw NumericalError(std::string("quadrature for ") + what + " at sigma=" + std::to_string(sigma) +
                           " did not settle: change " + std::to_string(change) + " at " + std::to_string(n) +
                           " nodes");
    }
    coarse = fine;
    n *= 2;
  }
}

}  // namespace detail

/// All moments by quadrature (no closed forms).
inline MomentProfile quadrature_profile(const Activation& act, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("moment scale sigma must be positive");
  MomentProfile m;
  m.sigma = sigma;
  auto d1 = [&](double z) { return act.derivative(sigma * z); };
  auto f = [&](double z) { return act.value(sigma * z); };
  m.alpha0 = detail::settled_expectation([&](double z) { return d1(z); }, "alpha0", sigma);
  m.alpha1 = detail::settled_expectation([&](double z) { return d1(z) * z; }, "alpha1", sigma);
  m.alpha2 = detail::settled_expectation([&](double z) { return d1(z) * z * z; }, "alpha2", sigma);
  m.beta0 = detail::settled_expectation([&](double z) { return d1(z) * d1(z); }, "beta0", sigma);
  m.beta2 = detail::settled_expectation([&](double z) { return d1(z) * d1(z) * z * z; }, "beta2", sigma);
  m.gamma0 = detail::settled_expectation([&](double z) { return f(z); }, "gamma0", sigma);
  m.gamma1 = detail::settled_expectation([&](double z) { return f(z) * z; }, "gamma1", sigma);
  m.gamma2 = detail::settled_expectation([&](double z) { return f(z) * z * z; }, "gamma2", sigma);
  m.gamma3 = detail::settled_expectation([&](double z) { return f(z) * z * z * z; }, "gamma3", sigma);
  m.rho = rho_from(m);
  return m;
}

/// alpha/beta closed forms for the kinds whose moments have them.
struct ClosedFormMoments {
  double alpha0, alpha1, alpha2, beta0, beta2;
};

inline std::optional<ClosedFormMoments> closed_form_moments(const Activation& act, double sigma) {
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  const double sqrt_2_over_pi = std::sqrt(2.0 / std::numbers::pi);
  switch (act.kind()) {
    case ActivationKind::relu: return ClosedFormMoments{0.5, inv_sqrt_2pi, 0.5, 0.5, 0.5};
    case ActivationKind::leaky_relu: {
      const double s = act.slope();
      return ClosedFormMoments{(1 + s) / 2, (1 - s) * inv_sqrt_2pi, (1 + s) / 2, (1 + s * s) / 2, (1 + s * s) / 2};
    }
    case ActivationKind::squared_relu:
      return ClosedFormMoments{sigma * sqrt_2_over_pi, sigma, 2 * sigma * sqrt_2_over_pi, 2 * sigma * sigma,
                               6 * sigma * sigma};
    case ActivationKind::erf: {
      const double a = 2 * sigma * sigma + 1;
      const double b = 4 * sigma * sigma + 1;
      return ClosedFormMoments{std::pow(a, -0.5), 0.0, std::pow(a, -1.5), std::pow(b, -0.5), std::pow(b, -1.5)};
    }
    default: return std::nullopt;
  }
}

/// Moments at scale sigma: closed forms where they exist, quadrature otherwise.
/// gamma_j always come from quadrature.
inline MomentProfile moment_profile(const Activation& act, double sigma) {
  MomentProfile m = quadrature_profile(act, sigma);
  if (auto cf = closed_form_moments(act, sigma)) {
    m.alpha0 = cf->alpha0;
    m.alpha1 = cf->alpha1;
    m.alpha2 = cf->alpha2;
    m.beta0 = cf->beta0;
    m.beta2 = cf->beta2;
    m.rho = rho_from(m);
  }
  return m;
}

struct PropertyReport {
  bool derivative_bound = true;  // 0 <= phi' <= L1 |z|^p on the z grid
  bool rho_positive = true;      // rho(sigma) > 0 on the sigma grid
  bool second_derivative = true; // branch (a) or (b) holds on the z grid
  Smoothness branch = Smoothness::smooth;
  std::vector<std::pair<double, double>> rho_by_sigma;
  std::vector<std::string> failures;

  bool all() const { return derivative_bound && rho_positive && second_derivative; }
};

inline PropertyReport check_properties(const Activation& act, const std::vector<double>& sigma_grid) {
  if (sigma_grid.empty()) throw ConfigError("sigma grid must not be empty");
  PropertyReport report;
  report.branch = act.smoothness();
  const int p = act.homogeneity_exponent();
  const auto kinks = act.kinks();
  for (int i = -512; i <= 512; ++i) {
    const double z = i / 64.0;
    const double d = act.derivative(z);
    const double bound = act.l1() * (p == 0 ? 1.0 : std::pow(std::abs(z), p));
    if (d < 0.0 || d > bound * (1.0 + 1e-12) + 1e-15) {
      if (report.derivative_bound)
        report.failures.push_back("phi'(" + std::to_string(z) + ")=" + std::to_string(d) + " violates 0 <= phi' <= L1|z|^p");
      report.derivative_bound = false;
    }
    const double dd = act.second_derivative(z);
    if (report.branch == Smoothness::smooth) {
      if (std::abs(dd) > *act.l2() * (1.0 + 1e-9)) {
        if (report.second_derivative) report.failures.push_back("|phi''| exceeds L2");
        report.second_derivative = false;
      }
    } else if (std::find(kinks.begin(), kinks.end(), z) == kinks.end() && dd != 0.0) {
      if (report.second_derivative) report.failures.push_back("phi'' nonzero away from kinks");
      report.second_derivative = false;
    }
  }
  for (double sigma : sigma_grid) {
    const MomentProfile m = moment_profile(act, sigma);
    const double rho = m.rho;
    report.rho_by_sigma.emplace_back(sigma, rho);
    // below quadrature accuracy rho is indistinguishable from zero
    if (!(rho > detail::kQuadratureTolerance * std::max(1.0, m.beta0))) {
      if (report.rho_positive) report.failures.push_back("rho(" + std::to_string(sigma) + ")=" + std::to_string(rho) + " <= 0");
      report.rho_positive = false;
    }
  }
  return report;
}

}  // namespace cnnrecover
