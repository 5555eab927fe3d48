#include <cmath>

#include <gtest/gtest.h>

#include "cnnrecover/risk.hpp"

using namespace cnnrecover;

namespace {

// Central differences of the empirical risk; the oracle for the analytic gradient.
Eigen::MatrixXd fd_gradient(const WeightMatrix& w, const SampleSet& s, const ProblemConfig& cfg, double h = 1e-5) {
  Eigen::MatrixXd g(w.rows(), w.cols());
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index a = 0; a < w.rows(); ++a) {
      WeightMatrix p = w, m = w;
      p(a, j) += h;
      m(a, j) -= h;
      g(a, j) = (empirical_risk(p, s, cfg) - empirical_risk(m, s, cfg)) / (2 * h);
    }
  return g;
}

// Hessian from differences of the gradient oracle itself (second differences of the risk).
Eigen::MatrixXd fd_hessian(const WeightMatrix& w, const SampleSet& s, const ProblemConfig& cfg, double h = 1e-4) {
  const Eigen::Index dim = w.size();
  Eigen::MatrixXd hm(dim, dim);
  for (Eigen::Index c = 0; c < dim; ++c)
    for (Eigen::Index r = 0; r < dim; ++r) {
      auto f = [&](double dr, double dc) {
        WeightMatrix x = w;
        x.data()[r] += dr;
        x.data()[c] += dc;
        return empirical_risk(x, s, cfg);
      };
      hm(r, c) = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h);
    }
  return hm;
}

ProblemConfig small_config(ActivationKind kind) { return ProblemConfig::make(6, 3, 2, 2, Activation(kind), 1); }

}  // namespace

TEST(Risk, ZeroAtGroundTruth) {
  for (const Activation& act : all_activations()) {
    const ProblemConfig cfg = ProblemConfig::make(10, 5, 2, 2, act, 1);
    const WeightMatrix w = make_ground_truth(5, 2, 2.0, 1);
    const SampleSet s = sample_dataset(w, cfg, 500, 2);
    EXPECT_EQ(empirical_risk(w, s, cfg), 0.0);
    EXPECT_EQ(gradient(w, s, cfg).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Risk, LinearLeastSquaresByHand) {
  // k = r = t = 1, phi(z) = z: f(w) = (1/2n) sum (w x - y)^2.
  const ProblemConfig cfg = ProblemConfig::make(1, 1, 1, 1, Activation(ActivationKind::linear));
  SampleSet s;
  s.inputs.resize(3, 1);
  s.inputs << 1.0, -2.0, 0.5;
  s.labels.resize(3);
  s.labels << 2.0, 1.0, -1.0;
  WeightMatrix w(1, 1);
  w << 0.7;
  double loss = 0, grad = 0, hess = 0;
  for (int i = 0; i < 3; ++i) {
    const double x = s.inputs(i, 0), res = 0.7 * x - s.labels(i);
    loss += 0.5 * res * res / 3;
    grad += res * x / 3;
    hess += x * x / 3;
  }
  EXPECT_NEAR(empirical_risk(w, s, cfg), loss, 1e-15);
  EXPECT_NEAR(gradient(w, s, cfg)(0, 0), grad, 1e-15);
  EXPECT_NEAR(hessian(w, s, cfg)(0, 0), hess, 1e-15);
}

TEST(Risk, GradientMatchesFiniteDifferences) {
  for (ActivationKind kind : {ActivationKind::squared_relu, ActivationKind::sigmoid, ActivationKind::tanh,
                              ActivationKind::erf, ActivationKind::quadratic}) {
    const ProblemConfig cfg = small_config(kind);
    const WeightMatrix wstar = make_ground_truth(3, 2, 2.0, 3);
    const SampleSet s = sample_dataset(wstar, cfg, 300, 4);
    Rng rng = Rng::substream(5, Stream::perturbation);
    const WeightMatrix w = wstar + 0.3 * rng.normal_matrix(3, 2);
    const Eigen::MatrixXd g = gradient(w, s, cfg);
    const Eigen::MatrixXd fd = fd_gradient(w, s, cfg);
    EXPECT_LT((g - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff(), 1e-7) << Activation(kind).name();
  }
}

TEST(Risk, HessianMatchesSecondDifferences) {
  for (ActivationKind kind : {ActivationKind::sigmoid, ActivationKind::tanh, ActivationKind::erf,
                              ActivationKind::quadratic, ActivationKind::linear}) {
    const ProblemConfig cfg = small_config(kind);
    const WeightMatrix wstar = make_ground_truth(3, 2, 2.0, 3);
    const SampleSet s = sample_dataset(wstar, cfg, 200, 4);
    Rng rng = Rng::substream(6, Stream::perturbation);
    const WeightMatrix w = wstar + 0.5 * rng.normal_matrix(3, 2);
    const HessianMatrix h = hessian(w, s, cfg);
    const Eigen::MatrixXd fd = fd_hessian(w, s, cfg);
    EXPECT_LT((h - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff(), 1e-5) << Activation(kind).name();
    EXPECT_EQ(asymmetry(h), 0.0);
  }
}

TEST(Risk, PiecewiseLinearHessianIsGaussNewton) {
  // For relu the per-sample Hessian is v v^T with v = vec(X D^T), independent of the residual.
  const ProblemConfig cfg = small_config(ActivationKind::relu);
  const WeightMatrix wstar = make_ground_truth(3, 2, 2.0, 3);
  const SampleSet s = sample_dataset(wstar, cfg, 50, 4);
  Rng rng = Rng::substream(7, Stream::perturbation);
  const WeightMatrix w = rng.normal_matrix(3, 2);
  Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(6, 6);
  for (Eigen::Index n = 0; n < 50; ++n) {
    Eigen::VectorXd v(6);
    for (int j = 0; j < 2; ++j) {
      Eigen::VectorXd block = Eigen::VectorXd::Zero(3);
      for (int i = 0; i < 2; ++i) {
        const Eigen::VectorXd xi = s.inputs.row(n).segment(3 * i, 3).transpose();
        if (w.col(j).dot(xi) > 0) block += xi;
      }
      v.segment(3 * j, 3) = block;
    }
    expect += v * v.transpose() / 50.0;
  }
  EXPECT_LT((hessian(w, s, cfg) - expect).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Risk, ThreadCountDoesNotChangeBits) {
  const ProblemConfig cfg = ProblemConfig::make(10, 5, 2, 2, Activation(ActivationKind::sigmoid), 1);
  const WeightMatrix wstar = make_ground_truth(5, 2, 2.0, 1);
  const SampleSet s = sample_dataset(wstar, cfg, 9000, 1);
  const WeightMatrix w = wstar * 0.9;
  set_worker_threads(1);
  const LossAndGradient a = loss_and_gradient(w, s, cfg);
  const HessianMatrix ha = hessian(w, s, cfg);
  set_worker_threads(3);
  const LossAndGradient b = loss_and_gradient(w, s, cfg);
  const HessianMatrix hb = hessian(w, s, cfg);
  set_worker_threads(1);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.gradient, b.gradient);
  EXPECT_EQ(ha, hb);
}

TEST(PopulationHessian, OneDimensionalRelu) {
  // k = r = t = 1: H = E[1{w x > 0} x^2] = 1/2 for any w != 0.
  const ProblemConfig cfg = ProblemConfig::make(1, 1, 1, 1, Activation(ActivationKind::relu));
  WeightMatrix w(1, 1);
  w << 1.7;
  const PopulationHessian p = population_hessian_mc(w, w, cfg, 200000, 3);
  EXPECT_NEAR(p.hessian(0, 0), 0.5, 4 * p.stderr_max);
  // Var(1{x>0} x^2) = 3/2 - 1/4.
  EXPECT_NEAR(p.stderr_max, std::sqrt(1.25 / 200000), 0.05 * std::sqrt(1.25 / 200000));
  EXPECT_THROW(population_hessian_mc(w, w, cfg, 10, 3), ConfigError);
}

TEST(PopulationHessian, OffTruthIncludesResidualTerm) {
  // Linear, k = r = t = 1: H = E[x^2] = 1 regardless of W; for quadratic at w vs w*:
  // H = E[(2 w x^2)^2 + (w^2 - w*^2) x^2 * 2 x^2] = 12 w^2 + 6 (w^2 - w*^2).
  const ProblemConfig cfg = ProblemConfig::make(1, 1, 1, 1, Activation(ActivationKind::quadratic));
  WeightMatrix w(1, 1), ws(1, 1);
  w << 1.2;
  ws << 1.0;
  const PopulationHessian p = population_hessian_mc(w, ws, cfg, 400000, 5);
  EXPECT_NEAR(p.hessian(0, 0), 12 * 1.44 + 6 * (1.44 - 1.0), 4 * p.stderr_max);
}

TEST(Spectrum, QuadraticRotationIsNullDirection) {
  const ProblemConfig cfg = ProblemConfig::make(10, 5, 2, 2, Activation(ActivationKind::quadratic), 1);
  const WeightMatrix wstar = make_ground_truth(5, 2, 2.0, 1);
  const HessianMatrix h = hessian(wstar, sample_dataset(wstar, cfg, 2000, 1), cfg);
  const SpectrumReport rep = spectrum(h, wstar, cfg);
  EXPECT_LT(std::abs(rayleigh_quotient(h, rotation_direction(wstar))), 1e-10 * rep.lambda_max);
  EXPECT_LT(std::abs(rep.lambda_min), 1e-8);
  EXPECT_THROW(rotation_direction(wstar, 0, 0), ConfigError);
}

TEST(Spectrum, NominalBoundsByHand) {
  const ProblemConfig cfg = ProblemConfig::make(10, 5, 2, 2, Activation(ActivationKind::squared_relu), 1);
  const WeightMatrix wstar = make_ground_truth(5, 2, 2.0, 1);  // sigma = 1, 2
  const NominalBounds b = nominal_bounds(wstar, cfg);
  // m0 = r rho(1) / (kappa^2 lambda) = 2 (4/pi - 1) / (4 * 2); M0 = t r^2 sigma_1^2 = 2 * 4 * 4.
  EXPECT_NEAR(b.m0, 2 * (4 / std::numbers::pi - 1) / 8, 1e-10);
  EXPECT_NEAR(b.M0, 32.0, 1e-10);
}

TEST(Spectrum, RejectsAsymmetric) {
  const ProblemConfig cfg = small_config(ActivationKind::relu);
  const WeightMatrix wstar = make_ground_truth(3, 2, 2.0, 3);
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(6, 6);
  h(0, 1) = 0.5;
  EXPECT_THROW(spectrum(h, wstar, cfg), NumericalError);
}

TEST(Spectrum, CsvRowsCarryConfigHash) {
  const ProblemConfig cfg = small_config(ActivationKind::relu);
  const WeightMatrix wstar = make_ground_truth(3, 2, 2.0, 3);
  CsvTable t = spectrum_table();
  add_spectrum_row(t, cfg, 100, spectrum(Eigen::MatrixXd::Identity(6, 6), wstar, cfg));
  EXPECT_EQ(t.rows().at(0).at(0), config_hash(cfg));
  EXPECT_NE(config_hash(cfg), config_hash(small_config(ActivationKind::sigmoid)));
}

TEST(DeviationCurve, ShrinksWithSampleSize) {
  const ProblemConfig cfg = ProblemConfig::make(10, 5, 2, 2, Activation(ActivationKind::relu), 1);
  const WeightMatrix wstar = make_ground_truth(5, 2, 2.0, 1);
  const auto curve = hessian_deviation_curve(wstar, cfg, {100, 10000}, 3, 200000);
  ASSERT_EQ(curve.size(), 2u);
  EXPECT_LT(curve[1].deviation, curve[0].deviation);
  EXPECT_THROW(hessian_deviation_curve(wstar, cfg, {100, 10}, 3, 1000), ConfigError);
}
