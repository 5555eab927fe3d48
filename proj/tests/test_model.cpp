#include <cmath>

#include <gtest/gtest.h>

#include "cnnrecover/model.hpp"

using namespace cnnrecover;

namespace {

ProblemConfig fig_config(ActivationKind kind = ActivationKind::squared_relu) {
  return ProblemConfig::make(10, 5, 2, 2, Activation(kind), 1);
}

}  // namespace

TEST(ProblemConfig, Validation) {
  EXPECT_THROW(ProblemConfig::make(10, 5, 3, 2, Activation(ActivationKind::relu)), ConfigError);
  EXPECT_THROW(ProblemConfig::make(6, 3, 2, 4, Activation(ActivationKind::relu)), ConfigError);
  EXPECT_THROW(ProblemConfig::make(0, 0, 2, 1, Activation(ActivationKind::relu)), ConfigError);
  EXPECT_EQ(fig_config().d(), 10u);
}

TEST(Model, PatchIsContiguousBlock) {
  const ProblemConfig cfg = fig_config();
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(10, 0, 9);
  EXPECT_EQ(patch(x, 0, cfg), Eigen::VectorXd::LinSpaced(5, 0, 4));
  EXPECT_EQ(patch(x, 1, cfg), Eigen::VectorXd::LinSpaced(5, 5, 9));
  EXPECT_THROW(patch(x, 2, cfg), ConfigError);
}

TEST(Model, ForwardMatchesNaiveSum) {
  const ProblemConfig cfg = ProblemConfig::make(12, 4, 3, 3, Activation(ActivationKind::tanh));
  Rng rng = Rng::substream(4, Stream::init);
  const WeightMatrix w = rng.normal_matrix(4, 3);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::VectorXd x = rng.normal_vector(12);
    double y = 0.0;
    for (int j = 0; j < 3; ++j)
      for (int i = 0; i < 3; ++i) {
        double z = 0.0;
        for (int a = 0; a < 4; ++a) z += w(a, j) * x(4 * i + a);
        y += std::tanh(z);
      }
    EXPECT_NEAR(forward(w, x, cfg), y, 1e-13);
  }
}

TEST(Model, ForwardChecksShapes) {
  const ProblemConfig cfg = fig_config();
  EXPECT_THROW(forward(Eigen::MatrixXd::Zero(5, 3), Eigen::VectorXd::Zero(10), cfg), ConfigError);
  EXPECT_THROW(forward(Eigen::MatrixXd::Zero(5, 2), Eigen::VectorXd::Zero(9), cfg), ConfigError);
}

TEST(GroundTruth, SpectrumIsLinearGrid) {
  const WeightMatrix w = make_ground_truth(7, 4, 3.0, 11);
  const Eigen::VectorXd s = singular_values(w);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(s(i), 3.0 - i * (2.0 / 3.0), 1e-12);
}

TEST(GroundTruth, DeterministicAndSeedDependent) {
  EXPECT_EQ(make_ground_truth(5, 2, 2.0, 1), make_ground_truth(5, 2, 2.0, 1));
  EXPECT_NE(make_ground_truth(5, 2, 2.0, 1), make_ground_truth(5, 2, 2.0, 2));
  EXPECT_THROW(make_ground_truth(5, 2, 0.5, 1), ConfigError);
  EXPECT_THROW(make_ground_truth(2, 3, 2.0, 1), ConfigError);
}

TEST(Conditioning, OrthonormalWeights) {
  const WeightMatrix w = make_ground_truth(4, 3, 1.0, 5);
  const ConditioningReport c = conditioning(w, Activation(ActivationKind::relu));
  EXPECT_NEAR(c.kappa, 1.0, 1e-12);
  EXPECT_NEAR(c.lambda, 1.0, 1e-12);
  EXPECT_NEAR(c.min_rho, 0.5 * 0.5 - 1.0 / (2.0 * std::numbers::pi), 1e-12);
  // p = 0 for relu, so tau = 1 / rho^2.
  EXPECT_NEAR(c.tau, 1.0 / (c.min_rho * c.min_rho), 1e-9);
}

TEST(Conditioning, KappaAndLambda) {
  const WeightMatrix w = make_ground_truth(5, 3, 4.0, 2);  // singular values 1, 2.5, 4
  const ConditioningReport c = conditioning(w, Activation(ActivationKind::squared_relu));
  EXPECT_NEAR(c.kappa, 4.0, 1e-12);
  EXPECT_NEAR(c.lambda, 10.0, 1e-10);
  // rho for squared_relu grows like sigma^2, so the minimum sits at sigma_t / 2.
  EXPECT_NEAR(c.min_rho, (4 / std::numbers::pi - 1) * 0.25, 1e-10);
  EXPECT_THROW(conditioning(Eigen::MatrixXd::Zero(5, 3), Activation(ActivationKind::relu)), NumericalError);
}

TEST(Samples, LabelsMatchForward) {
  const ProblemConfig cfg = fig_config();
  const WeightMatrix w = make_ground_truth(5, 2, 2.0, 1);
  const SampleSet s = sample_dataset(w, cfg, 50, 3);
  for (Eigen::Index i = 0; i < 50; ++i) EXPECT_EQ(s.labels(i), forward(w, s.inputs.row(i).transpose(), cfg));
  EXPECT_EQ(s.fingerprint.activation, "squared_relu");
  EXPECT_EQ(s.fingerprint.seed, 3u);
}

TEST(Samples, PrefixStableAndThreadInvariant) {
  const ProblemConfig cfg = fig_config();
  const WeightMatrix w = make_ground_truth(5, 2, 2.0, 1);
  set_worker_threads(1);
  const SampleSet big = sample_dataset(w, cfg, 5000, 8);
  set_worker_threads(4);
  const SampleSet again = sample_dataset(w, cfg, 5000, 8);
  const SampleSet small = sample_dataset(w, cfg, 100, 8);
  set_worker_threads(1);
  EXPECT_EQ(big.inputs, again.inputs);
  EXPECT_EQ(big.labels, again.labels);
  EXPECT_EQ(small.inputs, big.inputs.topRows(100));
}

TEST(Samples, InputsAreStandardGaussian) {
  const ProblemConfig cfg = fig_config();
  const SampleSet s = sample_dataset(make_ground_truth(5, 2, 2.0, 1), cfg, 20000, 6);
  const Eigen::RowVectorXd mean = s.inputs.colwise().mean();
  const Eigen::MatrixXd centered = s.inputs.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / 20000.0;
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 5.0 / std::sqrt(20000.0));
  EXPECT_LT((cov - Eigen::MatrixXd::Identity(10, 10)).cwiseAbs().maxCoeff(), 5.0 * std::sqrt(2.0 / 20000.0));
}

TEST(Samples, SelectAndSlice) {
  const ProblemConfig cfg = fig_config();
  const SampleSet s = sample_dataset(make_ground_truth(5, 2, 2.0, 1), cfg, 10, 1);
  const SampleSet sel = s.select({3, 7});
  EXPECT_EQ(sel.size(), 2u);
  EXPECT_EQ(sel.inputs.row(1), s.inputs.row(7));
  EXPECT_EQ(s.slice(2, 3).labels, s.labels.segment(2, 3));
  EXPECT_THROW(check_samples(s, ProblemConfig::make(12, 6, 2, 2, Activation(ActivationKind::relu))), ConfigError);
}
