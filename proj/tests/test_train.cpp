#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "cnnrecover/train.hpp"

using namespace cnnrecover;

namespace {

ProblemConfig config(ActivationKind kind) { return ProblemConfig::make(10, 5, 2, 2, Activation(kind), 1); }

TrainConfig given(const WeightMatrix& w0, std::size_t iters, std::optional<double> eta = std::nullopt) {
  TrainConfig tc;
  tc.init = InitMode::given;
  tc.initial = w0;
  tc.max_iters = iters;
  tc.step_size = eta;
  tc.tol = 0.0;
  return tc;
}

}  // namespace

TEST(GdStep, FixedPointAndZeroStep) {
  const ProblemConfig cfg = config(ActivationKind::sigmoid);
  const WeightMatrix wstar = make_ground_truth(5, 2, 2.0, 1);
  const SampleSet s = sample_dataset(wstar, cfg, 300, 1);
  EXPECT_EQ(gd_step(wstar, s, 0.3, cfg), wstar);
  const WeightMatrix w = 0.5 * wstar;
  EXPECT_EQ(gd_step(w, s, 0.0, cfg), w);
}

TEST(GdStep, OneDimensionalLeastSquares) {
  // f(w) = (1/2n) sum (w - w*)^2 x^2, so one step gives w - eta (w - w*) mean(x^2).
  const ProblemConfig cfg = ProblemConfig::make(1, 1, 1, 1, Activation(ActivationKind::linear));
  WeightMatrix ws(1, 1), w(1, 1);
  ws << 1.5;
  w << -0.5;
  const SampleSet s = sample_dataset(ws, cfg, 40, 2);
  const double mx2 = s.inputs.col(0).squaredNorm() / 40.0;
  EXPECT_NEAR(gd_step(w, s, 0.25, cfg)(0, 0), -0.5 - 0.25 * (-2.0) * mx2, 1e-14);
}

TEST(Partition, DisjointEqualAndDeterministic) {
  const ProblemConfig cfg = config(ActivationKind::relu);
  const SampleSet s = sample_dataset(make_ground_truth(5, 2, 2.0, 1), cfg, 103, 1);
  const auto parts = partition(s, 5, 9);
  ASSERT_EQ(parts.size(), 5u);
  std::set<double> seen;  // first input coordinate identifies a sample
  for (const auto& p : parts) {
    EXPECT_EQ(p.size(), 20u);
    for (Eigen::Index i = 0; i < 20; ++i) seen.insert(p.inputs(i, 0));
  }
  EXPECT_EQ(seen.size(), 100u);
  const auto again = partition(s, 5, 9);
  EXPECT_EQ(again[3].inputs, parts[3].inputs);
  EXPECT_NE(partition(s, 5, 10)[0].inputs, parts[0].inputs);
  EXPECT_THROW(partition(s, 104, 1), ConfigError);
  EXPECT_THROW(partition(s, 0, 1), ConfigError);
}

TEST(ShuffledIndices, IsPermutation) {
  auto idx = shuffled_indices(1000, 3);
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < 1000; ++i) EXPECT_EQ(idx[i], i);
}

TEST(StepSize, AutomaticRule) {
  const ProblemConfig cfg = config(ActivationKind::squared_relu);
  const WeightMatrix w = make_ground_truth(5, 2, 3.0, 1);
  // 1 / (t r^2 sigma_1^{2p}) with t = r = 2, p = 1, sigma_1 = 3.
  EXPECT_NEAR(auto_step_size(w, cfg), 1.0 / (2 * 4 * 9), 1e-14);
  EXPECT_NEAR(auto_step_size(w, config(ActivationKind::relu)), 1.0 / 8, 1e-14);
}

TEST(Learn, StartingAtTruthStaysThere) {
  const ProblemConfig cfg = config(ActivationKind::squared_relu);
  const WeightMatrix wstar = make_ground_truth(5, 2, 2.0, 1);
  const SampleSet s = sample_dataset(wstar, cfg, 500, 1);
  TrainConfig tc = given(wstar, 50);
  tc.tol = 1e-12;
  const TrainReport rep = learn_cnn(s, cfg, tc, &wstar);
  EXPECT_TRUE(rep.converged);
  EXPECT_EQ(rep.iterations, 0u);
  ASSERT_EQ(rep.trace.size(), 1u);
  EXPECT_EQ(rep.trace[0].loss, 0.0);
  EXPECT_EQ(rep.trace[0].dist, 0.0);
  EXPECT_EQ(rep.final_W, wstar);
}

TEST(Learn, MonotoneDescentNearTruth) {
  for (ActivationKind kind : {ActivationKind::squared_relu, ActivationKind::sigmoid, ActivationKind::tanh,
                              ActivationKind::erf}) {
    const ProblemConfig cfg = config(kind);
    const WeightMatrix wstar = make_ground_truth(5, 2, 2.0, 1);
    const SampleSet s = sample_dataset(wstar, cfg, 2000, 2);
    Rng rng = Rng::substream(3, Stream::perturbation);
    const WeightMatrix w0 = wstar + 0.05 * rng.normal_matrix(5, 2);
    const TrainReport rep = learn_cnn(s, cfg, given(w0, 100), &wstar);
    ASSERT_EQ(rep.trace.size(), 101u);
    for (std::size_t q = 1; q < rep.trace.size(); ++q)
      EXPECT_LE(rep.trace[q].loss, rep.trace[q - 1].loss) << Activation(kind).name() << " iter " << q;
    EXPECT_LT(rep.trace.back().dist, rep.trace.front().dist);
    EXPECT_FALSE(rep.aborted);
  }
}

TEST(Learn, RandomInitIsSeeded) {
  const ProblemConfig cfg = config(ActivationKind::sigmoid);
  const WeightMatrix wstar = make_ground_truth(5, 2, 2.0, 1);
  const SampleSet s = sample_dataset(wstar, cfg, 200, 2);
  TrainConfig tc;
  tc.init = InitMode::random_gaussian;
  tc.max_iters = 3;
  tc.seed = 11;
  tc.init_scale = 0.5;
  const TrainReport a = learn_cnn(s, cfg, tc), b = learn_cnn(s, cfg, tc);
  EXPECT_EQ(a.initial_W, b.initial_W);
  EXPECT_EQ(a.final_W, b.final_W);
  EXPECT_EQ(a.initial_W, 0.5 * Rng::substream(11, Stream::init).normal_matrix(5, 2));
  EXPECT_TRUE(std::isnan(a.trace[0].dist));
}

TEST(Learn, AbortsOnNonFiniteLoss) {
  const ProblemConfig cfg = config(ActivationKind::squared_relu);
  const WeightMatrix wstar = make_ground_truth(5, 2, 2.0, 1);
  const SampleSet s = sample_dataset(wstar, cfg, 200, 2);
  const TrainReport rep = learn_cnn(s, cfg, given(2.0 * wstar, 500, 1e6), &wstar);
  EXPECT_TRUE(rep.aborted);
  EXPECT_FALSE(rep.converged);
  EXPECT_LT(rep.iterations, 500u);
}

TEST(Learn, ResampleBookkeeping) {
  const ProblemConfig cfg = config(ActivationKind::squared_relu);
  const WeightMatrix wstar = make_ground_truth(5, 2, 2.0, 1);
  const SampleSet s = sample_dataset(wstar, cfg, 1003, 2);
  TrainConfig tc = given(0.9 * wstar, 10);
  tc.resample = true;
  const TrainReport rep = learn_cnn(s, cfg, tc, &wstar);
  EXPECT_TRUE(rep.resample);
  EXPECT_EQ(rep.iterations, 10u);
  EXPECT_EQ(rep.samples_consumed, 1000u);
  EXPECT_EQ(rep.trace.size(), 11u);
  tc.max_iters = 2000;
  EXPECT_THROW(learn_cnn(s, cfg, tc, &wstar), ConfigError);
}

TEST(Learn, TensorInitConsumesFraction) {
  const ProblemConfig cfg = config(ActivationKind::squared_relu);
  const WeightMatrix wstar = make_ground_truth(5, 2, 2.0, 1);
  const SampleSet s = sample_dataset(wstar, cfg, 20000, 3);
  TrainConfig tc;
  tc.max_iters = 3;
  tc.init_fraction = 0.5;
  tc.tol = 0.0;
  const TrainReport rep = learn_cnn(s, cfg, tc, &wstar);
  ASSERT_TRUE(rep.tensor_init.has_value());
  EXPECT_EQ(rep.tensor_init->moments.n_used, 10000u);
  EXPECT_EQ(rep.initial_W, rep.tensor_init->weights);
  EXPECT_EQ(rep.samples_consumed, 20000u);
}

TEST(Learn, ValidatesConfig) {
  const ProblemConfig cfg = config(ActivationKind::relu);
  const SampleSet s = sample_dataset(make_ground_truth(5, 2, 2.0, 1), cfg, 50, 2);
  TrainConfig tc;
  tc.init = InitMode::given;
  EXPECT_THROW(learn_cnn(s, cfg, tc), ConfigError);
  tc = given(WeightMatrix::Zero(5, 2), 5, -1.0);
  EXPECT_THROW(learn_cnn(s, cfg, tc), ConfigError);
  tc = given(WeightMatrix::Zero(5, 2), 5);
  tc.init_fraction = 1.0;
  EXPECT_THROW(learn_cnn(s, cfg, tc), ConfigError);
}

TEST(Contraction, ZeroAtTruthAndBelowOneNearby) {
  const ProblemConfig cfg = config(ActivationKind::squared_relu);
  const WeightMatrix wstar = make_ground_truth(5, 2, 2.0, 1);
  const SampleSet s = sample_dataset(wstar, cfg, 5000, 4);
  EXPECT_EQ(contraction_check(wstar, wstar, s, cfg).ratio, 0.0);
  Rng rng = Rng::substream(2, Stream::perturbation);
  const ContractionResult c = contraction_check(wstar + 0.01 * rng.normal_matrix(5, 2), wstar, s, cfg);
  EXPECT_LT(c.ratio, 1.0);
  EXPECT_GT(c.bound, 0.0);
  EXPECT_LT(c.bound, 1.0);
  EXPECT_NEAR(c.step_size, 1.0 / 32.0, 1e-14);
}

TEST(TailFit, GeometricSequence) {
  std::vector<TraceRecord> trace;
  for (std::size_t q = 0; q < 80; ++q) trace.push_back({q, 3.0 * std::pow(0.9, static_cast<double>(q)), 0.0, 0.0});
  const auto fit = fit_log_tail(trace);
  ASSERT_TRUE(fit);
  EXPECT_NEAR(fit->rate, 0.9, 1e-12);
  EXPECT_NEAR(fit->r2, 1.0, 1e-12);
  EXPECT_EQ(fit->points, 50u);
  trace.resize(2);
  EXPECT_FALSE(fit_log_tail(trace));
}

TEST(Output, TraceCsvSchema) {
  const ProblemConfig cfg = config(ActivationKind::squared_relu);
  const WeightMatrix wstar = make_ground_truth(5, 2, 2.0, 1);
  const SampleSet s = sample_dataset(wstar, cfg, 100, 1);
  const TrainReport rep = learn_cnn(s, cfg, given(0.9 * wstar, 2, 0.01), &wstar);
  const std::string csv = trace_csv(rep);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iter,loss,dist_to_Wstar,grad_norm");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  const std::string wcsv = final_weights_csv(rep);
  EXPECT_EQ(std::count(wcsv.begin(), wcsv.end(), '\n'), 5 + 1);
}
