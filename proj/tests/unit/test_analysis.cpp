#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "pcasgd/analysis.hpp"
#include "pcasgd/io.hpp"
#include "reference.hpp"

using namespace pcasgd;
using namespace pcasgd::testing;

namespace {

BoundInputs base_inputs() {
  BoundInputs in;
  in.G = 1.0;
  in.B = 1.0;
  in.sigma = 0.1;
  in.M = 2.0;
  in.mu = 1.0;
  in.gamma_m = 1.0;
  in.xi_m = 1.0;
  in.eps = 0.1;
  in.eps_D = 0.1;
  in.lambda = 1.0;
  in.eta = 0.01;
  in.tau = 2;
  in.theta_m = 1.0;
  in.theta_min = 1.0;
  in.e2 = 0.5;
  in.e2_tilde = 0.5;
  return in;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1e-300, std::abs(b)); }

}  // namespace

TEST(ConsensusDeviation, Examples) {
  const std::vector<Eigen::VectorXd> equal(3, Eigen::VectorXd::Constant(2, 1.5));
  EXPECT_DOUBLE_EQ(consensus_deviation(equal), 0.0);
  const std::vector<Eigen::VectorXd> two{Eigen::VectorXd::Constant(1, 0), Eigen::VectorXd::Constant(1, 2)};
  EXPECT_DOUBLE_EQ(consensus_deviation(two), 1.0);
  const std::vector<Eigen::VectorXd> three{Eigen::VectorXd::Constant(1, 0), Eigen::VectorXd::Constant(1, 0),
                                           Eigen::VectorXd::Constant(1, 3)};
  EXPECT_DOUBLE_EQ(consensus_deviation(three), 2.0);
  EXPECT_THROW(consensus_deviation(std::vector<Eigen::VectorXd>{}), std::invalid_argument);
}

TEST(ConsensusBound, Examples) {
  BoundInputs in = base_inputs();
  in.eta = 0.01;
  in.G = 2;
  in.tau = 3;
  in.B = 5;
  in.theta_m = 1;
  EXPECT_NEAR(lemma1_bound(in), 0.24, 1e-15);
  in.theta_m = in.theta_min = 0.0;
  in.e2_tilde = 0.5;
  EXPECT_NEAR(lemma1_bound(in), 0.01 * 2 / 0.5, 1e-15);
  in = base_inputs();
  in.tau = 1;
  EXPECT_NEAR(lemma1_bound(in), in.eta * in.G / 0.5, 1e-15);
  in.e2_tilde = 1.0;
  in.theta_min = 0.0;
  EXPECT_THROW(lemma1_bound(in), std::domain_error);
}

TEST(ConsensusBound, MonotoneInEachArgument) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const BoundInputs in = random_inputs(rng);
    const double base = lemma1_bound(in);
    auto bumped = [&](auto mutate) {
      BoundInputs b = in;
      mutate(b);
      return lemma1_bound(b);
    };
    EXPECT_GE(bumped([](BoundInputs& b) { b.eta *= 1.1; }), base);
    EXPECT_GE(bumped([](BoundInputs& b) { b.G += 0.1; }), base);
    EXPECT_GE(bumped([](BoundInputs& b) { b.B += 0.1; }), base);
    EXPECT_GE(bumped([](BoundInputs& b) { b.theta_m = std::min(1.0, b.theta_m + 0.05); }), base);
    EXPECT_GE(bumped([](BoundInputs& b) { b.tau += 1; }), base);
    EXPECT_GE(bumped([](BoundInputs& b) { b.e2_tilde = std::min(0.999, b.e2_tilde + 0.01); }), base);
  }
}

TEST(LinearRateConstants, Examples) {
  BoundInputs in = base_inputs();
  const auto c = theorem1_constants(in);
  EXPECT_NEAR(c.C1, 4.0, 1e-15);
  ASSERT_EQ(c.C_r.size(), 1u);
  EXPECT_NEAR(c.C_r[0], 4.0, 1e-15);
  EXPECT_NEAR(c.C2, 6.0, 1e-15);
  EXPECT_LE(rel(c.Q, q_reference(in)), 1e-12);

  in.G = 0;
  EXPECT_DOUBLE_EQ(theorem1_constants(in).Q, 0.0);

  in = base_inputs();
  in.tau = 1;
  const auto one = theorem1_constants(in);
  EXPECT_TRUE(one.C_r.empty());
  const double e = in.eta, G = in.G;
  const double expected = 2 * (1 - 2 * in.mu * e) * G * e * one.C1 + 2 * e * e * G * in.gamma_m * one.C1 +
                          G * e * in.sigma + e * G * G + e * e * in.gamma_m * G * one.C2;
  EXPECT_LE(rel(one.Q, expected), 1e-12);

  in.eta = 0.6;  // 2 mu eta tau = 1.2
  EXPECT_THROW(theorem1_constants(in), std::domain_error);
}

TEST(LinearRateEnvelope, Examples) {
  EXPECT_DOUBLE_EQ(theorem1_envelope(1.7, 0.3, 1.0, 0.1, 2, 1), 1.7);
  EXPECT_NEAR(theorem1_envelope(1.0, 0.0, 1.0, 0.125, 2, 3), 0.25, 1e-15);
  EXPECT_NEAR(theorem1_envelope(5.0, 0.2, 1.0, 0.1, 2, 2000), 0.2 / 0.4, 1e-12);
  EXPECT_THROW(theorem1_envelope(1.0, 0.0, 1.0, 0.6, 1, 1), std::domain_error);
  EXPECT_THROW(theorem1_envelope(1.0, 0.0, 1.0, 0.1, 1, 0), std::invalid_argument);
}

TEST(LinearRateEnvelope, DecreasesTowardAsymptote) {
  const double Q = 0.05, mu = 1, eta = 0.1;
  const int tau = 3;
  const double floor = Q / (2 * mu * eta * tau);
  double prev = theorem1_envelope(2.0, Q, mu, eta, tau, 1);
  for (int t = 2; t < 200; ++t) {
    const double v = theorem1_envelope(2.0, Q, mu, eta, tau, t);
    EXPECT_LE(v, prev);
    EXPECT_GE(v, floor);
    prev = v;
  }
  EXPECT_NEAR(prev, floor, 1e-12);
}

TEST(NonconvexRadius, ExamplesAndStructure) {
  BoundInputs in = base_inputs();
  in.G = in.B = in.sigma = in.M = 0;
  EXPECT_DOUBLE_EQ(theorem2_R(in), 0.0);
  in = base_inputs();
  EXPECT_LE(rel(theorem2_R(in), r_reference(in, false)), 1e-12);
  EXPECT_LE(rel(theorem2_R(in, RFormula::appendix), r_reference(in, true)), 1e-12);
  EXPECT_NE(theorem2_R(in), theorem2_R(in, RFormula::appendix));
  const double R = theorem2_R(in);
  EXPECT_NEAR(theorem2_envelope(0.7, R, in.eta, 1 << 30), R / in.eta, 1e-6);
  for (int T : {1, 10, 333}) {
    EXPECT_NEAR(theorem2_envelope(0.7, R, in.eta, T) - theorem2_envelope(0.7, R, in.eta, 2 * T),
                0.7 / (T * in.eta), 1e-9);
  }
  in.eta = 1.0;
  EXPECT_THROW(theorem2_R(in), std::domain_error);
  EXPECT_GT(theorem2_R_unchecked(in), 0.0);
  EXPECT_EQ(parse_r_formula("appendix"), RFormula::appendix);
}

TEST(BoundFormulas, IndependentTranscriptionOnRandomInputs) {
  std::mt19937_64 rng(2023);
  for (int trial = 0; trial < 20; ++trial) {
    const BoundInputs in = random_inputs(rng);
    ASSERT_NO_THROW(in.validate());
    const auto c = theorem1_constants(in);
    EXPECT_LE(rel(c.Q, q_reference(in)), 1e-12);
    EXPECT_LE(rel(theorem2_R(in), r_reference(in, false)), 1e-12);
    EXPECT_LE(rel(theorem2_R(in, RFormula::appendix), r_reference(in, true)), 1e-12);
    EXPECT_TRUE(std::isfinite(c.Q) && c.Q >= 0);
    for (double v : c.C_r) EXPECT_GE(v, 0.0);
  }
}

TEST(BoundInputs, Validation) {
  BoundInputs in = base_inputs();
  in.G = -1;
  EXPECT_THROW(in.validate(), std::invalid_argument);
  in = base_inputs();
  in.lambda = 0;
  EXPECT_THROW(in.validate(), std::invalid_argument);
  in = base_inputs();
  in.theta_min = 0.9;
  in.theta_m = 0.5;
  EXPECT_THROW(in.validate(), std::invalid_argument);
  in = base_inputs();
  in.e2 = 0.2;
  in.e2_tilde = 1.0;
  in.theta_min = 0.5;
  in.theta_m = 1.0;
  EXPECT_DOUBLE_EQ(in.delta2(), 0.6);
}

namespace {

struct Setup {
  Topology topo = Topology::complete(3, {{0, 1}, {2}}, 3);
  Objective obj;
  AlgorithmConfig cfg;
  MetricsTrace trace;
};

Setup run(ObjectiveKind kind, double sigma, double eta, int T) {
  ObjectiveSpec s;
  s.kind = kind;
  s.dimension = 2;
  s.n_agents = 3;
  s.noise_sigma = sigma;
  Setup st{Topology::complete(3, {{0, 1}, {2}}, 3), Objective(s), {}, {}};
  st.cfg.variant = Variant::pc_fixed;
  st.cfg.theta = 0.4;
  st.cfg.eta = eta;
  st.cfg.iterations = T;
  st.cfg.initial_state = Eigen::Vector2d(-0.5, 0.25);
  st.trace = run_experiment(st.topo, st.obj, st.cfg, 3);
  return st;
}

}  // namespace

TEST(EstimateConstants, GIsTheLargestStackedGradient) {
  const auto st = run(ObjectiveKind::rosenbrock, 0.1, 0.004, 500);
  ASSERT_EQ(st.trace.status, RunStatus::completed);
  const auto in = estimate_constants(st.trace, st.obj, st.topo, st.cfg);

  // recompute from the emitted steps CSV
  std::stringstream csv;
  write_steps_csv(csv, st.trace);
  const auto steps = read_steps_csv(csv);
  double g = 0;
  for (const auto& s : steps) {
    double sq = 0;
    for (const auto& a : s.agents) sq += a.g.squaredNorm();
    g = std::max(g, std::sqrt(sq));
  }
  EXPECT_LE(rel(in.G, g), 1e-12);
  EXPECT_NEAR(in.sigma, std::sqrt(3.0) * 0.1, 1e-15);
  EXPECT_DOUBLE_EQ(in.theta_m, 0.4);
  EXPECT_DOUBLE_EQ(in.theta_min, 0.4);
  EXPECT_EQ(in.tau, 3);
  EXPECT_EQ(in.provenance.at("G"), Provenance::empirical);
  EXPECT_EQ(in.provenance.at("sigma"), Provenance::configured);
  EXPECT_NO_THROW(in.validate());

  // consensus stays under the consensus bound at every iteration
  const double bound = lemma1_bound(in);
  for (const auto& r : st.trace.rows) EXPECT_LE(r.consensus_dev, bound);
}

TEST(EstimateConstants, QuadraticUsesAnalyticConstants) {
  const auto st = run(ObjectiveKind::quadratic_pl, 0.0, 0.1, 50);
  const auto in = estimate_constants(st.trace, st.obj, st.topo, st.cfg);
  EXPECT_DOUBLE_EQ(in.sigma, 0.0);
  EXPECT_DOUBLE_EQ(in.mu, 1.0);
  EXPECT_DOUBLE_EQ(in.gamma_m, 1.0);
  EXPECT_DOUBLE_EQ(in.xi_m, 0.0);
  EXPECT_EQ(in.provenance.at("mu"), Provenance::analytic);
}

TEST(EstimateConstants, RejectsDivergentTraces) {
  auto st = run(ObjectiveKind::quadratic_pl, 0.0, 0.1, 10);
  st.trace.status = RunStatus::diverged;
  EXPECT_THROW(estimate_constants(st.trace, st.obj, st.topo, st.cfg), std::invalid_argument);
}

TEST(BoundReport, FormatsEveryKey) {
  const auto st = run(ObjectiveKind::quadratic_pl, 0.1, 0.1, 40);
  const auto in = estimate_constants(st.trace, st.obj, st.topo, st.cfg);
  const auto rep = make_bound_report(in, st.trace.rows.front().loss, 40);
  ASSERT_TRUE(rep.lemma1.has_value());
  ASSERT_TRUE(rep.theorem1.has_value());
  ASSERT_TRUE(rep.R.has_value());
  const std::string text = format_bound_report(rep);
  for (const char* key : {"delta2=", "C1=", "C_r=", "Q=", "R=", "lemma1_bound=", "theorem1_envelope_t1=",
                          "theorem2_envelope_t40=", "provenance.G=empirical"}) {
    EXPECT_NE(text.find(key), std::string::npos) << key;
  }
}
