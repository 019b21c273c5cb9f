#include <gtest/gtest.h>

#include <sstream>

#include "pcasgd/io.hpp"
#include "pcasgd/optimizer.hpp"

using namespace pcasgd;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<int>(v.size()));
  int k = 0;
  for (double e : v) x(k++) = e;
  return x;
}

Objective objective(ObjectiveKind kind, int d, int n, double sigma) {
  ObjectiveSpec s;
  s.kind = kind;
  s.dimension = d;
  s.n_agents = n;
  s.noise_sigma = sigma;
  return Objective(s);
}

AlgorithmConfig config(Variant v, double eta, int T, double theta = 0.5) {
  AlgorithmConfig c;
  c.variant = v;
  c.eta = eta;
  c.iterations = T;
  c.theta = theta;
  return c;
}

std::string trace_csv(const MetricsTrace& tr) {
  std::ostringstream os;
  write_trace_csv(os, tr);
  return os.str();
}

std::string steps_csv(const MetricsTrace& tr) {
  std::ostringstream os;
  write_steps_csv(os, tr);
  return os.str();
}

// Every trace column except theta, which echoes the configured schedule.
std::string trace_without_theta(const MetricsTrace& tr) {
  std::ostringstream os;
  for (const auto& r : tr.rows) {
    os << r.t << ',' << format_double(r.loss) << ',' << format_double(r.grad_sq_norm) << ','
       << format_double(r.consensus_dev) << ',' << r.pv_pred_count << '\n';
  }
  return os.str();
}

}  // namespace

TEST(DelayCompensatedGradient, Examples) {
  const std::vector<Eigen::VectorXd> one{vec({0.3})};
  EXPECT_EQ(delay_compensated_gradient(vec({2.5}), 0.5, 1, one), vec({2.5}));

  // (2 + 0) + (2 + 0.5 * 4 * 0.1) = 4.2
  const std::vector<Eigen::VectorXd> traj{vec({1.0}), vec({1.1})};
  EXPECT_NEAR(delay_compensated_gradient(vec({2.0}), 0.5, 2, traj)(0), 4.2, 1e-12);

  const std::vector<Eigen::VectorXd> three{vec({0, 0}), vec({1, 2}), vec({3, 4})};
  EXPECT_EQ(delay_compensated_gradient(vec({0, 0}), 0.7, 3, three), vec({0, 0}));

  EXPECT_THROW(delay_compensated_gradient(vec({1.0}), 0.5, 3, traj), std::invalid_argument);
  const auto terms = delay_compensated_terms(vec({2.0}), 0.5, 2, traj);
  EXPECT_EQ(terms[0], vec({2.0}));
}

TEST(PredictingStep, MatchesHandEvaluation) {
  // clusters {0,1},{2}, tau = 2, looking from agent 0 at t = 2
  const auto topo = Topology::complete(3, {{0, 1}, {2}}, 2);
  StateHistory h(3, 2);
  const Eigen::VectorXd x0[] = {vec({0.1, 0.2}), vec({0.4, -0.3}), vec({1.0, 0.5})};
  const Eigen::VectorXd x1[] = {vec({0.15, 0.1}), vec({0.35, -0.2}), vec({0.9, 0.45})};
  const Eigen::VectorXd x2[] = {vec({0.2, 0.05}), vec({0.3, -0.1}), vec({0.8, 0.4})};
  for (int i = 0; i < 3; ++i) h.record(i, 0, x0[i]);
  for (int i = 0; i < 3; ++i) h.record(i, 1, x1[i]);
  for (int i = 0; i < 3; ++i) h.record(i, 2, x2[i]);
  const auto v = view(h, topo, 0, 2);

  Eigen::MatrixXd w(3, 3);
  w << 0.5, 0.3, 0.2, 0.3, 0.5, 0.2, 0.2, 0.2, 0.6;
  const Eigen::VectorXd g0 = vec({1.0, -2.0});
  const Eigen::VectorXd g2_stale = vec({0.5, 3.0});
  const double lambda = 0.5, eta = 0.1;

  // line by line: reliable part, then the compensated stale neighbor
  double e[2];
  for (int k = 0; k < 2; ++k) {
    const double hess = lambda * g2_stale(k) * g2_stale(k);
    const double gdc = (g2_stale(k) + hess * 0.0) + (g2_stale(k) + hess * (x1[0](k) - x0[0](k)));
    e[k] = 0.5 * x2[0](k) + 0.3 * x2[1](k) - eta * g0(k) + 0.2 * (x0[2](k) - eta * gdc);
  }
  const std::vector<Eigen::VectorXd> stale{g2_stale};
  const auto got = predicting_step(v, w, g0, stale, lambda, 2, eta);
  EXPECT_NEAR(got(0), e[0], 1e-15);
  EXPECT_NEAR(got(1), e[1], 1e-15);

  // D-ASGD equals the predicting step with a zero compensated gradient
  const std::vector<Eigen::VectorXd> zero{vec({0, 0})};
  EXPECT_EQ(baseline_dasgd_step(v, w, g0, eta), predicting_step(v, w, g0, zero, lambda, 2, eta));
  EXPECT_THROW(predicting_step(v, w, g0, {}, lambda, 2, eta), std::invalid_argument);
}

TEST(PredictingStep, ConsensusFixedPointAndPlainSgd) {
  const auto topo = Topology::complete(3, {{0, 1}, {2}}, 3);
  StateHistory h(3, 3);
  for (int i = 0; i < 3; ++i) h.record(i, 0, vec({1.5, -2}));
  const auto v = view(h, topo, 2, 0);
  const Eigen::MatrixXd w = Eigen::MatrixXd::Constant(3, 3, 1.0 / 3);
  const std::vector<Eigen::VectorXd> stale{vec({4, 4}), vec({-1, 2})};
  EXPECT_LT((predicting_step(v, w, vec({9, 9}), stale, 0.5, 3, 0.0) - vec({1.5, -2})).norm(), 1e-15);

  const auto single = Topology::complete(3, {{0, 1, 2}}, 3);
  const auto vs = view(h, single, 1, 0);
  const Eigen::VectorXd g = vec({0.5, 1});
  EXPECT_LT((predicting_step(vs, w, g, {}, 0.5, 3, 0.1) - (vec({1.5, -2}) - 0.1 * g)).norm(), 1e-15);
  EXPECT_EQ(predicting_step(vs, w, g, {}, 0.5, 3, 0.1), clipping_step(vs, w, g, 0.1));
}

TEST(ClippingStep, SingletonIsLocalSgd) {
  const auto topo = Topology::complete(3, {{0, 1}, {2}}, 2);
  StateHistory h(3, 2);
  h.record(0, 0, vec({1, 1}));
  h.record(1, 0, vec({3, 3}));
  h.record(2, 0, vec({5, -1}));
  const auto w_tilde = build_clipping_matrix(topo).weights;
  const auto v2 = view(h, topo, 2, 0);
  EXPECT_EQ(clipping_step(v2, w_tilde, vec({1, 2}), 0.5), vec({5, -1}) - 0.5 * vec({1, 2}));
  StateHistory same(3, 2);
  for (int i = 0; i < 3; ++i) same.record(i, 0, vec({2, 2}));
  EXPECT_EQ(clipping_step(view(same, topo, 0, 0), w_tilde, vec({7, 7}), 0.0), vec({2, 2}));
}

TEST(Combine, Examples) {
  const auto a = vec({2, 0}), b = vec({0, 2});
  EXPECT_EQ(combine(1.0, a, b), a);
  EXPECT_EQ(combine(0.0, a, b), b);
  EXPECT_EQ(combine(0.5, a, b), vec({1, 1}));
  EXPECT_THROW(combine(1.5, a, b), std::invalid_argument);
  EXPECT_THROW(combine(-0.1, a, b), std::invalid_argument);
}

TEST(PvSelect, Examples) {
  const auto xt = vec({0, 0});
  EXPECT_EQ(pv_select(vec({1, 1}), vec({1, 1}), xt, vec({1, 0})).first, PvChoice::predicting);
  EXPECT_EQ(pv_select(vec({-1, 0}), vec({1, 0}), xt, vec({1, 0})).first, PvChoice::clipping);
  EXPECT_EQ(pv_select(vec({-1, 0}), vec({1, 0}), xt, vec({10, 0})).first, PvChoice::clipping);
  EXPECT_EQ(pv_select(vec({-1, 0}), vec({1, 0}), xt, vec({1, 0}), CriterionSign::descent).first,
            PvChoice::predicting);
  // a stationary branch scores 0
  EXPECT_DOUBLE_EQ(criterion_score(vec({0, 0}), vec({1, 1})), 0.0);
  EXPECT_EQ(pv_select(xt, vec({-1, 0}), xt, vec({1, 0})).first, PvChoice::predicting);
}

TEST(RunExperiment, SingleAgentIsExactGradientDescent) {
  const auto topo = Topology::complete(1, {{0}}, 3);
  const auto obj = objective(ObjectiveKind::rosenbrock, 2, 1, 0.0);
  for (Variant v : all_variants()) {
    auto cfg = config(v, 0.001, 30, 0.5);
    cfg.initial_state = vec({-0.5, 0.4});
    const auto tr = run_experiment(topo, obj, cfg, 3);
    Eigen::VectorXd x = cfg.initial_state;
    for (const auto& s : tr.steps) {
      EXPECT_EQ(s.agents[0].x, x) << to_string(v);
      x = x - 0.001 * obj.global_gradient(x);
    }
  }
}

TEST(RunExperiment, MatchesIndependentLoop) {
  // noiseless quadratic, f_i = |x|^2 / 6, three agents, clusters {0,1},{2}
  const int tau = 3, T = 40;
  const double eta = 0.9, lambda = 0.5, theta = 0.3;
  const auto topo = Topology::complete(3, {{0, 1}, {2}}, tau);
  const auto obj = objective(ObjectiveKind::quadratic_pl, 2, 3, 0.0);
  auto cfg = config(Variant::pc_fixed, eta, T, theta);
  cfg.lambda = lambda;
  cfg.initial_state = vec({1.0, -0.5});
  const auto tr = run_experiment(topo, obj, cfg, 1);

  Eigen::Matrix3d W = (Eigen::Matrix3d::Constant(1.0 / 3) + Eigen::Matrix3d::Identity()) / 2;
  Eigen::Matrix3d Wt;
  Wt << 0.75, 0.25, 0, 0.25, 0.75, 0, 0, 0, 1;
  const int cl[3] = {0, 0, 1};
  std::vector<std::vector<Eigen::VectorXd>> hist{{cfg.initial_state, cfg.initial_state, cfg.initial_state}};
  for (int t = 0; t < T; ++t) {
    const auto& x = hist.back();
    std::vector<Eigen::VectorXd> next(3);
    for (int i = 0; i < 3; ++i) {
      Eigen::VectorXd pre = -eta * x[i] / 3.0, cli = -eta * x[i] / 3.0;
      for (int j = 0; j < 3; ++j) {
        if (cl[j] == cl[i]) {
          pre += W(i, j) * x[j];
          cli += Wt(i, j) * x[j];
          continue;
        }
        const auto& xs = hist[std::max(t - tau, 0)][j];
        const Eigen::VectorXd gs = xs / 3.0;
        Eigen::VectorXd gdc = Eigen::VectorXd::Zero(2);
        const auto& origin = hist[std::max(t - tau, 0)][i];
        for (int r = 0; r < tau; ++r) {
          const auto& xr = hist[std::max(t - tau + r, 0)][i];
          gdc += gs + lambda * gs.cwiseProduct(gs).cwiseProduct(xr - origin);
        }
        pre += W(i, j) * (xs - eta * gdc);
      }
      next[i] = theta * pre + (1 - theta) * cli;
      EXPECT_LT((tr.steps[t].agents[i].x_next - next[i]).norm(), 1e-13) << "t=" << t << " i=" << i;
    }
    hist.push_back(next);
  }
}

TEST(RunExperiment, ReductionEquivalences) {
  const auto topo = Topology::complete(3, {{0, 1}, {2}}, 4);
  const auto obj = objective(ObjectiveKind::rosenbrock, 2, 3, 0.1);
  auto run = [&](Variant v, double theta, const Topology& t) {
    auto cfg = config(v, 0.004, 120, theta);
    cfg.initial_state = vec({-0.5, 0.25});
    return run_experiment(t, obj, cfg, 17);
  };
  EXPECT_EQ(trace_csv(run(Variant::pc_fixed, 1.0, topo)), trace_csv(run(Variant::p_asgd, 0.5, topo)));
  EXPECT_EQ(trace_csv(run(Variant::pc_fixed, 0.0, topo)), trace_csv(run(Variant::c_asgd, 0.5, topo)));
  EXPECT_NE(trace_csv(run(Variant::pc_fixed, 0.5, topo)), trace_csv(run(Variant::p_asgd, 0.5, topo)));

  const auto single = Topology::complete(3, {{0, 1, 2}}, 4);
  const std::string reference = trace_without_theta(run(Variant::pc_fixed, 0.5, single));
  for (Variant v : all_variants()) {
    EXPECT_EQ(trace_without_theta(run(v, 0.5, single)), reference) << to_string(v);
  }
}

TEST(RunExperiment, StepRecordInvariants) {
  const auto topo = Topology::complete(4, {{0, 1}, {2, 3}}, 2);
  const auto obj = objective(ObjectiveKind::rastrigin, 3, 4, 0.2);
  for (Variant v : {Variant::pc_fixed, Variant::pc_uniform, Variant::pc_bernoulli, Variant::pc_pv}) {
    auto cfg = config(v, 0.002, 60, 0.4);
    cfg.initial_state = vec({0.3, -0.2, 0.1});
    const auto tr = run_experiment(topo, obj, cfg, 5);
    ASSERT_EQ(tr.rows.size(), 60u);
    for (const auto& step : tr.steps) {
      for (const auto& a : step.agents) {
        const Eigen::VectorXd mix = a.theta * a.x_pre + (1 - a.theta) * a.x_cli;
        EXPECT_LT((a.x_next - mix).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_GE(a.theta, 0.0);
        EXPECT_LE(a.theta, 1.0);
        if (v == Variant::pc_pv) EXPECT_TRUE(a.theta == 0.0 || a.theta == 1.0);
        if (v == Variant::pc_bernoulli) EXPECT_TRUE(a.theta == 0.0 || a.theta == 1.0);
      }
    }
  }
}

TEST(RunExperiment, QuadraticLossIsMonotoneOnOneCluster) {
  const auto topo = Topology::ring(5, {{0, 1, 2, 3, 4}}, 3);
  const auto obj = objective(ObjectiveKind::quadratic_pl, 3, 5, 0.0);
  auto cfg = config(Variant::pc_fixed, 0.9, 80, 0.5);
  cfg.initial_state = vec({2, -1, 0.5});
  const auto tr = run_experiment(topo, obj, cfg, 1);
  for (std::size_t t = 1; t < tr.rows.size(); ++t) EXPECT_LE(tr.rows[t].loss, tr.rows[t - 1].loss);
}

TEST(RunExperiment, ThreadCountDoesNotChangeOutput) {
  const auto topo = Topology::ring(7, {{0, 1, 2}, {3, 4}, {5, 6}}, 3);
  const auto obj = objective(ObjectiveKind::rastrigin, 4, 7, 0.3);
  auto cfg = config(Variant::pc_pv, 0.002, 50);
  cfg.initial_state = vec({0.2, 0.1, -0.3, 0.4});
  const auto a = run_experiment(topo, obj, cfg, 8, {1, true});
  const auto b = run_experiment(topo, obj, cfg, 8, {4, true});
  EXPECT_EQ(trace_csv(a), trace_csv(b));
  EXPECT_EQ(steps_csv(a), steps_csv(b));
  const auto c = run_experiment(topo, obj, cfg, 9);
  EXPECT_NE(trace_csv(a), trace_csv(c));
}

TEST(RunExperiment, DivergenceStopsTheRun) {
  const auto topo = Topology::complete(2, {{0, 1}}, 1);
  const auto obj = objective(ObjectiveKind::rosenbrock, 2, 2, 0.0);
  auto cfg = config(Variant::pc_fixed, 5.0, 500);
  cfg.initial_state = vec({2, 2});
  const auto tr = run_experiment(topo, obj, cfg, 1);
  EXPECT_EQ(tr.status, RunStatus::diverged);
  EXPECT_GE(tr.divergence_iteration, 0);
  EXPECT_EQ(static_cast<int>(tr.rows.size()), tr.divergence_iteration + 1);
  EXPECT_EQ(to_string(tr.status), "divergence");
}

TEST(AlgorithmConfig, Validation) {
  auto cfg = config(Variant::pc_fixed, 0.01, 10);
  cfg.lambda = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.lambda = 1.0;
  cfg.theta = 1.2;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.theta = 1.0;
  cfg.eta = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_EQ(parse_variant("pc-pv"), Variant::pc_pv);
  EXPECT_THROW(parse_variant("pc"), std::invalid_argument);
  EXPECT_EQ(all_variants().size(), 7u);
}
