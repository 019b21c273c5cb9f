#include "pcasgd/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <thread>

#include "pcasgd/analysis.hpp"
#include "pcasgd/rng.hpp"

namespace pcasgd {

namespace {

constexpr double kVanishingNorm = 1e-15;

bool is_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

// Consensus over the agent itself and its reliable neighbors, in the order
// self then ascending neighbor id, minus the local gradient step. Every update
// law starts from exactly this expression so that the degenerate cases agree
// bit for bit.
Eigen::VectorXd reliable_part(const NeighborView& view, const Eigen::MatrixXd& w,
                              const Eigen::VectorXd& g_i, double eta) {
  const int i = view.agent;
  Eigen::VectorXd acc = w(i, i) * view.self;
  for (const auto& n : view.reliable) acc += w(i, n.agent) * n.x;
  acc -= eta * g_i;
  return acc;
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::d_asgd: return "d-asgd";
    case Variant::p_asgd: return "p-asgd";
    case Variant::c_asgd: return "c-asgd";
    case Variant::pc_fixed: return "pc-fixed";
    case Variant::pc_bernoulli: return "pc-bernoulli";
    case Variant::pc_uniform: return "pc-uniform";
    case Variant::pc_pv: return "pc-pv";
  }
  return "?";
}

Variant parse_variant(const std::string& text) {
  for (Variant v : all_variants()) {
    if (to_string(v) == text) return v;
  }
  throw std::invalid_argument("unknown variant '" + text + "'");
}

std::vector<Variant> all_variants() {
  return {Variant::d_asgd,       Variant::p_asgd,     Variant::c_asgd, Variant::pc_fixed,
          Variant::pc_bernoulli, Variant::pc_uniform, Variant::pc_pv};
}

std::string to_string(CriterionSign s) { return s == CriterionSign::paper ? "paper" : "descent"; }

CriterionSign parse_criterion_sign(const std::string& text) {
  if (text == "paper") return CriterionSign::paper;
  if (text == "descent") return CriterionSign::descent;
  throw std::invalid_argument("unknown criterion_sign '" + text + "'");
}

std::string to_string(PvChoice c) { return c == PvChoice::predicting ? "predicting" : "clipping"; }

std::string to_string(RunStatus s) { return s == RunStatus::completed ? "completed" : "divergence"; }

void AlgorithmConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("eta must be > 0");
  if (!(lambda > 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("lambda must satisfy λ ∈ (0,1]");
  }
  if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("theta must be in [0,1]");
  if (iterations < 1) throw std::invalid_argument("iterations must be positive");
}

std::vector<Eigen::VectorXd> delay_compensated_terms(
    const Eigen::VectorXd& g_stale, double lambda, int tau,
    std::span<const Eigen::VectorXd> self_trajectory) {
  if (tau < 1) throw std::invalid_argument("tau must be >= 1");
  if (static_cast<int>(self_trajectory.size()) != tau) {
    throw std::invalid_argument("self trajectory must hold exactly tau states");
  }
  const Eigen::VectorXd curvature = hessian_diag_estimate(g_stale, lambda);
  const Eigen::VectorXd& origin = self_trajectory[0];
  std::vector<Eigen::VectorXd> terms;
  terms.reserve(static_cast<std::size_t>(tau));
  for (int r = 0; r < tau; ++r) {
    terms.push_back(g_stale + curvature.cwiseProduct(self_trajectory[r] - origin));
  }
  return terms;
}

Eigen::VectorXd delay_compensated_gradient(const Eigen::VectorXd& g_stale, double lambda,
                                           int tau,
                                           std::span<const Eigen::VectorXd> self_trajectory) {
  const auto terms = delay_compensated_terms(g_stale, lambda, tau, self_trajectory);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(g_stale.size());
  for (const auto& term : terms) sum += term;
  return sum;
}

Eigen::VectorXd predicting_step(const NeighborView& view, const Eigen::MatrixXd& w,
                                const Eigen::VectorXd& g_i,
                                std::span<const Eigen::VectorXd> stale_gradients,
                                double lambda, int tau, double eta) {
  if (stale_gradients.size() != view.unreliable.size()) {
    throw std::invalid_argument("one stale gradient per unreliable neighbor required");
  }
  Eigen::VectorXd acc = reliable_part(view, w, g_i, eta);
  for (std::size_t n = 0; n < view.unreliable.size(); ++n) {
    const auto& k = view.unreliable[n];
    const Eigen::VectorXd g_dc =
        delay_compensated_gradient(stale_gradients[n], lambda, tau, view.self_trajectory);
    acc += w(view.agent, k.agent) * (k.x - eta * g_dc);
  }
  return acc;
}

Eigen::VectorXd clipping_step(const NeighborView& view, const Eigen::MatrixXd& w_tilde,
                              const Eigen::VectorXd& g_i, double eta) {
  return reliable_part(view, w_tilde, g_i, eta);
}

Eigen::VectorXd baseline_dasgd_step(const NeighborView& view, const Eigen::MatrixXd& w,
                                    const Eigen::VectorXd& g_i, double eta) {
  Eigen::VectorXd acc = reliable_part(view, w, g_i, eta);
  for (const auto& k : view.unreliable) acc += w(view.agent, k.agent) * k.x;
  return acc;
}

Eigen::VectorXd combine(double theta, const Eigen::VectorXd& x_pre, const Eigen::VectorXd& x_cli) {
  if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("theta outside [0,1]");
  if (x_pre.size() != x_cli.size()) throw std::invalid_argument("dimension mismatch");
  if (theta == 1.0) return x_pre;
  if (theta == 0.0 || x_pre == x_cli) return x_cli;
  return theta * x_pre + (1.0 - theta) * x_cli;
}

double criterion_score(const Eigen::VectorXd& delta, const Eigen::VectorXd& g) {
  const double norm = delta.norm();
  if (norm < kVanishingNorm) return 0.0;
  return delta.dot(g) / norm;
}

std::pair<PvChoice, Eigen::VectorXd> pv_select(const Eigen::VectorXd& x_pre,
                                               const Eigen::VectorXd& x_cli,
                                               const Eigen::VectorXd& x_t,
                                               const Eigen::VectorXd& g_i, CriterionSign sign) {
  const Eigen::VectorXd g = sign == CriterionSign::paper ? g_i : Eigen::VectorXd(-g_i);
  const double pre = criterion_score(x_pre - x_t, g);
  const double cli = criterion_score(x_cli - x_t, g);
  if (pre >= cli) return {PvChoice::predicting, x_pre};
  return {PvChoice::clipping, x_cli};
}

namespace {

struct RunContext {
  const Topology& topology;
  const Objective& objective;
  const AlgorithmConfig& config;
  const Eigen::MatrixXd& w;
  const Eigen::MatrixXd& w_tilde;
  const StateHistory& history;
};

AgentStep step_agent(const RunContext& ctx, int agent, int t, double theta_t,
                     std::mt19937_64& rng) {
  const auto& cfg = ctx.config;
  const int tau = ctx.topology.delay();
  const NeighborView v = view(ctx.history, ctx.topology, agent, t);

  AgentStep s;
  s.agent = agent;
  s.x = v.self;
  s.g = ctx.objective.stochastic_gradient(agent, v.self, rng).value;
  s.g_norm = s.g.norm();

  // The receiver recomputes each unreliable neighbor's gradient at the stale
  // state, drawing from its own stream.
  std::vector<Eigen::VectorXd> stale;
  stale.reserve(v.unreliable.size());
  for (const auto& k : v.unreliable) {
    stale.push_back(ctx.objective.stochastic_gradient(k.agent, k.x, rng).value);
  }

  if (!stale.empty()) {
    std::vector<double> per_r(static_cast<std::size_t>(tau), 0.0);
    for (const auto& g_k : stale) {
      const auto terms = delay_compensated_terms(g_k, cfg.lambda, tau, v.self_trajectory);
      Eigen::VectorXd sum = Eigen::VectorXd::Zero(g_k.size());
      for (int r = 0; r < tau; ++r) {
        per_r[r] += terms[r].squaredNorm();
        sum += terms[r];
      }
      s.gdc_sq_norm += sum.squaredNorm();
    }
    s.gdc_term_norm = std::sqrt(*std::max_element(per_r.begin(), per_r.end()));
  }

  s.x_pre = cfg.variant == Variant::d_asgd
                ? baseline_dasgd_step(v, ctx.w, s.g, cfg.eta)
                : predicting_step(v, ctx.w, s.g, stale, cfg.lambda, tau, cfg.eta);
  s.x_cli = clipping_step(v, ctx.w_tilde, s.g, cfg.eta);

  auto [choice, chosen] = pv_select(s.x_pre, s.x_cli, s.x, s.g, cfg.criterion_sign);
  s.choice = choice;
  if (cfg.variant == Variant::pc_pv) {
    s.theta = choice == PvChoice::predicting ? 1.0 : 0.0;
    s.x_next = std::move(chosen);
  } else {
    s.theta = theta_t;
    s.x_next = combine(theta_t, s.x_pre, s.x_cli);
  }
  return s;
}

double draw_theta(const AlgorithmConfig& cfg, std::mt19937_64& rng) {
  switch (cfg.variant) {
    case Variant::d_asgd:
    case Variant::p_asgd:
      return 1.0;
    case Variant::c_asgd:
      return 0.0;
    case Variant::pc_fixed:
      return cfg.theta;
    case Variant::pc_bernoulli:
      return std::bernoulli_distribution(cfg.theta)(rng) ? 1.0 : 0.0;
    case Variant::pc_uniform:
      return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    case Variant::pc_pv:
      return 1.0;  // unused, per-agent
  }
  return 1.0;
}

}  // namespace

MetricsTrace run_experiment(const Topology& topology, const Objective& objective,
                            const AlgorithmConfig& config, std::uint64_t seed,
                            const RunOptions& options) {
  config.validate();
  const int n = topology.n_agents();
  const int d = objective.dimension();
  if (objective.n_agents() != n) {
    throw std::invalid_argument("objective and topology disagree on the agent count");
  }
  Eigen::VectorXd x0 = config.initial_state.size() == 0 ? Eigen::VectorXd::Zero(d)
                                                         : config.initial_state;
  if (x0.size() != d) throw std::invalid_argument("initial state dimension mismatch");

  const auto start = std::chrono::steady_clock::now();
  const MixingMatrix w = build_predicting_matrix(topology, config.mixing);
  const MixingMatrix w_tilde = build_clipping_matrix(topology, config.mixing);

  StateHistory history(n, topology.delay());
  std::vector<Eigen::VectorXd> xs(static_cast<std::size_t>(n), x0);
  for (int i = 0; i < n; ++i) history.record(i, 0, x0);

  std::vector<std::mt19937_64> noise;
  noise.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) noise.push_back(make_stream(seed, StreamPurpose::gradient_noise, i));
  std::mt19937_64 theta_rng = make_stream(seed, StreamPurpose::theta, kSharedStream);

  const RunContext ctx{topology, objective, config, w.weights, w_tilde.weights, history};
  const int workers = std::clamp(options.threads, 1, n);

  MetricsTrace trace;
  trace.rows.reserve(static_cast<std::size_t>(config.iterations));
  std::vector<AgentStep> steps(static_cast<std::size_t>(n));

  for (int t = 0; t < config.iterations; ++t) {
    TraceRow row;
    row.t = t;
    for (int i = 0; i < n; ++i) {
      row.loss += objective.local_loss(i, xs[i]);
      row.grad_sq_norm += objective.global_gradient(xs[i]).squaredNorm();
    }
    row.grad_sq_norm /= n;
    row.consensus_dev = consensus_deviation(xs);

    const double theta_t = draw_theta(config, theta_rng);

    if (workers == 1) {
      for (int i = 0; i < n; ++i) steps[i] = step_agent(ctx, i, t, theta_t, noise[i]);
    } else {
      std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
      {
        std::vector<std::jthread> pool;
        for (int wkr = 0; wkr < workers; ++wkr) {
          pool.emplace_back([&, wkr] {
            try {
              for (int i = wkr; i < n; i += workers) {
                steps[i] = step_agent(ctx, i, t, theta_t, noise[i]);
              }
            } catch (...) {
              errors[wkr] = std::current_exception();
            }
          });
        }
      }
      for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }

    double theta_sum = 0.0;
    bool finite = std::isfinite(row.loss) && std::isfinite(row.grad_sq_norm);
    for (const auto& s : steps) {
      theta_sum += s.theta;
      if (s.choice == PvChoice::predicting) ++row.pv_pred_count;
      finite = finite && is_finite(s.x_next);
    }
    row.theta = config.variant == Variant::pc_pv ? theta_sum / n : theta_t;
    trace.rows.push_back(row);
    if (options.record_steps) trace.steps.push_back({t, steps});

    if (!finite) {
      trace.status = RunStatus::diverged;
      trace.divergence_iteration = t;
      break;
    }
    for (int i = 0; i < n; ++i) {
      xs[i] = steps[i].x_next;
      history.record(i, t + 1, xs[i]);
    }
  }

  trace.final_states = xs;
  trace.final_loss = 0.0;
  for (int i = 0; i < n; ++i) trace.final_loss += objective.local_loss(i, xs[i]);
  trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

}  // namespace pcasgd
