#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pcasgd/objective.hpp"
#include "pcasgd/staleness.hpp"
#include "pcasgd/topology.hpp"

namespace pcasgd {

enum class Variant { d_asgd, p_asgd, c_asgd, pc_fixed, pc_bernoulli, pc_uniform, pc_pv };

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);
std::vector<Variant> all_variants();

/// Sign applied to g_i in the cosine criterion. `paper` compares alignment
/// with +g_i as written; `descent` compares alignment with -g_i.
enum class CriterionSign { paper, descent };

std::string to_string(CriterionSign s);
CriterionSign parse_criterion_sign(const std::string& text);

struct AlgorithmConfig {
  Variant variant = Variant::pc_fixed;
  double eta = 0.008;
  double lambda = 0.5;
  /// Fixed theta for pc-fixed, success probability for pc-bernoulli.
  double theta = 0.5;
  int iterations = 500;
  CriterionSign criterion_sign = CriterionSign::paper;
  MixingRule mixing = MixingRule::metropolis;
  /// Shared starting point x_0 for every agent; empty means the origin.
  Eigen::VectorXd initial_state;

  void validate() const;
};

enum class PvChoice { predicting, clipping };

std::string to_string(PvChoice c);

/// The sum over r = 0..tau-1 of g + lambda * g .* g .* (x_{t-tau+r} - x_{t-tau}),
/// with the displacements taken from the receiver's own trajectory.
Eigen::VectorXd delay_compensated_gradient(const Eigen::VectorXd& g_stale, double lambda,
                                           int tau,
                                           std::span<const Eigen::VectorXd> self_trajectory);

/// The individual summands of delay_compensated_gradient, r = 0..tau-1.
std::vector<Eigen::VectorXd> delay_compensated_terms(
    const Eigen::VectorXd& g_stale, double lambda, int tau,
    std::span<const Eigen::VectorXd> self_trajectory);

/// sum_{j in R} w_ij x^j_t - eta g_i + sum_{k in R^c} w_ik (x^k_{t-tau} - eta g^dc_k).
/// `stale_gradients[n]` is g_k(x^k_{t-tau}) for `view.unreliable[n]`.
Eigen::VectorXd predicting_step(const NeighborView& view, const Eigen::MatrixXd& w,
                                const Eigen::VectorXd& g_i,
                                std::span<const Eigen::VectorXd> stale_gradients,
                                double lambda, int tau, double eta);

/// sum_{j in R} w~_ij x^j_t - eta g_i.
Eigen::VectorXd clipping_step(const NeighborView& view, const Eigen::MatrixXd& w_tilde,
                              const Eigen::VectorXd& g_i, double eta);

/// D-ASGD: the predicting combination without compensating the stale states.
Eigen::VectorXd baseline_dasgd_step(const NeighborView& view, const Eigen::MatrixXd& w,
                                    const Eigen::VectorXd& g_i, double eta);

/// theta * x_pre + (1 - theta) * x_cli. Returns an input unchanged when
/// theta is 0 or 1 or when both inputs coincide.
Eigen::VectorXd combine(double theta, const Eigen::VectorXd& x_pre, const Eigen::VectorXd& x_cli);

/// Cosine score <delta, g> / |delta|; a displacement with norm below 1e-15
/// scores 0.
double criterion_score(const Eigen::VectorXd& delta, const Eigen::VectorXd& g);

/// Picks predicting iff score(x_pre - x_t) >= score(x_cli - x_t).
std::pair<PvChoice, Eigen::VectorXd> pv_select(const Eigen::VectorXd& x_pre,
                                               const Eigen::VectorXd& x_cli,
                                               const Eigen::VectorXd& x_t,
                                               const Eigen::VectorXd& g_i,
                                               CriterionSign sign = CriterionSign::paper);

/// One agent's update at one iteration.
struct AgentStep {
  int agent = 0;
  /// theta applied to this agent (per-agent 0/1 for pc-pv).
  double theta = 0.0;
  /// Verdict of the cosine criterion. Evaluated for every variant, acted on
  /// only by pc-pv.
  PvChoice choice = PvChoice::predicting;
  Eigen::VectorXd x;       // x^i_t
  Eigen::VectorXd x_pre;   // predicting output (D-ASGD output for d-asgd)
  Eigen::VectorXd x_cli;   // clipping output
  Eigen::VectorXd x_next;  // x^i_{t+1}
  Eigen::VectorXd g;       // g_i(x^i_t) as drawn
  double g_norm = 0.0;
  /// max over r of sqrt(sum_k |g^{dc,r}_k|^2) across this agent's unreliable neighbors
  double gdc_term_norm = 0.0;
  /// sum_k |g^dc_k|^2 across this agent's unreliable neighbors
  double gdc_sq_norm = 0.0;
};

struct StepRecord {
  int t = 0;
  std::vector<AgentStep> agents;
};

/// One trace row per iteration t = 0..T-1, measured on x_t before the update.
struct TraceRow {
  int t = 0;
  double loss = 0.0;          // sum_i f_i(x^i_t)
  double grad_sq_norm = 0.0;  // (1/N) sum_i |grad F(x^i_t)|^2
  double consensus_dev = 0.0;
  double theta = 0.0;         // theta_t (pc-pv: mean of the per-agent choices)
  int pv_pred_count = 0;      // agents whose criterion favors predicting
};

enum class RunStatus { completed, diverged };

std::string to_string(RunStatus s);

struct MetricsTrace {
  std::vector<TraceRow> rows;
  std::vector<StepRecord> steps;
  RunStatus status = RunStatus::completed;
  int divergence_iteration = -1;
  std::vector<Eigen::VectorXd> final_states;
  double final_loss = 0.0;
  double wall_seconds = 0.0;
};

struct RunOptions {
  /// Worker threads for the per-agent updates inside one iteration.
  int threads = 1;
  /// Keep full per-agent StepRecords (needed for constant estimation).
  bool record_steps = true;
};

/// Simulates T synchronous iterations: every agent reads the iteration-t
/// snapshot, then all agents write t+1. Output depends only on the inputs
/// and the seed, not on `options.threads`.
MetricsTrace run_experiment(const Topology& topology, const Objective& objective,
                            const AlgorithmConfig& config, std::uint64_t seed,
                            const RunOptions& options = {});

}  // namespace pcasgd
