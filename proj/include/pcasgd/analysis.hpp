#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pcasgd/objective.hpp"
#include "pcasgd/optimizer.hpp"
#include "pcasgd/topology.hpp"

namespace pcasgd {

/// max_i |x^i - mean(x)|.
double consensus_deviation(std::span<const Eigen::VectorXd> states);

enum class Provenance { analytic, empirical, configured, assumed };
std::string to_string(Provenance p);

/// Constants consumed by the consensus and convergence bounds.
///
/// `theta_min` and `theta_m` bracket the theta values that were applied;
/// since theta * e2 + (1 - theta) * e2_tilde is affine in theta, the
/// effective delta2 over any schedule is attained at one of them.
struct BoundInputs {
  double G = 0.0;
  double B = 0.0;
  double sigma = 0.0;
  double M = 0.0;
  double mu = 0.0;
  double gamma_m = 0.0;
  double xi_m = 0.0;
  double eps = 0.0;
  double eps_D = 0.0;
  double lambda = 1.0;
  double eta = 0.0;
  int tau = 1;
  double theta_m = 0.0;
  double theta_min = 0.0;
  double e2 = 0.0;
  double e2_tilde = 0.0;
  std::map<std::string, Provenance> provenance;

  /// Nonnegativity and range checks; throws std::invalid_argument.
  void validate() const;
  double delta2() const;
};

/// eta (G + (tau - 1) B theta_m) / (1 - delta2). Throws "no spectral gap"
/// when delta2 >= 1.
double lemma1_bound(const BoundInputs& in);

struct Theorem1Constants {
  double C1 = 0.0;
  std::vector<double> C_r;  // r = 1..tau-1
  double C2 = 0.0;
  double Q = 0.0;
};

/// C1, C_r, C2 and the neighborhood constant Q of the linear-rate bound.
/// Requires 0 < eta <= 1 / (2 mu tau).
Theorem1Constants theorem1_constants(const BoundInputs& in);

/// (1 - 2 mu eta tau)^(t-1) (F1 - F* - Q / (2 mu eta tau)) + Q / (2 mu eta tau).
double theorem1_envelope(double f1_minus_fstar, double Q, double mu, double eta, int tau, int t);

enum class RFormula { main, appendix };
std::string to_string(RFormula f);
RFormula parse_r_formula(const std::string& text);

/// Radius constant of the nonconvex bound. Requires 0 < eta < 1 / gamma_m.
double theorem2_R(const BoundInputs& in, RFormula formula = RFormula::main);

/// The same expression with no step-size or spectral-gap checks (diagnostics only).
double theorem2_R_unchecked(const BoundInputs& in, RFormula formula = RFormula::main);

/// 2 (F1 - F*) / (T eta) + R / eta.
double theorem2_envelope(double f1_minus_fstar, double R, double eta, int T);

/// Estimates every BoundInputs field from a completed run.
///
/// G, B, M and (for logistic-synthetic) sigma are empirical suprema of
/// stacked (all-agent) norms over the recorded steps:
///   G     = max_t sqrt(sum_i |g_i|^2)
///   B     = max_t sqrt(sum_i gdc_term_norm_i^2)
///   M     = max_t sum_i gdc_sq_norm_i
///   sigma = sqrt(N) * noise_sigma for the additive-noise kinds.
/// mu, gamma_m, xi_m are analytic for quadratic-pl; otherwise gamma_m and
/// xi_m are maxima of local Hessian / third-derivative norms at visited
/// points and mu is the smallest observed PL ratio. eps and eps_D sample the
/// diagonal estimate error and the off-diagonal Hessian mass there.
BoundInputs estimate_constants(const MetricsTrace& trace, const Objective& objective,
                               const Topology& topology, const AlgorithmConfig& config);

struct BoundReport {
  BoundInputs inputs;
  double delta2 = 0.0;
  std::optional<double> lemma1;
  std::optional<Theorem1Constants> theorem1;
  std::optional<double> R;
  double f1_minus_fstar = 0.0;
  int T = 0;
  /// (t, value) for t in {1, T/2, T}
  std::vector<std::pair<int, double>> theorem1_envelope;
  std::vector<std::pair<int, double>> theorem2_envelope;
  /// Why a bound is missing, keyed by bound name.
  std::map<std::string, std::string> notes;
};

BoundReport make_bound_report(const BoundInputs& inputs, double f1_minus_fstar, int T,
                              RFormula formula = RFormula::main);

/// Flat key=value lines.
std::string format_bound_report(const BoundReport& report);

}  // namespace pcasgd
