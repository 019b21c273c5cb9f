#include "pcasgd/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "pcasgd/io.hpp"

namespace pcasgd {

namespace {

constexpr double kStepSlack = 1e-12;

void require_gap(const BoundInputs& in) {
  if (!(in.delta2() < 1.0)) throw std::domain_error("no spectral gap (delta2 >= 1)");
}

double spectral_norm(const Eigen::MatrixXd& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

double consensus_deviation(std::span<const Eigen::VectorXd> states) {
  if (states.empty()) throw std::invalid_argument("consensus deviation of no agents");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(states[0].size());
  for (const auto& x : states) mean += x;
  mean /= static_cast<double>(states.size());
  double worst = 0.0;
  for (const auto& x : states) worst = std::max(worst, (x - mean).norm());
  return worst;
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::analytic: return "analytic";
    case Provenance::empirical: return "empirical";
    case Provenance::configured: return "configured";
    case Provenance::assumed: return "assumed";
  }
  return "?";
}

void BoundInputs::validate() const {
  const std::pair<const char*, double> nonneg[] = {
      {"G", G},     {"B", B},         {"sigma", sigma}, {"M", M},     {"mu", mu},
      {"gamma_m", gamma_m}, {"xi_m", xi_m}, {"eps", eps}, {"eps_D", eps_D}, {"eta", eta}};
  for (const auto& [name, v] : nonneg) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string(name) + " must be finite and nonnegative");
    }
  }
  if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must be in (0,1]");
  if (tau < 1) throw std::invalid_argument("tau must be >= 1");
  if (!(theta_m >= 0.0 && theta_m <= 1.0) || !(theta_min >= 0.0 && theta_min <= theta_m)) {
    throw std::invalid_argument("need 0 <= theta_min <= theta_m <= 1");
  }
  if (!(e2 >= 0.0 && e2 <= 1.0) || !(e2_tilde >= 0.0 && e2_tilde <= 1.0)) {
    throw std::invalid_argument("e2 and e2_tilde must be in [0,1]");
  }
}

double BoundInputs::delta2() const {
  const double bracket[] = {theta_min, theta_m};
  return effective_delta2(bracket, e2, e2_tilde);
}

double lemma1_bound(const BoundInputs& in) {
  in.validate();
  require_gap(in);
  return in.eta * (in.G + (in.tau - 1) * in.B * in.theta_m) / (1.0 - in.delta2());
}

Theorem1Constants theorem1_constants(const BoundInputs& in) {
  in.validate();
  require_gap(in);
  if (!(in.mu > 0.0)) throw std::domain_error("PL constant mu must be positive");
  if (!(in.eta > 0.0) || 2.0 * in.mu * in.eta * in.tau > 1.0 + kStepSlack) {
    throw std::domain_error("step size violates the linear-rate condition eta <= 1/(2 mu tau)");
  }
  const double gap = 1.0 - in.delta2();
  const double eta = in.eta;
  const double G = in.G;
  const double tau = in.tau;
  const double bt = in.B * in.theta_m;

  Theorem1Constants c;
  c.C1 = (G + (tau - 1.0) * bt) / gap;
  c.C2 = (2.0 * G + (tau - 1.0) * bt) / gap;
  double sum_cr = 0.0;
  for (int r = 1; r <= in.tau - 1; ++r) {
    c.C_r.push_back((2.0 * G + (r - 1.0) * bt) / gap);
    sum_cr += c.C_r.back();
  }
  const double contraction = 1.0 - 2.0 * in.mu * eta * tau;
  c.Q = 2.0 * contraction * G * eta * c.C1                       //
        + eta * eta * eta * in.xi_m * G / 2.0 * sum_cr            //
        + 2.0 * eta * eta * G * in.gamma_m * c.C1                 //
        + G * eta * tau * in.sigma                                //
        + eta * eta * G * (in.gamma_m + in.eps_D + in.eps + (1.0 - in.lambda) * G * G) * sum_cr  //
        + eta * G * G                                             //
        + eta * eta * in.gamma_m * G * tau * c.C2;
  return c;
}

double theorem1_envelope(double f1_minus_fstar, double Q, double mu, double eta, int tau, int t) {
  const double rate = 2.0 * mu * eta * tau;
  if (!(rate > 0.0) || rate > 1.0 + kStepSlack) {
    throw std::domain_error("contraction factor 1 - 2 mu eta tau outside [0,1)");
  }
  if (t < 1) throw std::invalid_argument("envelope index starts at t = 1");
  const double contraction = std::max(0.0, 1.0 - rate);
  const double floor = Q / rate;
  // weighted form is exact at t = 1
  const double w = std::pow(contraction, t - 1);
  return w * f1_minus_fstar + (1.0 - w) * floor;
}

std::string to_string(RFormula f) { return f == RFormula::main ? "main" : "appendix"; }

RFormula parse_r_formula(const std::string& text) {
  if (text == "main") return RFormula::main;
  if (text == "appendix") return RFormula::appendix;
  throw std::invalid_argument("unknown r_formula '" + text + "'");
}

double theorem2_R(const BoundInputs& in, RFormula formula) {
  in.validate();
  require_gap(in);
  if (!(in.eta > 0.0) || in.eta * in.gamma_m >= 1.0) {
    throw std::domain_error("step size violates eta < 1/gamma_m (eta*gamma_m = " +
                            format_double(in.eta * in.gamma_m) + ")");
  }
  return theorem2_R_unchecked(in, formula);
}

double theorem2_R_unchecked(const BoundInputs& in, RFormula formula) {
  const double eta = in.eta;
  const double tau = in.tau;
  const double C1 = (in.G + (tau - 1.0) * in.B * in.theta_m) / (1.0 - in.delta2());
  const double noise = eta * in.sigma * in.sigma / 2.0 + eta * in.sigma * tau * in.B;
  if (formula == RFormula::main) {
    return 2.0 * in.G * C1 + tau * tau * eta * eta * in.gamma_m * in.M / 2.0 + noise +
           2.0 * eta * in.gamma_m * (tau * in.B + in.G) * C1;
  }
  return 2.0 * in.G * eta * eta * C1 + tau * eta * eta * in.gamma_m * in.M / 2.0 + noise +
         2.0 * eta * eta * in.gamma_m * (tau * in.B + in.G) * C1;
}

double theorem2_envelope(double f1_minus_fstar, double R, double eta, int T) {
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
  if (T < 1) throw std::invalid_argument("T must be >= 1");
  return 2.0 * f1_minus_fstar / (T * eta) + R / eta;
}

BoundInputs estimate_constants(const MetricsTrace& trace, const Objective& objective,
                               const Topology& topology, const AlgorithmConfig& config) {
  if (trace.status != RunStatus::completed) {
    throw std::invalid_argument("cannot estimate constants from a divergent trace");
  }
  if (trace.steps.empty()) throw std::invalid_argument("trace has no step records");
  const int n = topology.n_agents();
  const auto& spec = objective.spec();
  const bool logistic = spec.kind == ObjectiveKind::logistic_synthetic;

  BoundInputs in;
  in.lambda = config.lambda;
  in.eta = config.eta;
  in.tau = topology.delay();
  in.theta_m = 0.0;
  in.theta_min = 1.0;

  double mu = std::numeric_limits<double>::infinity();
  double sigma_seen = 0.0;
  for (const auto& step : trace.steps) {
    double g_sq = 0.0;
    double b_sq = 0.0;
    double m = 0.0;
    double dev_sq = 0.0;
    for (const auto& a : step.agents) {
      g_sq += a.g_norm * a.g_norm;
      b_sq += a.gdc_term_norm * a.gdc_term_norm;
      m += a.gdc_sq_norm;
      in.theta_m = std::max(in.theta_m, a.theta);
      in.theta_min = std::min(in.theta_min, a.theta);

      const Eigen::MatrixXd h = objective.local_hessian(a.agent, a.x);
      if (!objective.analytic_constants()) {
        in.gamma_m = std::max(in.gamma_m, spectral_norm(h));
        in.xi_m = std::max(in.xi_m, objective.local_third_derivative_norm(a.agent, a.x));
        const double gap = objective.global_loss(a.x) - objective.minimum();
        if (gap > 1e-12) {
          mu = std::min(mu, 0.5 * objective.global_gradient(a.x).squaredNorm() / gap);
        }
      }
      const Eigen::VectorXd diag = h.diagonal();
      in.eps = std::max(in.eps, (hessian_diag_estimate(a.g, config.lambda) - diag).norm());
      Eigen::MatrixXd off = h;
      off.diagonal().setZero();
      in.eps_D = std::max(in.eps_D, off.norm());
      if (logistic) dev_sq += (a.g - objective.local_gradient(a.agent, a.x)).squaredNorm();
    }
    in.G = std::max(in.G, std::sqrt(g_sq));
    in.B = std::max(in.B, std::sqrt(b_sq));
    in.M = std::max(in.M, m);
    sigma_seen = std::max(sigma_seen, std::sqrt(dev_sq));
  }

  if (const auto analytic = objective.analytic_constants()) {
    in.mu = analytic->mu;
    in.gamma_m = analytic->gamma_m;
    in.xi_m = analytic->xi_m;
    in.provenance["mu"] = in.provenance["gamma_m"] = in.provenance["xi_m"] = Provenance::analytic;
  } else {
    in.mu = std::isfinite(mu) ? mu : 0.0;
    in.provenance["mu"] = in.provenance["gamma_m"] = in.provenance["xi_m"] = Provenance::empirical;
  }
  if (logistic) {
    in.sigma = sigma_seen;
    in.provenance["sigma"] = Provenance::empirical;
  } else {
    in.sigma = std::sqrt(static_cast<double>(n)) * spec.noise_sigma;
    in.provenance["sigma"] = Provenance::configured;
  }
  for (const char* key : {"G", "B", "M", "eps", "eps_D"}) in.provenance[key] = Provenance::empirical;
  for (const char* key : {"lambda", "eta", "tau"}) in.provenance[key] = Provenance::configured;
  in.provenance["theta_m"] = in.provenance["theta_min"] = Provenance::empirical;

  const MixingMatrix w = build_predicting_matrix(topology, config.mixing);
  const MixingMatrix w_tilde = build_clipping_matrix(topology, config.mixing);
  in.e2 = std::clamp(second_eigenvalue(w.weights), 0.0, 1.0);
  in.e2_tilde = std::clamp(second_eigenvalue(w_tilde.weights), 0.0, 1.0);
  in.provenance["e2"] = in.provenance["e2_tilde"] = Provenance::analytic;
  return in;
}

BoundReport make_bound_report(const BoundInputs& inputs, double f1_minus_fstar, int T,
                              RFormula formula) {
  BoundReport rep;
  rep.inputs = inputs;
  rep.delta2 = inputs.delta2();
  rep.f1_minus_fstar = f1_minus_fstar;
  rep.T = T;
  std::vector<int> ts{1};
  if (T / 2 > 1) ts.push_back(T / 2);
  if (T > 1) ts.push_back(T);

  try {
    rep.lemma1 = lemma1_bound(inputs);
  } catch (const std::exception& e) {
    rep.notes["lemma1_bound"] = e.what();
  }
  try {
    rep.theorem1 = theorem1_constants(inputs);
    for (int t : ts) {
      rep.theorem1_envelope.emplace_back(
          t, theorem1_envelope(f1_minus_fstar, rep.theorem1->Q, inputs.mu, inputs.eta,
                               inputs.tau, t));
    }
  } catch (const std::exception& e) {
    rep.notes["theorem1"] = e.what();
  }
  try {
    rep.R = theorem2_R(inputs, formula);
    for (int t : ts) {
      rep.theorem2_envelope.emplace_back(t, theorem2_envelope(f1_minus_fstar, *rep.R, inputs.eta, t));
    }
  } catch (const std::exception& e) {
    rep.notes["theorem2"] = e.what();
  }
  return rep;
}

std::string format_bound_report(const BoundReport& rep) {
  std::ostringstream os;
  const auto& in = rep.inputs;
  auto line = [&](const std::string& key, double v) { os << key << '=' << format_double(v) << '\n'; };
  auto missing = [&](const std::string& key) { os << key << "=n/a\n"; };

  line("delta2", rep.delta2);
  line("e2", in.e2);
  line("e2_tilde", in.e2_tilde);
  line("G", in.G);
  line("B", in.B);
  line("M", in.M);
  line("sigma", in.sigma);
  line("mu", in.mu);
  line("gamma_m", in.gamma_m);
  line("xi_m", in.xi_m);
  line("eps", in.eps);
  line("eps_D", in.eps_D);
  line("lambda", in.lambda);
  line("eta", in.eta);
  os << "tau=" << in.tau << '\n';
  line("theta_m", in.theta_m);
  line("theta_min", in.theta_min);
  if (rep.theorem1) {
    line("C1", rep.theorem1->C1);
    line("C2", rep.theorem1->C2);
    os << "C_r=";
    for (std::size_t r = 0; r < rep.theorem1->C_r.size(); ++r) {
      os << (r ? ";" : "") << format_double(rep.theorem1->C_r[r]);
    }
    os << '\n';
    line("Q", rep.theorem1->Q);
  } else {
    missing("C1");
    missing("C2");
    missing("C_r");
    missing("Q");
  }
  if (rep.R) line("R", *rep.R); else missing("R");
  if (rep.lemma1) line("lemma1_bound", *rep.lemma1); else missing("lemma1_bound");
  line("f1_minus_fstar", rep.f1_minus_fstar);
  os << "T=" << rep.T << '\n';
  for (const auto& [t, v] : rep.theorem1_envelope) line("theorem1_envelope_t" + std::to_string(t), v);
  for (const auto& [t, v] : rep.theorem2_envelope) line("theorem2_envelope_t" + std::to_string(t), v);
  for (const auto& [key, p] : in.provenance) os << "provenance." << key << '=' << to_string(p) << '\n';
  for (const auto& [key, why] : rep.notes) os << "note." << key << '=' << why << '\n';
  return os.str();
}

}  // namespace pcasgd
