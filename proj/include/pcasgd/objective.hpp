#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pcasgd {

enum class ObjectiveKind { rosenbrock, rastrigin, quadratic_pl, logistic_synthetic };

std::string to_string(ObjectiveKind kind);
ObjectiveKind parse_objective_kind(const std::string& text);

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::rosenbrock;
  int dimension = 2;
  /// Standard deviation of the additive gradient noise (total, not per
  /// coordinate). Ignored by logistic-synthetic, which samples minibatches.
  double noise_sigma = 0.0;
  int n_agents = 1;

  // logistic-synthetic only
  int samples = 240;
  int batch_size = 8;
  std::uint64_t data_seed = 7;
  double label_noise = 0.1;
};

struct GradientSample {
  Eigen::VectorXd value;
  bool is_noisy = false;
};

/// Constants known in closed form for an objective.
struct AnalyticConstants {
  double mu = 0.0;       // PL constant of F
  double gamma_m = 0.0;  // smoothness bound valid for every local f_i
  double xi_m = 0.0;     // smoothness of the gradient map (Hessian Lipschitz)
};

/// F(x) = sum_i f_i(x) over agents. Analytic kinds split F uniformly
/// (f_i = F / N); logistic-synthetic shards a fixed synthetic data set
/// round-robin across agents.
class Objective {
 public:
  explicit Objective(ObjectiveSpec spec);

  const ObjectiveSpec& spec() const { return spec_; }
  int dimension() const { return spec_.dimension; }
  int n_agents() const { return spec_.n_agents; }

  double local_loss(int agent, const Eigen::VectorXd& x) const;
  Eigen::VectorXd local_gradient(int agent, const Eigen::VectorXd& x) const;
  Eigen::MatrixXd local_hessian(int agent, const Eigen::VectorXd& x) const;

  /// Frobenius norm of the third-derivative tensor of f_i at x; bounds the
  /// local Lipschitz constant of the Hessian.
  double local_third_derivative_norm(int agent, const Eigen::VectorXd& x) const;

  /// Unbiased sample of grad f_i(x). Analytic kinds add N(0, sigma^2 / d) per
  /// coordinate; logistic-synthetic draws a uniform minibatch from the shard.
  GradientSample stochastic_gradient(int agent, const Eigen::VectorXd& x,
                                     std::mt19937_64& rng) const;

  double global_loss(const Eigen::VectorXd& x) const;
  Eigen::VectorXd global_gradient(const Eigen::VectorXd& x) const;

  /// F*. Exact for the analytic kinds; a lower bound (0) for logistic.
  double minimum() const;
  bool minimum_is_exact() const;

  std::optional<AnalyticConstants> analytic_constants() const;

  /// Number of samples held by an agent (logistic-synthetic); 0 otherwise.
  int shard_size(int agent) const;

 private:
  void check(int agent, const Eigen::VectorXd& x) const;

  double full_loss(const Eigen::VectorXd& x) const;
  Eigen::VectorXd full_gradient(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd full_hessian(const Eigen::VectorXd& x) const;
  double full_third_norm(const Eigen::VectorXd& x) const;

  double sample_loss(int s, const Eigen::VectorXd& x) const;
  Eigen::VectorXd sample_gradient(int s, const Eigen::VectorXd& x) const;

  ObjectiveSpec spec_;
  // logistic-synthetic data: rows are samples, labels in {-1, +1}
  Eigen::MatrixXd features_;
  Eigen::VectorXd labels_;
  std::vector<std::vector<int>> shards_;
};

/// Diagonal outer-product Hessian estimate lambda * (g .* g).
Eigen::VectorXd hessian_diag_estimate(const Eigen::VectorXd& g, double lambda);

}  // namespace pcasgd
