#include "pcasgd/objective.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pcasgd {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kRosenbrockScale = 100.0;
constexpr double kRastriginA = 10.0;

double softplus(double z) {
  // log(1 + exp(z)) without overflow
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

std::string to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::rosenbrock: return "rosenbrock";
    case ObjectiveKind::rastrigin: return "rastrigin";
    case ObjectiveKind::quadratic_pl: return "quadratic-pl";
    case ObjectiveKind::logistic_synthetic: return "logistic-synthetic";
  }
  return "?";
}

ObjectiveKind parse_objective_kind(const std::string& text) {
  if (text == "rosenbrock") return ObjectiveKind::rosenbrock;
  if (text == "rastrigin") return ObjectiveKind::rastrigin;
  if (text == "quadratic-pl") return ObjectiveKind::quadratic_pl;
  if (text == "logistic-synthetic") return ObjectiveKind::logistic_synthetic;
  throw std::invalid_argument("unknown objective kind '" + text + "'");
}

Objective::Objective(ObjectiveSpec spec) : spec_(spec) {
  if (spec_.dimension < 1) throw std::invalid_argument("dimension must be positive");
  if (spec_.n_agents < 1) throw std::invalid_argument("n_agents must be positive");
  if (!(spec_.noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
  if (spec_.kind == ObjectiveKind::rosenbrock && spec_.dimension < 2) {
    throw std::invalid_argument("rosenbrock needs dimension >= 2");
  }
  if (spec_.kind != ObjectiveKind::logistic_synthetic) return;

  if (spec_.samples < spec_.n_agents) {
    throw std::invalid_argument("logistic-synthetic needs at least one sample per agent");
  }
  if (spec_.batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (!(spec_.label_noise >= 0.0 && spec_.label_noise < 0.5)) {
    throw std::invalid_argument("label_noise must be in [0, 0.5)");
  }
  std::mt19937_64 rng(spec_.data_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution flip(spec_.label_noise);
  const int d = spec_.dimension;
  Eigen::VectorXd truth(d);
  for (int k = 0; k < d; ++k) truth(k) = normal(rng);
  features_.resize(spec_.samples, d);
  labels_.resize(spec_.samples);
  for (int s = 0; s < spec_.samples; ++s) {
    for (int k = 0; k < d; ++k) features_(s, k) = normal(rng);
    double y = features_.row(s).dot(truth) >= 0.0 ? 1.0 : -1.0;
    if (flip(rng)) y = -y;
    labels_(s) = y;
  }
  shards_.assign(spec_.n_agents, {});
  for (int s = 0; s < spec_.samples; ++s) shards_[s % spec_.n_agents].push_back(s);
}

void Objective::check(int agent, const Eigen::VectorXd& x) const {
  if (agent < 0 || agent >= spec_.n_agents) throw std::out_of_range("unknown agent");
  if (x.size() != spec_.dimension) {
    throw std::invalid_argument("dimension mismatch: expected " +
                                std::to_string(spec_.dimension) + ", got " +
                                std::to_string(x.size()));
  }
}

double Objective::sample_loss(int s, const Eigen::VectorXd& x) const {
  return softplus(-labels_(s) * features_.row(s).dot(x));
}

Eigen::VectorXd Objective::sample_gradient(int s, const Eigen::VectorXd& x) const {
  const double margin = labels_(s) * features_.row(s).dot(x);
  return (-labels_(s) * sigmoid(-margin)) * features_.row(s).transpose();
}

double Objective::full_loss(const Eigen::VectorXd& x) const {
  switch (spec_.kind) {
    case ObjectiveKind::rosenbrock: {
      double f = 0.0;
      for (int k = 0; k + 1 < x.size(); ++k) {
        const double a = x(k + 1) - x(k) * x(k);
        const double b = 1.0 - x(k);
        f += kRosenbrockScale * a * a + b * b;
      }
      return f;
    }
    case ObjectiveKind::rastrigin: {
      double f = kRastriginA * static_cast<double>(x.size());
      for (int k = 0; k < x.size(); ++k) {
        f += x(k) * x(k) - kRastriginA * std::cos(2.0 * kPi * x(k));
      }
      return f;
    }
    case ObjectiveKind::quadratic_pl:
      return 0.5 * x.squaredNorm();
    case ObjectiveKind::logistic_synthetic: {
      double f = 0.0;
      for (int s = 0; s < spec_.samples; ++s) f += sample_loss(s, x);
      return f / spec_.samples;
    }
  }
  return 0.0;
}

Eigen::VectorXd Objective::full_gradient(const Eigen::VectorXd& x) const {
  const auto d = x.size();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
  switch (spec_.kind) {
    case ObjectiveKind::rosenbrock:
      for (int k = 0; k + 1 < d; ++k) {
        const double a = x(k + 1) - x(k) * x(k);
        g(k) += -4.0 * kRosenbrockScale * x(k) * a - 2.0 * (1.0 - x(k));
        g(k + 1) += 2.0 * kRosenbrockScale * a;
      }
      return g;
    case ObjectiveKind::rastrigin:
      for (int k = 0; k < d; ++k) {
        g(k) = 2.0 * x(k) + 2.0 * kPi * kRastriginA * std::sin(2.0 * kPi * x(k));
      }
      return g;
    case ObjectiveKind::quadratic_pl:
      return x;
    case ObjectiveKind::logistic_synthetic:
      for (int s = 0; s < spec_.samples; ++s) g += sample_gradient(s, x);
      return g / spec_.samples;
  }
  return g;
}

Eigen::MatrixXd Objective::full_hessian(const Eigen::VectorXd& x) const {
  const auto d = x.size();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(d, d);
  switch (spec_.kind) {
    case ObjectiveKind::rosenbrock:
      for (int k = 0; k + 1 < d; ++k) {
        h(k, k) += 12.0 * kRosenbrockScale * x(k) * x(k) - 4.0 * kRosenbrockScale * x(k + 1) + 2.0;
        h(k, k + 1) += -4.0 * kRosenbrockScale * x(k);
        h(k + 1, k) += -4.0 * kRosenbrockScale * x(k);
        h(k + 1, k + 1) += 2.0 * kRosenbrockScale;
      }
      return h;
    case ObjectiveKind::rastrigin:
      for (int k = 0; k < d; ++k) {
        h(k, k) = 2.0 + 4.0 * kPi * kPi * kRastriginA * std::cos(2.0 * kPi * x(k));
      }
      return h;
    case ObjectiveKind::quadratic_pl:
      return Eigen::MatrixXd::Identity(d, d);
    case ObjectiveKind::logistic_synthetic:
      for (int s = 0; s < spec_.samples; ++s) {
        const double p = sigmoid(labels_(s) * features_.row(s).dot(x));
        h += p * (1.0 - p) * features_.row(s).transpose() * features_.row(s);
      }
      return h / spec_.samples;
  }
  return h;
}

double Objective::full_third_norm(const Eigen::VectorXd& x) const {
  const auto d = x.size();
  switch (spec_.kind) {
    case ObjectiveKind::rosenbrock: {
      // Nonzero third partials per coupled pair (k, k+1): d3/dx_k^3 = 24 b x_k,
      // d3/dx_k^2 dx_{k+1} = -4 b (three index permutations).
      Eigen::VectorXd ddd = Eigen::VectorXd::Zero(d);
      double cross = 0.0;
      for (int k = 0; k + 1 < d; ++k) {
        ddd(k) += 24.0 * kRosenbrockScale * x(k);
        cross += 3.0 * std::pow(4.0 * kRosenbrockScale, 2);
      }
      return std::sqrt(ddd.squaredNorm() + cross);
    }
    case ObjectiveKind::rastrigin: {
      double sq = 0.0;
      for (int k = 0; k < d; ++k) {
        const double v = -8.0 * kPi * kPi * kPi * kRastriginA * std::sin(2.0 * kPi * x(k));
        sq += v * v;
      }
      return std::sqrt(sq);
    }
    case ObjectiveKind::quadratic_pl:
      return 0.0;
    case ObjectiveKind::logistic_synthetic: {
      // T = (1/n) sum_s c_s a_s (x) a_s (x) a_s with c_s = y^3 p(1-p)(1-2p);
      // ||a (x) a (x) a||_F = ||a||^3.
      double bound = 0.0;
      for (int s = 0; s < spec_.samples; ++s) {
        const double p = sigmoid(labels_(s) * features_.row(s).dot(x));
        bound += std::abs(p * (1.0 - p) * (1.0 - 2.0 * p)) * std::pow(features_.row(s).norm(), 3);
      }
      return bound / spec_.samples;
    }
  }
  return 0.0;
}

double Objective::local_loss(int agent, const Eigen::VectorXd& x) const {
  check(agent, x);
  if (spec_.kind == ObjectiveKind::logistic_synthetic) {
    double f = 0.0;
    for (int s : shards_[agent]) f += sample_loss(s, x);
    return f / spec_.samples;
  }
  return full_loss(x) / spec_.n_agents;
}

Eigen::VectorXd Objective::local_gradient(int agent, const Eigen::VectorXd& x) const {
  check(agent, x);
  if (spec_.kind == ObjectiveKind::logistic_synthetic) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
    for (int s : shards_[agent]) g += sample_gradient(s, x);
    return g / spec_.samples;
  }
  return full_gradient(x) / spec_.n_agents;
}

Eigen::MatrixXd Objective::local_hessian(int agent, const Eigen::VectorXd& x) const {
  check(agent, x);
  if (spec_.kind == ObjectiveKind::logistic_synthetic) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(x.size(), x.size());
    for (int s : shards_[agent]) {
      const double p = sigmoid(labels_(s) * features_.row(s).dot(x));
      h += p * (1.0 - p) * features_.row(s).transpose() * features_.row(s);
    }
    return h / spec_.samples;
  }
  return full_hessian(x) / spec_.n_agents;
}

double Objective::local_third_derivative_norm(int agent, const Eigen::VectorXd& x) const {
  check(agent, x);
  if (spec_.kind == ObjectiveKind::logistic_synthetic) {
    double bound = 0.0;
    for (int s : shards_[agent]) {
      const double p = sigmoid(labels_(s) * features_.row(s).dot(x));
      bound += std::abs(p * (1.0 - p) * (1.0 - 2.0 * p)) * std::pow(features_.row(s).norm(), 3);
    }
    return bound / spec_.samples;
  }
  return full_third_norm(x) / spec_.n_agents;
}

GradientSample Objective::stochastic_gradient(int agent, const Eigen::VectorXd& x,
                                              std::mt19937_64& rng) const {
  check(agent, x);
  GradientSample out;
  if (spec_.kind == ObjectiveKind::logistic_synthetic) {
    const auto& shard = shards_[agent];
    std::uniform_int_distribution<std::size_t> pick(0, shard.size() - 1);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
    for (int b = 0; b < spec_.batch_size; ++b) g += sample_gradient(shard[pick(rng)], x);
    // scaled so the expectation is the shard sum divided by the global count
    const double scale = static_cast<double>(shard.size()) /
                         (static_cast<double>(spec_.batch_size) * spec_.samples);
    out.value = g * scale;
    out.is_noisy = true;
    return out;
  }
  out.value = full_gradient(x) / spec_.n_agents;
  if (spec_.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, spec_.noise_sigma / std::sqrt(x.size()));
    for (int k = 0; k < x.size(); ++k) out.value(k) += noise(rng);
    out.is_noisy = true;
  }
  return out;
}

double Objective::global_loss(const Eigen::VectorXd& x) const {
  check(0, x);
  return full_loss(x);
}

Eigen::VectorXd Objective::global_gradient(const Eigen::VectorXd& x) const {
  check(0, x);
  return full_gradient(x);
}

double Objective::minimum() const { return 0.0; }

bool Objective::minimum_is_exact() const {
  return spec_.kind != ObjectiveKind::logistic_synthetic;
}

std::optional<AnalyticConstants> Objective::analytic_constants() const {
  if (spec_.kind != ObjectiveKind::quadratic_pl) return std::nullopt;
  // F = |x|^2 / 2: Hessian is I, so mu = gamma = 1 and the gradient map is linear.
  return AnalyticConstants{1.0, 1.0, 0.0};
}

int Objective::shard_size(int agent) const {
  if (spec_.kind != ObjectiveKind::logistic_synthetic) return 0;
  return static_cast<int>(shards_.at(agent).size());
}

Eigen::VectorXd hessian_diag_estimate(const Eigen::VectorXd& g, double lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0)) throw std::invalid_argument("lambda must be in (0,1]");
  return lambda * g.cwiseProduct(g);
}

}  // namespace pcasgd
