#include "pcasgd/topology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace pcasgd {

namespace {

constexpr double kStochasticTol = 1e-12;
constexpr double kSymmetryTol = 1e-12;
constexpr double kLazyThreshold = 1e-12;

std::vector<Edge> normalize_edges(int n, std::vector<Edge> edges) {
  for (auto& e : edges) {
    if (e.a < 0 || e.b < 0 || e.a >= n || e.b >= n) {
      throw std::invalid_argument("edge endpoint out of range");
    }
    if (e.a == e.b) {
      throw std::invalid_argument("self-loop in edge list (self-loops are implied)");
    }
    if (e.a > e.b) std::swap(e.a, e.b);
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& l, const Edge& r) {
    return l.a != r.a ? l.a < r.a : l.b < r.b;
  });
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

// Metropolis-Hastings weights over the edges accepted by `keep`.
template <typename Keep>
Eigen::MatrixXd metropolis(const Topology& topo, Keep keep) {
  const int n = topo.n_agents();
  std::vector<int> deg(n, 0);
  for (const auto& e : topo.edges()) {
    if (keep(e.a, e.b)) {
      ++deg[e.a];
      ++deg[e.b];
    }
  }
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (const auto& e : topo.edges()) {
    if (!keep(e.a, e.b)) continue;
    const double v = 1.0 / (1.0 + std::max(deg[e.a], deg[e.b]));
    w(e.a, e.b) = v;
    w(e.b, e.a) = v;
  }
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j != i) off += w(i, j);
    }
    w(i, i) = 1.0 - off;
  }
  return w;
}

void make_lazy_if_needed(MixingMatrix& m) {
  const Eigen::VectorXd eig = symmetric_eigenvalues(m.weights);
  if (eig.size() > 0 && eig(0) <= kLazyThreshold) {
    const auto n = m.weights.rows();
    m.weights = 0.5 * (m.weights + Eigen::MatrixXd::Identity(n, n));
    m.lazy = true;
  }
}

void require_complete(const Topology& topo) {
  const int n = topo.n_agents();
  if (static_cast<long>(topo.edges().size()) != static_cast<long>(n) * (n - 1) / 2) {
    throw std::invalid_argument("uniform averaging requires a complete graph");
  }
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

Topology::Topology(int n_agents, std::vector<Edge> edges,
                   std::vector<std::vector<int>> clusters, int delay)
    : n_agents_(n_agents), delay_(delay) {
  if (n_agents < 1) throw std::invalid_argument("n_agents must be positive");
  if (delay < 1) throw std::invalid_argument("delay must be >= 1");
  edges_ = normalize_edges(n_agents, std::move(edges));

  cluster_of_.assign(n_agents, -1);
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    if (clusters[c].empty()) throw std::invalid_argument("empty cluster");
    std::sort(clusters[c].begin(), clusters[c].end());
    for (int a : clusters[c]) {
      if (a < 0 || a >= n_agents) throw std::invalid_argument("cluster member out of range");
      if (cluster_of_[a] != -1) {
        throw std::invalid_argument("clusters overlap: agent " + std::to_string(a + 1) +
                                    " appears twice");
      }
      cluster_of_[a] = static_cast<int>(c);
    }
  }
  for (int a = 0; a < n_agents; ++a) {
    if (cluster_of_[a] == -1) {
      throw std::invalid_argument("clusters do not cover agent " + std::to_string(a + 1));
    }
  }
  clusters_ = std::move(clusters);

  adjacency_.assign(n_agents, std::vector<char>(n_agents, 0));
  for (const auto& e : edges_) {
    adjacency_[e.a][e.b] = 1;
    adjacency_[e.b][e.a] = 1;
  }
}

Topology Topology::complete(int n_agents, std::vector<std::vector<int>> clusters, int delay) {
  std::vector<Edge> edges;
  for (int i = 0; i < n_agents; ++i) {
    for (int j = i + 1; j < n_agents; ++j) edges.push_back({i, j});
  }
  return Topology(n_agents, std::move(edges), std::move(clusters), delay);
}

Topology Topology::ring(int n_agents, std::vector<std::vector<int>> clusters, int delay) {
  std::vector<Edge> edges;
  if (n_agents == 2) {
    edges.push_back({0, 1});
  } else if (n_agents > 2) {
    for (int i = 0; i < n_agents; ++i) edges.push_back({i, (i + 1) % n_agents});
  }
  return Topology(n_agents, std::move(edges), std::move(clusters), delay);
}

void Topology::check_agent(int agent) const {
  if (agent < 0 || agent >= n_agents_) {
    throw std::out_of_range("unknown agent " + std::to_string(agent));
  }
}

int Topology::cluster_of(int agent) const {
  check_agent(agent);
  return cluster_of_[agent];
}

bool Topology::adjacent(int i, int j) const {
  check_agent(i);
  check_agent(j);
  return adjacency_[i][j] != 0;
}

int Topology::degree(int agent) const {
  check_agent(agent);
  return static_cast<int>(std::count(adjacency_[agent].begin(), adjacency_[agent].end(), 1));
}

bool Topology::same_cluster(int i, int j) const { return cluster_of(i) == cluster_of(j); }

std::vector<int> Topology::neighbors(int agent) const {
  check_agent(agent);
  std::vector<int> out;
  for (int j = 0; j < n_agents_; ++j) {
    if (adjacency_[agent][j]) out.push_back(j);
  }
  return out;
}

std::vector<int> Topology::reliable_neighbors(int agent) const {
  std::vector<int> out;
  for (int j : neighbors(agent)) {
    if (cluster_of_[j] == cluster_of_[agent]) out.push_back(j);
  }
  return out;
}

std::vector<int> Topology::unreliable_neighbors(int agent) const {
  std::vector<int> out;
  for (int j : neighbors(agent)) {
    if (cluster_of_[j] != cluster_of_[agent]) out.push_back(j);
  }
  return out;
}

bool Topology::connected() const {
  std::vector<char> seen(n_agents_, 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  int count = 1;
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v = 0; v < n_agents_; ++v) {
      if (adjacency_[u][v] && !seen[v]) {
        seen[v] = 1;
        ++count;
        q.push(v);
      }
    }
  }
  return count == n_agents_;
}

bool Topology::has_unreliable_edges() const {
  return std::any_of(edges_.begin(), edges_.end(),
                     [&](const Edge& e) { return cluster_of_[e.a] != cluster_of_[e.b]; });
}

Topology Topology::with_delay(int delay) const {
  return Topology(n_agents_, edges_, clusters_, delay);
}

std::string to_string(MixingRole role) {
  switch (role) {
    case MixingRole::predicting: return "predicting";
    case MixingRole::clipping: return "clipping";
    case MixingRole::mask: return "mask";
  }
  return "?";
}

std::string to_string(MixingRule rule) {
  return rule == MixingRule::metropolis ? "metropolis" : "uniform";
}

MixingRule parse_mixing_rule(const std::string& text) {
  if (text == "metropolis") return MixingRule::metropolis;
  if (text == "uniform") return MixingRule::uniform;
  throw std::invalid_argument("unknown mixing rule '" + text + "'");
}

MixingMatrix build_predicting_matrix(const Topology& topology, MixingRule rule) {
  if (!topology.connected()) throw std::invalid_argument("graph not connected");
  MixingMatrix m;
  m.role = MixingRole::predicting;
  const int n = topology.n_agents();
  if (rule == MixingRule::uniform) {
    require_complete(topology);
    m.weights = Eigen::MatrixXd::Constant(n, n, 1.0 / n);
    return m;
  }
  m.weights = metropolis(topology, [](int, int) { return true; });
  make_lazy_if_needed(m);
  return m;
}

MixingMatrix build_clipping_matrix(const Topology& topology, MixingRule rule) {
  MixingMatrix m;
  m.role = MixingRole::clipping;
  const int n = topology.n_agents();
  if (rule == MixingRule::uniform) {
    require_complete(topology);
    m.weights = Eigen::MatrixXd::Zero(n, n);
    for (const auto& cluster : topology.clusters()) {
      const double v = 1.0 / static_cast<double>(cluster.size());
      for (int i : cluster) {
        for (int j : cluster) m.weights(i, j) = v;
      }
    }
    return m;
  }
  m.weights = metropolis(topology, [&](int a, int b) { return topology.same_cluster(a, b); });
  make_lazy_if_needed(m);
  return m;
}

MixingMatrix build_mask_matrix(const Topology& topology, const MixingMatrix& predicting) {
  const int n = topology.n_agents();
  if (predicting.weights.rows() != n || predicting.weights.cols() != n) {
    throw std::invalid_argument("predicting matrix does not match topology size");
  }
  MixingMatrix m;
  m.role = MixingRole::mask;
  m.weights = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    for (int k : topology.unreliable_neighbors(i)) m.weights(i, k) = predicting.weights(i, k);
  }
  return m;
}

MixingMatrix mixing_matrix_from_weights(const Topology& topology, Eigen::MatrixXd weights,
                                        MixingRole role) {
  if (role == MixingRole::mask) {
    throw std::invalid_argument("mask matrices are derived from W, not supplied");
  }
  MixingMatrix m{std::move(weights), role, false};
  const auto checks = check_mixing_matrix(m, topology, true);
  for (const auto& c : checks) {
    if (!c.passed) throw std::invalid_argument("weight matrix fails " + c.name + ": " + c.detail);
  }
  return m;
}

Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("matrix not square");
  if (m.size() > 0 && (m - m.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol) {
    throw std::invalid_argument("matrix not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigensolver failed");
  return solver.eigenvalues();
}

double second_eigenvalue(const Eigen::MatrixXd& m) {
  const Eigen::VectorXd eig = symmetric_eigenvalues(m);
  if (eig.size() < 2) return 0.0;
  return eig(eig.size() - 2);
}

double effective_delta2(std::span<const double> theta_schedule, double e2, double e2_tilde) {
  if (theta_schedule.empty()) throw std::invalid_argument("empty theta schedule");
  double best = -std::numeric_limits<double>::infinity();
  for (double theta : theta_schedule) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("theta outside [0,1]");
    best = std::max(best, theta * e2 + (1.0 - theta) * e2_tilde);
  }
  return best;
}

std::vector<MatrixCheck> check_mixing_matrix(const MixingMatrix& m, const Topology& topology,
                                             bool require_positive_definite,
                                             const MixingMatrix* predicting) {
  std::vector<MatrixCheck> out;
  const auto& w = m.weights;
  const int n = topology.n_agents();
  if (w.rows() != n || w.cols() != n) {
    out.push_back({"shape", false, "expected " + std::to_string(n) + "x" + std::to_string(n)});
    return out;
  }

  if (m.role == MixingRole::mask) {
    bool support = true;
    bool dominated = true;
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        const bool unreliable = i != k && topology.adjacent(i, k) && !topology.same_cluster(i, k);
        if (!unreliable && w(i, k) != 0.0) support = false;
        if (predicting != nullptr) {
          if (w(i, k) != 0.0 && predicting->weights(i, k) == 0.0) support = false;
          if (w(i, k) > predicting->weights(i, k) || w(i, k) < 0.0) dominated = false;
        }
      }
    }
    out.push_back({"mask_support", support, "nonzeros only on unreliable pairs within W's pattern"});
    if (predicting != nullptr) out.push_back({"mask_le_w", dominated, "0 <= W' <= W entrywise"});
    return out;
  }

  const double row_err = (w.rowwise().sum().array() - 1.0).abs().maxCoeff();
  const double col_err = (w.colwise().sum().array() - 1.0).abs().maxCoeff();
  out.push_back({"row_sums", row_err <= kStochasticTol, "max |row sum - 1| = " + fmt_double(row_err)});
  out.push_back({"col_sums", col_err <= kStochasticTol, "max |col sum - 1| = " + fmt_double(col_err)});
  const double asym = (w - w.transpose()).cwiseAbs().maxCoeff();
  out.push_back({"symmetric", asym <= kSymmetryTol, "max |w_ij - w_ji| = " + fmt_double(asym)});
  const double min_entry = w.minCoeff();
  out.push_back({"nonnegative", min_entry >= 0.0, "min entry = " + fmt_double(min_entry)});

  bool support = true;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j || w(i, j) == 0.0) continue;
      if (!topology.adjacent(i, j)) support = false;
      if (m.role == MixingRole::clipping && !topology.same_cluster(i, j)) support = false;
    }
  }
  out.push_back({"support", support,
                 m.role == MixingRole::clipping ? "nonzeros only within clusters"
                                                : "nonzeros only on edges or diagonal"});

  if (asym <= kSymmetryTol) {
    const Eigen::VectorXd eig = symmetric_eigenvalues(w);
    const double lo = eig(0);
    const double hi = eig(eig.size() - 1);
    out.push_back({"spectrum_le_1", hi <= 1.0 + 1e-10, "max eigenvalue = " + fmt_double(hi)});
    if (require_positive_definite) {
      out.push_back({"positive_definite", lo > 0.0, "min eigenvalue = " + fmt_double(lo)});
    } else {
      out.push_back({"positive_semidefinite", lo >= -1e-10, "min eigenvalue = " + fmt_double(lo)});
    }
  }
  return out;
}

bool all_passed(const std::vector<MatrixCheck>& checks) {
  return std::all_of(checks.begin(), checks.end(), [](const MatrixCheck& c) { return c.passed; });
}

SpectralInfo spectral_info(const MixingMatrix& predicting, const MixingMatrix& clipping,
                           std::span<const double> theta_schedule) {
  SpectralInfo info;
  info.e2 = second_eigenvalue(predicting.weights);
  info.e2_tilde = second_eigenvalue(clipping.weights);
  info.delta2 = effective_delta2(theta_schedule, info.e2, info.e2_tilde);
  return info;
}

}  // namespace pcasgd
