#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pcasgd {

/// Undirected edge between two agents (0-based, a < b after normalization).
struct Edge {
  int a = 0;
  int b = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Agent graph with its partition into reliable clusters and the
/// inter-cluster delay. Agents are 0-based.
///
/// Two agents are reliable neighbors when they are adjacent and share a
/// cluster; adjacent agents in different clusters see each other's state
/// with a fixed staleness of `delay` iterations. Connectivity is not
/// enforced at construction (so a bad graph can still be inspected); the
/// matrix builders reject disconnected graphs.
class Topology {
 public:
  Topology(int n_agents, std::vector<Edge> edges,
           std::vector<std::vector<int>> clusters, int delay);

  static Topology complete(int n_agents, std::vector<std::vector<int>> clusters,
                           int delay);
  static Topology ring(int n_agents, std::vector<std::vector<int>> clusters,
                       int delay);

  int n_agents() const { return n_agents_; }
  int delay() const { return delay_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::vector<int>>& clusters() const { return clusters_; }
  int cluster_of(int agent) const;

  bool adjacent(int i, int j) const;
  int degree(int agent) const;
  bool same_cluster(int i, int j) const;

  /// Neighbors excluding the agent itself, ascending.
  std::vector<int> neighbors(int agent) const;
  std::vector<int> reliable_neighbors(int agent) const;
  std::vector<int> unreliable_neighbors(int agent) const;

  bool connected() const;
  bool has_unreliable_edges() const;

  /// Same graph and clusters with a different delay.
  Topology with_delay(int delay) const;

 private:
  void check_agent(int agent) const;

  int n_agents_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> clusters_;
  std::vector<int> cluster_of_;
  std::vector<std::vector<char>> adjacency_;
  int delay_;
};

enum class MixingRole { predicting, clipping, mask };
enum class MixingRule { metropolis, uniform };

std::string to_string(MixingRole role);
std::string to_string(MixingRule rule);
MixingRule parse_mixing_rule(const std::string& text);

struct MixingMatrix {
  Eigen::MatrixXd weights;
  MixingRole role = MixingRole::predicting;
  /// True when (W + I) / 2 was applied to make the matrix positive definite.
  bool lazy = false;
};

// Metropolis-Hastings weights w_ij = 1 / (1 + max(deg_i, deg_j)) on the full
// graph. The uniform rule (complete graphs only) gives the averaging
// projector 11^T / N and is never made lazy.
MixingMatrix build_predicting_matrix(const Topology& topology,
                                     MixingRule rule = MixingRule::metropolis);

// Same rule restricted to within-cluster edges; cross-cluster weights are 0.
MixingMatrix build_clipping_matrix(const Topology& topology,
                                   MixingRule rule = MixingRule::metropolis);

// Copy of W on (agent, unreliable neighbor) pairs, zero elsewhere. Rows are
// not renormalized.
MixingMatrix build_mask_matrix(const Topology& topology, const MixingMatrix& predicting);

/// Validates a user-supplied weight matrix for the given role. Never repairs.
MixingMatrix mixing_matrix_from_weights(const Topology& topology, Eigen::MatrixXd weights,
                                        MixingRole role);

/// Eigenvalues in ascending order. Throws on non-symmetric input.
Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& m);

/// Second-largest eigenvalue of a symmetric matrix. A 1x1 matrix has no
/// second eigenvalue and reports 0 (a single agent is always in consensus).
double second_eigenvalue(const Eigen::MatrixXd& m);

/// max over the schedule of theta * e2 + (1 - theta) * e2_tilde.
double effective_delta2(std::span<const double> theta_schedule, double e2,
                        double e2_tilde);

struct MatrixCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Runs every invariant that applies to the matrix's role. For W and W~ this
/// is stochasticity, symmetry, nonnegativity, graph support and spectrum; the
/// strict positivity of the spectrum is only required when
/// `require_positive_definite` is set. For the mask W' it is the support and
/// entrywise relation to `predicting`.
std::vector<MatrixCheck> check_mixing_matrix(const MixingMatrix& m, const Topology& topology,
                                             bool require_positive_definite = true,
                                             const MixingMatrix* predicting = nullptr);

bool all_passed(const std::vector<MatrixCheck>& checks);

struct SpectralInfo {
  double e2 = 0.0;
  double e2_tilde = 0.0;
  double delta2 = 0.0;
};

SpectralInfo spectral_info(const MixingMatrix& predicting, const MixingMatrix& clipping,
                           std::span<const double> theta_schedule);

}  // namespace pcasgd
