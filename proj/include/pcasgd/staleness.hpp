#pragma once

#include <deque>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pcasgd/topology.hpp"

namespace pcasgd {

/// Per-agent ring of recent parameter vectors. Retains the last delay + 1
/// iterations, which is everything a delayed view at the newest iteration
/// can ask for.
class StateHistory {
 public:
  StateHistory(int n_agents, int delay);

  /// t must be 0 for the first record, then exactly one past the last one.
  void record(int agent, int t, Eigen::VectorXd x);

  /// Throws "future state" for t past the newest record and "evicted state"
  /// for t older than the retention window.
  const Eigen::VectorXd& at(int agent, int t) const;

  /// Newest recorded iteration for the agent, or -1.
  int latest(int agent) const;

  int n_agents() const { return static_cast<int>(buffers_.size()); }
  int delay() const { return delay_; }
  std::size_t retention() const { return static_cast<std::size_t>(delay_) + 1; }

 private:
  void check_agent(int agent) const;

  int delay_;
  std::vector<std::deque<std::pair<int, Eigen::VectorXd>>> buffers_;
};

struct NeighborState {
  int agent = 0;
  /// Iteration the state was taken from.
  int iteration = 0;
  Eigen::VectorXd x;
};

/// What agent i can see at iteration t: current reliable neighbors, stale
/// unreliable neighbors, and its own recent trajectory.
struct NeighborView {
  int agent = 0;
  int iteration = 0;
  Eigen::VectorXd self;
  std::vector<NeighborState> reliable;    // R(i) \ {i}, ascending
  std::vector<NeighborState> unreliable;  // R^c(i), ascending, at max(t - tau, 0)
  /// x^i at iterations max(t - tau + r, 0) for r = 0..tau-1. Before tau
  /// iterations have elapsed the clamped entries repeat x^i_0, so their
  /// displacements from the first entry vanish.
  std::vector<Eigen::VectorXd> self_trajectory;
};

NeighborView view(const StateHistory& history, const Topology& topology, int agent, int t);

}  // namespace pcasgd
