#include "pcasgd/staleness.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace pcasgd {

StateHistory::StateHistory(int n_agents, int delay) : delay_(delay), buffers_(n_agents) {
  if (n_agents < 1) throw std::invalid_argument("n_agents must be positive");
  if (delay < 1) throw std::invalid_argument("delay must be >= 1");
}

void StateHistory::check_agent(int agent) const {
  if (agent < 0 || agent >= n_agents()) {
    throw std::out_of_range("unknown agent " + std::to_string(agent));
  }
}

void StateHistory::record(int agent, int t, Eigen::VectorXd x) {
  check_agent(agent);
  auto& buf = buffers_[agent];
  const int expected = buf.empty() ? 0 : buf.back().first + 1;
  if (t != expected) {
    throw std::invalid_argument("out-of-order record: expected iteration " +
                                std::to_string(expected) + ", got " + std::to_string(t));
  }
  buf.emplace_back(t, std::move(x));
  while (buf.size() > retention()) buf.pop_front();
}

const Eigen::VectorXd& StateHistory::at(int agent, int t) const {
  check_agent(agent);
  const auto& buf = buffers_[agent];
  if (buf.empty() || t > buf.back().first) throw std::out_of_range("future state");
  if (t < buf.front().first) throw std::out_of_range("evicted state");
  return buf[static_cast<std::size_t>(t - buf.front().first)].second;
}

int StateHistory::latest(int agent) const {
  check_agent(agent);
  return buffers_[agent].empty() ? -1 : buffers_[agent].back().first;
}

NeighborView view(const StateHistory& history, const Topology& topology, int agent, int t) {
  if (agent < 0 || agent >= topology.n_agents()) {
    throw std::out_of_range("unknown agent " + std::to_string(agent));
  }
  if (t < 0) throw std::invalid_argument("negative iteration");
  const int tau = topology.delay();
  const int stale = std::max(t - tau, 0);

  NeighborView v;
  v.agent = agent;
  v.iteration = t;
  v.self = history.at(agent, t);
  for (int j : topology.reliable_neighbors(agent)) v.reliable.push_back({j, t, history.at(j, t)});
  for (int k : topology.unreliable_neighbors(agent)) {
    v.unreliable.push_back({k, stale, history.at(k, stale)});
  }
  v.self_trajectory.reserve(static_cast<std::size_t>(tau));
  for (int r = 0; r < tau; ++r) v.self_trajectory.push_back(history.at(agent, std::max(t - tau + r, 0)));
  return v;
}

}  // namespace pcasgd
