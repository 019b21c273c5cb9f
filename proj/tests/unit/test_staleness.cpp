#include <gtest/gtest.h>

#include "pcasgd/staleness.hpp"

using namespace pcasgd;

namespace {

Eigen::VectorXd scalar(double v) { return Eigen::VectorXd::Constant(1, v); }

// agent i holds 10 * i + t at iteration t
StateHistory filled(int n, int tau, int last) {
  StateHistory h(n, tau);
  for (int t = 0; t <= last; ++t) {
    for (int i = 0; i < n; ++i) h.record(i, t, scalar(10.0 * i + t));
  }
  return h;
}

}  // namespace

TEST(StateHistory, RetainsDelayPlusOne) {
  const auto h = filled(2, 3, 10);
  EXPECT_EQ(h.retention(), 4u);
  EXPECT_EQ(h.latest(0), 10);
  EXPECT_DOUBLE_EQ(h.at(1, 7)(0), 17.0);
  EXPECT_THROW(h.at(0, 6), std::out_of_range);
  EXPECT_THROW(h.at(0, 11), std::out_of_range);
}

TEST(StateHistory, RejectsOutOfOrderRecords) {
  StateHistory h(1, 2);
  EXPECT_EQ(h.latest(0), -1);
  EXPECT_THROW(h.record(0, 1, scalar(0)), std::invalid_argument);
  h.record(0, 0, scalar(0));
  EXPECT_THROW(h.record(0, 0, scalar(0)), std::invalid_argument);
  EXPECT_THROW(h.record(0, 2, scalar(0)), std::invalid_argument);
  EXPECT_THROW(StateHistory(1, 0), std::invalid_argument);
}

TEST(NeighborView, WarmStartServesInitialStates) {
  const auto topo = Topology::complete(3, {{0, 1}, {2}}, 4);
  const auto h = filled(3, 4, 0);
  const auto v = view(h, topo, 0, 0);
  ASSERT_EQ(v.reliable.size(), 1u);
  ASSERT_EQ(v.unreliable.size(), 1u);
  EXPECT_DOUBLE_EQ(v.reliable[0].x(0), 10.0);
  EXPECT_DOUBLE_EQ(v.unreliable[0].x(0), 20.0);
  EXPECT_EQ(v.unreliable[0].iteration, 0);
  ASSERT_EQ(v.self_trajectory.size(), 4u);
  for (const auto& x : v.self_trajectory) EXPECT_DOUBLE_EQ(x(0), 0.0);
}

TEST(NeighborView, UnreliableNeighborsLagByDelay) {
  const auto topo = Topology::complete(3, {{0, 1}, {2}}, 3);
  const auto h = filled(3, 3, 9);
  const auto v = view(h, topo, 2, 9);
  EXPECT_TRUE(v.reliable.empty());
  ASSERT_EQ(v.unreliable.size(), 2u);
  EXPECT_EQ(v.unreliable[0].agent, 0);
  EXPECT_EQ(v.unreliable[0].iteration, 6);
  EXPECT_DOUBLE_EQ(v.unreliable[0].x(0), 6.0);
  EXPECT_DOUBLE_EQ(v.unreliable[1].x(0), 16.0);
  EXPECT_DOUBLE_EQ(v.self(0), 29.0);
  // x^i_{t - tau + r}, r = 0..tau-1
  ASSERT_EQ(v.self_trajectory.size(), 3u);
  EXPECT_DOUBLE_EQ(v.self_trajectory[0](0), 26.0);
  EXPECT_DOUBLE_EQ(v.self_trajectory[2](0), 28.0);
}

TEST(NeighborView, PartialWarmUpClampsToZero) {
  const auto topo = Topology::complete(2, {{0}, {1}}, 5);
  const auto h = filled(2, 5, 2);
  const auto v = view(h, topo, 0, 2);
  EXPECT_EQ(v.unreliable[0].iteration, 0);
  std::vector<double> traj;
  for (const auto& x : v.self_trajectory) traj.push_back(x(0));
  EXPECT_EQ(traj, (std::vector<double>{0, 0, 0, 0, 1}));
}
