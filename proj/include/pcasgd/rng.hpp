#pragma once

#include <cstdint>
#include <random>

namespace pcasgd {

/// What a random stream is used for. Each (seed, purpose, agent) triple owns
/// an independent engine, so adding agents or purposes never shifts the draws
/// of existing streams.
enum class StreamPurpose : std::uint32_t {
  gradient_noise = 1,  // also minibatch draws for logistic-synthetic
  theta = 2,           // shared theta_t schedule (bernoulli / uniform)
};

inline constexpr int kSharedStream = -1;

std::mt19937_64 make_stream(std::uint64_t master_seed, StreamPurpose purpose, int agent);

}  // namespace pcasgd
