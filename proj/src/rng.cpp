#include "pcasgd/rng.hpp"

namespace pcasgd {

std::mt19937_64 make_stream(std::uint64_t master_seed, StreamPurpose purpose, int agent) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed & 0xffffffffu),
                    static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(purpose),
                    static_cast<std::uint32_t>(agent)};
  return std::mt19937_64(seq);
}

}  // namespace pcasgd
