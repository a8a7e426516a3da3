#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

namespace wrnlab {

// Splits [0, count) into `workers` contiguous chunks and runs them on
// separate threads; the first exception thrown by any chunk is rethrown.
// workers <= 1 runs inline.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t, std::size_t)>& fn);

// Independent generator for (seed, stream), e.g. one stream per sample or
// per Monte Carlo trial, so results do not depend on how work is sharded.
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream);

}  // namespace wrnlab
