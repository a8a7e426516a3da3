#pragma once

#include <cstdint>

#include "wrnlab/arch.hpp"
#include "wrnlab/network.hpp"

namespace wrnlab {

// Pre-activation wide residual network: 3x3 stem, three stages of
// BN-ReLU-Conv blocks, final BN-ReLU, global average pool, linear
// classifier. Conv weights ~ N(0, 2 / (k*k*out)), BN scale 1 / shift 0,
// classifier weights ~ U(-1/sqrt(in), 1/sqrt(in)) with zero bias.
template <typename T>
Network<T> build_network(const ArchSpec& spec, std::uint64_t seed);

// Same graph as build_network with parameter shapes only (no storage).
Network<float> build_layout(const ArchSpec& spec);

// Flatten followed by one linear layer with bias, zero-initialized.
template <typename T>
Network<T> build_linear_model(const Shape& input_shape, int num_classes);

}  // namespace wrnlab
