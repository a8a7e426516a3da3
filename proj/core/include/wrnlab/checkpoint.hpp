#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "wrnlab/arch.hpp"
#include "wrnlab/network.hpp"
#include "wrnlab/training.hpp"

namespace wrnlab {

inline constexpr int kCheckpointVersion = 1;

struct TensorEntry {
  std::string name;
  std::string kind;  // param | bn_mean | bn_var | velocity
  Shape shape;
  std::uint64_t offset = 0;  // bytes into the payload
  std::uint64_t count = 0;   // elements
};

struct CheckpointManifest {
  int version = kCheckpointVersion;
  std::string dtype;  // float32 | float64
  std::optional<ArchSpec> spec;
  std::vector<TensorEntry> tensors;
  bool has_optimizer = false;
  std::string rng_state;
  int epoch = 0;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
  std::uint32_t checksum = 0;  // CRC-32 of the payload
  std::string note;

  std::string to_json() const;
  static CheckpointManifest from_json(const std::string& text);
};

// A checkpoint is a directory holding manifest.json and payload.bin
// (little-endian, tensors back to back). Both files are written to
// temporaries and renamed into place.
template <typename T>
void save_checkpoint(const Network<T>& net, const OptimizerState<T>* state, const std::string& dir,
                     std::uint64_t seed = 0, const std::string& note = "");

CheckpointManifest read_manifest(const std::string& dir);

template <typename T>
struct LoadedCheckpoint {
  Network<T> net;
  std::optional<OptimizerState<T>> state;
  CheckpointManifest manifest;
};

// Rebuilds the network from the stored ArchSpec.
template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& dir);

// Loads into an existing network; every stored tensor must match by name
// and shape.
template <typename T>
CheckpointManifest load_checkpoint_into(Network<T>& net, const std::string& dir, OptimizerState<T>* state = nullptr);

}  // namespace wrnlab
