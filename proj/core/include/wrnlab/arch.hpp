#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "wrnlab/rational.hpp"

namespace wrnlab {

struct StageConfig {
  int depth = 0;     // residual blocks; 0 means the stage is replaced by a 1x1 projection
  Rational width{1};  // multiplier on the stage's base channel count

  friend bool operator==(const StageConfig&, const StageConfig&) = default;
};

enum class LayerKind { Conv, BatchNorm, Relu, Add, Pool, Linear, Flatten };

std::string to_string(LayerKind kind);

// Shape facts of one layer as used by the FLOP count and the Lipschitz
// bounds: `spatial` is the (square) input feature-map size m.
struct LayerShape {
  LayerKind kind = LayerKind::Conv;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int spatial = 1;

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

// Fully determines a member of the three-stage wide residual network family.
struct ArchSpec {
  static constexpr std::array<int, 3> kBaseChannels{16, 32, 64};
  static constexpr int kStemChannels = 16;

  std::array<StageConfig, 3> stages{};
  Rational gamma{1};
  int num_classes = 10;
  std::array<int, 3> input_shape{3, 32, 32};

  // round_half_even(base * width * gamma) for stage i.
  int resolved_channels(int stage) const;
  std::array<int, 3> resolved_widths() const;

  std::string depth_notation() const;  // "d5-5-5"
  std::string width_notation() const;  // "w10-10-10"
  std::string notation() const;        // "d5-5-5_w10-10-10_g1"

  // Throws ValidationError when an invariant fails.
  void validate() const;

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

ArchSpec parse_config(std::string_view depth_notation, std::string_view width_notation, Rational gamma,
                      int num_classes);

// Inverse of ArchSpec::notation(); the "_g" part is optional.
ArchSpec parse_notation(std::string_view notation, int num_classes, std::array<int, 3> input_shape = {3, 32, 32});

std::array<int, 3> parse_depths(std::string_view notation);
std::array<Rational, 3> parse_widths(std::string_view notation);

// Returns the spec with gamma replaced; rejects gamma <= 0 and any non-empty
// stage whose resolved channel count would be zero.
ArchSpec scale(const ArchSpec& spec, Rational gamma);

// Exact learnable-scalar count of the network build_network produces.
std::int64_t count_params(const ArchSpec& spec);

struct FlopEntry {
  std::string name;
  LayerShape shape;
  std::int64_t macs = 0;
};

// Per-layer multiply-accumulate counts for one forward pass of one sample.
// Conv/linear: out_spatial^2 * k^2 * in * out (+ out for the linear bias);
// BN/ReLU/pool: output element count. Residual adds are not counted.
std::vector<FlopEntry> flops_breakdown(const ArchSpec& spec);
std::int64_t count_flops(const ArchSpec& spec);

// "46.16M"
std::string format_millions(std::int64_t count);

// Structured text (key = value) round trip; keys: depths, widths, gamma,
// num_classes, input_shape.
std::string to_config_text(const ArchSpec& spec);
ArchSpec arch_from_config_text(std::string_view text);

}  // namespace wrnlab
