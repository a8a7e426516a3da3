#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wrnlab/tensor.hpp"

namespace wrnlab {

// Images [N, C, H, W] in [0, 1] with integer labels in [0, num_classes).
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  int num_classes = 0;
  std::string split = "train";

  std::size_t size() const noexcept { return labels.size(); }
  Shape sample_shape() const;

  // Throws ValidationError on count mismatch, out-of-range labels or pixels.
  void validate() const;

  template <typename T>
  BasicTensor<T> images_as(std::size_t begin, std::size_t end) const {
    return images.slice_rows(begin, end).template cast<T>();
  }
  std::span<const int> labels_view(std::size_t begin, std::size_t end) const {
    return std::span<const int>(labels).subspan(begin, end - begin);
  }

  Dataset slice(std::size_t begin, std::size_t end) const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

// CIFAR binary batches: 3073-byte records (label byte + 3 x 1024 channel
// planes, row-major).
Dataset load_cifar_binary(const std::vector<std::string>& paths, int num_classes = 10);

enum class IdxContent { Images, Labels };

// IDX (unsigned byte type only). Images are scaled by 1/255; labels raw.
Tensor load_idx(const std::string& path, IdxContent content);
Tensor parse_idx(std::span<const std::uint8_t> bytes, IdxContent content, const std::string& origin = "<memory>");

// IDX image file [N, H, W] + IDX label file [N] -> Dataset [N, 1, H, W].
Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path, int num_classes);

struct SynthOptions {
  int classes = 2;
  int per_class = 100;
  int image_size = 16;
  int channels = 3;
  double noise = 0.05;
  double amplitude = 0.25;  // max template deviation from mid-grey
  std::uint64_t seed = 0;
  // Noise streams start here; a held-out split shares the templates but
  // uses indices past the training set.
  std::uint64_t first_index = 0;
  std::string split = "train";
};

// Each class has a deterministic low-frequency template (sum of a few
// seeded sinusoids around 0.5); samples add Gaussian pixel noise and are
// clamped to [0, 1]. Sample i has class i % classes.
Dataset synth_dataset(const SynthOptions& options);
Dataset synth_dataset(int classes, int per_class, int image_size, double noise, std::uint64_t seed);

// The noise-free template of one class, [C, H, W].
Tensor synth_template(const SynthOptions& options, int cls);

// Random horizontal flip + `pad`-pixel zero pad-and-crop, per sample.
Tensor augment_flip_crop(const Tensor& images, int pad, std::uint64_t seed, std::uint64_t stream);

}  // namespace wrnlab
