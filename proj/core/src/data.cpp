#include "wrnlab/data.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

#include "wrnlab/parallel.hpp"

namespace wrnlab {
namespace {

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

Shape Dataset::sample_shape() const {
  Shape s = images.shape();
  s.erase(s.begin());
  return s;
}

void Dataset::validate() const {
  if (labels.empty()) throw ValidationError("dataset is empty");
  if (images.rank() != 4 || images.dim(0) != labels.size()) {
    throw ValidationError("dataset images " + shape_string(images.shape()) + " do not match " +
                          std::to_string(labels.size()) + " labels");
  }
  for (int y : labels)
    if (y < 0 || y >= num_classes) throw ValidationError("dataset label " + std::to_string(y) + " out of range");
  for (double v : images.data())
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("dataset pixel outside [0, 1]");
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  Dataset out;
  out.images = images.slice_rows(begin, end);
  out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin), labels.begin() + static_cast<std::ptrdiff_t>(end));
  out.num_classes = num_classes;
  out.split = split;
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ValidationError("empty subset");
  const std::size_t per = images.numel() / images.dim(0);
  Shape s = images.shape();
  s[0] = indices.size();
  std::vector<double> data;
  data.reserve(indices.size() * per);
  Dataset out;
  for (std::size_t i : indices) {
    if (i >= size()) throw ValidationError("subset index out of range");
    data.insert(data.end(), images.data().begin() + static_cast<std::ptrdiff_t>(i * per),
                images.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * per));
    out.labels.push_back(labels[i]);
  }
  out.images = Tensor(std::move(s), std::move(data));
  out.num_classes = num_classes;
  out.split = split;
  return out;
}

Dataset load_cifar_binary(const std::vector<std::string>& paths, int num_classes) {
  constexpr std::size_t kRecord = 3073, kPixels = 3072;
  std::vector<double> pixels;
  Dataset ds;
  ds.num_classes = num_classes;
  for (const auto& path : paths) {
    const auto bytes = read_bytes(path);
    if (bytes.empty() || bytes.size() % kRecord != 0) {
      throw IoError(path + ": length " + std::to_string(bytes.size()) + " is not on a 3073-byte record boundary");
    }
    for (std::size_t r = 0; r < bytes.size() / kRecord; ++r) {
      const std::uint8_t* rec = bytes.data() + r * kRecord;
      if (rec[0] >= num_classes) {
        throw IoError(path + ": record " + std::to_string(r) + " has label " + std::to_string(rec[0]) + " >= " +
                      std::to_string(num_classes));
      }
      ds.labels.push_back(rec[0]);
      for (std::size_t p = 0; p < kPixels; ++p) pixels.push_back(rec[1 + p] / 255.0);
    }
  }
  if (ds.labels.empty()) throw IoError("no CIFAR records loaded");
  ds.images = Tensor(Shape{ds.labels.size(), 3, 32, 32}, std::move(pixels));
  return ds;
}

Tensor parse_idx(std::span<const std::uint8_t> bytes, IdxContent content, const std::string& origin) {
  if (bytes.size() < 4 || bytes[0] != 0x00 || bytes[1] != 0x00 || bytes[2] != 0x08) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%02x %02x %02x", bytes.size() > 0 ? bytes[0] : 0, bytes.size() > 1 ? bytes[1] : 0,
                  bytes.size() > 2 ? bytes[2] : 0);
    throw IoError(origin + ": bad IDX magic, read bytes " + buf + " (expected 00 00 08)");
  }
  const std::size_t dims = bytes[3];
  if (dims == 0 || bytes.size() < 4 + 4 * dims) throw IoError(origin + ": truncated IDX header");
  Shape shape;
  for (std::size_t d = 0; d < dims; ++d) {
    const std::uint8_t* p = bytes.data() + 4 + 4 * d;
    const std::uint32_t v = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
    if (v == 0) throw IoError(origin + ": zero IDX dimension");
    shape.push_back(v);
  }
  const std::size_t header = 4 + 4 * dims;
  const std::size_t expected = shape_numel(shape);
  if (bytes.size() - header != expected) {
    throw IoError(origin + ": IDX payload has " + std::to_string(bytes.size() - header) + " bytes, header declares " +
                  std::to_string(expected));
  }
  std::vector<double> data(expected);
  const double factor = content == IdxContent::Images ? 1.0 / 255.0 : 1.0;
  for (std::size_t i = 0; i < expected; ++i) data[i] = bytes[header + i] * factor;
  return Tensor(std::move(shape), std::move(data));
}

Tensor load_idx(const std::string& path, IdxContent content) {
  const auto bytes = read_bytes(path);
  return parse_idx(bytes, content, path);
}

Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path, int num_classes) {
  Tensor images = load_idx(images_path, IdxContent::Images);
  Tensor labels = load_idx(labels_path, IdxContent::Labels);
  if (images.rank() != 3 || labels.rank() != 1 || images.dim(0) != labels.dim(0)) {
    throw IoError("IDX image/label files disagree: " + shape_string(images.shape()) + " vs " +
                  shape_string(labels.shape()));
  }
  Dataset ds;
  ds.num_classes = num_classes;
  ds.images = images.reshaped({images.dim(0), 1, images.dim(1), images.dim(2)});
  for (double v : labels.data()) {
    if (v >= num_classes) throw IoError(labels_path + ": label " + std::to_string(static_cast<int>(v)) + " out of range");
    ds.labels.push_back(static_cast<int>(v));
  }
  return ds;
}

Tensor synth_template(const SynthOptions& o, int cls) {
  if (o.classes < 2) throw ValidationError("synth_dataset: needs at least two classes");
  if (o.image_size < 1 || o.channels < 1) throw ValidationError("synth_dataset: bad image geometry");
  auto rng = stream_rng(o.seed, static_cast<std::uint64_t>(cls));
  std::uniform_int_distribution<int> freq(0, 2);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> weight(0.0, 1.0);
  const std::size_t c = static_cast<std::size_t>(o.channels), s = static_cast<std::size_t>(o.image_size);
  Tensor t(Shape{c, s, s});
  constexpr int kWaves = 4;
  for (std::size_t ch = 0; ch < c; ++ch) {
    std::vector<double> plane(s * s, 0.0);
    for (int k = 0; k < kWaves; ++k) {
      const int u = freq(rng), v = freq(rng);
      const double ph = phase(rng), a = weight(rng);
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < s; ++j)
          plane[i * s + j] += a * std::cos(2.0 * std::numbers::pi * (u * static_cast<double>(i) + v * static_cast<double>(j)) /
                                               static_cast<double>(s) + ph);
    }
    double peak = 0.0;
    for (double v : plane) peak = std::max(peak, std::abs(v));
    for (std::size_t i = 0; i < s * s; ++i) {
      t[ch * s * s + i] = std::clamp(0.5 + (peak > 0 ? o.amplitude * plane[i] / peak : 0.0), 0.0, 1.0);
    }
  }
  return t;
}

Dataset synth_dataset(const SynthOptions& o) {
  if (o.noise < 0.0) throw ValidationError("synth_dataset: noise must be non-negative");
  if (o.per_class < 1) throw ValidationError("synth_dataset: per_class must be positive");
  std::vector<Tensor> templates;
  for (int c = 0; c < o.classes; ++c) templates.push_back(synth_template(o, c));
  const std::size_t n = static_cast<std::size_t>(o.classes) * static_cast<std::size_t>(o.per_class);
  const std::size_t per = templates.front().numel();
  std::vector<double> pixels(n * per);
  Dataset ds;
  ds.num_classes = o.classes;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % static_cast<std::size_t>(o.classes));
    ds.labels[i] = cls;
    auto rng = stream_rng(o.seed ^ 0x5eedda7aULL, o.first_index + i);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t j = 0; j < per; ++j) {
      const double v = templates[static_cast<std::size_t>(cls)][j] + (o.noise > 0 ? o.noise * noise(rng) : 0.0);
      pixels[i * per + j] = std::clamp(v, 0.0, 1.0);
    }
  }
  Shape shape{n};
  shape.insert(shape.end(), templates.front().shape().begin(), templates.front().shape().end());
  ds.images = Tensor(std::move(shape), std::move(pixels));
  ds.split = o.split;
  return ds;
}

Dataset synth_dataset(int classes, int per_class, int image_size, double noise, std::uint64_t seed) {
  SynthOptions o;
  o.classes = classes;
  o.per_class = per_class;
  o.image_size = image_size;
  o.noise = noise;
  o.seed = seed;
  return synth_dataset(o);
}

Tensor augment_flip_crop(const Tensor& images, int pad, std::uint64_t seed, std::uint64_t stream) {
  const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  Tensor out(images.shape());
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = stream_rng(seed, stream * 1000003ULL + i);
    const bool flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    const int dy = std::uniform_int_distribution<int>(-pad, pad)(rng);
    const int dx = std::uniform_int_distribution<int>(-pad, pad)(rng);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t col = 0; col < w; ++col) {
          const long sr = static_cast<long>(r) + dy;
          long sc = static_cast<long>(col) + dx;
          if (flip) sc = static_cast<long>(w) - 1 - sc;
          const bool inside = sr >= 0 && sc >= 0 && sr < static_cast<long>(h) && sc < static_cast<long>(w);
          out.at(i, ch, r, col) = inside ? images.at(i, ch, static_cast<std::size_t>(sr), static_cast<std::size_t>(sc)) : 0.0;
        }
  }
  return out;
}

}  // namespace wrnlab
