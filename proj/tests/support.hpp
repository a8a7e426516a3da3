#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "wrnlab/data.hpp"
#include "wrnlab/network.hpp"
#include "wrnlab/tensor.hpp"
#include "wrnlab/wrn.hpp"

namespace testing {

using wrnlab::Shape;
using wrnlab::Tensor;

inline Tensor random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

inline Tensor gaussian_tensor(const Shape& shape, std::uint64_t seed, double sigma = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  Tensor t(shape);
  for (auto& v : t.data()) v = g(rng);
  return t;
}

// Direct cross-correlation with zero padding, written as plain loops.
inline Tensor conv_loops(const Tensor& x, const Tensor& w, int stride, int pad) {
  const int n = static_cast<int>(x.dim(0)), c = static_cast<int>(x.dim(1)), h = static_cast<int>(x.dim(2)),
            wd = static_cast<int>(x.dim(3));
  const int o = static_cast<int>(w.dim(0)), k = static_cast<int>(w.dim(2));
  const int oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  Tensor y(Shape{static_cast<std::size_t>(n), static_cast<std::size_t>(o), static_cast<std::size_t>(oh),
                 static_cast<std::size_t>(ow)});
  for (int b = 0; b < n; ++b)
    for (int oc = 0; oc < o; ++oc)
      for (int r = 0; r < oh; ++r)
        for (int q = 0; q < ow; ++q) {
          double s = 0.0;
          for (int ic = 0; ic < c; ++ic)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int yy = r * stride - pad + ky, xx = q * stride - pad + kx;
                if (yy < 0 || xx < 0 || yy >= h || xx >= wd) continue;
                s += x.at(b, ic, yy, xx) * w.at(oc, ic, ky, kx);
              }
          y.at(b, oc, r, q) = s;
        }
  return y;
}

// Eval-mode batch norm, ReLU and the rest of the WRN head written out
// independently of the library's layer graph.
inline Tensor bn_eval_ref(const wrnlab::Network<double>& net, const std::string& name, const Tensor& x) {
  const auto& layers = net.layers();
  int state = -1;
  for (const auto& l : layers) {
    if (l.name == name) state = l.bn_state;
  }
  const auto& st = net.batch_norm_states().at(static_cast<std::size_t>(state));
  const auto& g = net.parameter(name + ".scale").value;
  const auto& b = net.parameter(name + ".shift").value;
  Tensor y = x;
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < hw; ++p) {
        double& v = y[(i * c + ch) * hw + p];
        v = g[ch] * (v - st.running_mean[ch]) / std::sqrt(st.running_var[ch] + 1e-5) + b[ch];
      }
  return y;
}

inline Tensor relu_ref(Tensor x) {
  for (auto& v : x.data()) v = v > 0 ? v : 0.0;
  return x;
}

inline Tensor add_ref(Tensor a, const Tensor& b) {
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] += b[i];
  return a;
}

// Straight-line forward pass of a d1-1-1 network (one block per stage,
// identity or projection shortcut) using parameter names only.
inline Tensor wrn_d111_reference(const wrnlab::Network<double>& net, const Tensor& x) {
  auto conv = [&](const std::string& name, const Tensor& in, int stride, int pad) {
    return conv_loops(in, net.parameter(name + ".weight").value, stride, pad);
  };
  Tensor h = conv("stem.conv", x, 1, 1);
  const int strides[3] = {1, 2, 2};
  for (int s = 1; s <= 3; ++s) {
    const std::string p = "stage" + std::to_string(s) + ".block1";
    const Tensor a1 = relu_ref(bn_eval_ref(net, p + ".bn1", h));
    Tensor c1 = conv(p + ".conv1", a1, strides[s - 1], 1);
    const Tensor a2 = relu_ref(bn_eval_ref(net, p + ".bn2", c1));
    const Tensor c2 = conv(p + ".conv2", a2, 1, 1);
    bool projected = false;
    for (const auto& l : net.layers()) projected = projected || l.name == p + ".shortcut";
    const Tensor sc = projected ? conv(p + ".shortcut", a1, strides[s - 1], 0) : h;
    h = add_ref(c2, sc);
  }
  const Tensor a = relu_ref(bn_eval_ref(net, "head.bn", h));
  const std::size_t n = a.dim(0), c = a.dim(1), hw = a.dim(2) * a.dim(3);
  const auto& w = net.parameter("head.linear.weight").value;
  const auto& bias = net.parameter("head.linear.bias").value;
  const std::size_t k = w.dim(0);
  Tensor out(Shape{n, k});
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> pooled(c, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t p = 0; p < hw; ++p) pooled[ch] += a[(i * c + ch) * hw + p];
      pooled[ch] /= static_cast<double>(hw);
    }
    for (std::size_t j = 0; j < k; ++j) {
      double s = bias[j];
      for (std::size_t ch = 0; ch < c; ++ch) s += w[j * c + ch] * pooled[ch];
      out[i * k + j] = s;
    }
  }
  return out;
}

// Perturb BN running statistics and affine parameters so eval mode is not
// the identity map.
template <typename T>
void randomize_batch_norm(wrnlab::Network<T>& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5), s(-0.2, 0.2);
  for (auto& st : net.batch_norm_states()) {
    for (auto& v : st.running_mean.data()) v = static_cast<T>(s(rng));
    for (auto& v : st.running_var.data()) v = static_cast<T>(u(rng));
  }
  for (auto& p : net.parameters()) {
    if (p.role == wrnlab::ParamRole::BnScale) {
      for (auto& v : p.value.data()) v = static_cast<T>(u(rng));
    } else if (p.role == wrnlab::ParamRole::BnShift) {
      for (auto& v : p.value.data()) v = static_cast<T>(s(rng));
    }
  }
}

inline wrnlab::Dataset make_dataset(const Tensor& images, std::vector<int> labels, int classes) {
  wrnlab::Dataset d;
  d.images = images;
  d.labels = std::move(labels);
  d.num_classes = classes;
  d.split = "test";
  return d;
}

}  // namespace testing

namespace testing {

// Per-coordinate interval of the eps-ball intersected with [0, 1].
inline std::pair<double, double> ball_interval(double x, double eps) {
  return {std::max(0.0, x - eps), std::min(1.0, x + eps)};
}

inline double linear_ce(const Tensor& w, const Tensor& b, const std::vector<double>& x, int y) {
  const std::size_t k = w.dim(0), d = w.dim(1);
  std::vector<double> z(k);
  double mx = -1e300;
  for (std::size_t j = 0; j < k; ++j) {
    z[j] = b[j];
    for (std::size_t i = 0; i < d; ++i) z[j] += w[j * d + i] * x[i];
    mx = std::max(mx, z[j]);
  }
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  return mx + std::log(s) - z[static_cast<std::size_t>(y)];
}

// Cross-entropy is convex in the input of a linear model, so its maximum
// over the box is attained at one of the 2^d corners.
inline double corner_optimum(const Tensor& w, const Tensor& b, const std::vector<double>& x, int y, double eps) {
  const std::size_t d = x.size();
  double best = -1e300;
  std::vector<double> c(d);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << d); ++mask) {
    for (std::size_t i = 0; i < d; ++i) {
      const auto [lo, hi] = ball_interval(x[i], eps);
      c[i] = (mask >> i) & 1 ? hi : lo;
    }
    best = std::max(best, linear_ce(w, b, c, y));
  }
  return best;
}

// Exact robustness of a linear classifier: label y survives iff for every
// j != y the worst-case margin over the box stays on y's side.
inline bool linear_robust(const Tensor& w, const Tensor& b, const std::vector<double>& x, int y, double eps) {
  const std::size_t k = w.dim(0), d = w.dim(1);
  const auto yy = static_cast<std::size_t>(y);
  for (std::size_t j = 0; j < k; ++j) {
    if (j == yy) continue;
    double m = b[j] - b[yy];
    for (std::size_t i = 0; i < d; ++i) {
      const double a = w[j * d + i] - w[yy * d + i];
      const auto [lo, hi] = ball_interval(x[i], eps);
      m += a * (a > 0 ? hi : lo);
    }
    if (m > 0) return false;
  }
  return true;
}

template <typename T>
wrnlab::Network<T> random_linear_model(std::size_t dim, int classes, std::uint64_t seed, double scale = 3.0) {
  auto net = wrnlab::build_linear_model<T>(Shape{dim, 1, 1}, classes);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  for (auto& p : net.parameters())
    for (auto& v : p.value.data()) v = static_cast<T>(g(rng));
  return net;
}

}  // namespace testing
