#include "wrnlab/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace wrnlab::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

void require(bool cond, const std::string& message) {
  if (!cond) throw ShapeError(message);
}

struct ConvGeometry {
  std::size_t n, c, h, w, o, k, ho, wo;
  int stride, pad;
  std::size_t patch() const { return c * k * k; }
  std::size_t out_pixels() const { return ho * wo; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

ConvGeometry geometry(const Shape& x, const Shape& w, int stride, int pad) {
  require(x.size() == 4, "conv2d: input must be rank 4 [N,C,H,W], got " + shape_string(x));
  require(w.size() == 4, "conv2d: weight must be rank 4 [O,C,k,k], got " + shape_string(w));
  require(w[1] == x[1], "conv2d: input channels " + std::to_string(x[1]) + " != weight channels " +
                            std::to_string(w[1]) + " (input " + shape_string(x) + ", weight " + shape_string(w) + ")");
  require(w[2] == w[3], "conv2d: kernel must be square");
  require(stride >= 1 && pad >= 0, "conv2d: invalid stride/padding");
  const int k = static_cast<int>(w[2]);
  require(x[2] + 2 * static_cast<std::size_t>(pad) >= static_cast<std::size_t>(k) &&
              x[3] + 2 * static_cast<std::size_t>(pad) >= static_cast<std::size_t>(k),
          "conv2d: kernel larger than padded input " + shape_string(x));
  return ConvGeometry{x[0], x[1], x[2], x[3], w[0], w[2], conv_out_size(x[2], k, stride, pad),
                      conv_out_size(x[3], k, stride, pad), stride, pad};
}

// Output columns [lo, hi) whose input column oj*stride - pad + kj lies in [0, w).
inline void valid_range(std::size_t wo, std::size_t w, int stride, int pad, std::ptrdiff_t kj, std::size_t& lo,
                        std::size_t& hi) {
  const std::ptrdiff_t s = stride;
  const std::ptrdiff_t first = pad - kj;  // oj*s >= first
  const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(w) - 1 + pad - kj;  // oj*s <= last
  const std::ptrdiff_t l = first <= 0 ? 0 : (first + s - 1) / s;
  const std::ptrdiff_t h = last < 0 ? 0 : last / s + 1;
  lo = static_cast<std::size_t>(std::min<std::ptrdiff_t>(l, static_cast<std::ptrdiff_t>(wo)));
  hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(h, static_cast<std::ptrdiff_t>(lo), static_cast<std::ptrdiff_t>(wo)));
}

// cols [C*k*k, Ho*Wo] for one sample.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const auto k = static_cast<std::ptrdiff_t>(g.k);
  for (std::size_t c = 0; c < g.c; ++c) {
    const T* xc = x + c * g.h * g.w;
    for (std::ptrdiff_t ki = 0; ki < k; ++ki) {
      for (std::ptrdiff_t kj = 0; kj < k; ++kj) {
        T* row = cols + ((c * g.k + static_cast<std::size_t>(ki)) * g.k + static_cast<std::size_t>(kj)) * g.out_pixels();
        std::size_t lo = 0, hi = 0;
        valid_range(g.wo, g.w, g.stride, g.pad, kj, lo, hi);
        for (std::size_t oi = 0; oi < g.ho; ++oi) {
          T* dst = row + oi * g.wo;
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi) * g.stride - g.pad + ki;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, T{0});
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(ii) * g.w;
          std::fill(dst, dst + lo, T{0});
          std::fill(dst + hi, dst + g.wo, T{0});
          const std::ptrdiff_t off = kj - g.pad;
          if (g.stride == 1) {
            std::copy(src + static_cast<std::ptrdiff_t>(lo) + off, src + static_cast<std::ptrdiff_t>(hi) + off, dst + lo);
          } else {
            for (std::size_t oj = lo; oj < hi; ++oj) dst[oj] = src[static_cast<std::ptrdiff_t>(oj) * g.stride + off];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
  const auto k = static_cast<std::ptrdiff_t>(g.k);
  for (std::size_t c = 0; c < g.c; ++c) {
    T* dxc = dx + c * g.h * g.w;
    for (std::ptrdiff_t ki = 0; ki < k; ++ki) {
      for (std::ptrdiff_t kj = 0; kj < k; ++kj) {
        const T* row =
            cols + ((c * g.k + static_cast<std::size_t>(ki)) * g.k + static_cast<std::size_t>(kj)) * g.out_pixels();
        std::size_t lo = 0, hi = 0;
        valid_range(g.wo, g.w, g.stride, g.pad, kj, lo, hi);
        const std::ptrdiff_t off = kj - g.pad;
        for (std::size_t oi = 0; oi < g.ho; ++oi) {
          const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(oi) * g.stride - g.pad + ki;
          if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* dst = dxc + static_cast<std::size_t>(ii) * g.w;
          const T* src = row + oi * g.wo;
          for (std::size_t oj = lo; oj < hi; ++oj) dst[static_cast<std::ptrdiff_t>(oj) * g.stride + off] += src[oj];
        }
      }
    }
  }
}

std::size_t inner_size(const Shape& s) {
  std::size_t r = 1;
  for (std::size_t i = 2; i < s.size(); ++i) r *= s[i];
  return r;
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicTensor<T>& w, int stride, int pad) {
  const ConvGeometry g = geometry(x.shape(), w.shape(), stride, pad);
  BasicTensor<T> y(Shape{g.n, g.o, g.ho, g.wo});
  std::vector<T> cols(g.pointwise() ? 0 : g.patch() * g.out_pixels());
  CMapMat<T> wm(w.raw(), static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(g.patch()));
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* xn = x.raw() + n * g.c * g.h * g.w;
    const T* src = xn;
    if (!g.pointwise()) {
      im2col(xn, g, cols.data());
      src = cols.data();
    }
    CMapMat<T> cm(src, static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.out_pixels()));
    MapMat<T> ym(y.raw() + n * g.o * g.out_pixels(), static_cast<Eigen::Index>(g.o),
                 static_cast<Eigen::Index>(g.out_pixels()));
    ym.noalias() = wm * cm;
  }
  return y;
}

template <typename T>
BasicTensor<T> conv2d_backward_input(const BasicTensor<T>& dy, const BasicTensor<T>& w, const Shape& x_shape,
                                     int stride, int pad) {
  const ConvGeometry g = geometry(x_shape, w.shape(), stride, pad);
  require(dy.shape() == Shape({g.n, g.o, g.ho, g.wo}), "conv2d backward: output gradient shape mismatch");
  BasicTensor<T> dx(x_shape);
  std::vector<T> cols(g.patch() * g.out_pixels());
  CMapMat<T> wm(w.raw(), static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(g.patch()));
  for (std::size_t n = 0; n < g.n; ++n) {
    CMapMat<T> dym(dy.raw() + n * g.o * g.out_pixels(), static_cast<Eigen::Index>(g.o),
                   static_cast<Eigen::Index>(g.out_pixels()));
    T* dxn = dx.raw() + n * g.c * g.h * g.w;
    if (g.pointwise()) {
      MapMat<T> dxm(dxn, static_cast<Eigen::Index>(g.c), static_cast<Eigen::Index>(g.out_pixels()));
      dxm.noalias() = wm.transpose() * dym;
    } else {
      MapMat<T> cm(cols.data(), static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.out_pixels()));
      cm.noalias() = wm.transpose() * dym;
      col2im_add(cols.data(), g, dxn);
    }
  }
  return dx;
}

template <typename T>
BasicTensor<T> conv2d_backward_weight(const BasicTensor<T>& dy, const BasicTensor<T>& x, const Shape& w_shape,
                                      int stride, int pad) {
  const ConvGeometry g = geometry(x.shape(), w_shape, stride, pad);
  BasicTensor<T> dw(w_shape);
  std::vector<T> cols(g.pointwise() ? 0 : g.patch() * g.out_pixels());
  MapMat<T> dwm(dw.raw(), static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(g.patch()));
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* xn = x.raw() + n * g.c * g.h * g.w;
    const T* src = xn;
    if (!g.pointwise()) {
      im2col(xn, g, cols.data());
      src = cols.data();
    }
    CMapMat<T> cm(src, static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.out_pixels()));
    CMapMat<T> dym(dy.raw() + n * g.o * g.out_pixels(), static_cast<Eigen::Index>(g.o),
                   static_cast<Eigen::Index>(g.out_pixels()));
    dwm.noalias() += dym * cm.transpose();
  }
  return dw;
}

template <typename T>
NodeId conv2d(Tape<T>& tape, NodeId x, NodeId w, int stride, int pad) {
  BasicTensor<T> y = conv2d_forward(tape.value(x), tape.value(w), stride, pad);
  return tape.record("conv2d", std::move(y), {x, w}, [x, w, stride, pad](Tape<T>& t, NodeId self) {
    const BasicTensor<T>& dy = t.grad(self);
    if (t.requires_grad(x)) {
      BasicTensor<T> dx = conv2d_backward_input(dy, t.value(w), t.value(x).shape(), stride, pad);
      auto& gx = t.grad(x);
      for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += dx[i];
    }
    if (t.requires_grad(w)) {
      BasicTensor<T> dw = conv2d_backward_weight(dy, t.value(x), t.value(w).shape(), stride, pad);
      auto& gw = t.grad(w);
      for (std::size_t i = 0; i < gw.numel(); ++i) gw[i] += dw[i];
    }
  });
}

template <typename T>
NodeId batch_norm_train(Tape<T>& tape, NodeId x, NodeId gamma, NodeId beta, double eps, BatchNormStats* stats) {
  const BasicTensor<T>& xv = tape.value(x);
  require(xv.rank() >= 2, "batch_norm: input must have a channel axis, got " + shape_string(xv.shape()));
  const std::size_t n = xv.dim(0), c = xv.dim(1), inner = inner_size(xv.shape());
  require(tape.value(gamma).shape() == Shape{c} && tape.value(beta).shape() == Shape{c},
          "batch_norm: affine parameters must have shape [" + std::to_string(c) + "]");
  const std::size_t count = n * inner;
  if (count < 2) throw ShapeError("batch_norm: training mode needs more than one value per channel");
  std::vector<T> mean(c), invstd(c);
  if (stats) {
    stats->mean.assign(c, 0.0);
    stats->var.assign(c, 0.0);
  }
  BasicTensor<T> xhat(xv.shape());
  BasicTensor<T> y(xv.shape());
  const auto& g = tape.value(gamma);
  const auto& b = tape.value(beta);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < inner; ++j) s += xv[(i * c + ch) * inner + j];
    const double m = s / static_cast<double>(count);
    double ss = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < inner; ++j) {
        const double d = xv[(i * c + ch) * inner + j] - m;
        ss += d * d;
      }
    const double var = ss / static_cast<double>(count);
    const double is = 1.0 / std::sqrt(var + eps);
    mean[ch] = static_cast<T>(m);
    invstd[ch] = static_cast<T>(is);
    if (stats) {
      stats->mean[ch] = m;
      stats->var[ch] = ss / static_cast<double>(count - 1);
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < inner; ++j) {
        const std::size_t idx = (i * c + ch) * inner + j;
        xhat[idx] = static_cast<T>((xv[idx] - m) * is);
        y[idx] = g[ch] * xhat[idx] + b[ch];
      }
  }
  return tape.record("batch_norm_train", std::move(y), {x, gamma, beta},
                     [x, gamma, beta, xhat = std::move(xhat), invstd = std::move(invstd), n, c, inner](
                         Tape<T>& t, NodeId self) {
                       const auto& dy = t.grad(self);
                       const auto& gv = t.value(gamma);
                       const double count = static_cast<double>(n * inner);
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         double sdy = 0, sdyx = 0;
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < inner; ++j) {
                             const std::size_t idx = (i * c + ch) * inner + j;
                             sdy += dy[idx];
                             sdyx += dy[idx] * xhat[idx];
                           }
                         if (t.requires_grad(gamma)) t.grad(gamma)[ch] += static_cast<T>(sdyx);
                         if (t.requires_grad(beta)) t.grad(beta)[ch] += static_cast<T>(sdy);
                         if (t.requires_grad(x)) {
                           auto& gx = t.grad(x);
                           const double k = static_cast<double>(gv[ch]) * invstd[ch] / count;
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < inner; ++j) {
                               const std::size_t idx = (i * c + ch) * inner + j;
                               gx[idx] += static_cast<T>(k * (count * dy[idx] - sdy - xhat[idx] * sdyx));
                             }
                         }
                       }
                     });
}

template <typename T>
NodeId batch_norm_eval(Tape<T>& tape, NodeId x, NodeId gamma, NodeId beta, const BasicTensor<T>& running_mean,
                       const BasicTensor<T>& running_var, double eps) {
  const BasicTensor<T>& xv = tape.value(x);
  require(xv.rank() >= 2, "batch_norm: input must have a channel axis, got " + shape_string(xv.shape()));
  const std::size_t n = xv.dim(0), c = xv.dim(1), inner = inner_size(xv.shape());
  require(tape.value(gamma).shape() == Shape{c} && running_mean.shape() == Shape{c} &&
              running_var.shape() == Shape{c},
          "batch_norm: parameters must have shape [" + std::to_string(c) + "]");
  std::vector<T> invstd(c);
  for (std::size_t ch = 0; ch < c; ++ch) invstd[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(running_var[ch]) + eps));
  BasicTensor<T> y(xv.shape());
  const auto& g = tape.value(gamma);
  const auto& b = tape.value(beta);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t j = 0; j < inner; ++j) {
        const std::size_t idx = (i * c + ch) * inner + j;
        y[idx] = g[ch] * ((xv[idx] - running_mean[ch]) * invstd[ch]) + b[ch];
      }
  return tape.record("batch_norm_eval", std::move(y), {x, gamma, beta},
                     [x, gamma, beta, rm = running_mean, invstd = std::move(invstd), n, c, inner](Tape<T>& t,
                                                                                                NodeId self) {
                       const auto& dy = t.grad(self);
                       const auto& xv = t.value(x);
                       const auto& gv = t.value(gamma);
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         T sdy{0}, sdyx{0};
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < inner; ++j) {
                             const std::size_t idx = (i * c + ch) * inner + j;
                             sdy += dy[idx];
                             sdyx += dy[idx] * (xv[idx] - rm[ch]) * invstd[ch];
                           }
                         if (t.requires_grad(gamma)) t.grad(gamma)[ch] += sdyx;
                         if (t.requires_grad(beta)) t.grad(beta)[ch] += sdy;
                         if (t.requires_grad(x)) {
                           auto& gx = t.grad(x);
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < inner; ++j) {
                               const std::size_t idx = (i * c + ch) * inner + j;
                               gx[idx] += dy[idx] * gv[ch] * invstd[ch];
                             }
                         }
                       }
                     });
}

template <typename T>
NodeId relu(Tape<T>& tape, NodeId x) {
  BasicTensor<T> y = tape.value(x);
  for (auto& v : y.data()) v = v > T{0} ? v : T{0};
  return tape.record("relu", std::move(y), {x}, [x](Tape<T>& t, NodeId self) {
    const auto& dy = t.grad(self);
    const auto& yv = t.value(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.numel(); ++i)
      if (yv[i] > T{0}) gx[i] += dy[i];
  });
}

template <typename T>
NodeId add(Tape<T>& tape, NodeId a, NodeId b) {
  const auto& av = tape.value(a);
  const auto& bv = tape.value(b);
  require(av.shape() == bv.shape(), "add: shape mismatch " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  BasicTensor<T> y = av;
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += bv[i];
  return tape.record("add", std::move(y), {a, b}, [a, b](Tape<T>& t, NodeId self) {
    const auto& dy = t.grad(self);
    for (NodeId p : {a, b}) {
      if (!t.requires_grad(p)) continue;
      auto& g = t.grad(p);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += dy[i];
    }
  });
}

template <typename T>
NodeId global_avg_pool(Tape<T>& tape, NodeId x) {
  const auto& xv = tape.value(x);
  require(xv.rank() == 4, "avg_pool: input must be rank 4, got " + shape_string(xv.shape()));
  const std::size_t n = xv.dim(0), c = xv.dim(1), inner = xv.dim(2) * xv.dim(3);
  BasicTensor<T> y(Shape{n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    T s{0};
    for (std::size_t j = 0; j < inner; ++j) s += xv[i * inner + j];
    y[i] = s / static_cast<T>(inner);
  }
  return tape.record("avg_pool", std::move(y), {x}, [x, n, c, inner](Tape<T>& t, NodeId self) {
    const auto& dy = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < n * c; ++i)
      for (std::size_t j = 0; j < inner; ++j) gx[i * inner + j] += dy[i] / static_cast<T>(inner);
  });
}

template <typename T>
NodeId flatten(Tape<T>& tape, NodeId x) {
  const auto& xv = tape.value(x);
  require(xv.rank() >= 1, "flatten: scalar input");
  BasicTensor<T> y = xv.reshaped(Shape{xv.dim(0), xv.numel() / xv.dim(0)});
  return tape.record("flatten", std::move(y), {x}, [x](Tape<T>& t, NodeId self) {
    const auto& dy = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += dy[i];
  });
}

namespace {

template <typename T>
NodeId linear_impl(Tape<T>& tape, NodeId x, NodeId w, const NodeId* bias) {
  const auto& xv = tape.value(x);
  const auto& wv = tape.value(w);
  require(xv.rank() == 2 && wv.rank() == 2 && xv.dim(1) == wv.dim(1),
          "linear: input " + shape_string(xv.shape()) + " incompatible with weight " + shape_string(wv.shape()));
  const std::size_t n = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
  if (bias) require(tape.value(*bias).shape() == Shape{out}, "linear: bias must have shape [" + std::to_string(out) + "]");
  BasicTensor<T> y(Shape{n, out});
  CMapMat<T> xm(xv.raw(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
  CMapMat<T> wm(wv.raw(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  MapMat<T> ym(y.raw(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out));
  // Row by row so each sample's result is independent of the batch it sits in.
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) ym.row(i).noalias() = xm.row(i) * wm.transpose();
  if (bias) {
    const auto& bv = tape.value(*bias);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out; ++j) y[i * out + j] += bv[j];
  }
  std::vector<NodeId> parents{x, w};
  if (bias) parents.push_back(*bias);
  const bool has_bias = bias != nullptr;
  const NodeId b = has_bias ? *bias : 0;
  return tape.record("linear", std::move(y), std::move(parents), [x, w, b, has_bias, n, in, out](Tape<T>& t, NodeId self) {
    const auto& dy = t.grad(self);
    CMapMat<T> dym(dy.raw(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out));
    if (t.requires_grad(x)) {
      CMapMat<T> wm(t.value(w).raw(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
      MapMat<T> gx(t.grad(x).raw(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) gx.row(i).noalias() += dym.row(i) * wm;
    }
    if (t.requires_grad(w)) {
      CMapMat<T> xm(t.value(x).raw(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(in));
      MapMat<T> gw(t.grad(w).raw(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
      gw.noalias() += dym.transpose() * xm;
    }
    if (has_bias && t.requires_grad(b)) {
      auto& gb = t.grad(b);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out; ++j) gb[j] += dy[i * out + j];
    }
  });
}

template <typename T>
void check_labels(const BasicTensor<T>& logits, std::span<const int> labels, const char* op) {
  require(logits.rank() == 2, std::string(op) + ": logits must be rank 2, got " + shape_string(logits.shape()));
  require(labels.size() == logits.dim(0), std::string(op) + ": label count does not match batch size");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= logits.dim(1)) throw ShapeError(std::string(op) + ": label out of range");
}

}  // namespace

template <typename T>
NodeId linear(Tape<T>& tape, NodeId x, NodeId w, NodeId bias) {
  return linear_impl(tape, x, w, &bias);
}

template <typename T>
NodeId linear(Tape<T>& tape, NodeId x, NodeId w) {
  return linear_impl<T>(tape, x, w, nullptr);
}

template <typename T>
NodeId softmax_cross_entropy(Tape<T>& tape, NodeId logits, std::span<const int> labels) {
  const auto& z = tape.value(logits);
  check_labels(z, labels, "softmax_cross_entropy");
  const std::size_t n = z.dim(0), k = z.dim(1);
  BasicTensor<T> probs(z.shape());
  double loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = z.raw() + i * k;
    const T mx = *std::max_element(row, row + k);
    double s = 0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(static_cast<double>(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = static_cast<T>(std::exp(static_cast<double>(row[j] - mx)) / s);
    loss += std::log(s) - static_cast<double>(row[labels[i]] - mx);
  }
  BasicTensor<T> out(Shape{1}, static_cast<T>(loss / static_cast<double>(n)));
  std::vector<int> ys(labels.begin(), labels.end());
  return tape.record("softmax_cross_entropy", std::move(out), {logits},
                     [logits, probs = std::move(probs), ys = std::move(ys), n, k](Tape<T>& t, NodeId self) {
                       const T scale = t.grad(self)[0] / static_cast<T>(n);
                       auto& g = t.grad(logits);
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < k; ++j) {
                           const T onehot = static_cast<int>(j) == ys[i] ? T{1} : T{0};
                           g[i * k + j] += scale * (probs[i * k + j] - onehot);
                         }
                     });
}

template <typename T>
NodeId cw_margin(Tape<T>& tape, NodeId logits, std::span<const int> labels) {
  const auto& z = tape.value(logits);
  check_labels(z, labels, "cw_margin");
  const std::size_t n = z.dim(0), k = z.dim(1);
  require(k >= 2, "cw_margin: needs at least two classes");
  std::vector<std::size_t> other(n);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = labels[i] == 0 ? 1 : 0;
    for (std::size_t j = 0; j < k; ++j)
      if (static_cast<int>(j) != labels[i] && z[i * k + j] > z[i * k + best]) best = j;
    other[i] = best;
    total += static_cast<double>(z[i * k + best] - z[i * k + static_cast<std::size_t>(labels[i])]);
  }
  BasicTensor<T> out(Shape{1}, static_cast<T>(total / static_cast<double>(n)));
  std::vector<int> ys(labels.begin(), labels.end());
  return tape.record("cw_margin", std::move(out), {logits},
                     [logits, other = std::move(other), ys = std::move(ys), n, k](Tape<T>& t, NodeId self) {
                       const T scale = t.grad(self)[0] / static_cast<T>(n);
                       auto& g = t.grad(logits);
                       for (std::size_t i = 0; i < n; ++i) {
                         g[i * k + other[i]] += scale;
                         g[i * k + static_cast<std::size_t>(ys[i])] -= scale;
                       }
                     });
}

template <typename T>
NodeId sum(Tape<T>& tape, NodeId x) {
  T s{0};
  for (T v : tape.value(x).data()) s += v;
  return tape.record("sum", BasicTensor<T>(Shape{1}, s), {x}, [x](Tape<T>& t, NodeId self) {
    const T g0 = t.grad(self)[0];
    for (auto& g : t.grad(x).data()) g += g0;
  });
}

template <typename T>
NodeId sum_squares(Tape<T>& tape, NodeId x) {
  T s{0};
  for (T v : tape.value(x).data()) s += v * v;
  return tape.record("sum_squares", BasicTensor<T>(Shape{1}, s), {x}, [x](Tape<T>& t, NodeId self) {
    const T g0 = t.grad(self)[0];
    const auto& xv = t.value(x);
    auto& g = t.grad(x);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += T{2} * xv[i] * g0;
  });
}

template <typename T>
NodeId l1_distance(Tape<T>& tape, NodeId x, const BasicTensor<T>& reference) {
  const auto& xv = tape.value(x);
  require(xv.shape() == reference.shape(), "l1_distance: shape mismatch " + shape_string(xv.shape()) + " vs " +
                                               shape_string(reference.shape()));
  T s{0};
  BasicTensor<T> sign(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    const T d = xv[i] - reference[i];
    s += std::abs(d);
    sign[i] = d > T{0} ? T{1} : (d < T{0} ? T{-1} : T{0});
  }
  return tape.record("l1_distance", BasicTensor<T>(Shape{1}, s), {x},
                     [x, sign = std::move(sign)](Tape<T>& t, NodeId self) {
                       const T g0 = t.grad(self)[0];
                       auto& g = t.grad(x);
                       for (std::size_t i = 0; i < g.numel(); ++i) g[i] += sign[i] * g0;
                     });
}

template <typename T>
NodeId scale(Tape<T>& tape, NodeId x, T factor) {
  BasicTensor<T> y = tape.value(x);
  for (auto& v : y.data()) v *= factor;
  return tape.record("scale", std::move(y), {x}, [x, factor](Tape<T>& t, NodeId self) {
    const auto& dy = t.grad(self);
    auto& g = t.grad(x);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += dy[i] * factor;
  });
}

#define WRNLAB_INSTANTIATE_OPS(T)                                                                                   \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicTensor<T>&, int, int);                \
  template BasicTensor<T> conv2d_backward_input(const BasicTensor<T>&, const BasicTensor<T>&, const Shape&, int,  \
                                                int);                                                             \
  template BasicTensor<T> conv2d_backward_weight(const BasicTensor<T>&, const BasicTensor<T>&, const Shape&, int, \
                                                 int);                                                            \
  template NodeId conv2d(Tape<T>&, NodeId, NodeId, int, int);                                                     \
  template NodeId batch_norm_train(Tape<T>&, NodeId, NodeId, NodeId, double, BatchNormStats*);                    \
  template NodeId batch_norm_eval(Tape<T>&, NodeId, NodeId, NodeId, const BasicTensor<T>&, const BasicTensor<T>&, \
                                  double);                                                                        \
  template NodeId relu(Tape<T>&, NodeId);                                                                         \
  template NodeId add(Tape<T>&, NodeId, NodeId);                                                                  \
  template NodeId global_avg_pool(Tape<T>&, NodeId);                                                              \
  template NodeId flatten(Tape<T>&, NodeId);                                                                      \
  template NodeId linear(Tape<T>&, NodeId, NodeId, NodeId);                                                       \
  template NodeId linear(Tape<T>&, NodeId, NodeId);                                                               \
  template NodeId softmax_cross_entropy(Tape<T>&, NodeId, std::span<const int>);                                  \
  template NodeId cw_margin(Tape<T>&, NodeId, std::span<const int>);                                              \
  template NodeId sum(Tape<T>&, NodeId);                                                                          \
  template NodeId sum_squares(Tape<T>&, NodeId);                                                                  \
  template NodeId l1_distance(Tape<T>&, NodeId, const BasicTensor<T>&);                                           \
  template NodeId scale(Tape<T>&, NodeId, T);

WRNLAB_INSTANTIATE_OPS(float)
WRNLAB_INSTANTIATE_OPS(double)

}  // namespace wrnlab::ops
