#include "wrnlab/bounds.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

#include "wrnlab/ops.hpp"
#include "wrnlab/parallel.hpp"

namespace wrnlab {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const Matrix> as_matrix(const Tensor& t) {
  if (t.rank() != 2) throw ShapeError("expected a matrix, got " + shape_string(t.shape()));
  return {t.raw(), static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1))};
}

// Largest eigenvalue of the smaller Gram matrix.
double gram_spectral_norm(const Matrix& a) {
  const Eigen::MatrixXd g = a.rows() >= a.cols() ? Eigen::MatrixXd(a.transpose() * a) : Eigen::MatrixXd(a * a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

using LinearOp = std::function<Tensor(const Tensor&)>;

SpectralResult power_iteration(const LinearOp& forward, const LinearOp& adjoint, const Shape& in_shape,
                               const SpectralOptions& o) {
  auto rng = stream_rng(o.seed, 0);
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor v(in_shape);
  for (auto& e : v.data()) e = g(rng);
  auto normalize = [](Tensor& t) {
    double n = 0.0;
    for (double e : t.data()) n += e * e;
    n = std::sqrt(n);
    if (n > 0.0) {
      for (auto& e : t.data()) e /= n;
    }
    return n;
  };
  normalize(v);
  SpectralResult r;
  r.converged = false;
  double prev = 0.0;
  for (int it = 1; it <= o.max_iterations; ++it) {
    Tensor u = forward(v);
    double sigma = 0.0;
    for (double e : u.data()) sigma += e * e;
    sigma = std::sqrt(sigma);
    r.iterations = it;
    r.value = std::max(r.value, sigma);
    if (sigma == 0.0) {
      r.converged = true;
      break;
    }
    v = adjoint(u);
    if (normalize(v) == 0.0) {
      r.converged = true;
      break;
    }
    if (it > 1 && std::abs(sigma - prev) <= o.tolerance * sigma) {
      r.converged = true;
      break;
    }
    prev = sigma;
  }
  return r;
}

void check_scale(const SpectralOptions& o, int channels) {
  if (!o.input_scale.empty() && o.input_scale.size() != static_cast<std::size_t>(channels)) {
    throw ShapeError("spectral_norm: input scale has " + std::to_string(o.input_scale.size()) + " entries for " +
                     std::to_string(channels) + " input channels");
  }
}

}  // namespace

double mlp_bound(std::span<const int> widths, std::span<const double> sigmas) {
  if (widths.size() != sigmas.size() + 1) {
    throw ValidationError("mlp_bound: " + std::to_string(widths.size()) + " widths need " +
                          std::to_string(widths.size() == 0 ? 0 : widths.size() - 1) + " sigmas, got " +
                          std::to_string(sigmas.size()));
  }
  double b = 1.0;
  for (std::size_t j = 0; j < sigmas.size(); ++j) {
    if (widths[j] < 1 || widths[j + 1] < 1) throw ValidationError("mlp_bound: widths must be positive");
    if (!(sigmas[j] >= 0.0)) throw ValidationError("mlp_bound: sigmas must be non-negative");
    b *= (std::sqrt(static_cast<double>(widths[j])) + std::sqrt(static_cast<double>(widths[j + 1]))) * sigmas[j];
  }
  return b;
}

double conv_bound(int m, int k, int w_in, int w_out, double sigma) {
  if (k < 1) throw ValidationError("conv_bound: kernel size must be positive");
  if (k > m) throw ValidationError("conv_bound: kernel " + std::to_string(k) + " exceeds feature map " + std::to_string(m));
  if (w_in < 1 || w_out < 1) throw ValidationError("conv_bound: channel counts must be positive");
  if (!(sigma >= 0.0)) throw ValidationError("conv_bound: sigma must be non-negative");
  return (m * std::sqrt(static_cast<double>(w_in)) + (m - k + 1) * std::sqrt(static_cast<double>(w_out))) * sigma;
}

double residual_bound(std::span<const double> norms) {
  if (norms.empty()) throw ValidationError("residual_bound: a residual block has at least one conv");
  double p = 1.0;
  for (double n : norms) {
    if (!(n >= 0.0)) throw ValidationError("residual_bound: norms must be non-negative");
    p *= n;
  }
  return 1.0 + p;
}

Tensor conv_to_matrix(const Tensor& kernel, int m) { return conv_to_matrix(kernel, m, 1, 0); }

Tensor conv_to_matrix(const Tensor& kernel, int m, int stride, int padding) {
  if (kernel.rank() != 4 || kernel.dim(2) != kernel.dim(3)) {
    throw ShapeError("conv_to_matrix: kernel must be [out, in, k, k], got " + shape_string(kernel.shape()));
  }
  const int out = static_cast<int>(kernel.dim(0)), in = static_cast<int>(kernel.dim(1)), k = static_cast<int>(kernel.dim(2));
  if (stride < 1 || padding < 0) throw ValidationError("conv_to_matrix: bad stride or padding");
  if (k > m + 2 * padding) {
    throw ValidationError("conv_to_matrix: kernel " + std::to_string(k) + " exceeds feature map " + std::to_string(m));
  }
  const int o = (m + 2 * padding - k) / stride + 1;
  const std::size_t rows = static_cast<std::size_t>(out) * o * o, cols = static_cast<std::size_t>(in) * m * m;
  Tensor mat(Shape{rows, cols});
  for (int oc = 0; oc < out; ++oc)
    for (int r = 0; r < o; ++r)
      for (int c = 0; c < o; ++c) {
        const std::size_t row = (static_cast<std::size_t>(oc) * o + r) * o + c;
        for (int ic = 0; ic < in; ++ic)
          for (int ky = 0; ky < k; ++ky) {
            const int y = r * stride - padding + ky;
            if (y < 0 || y >= m) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int x = c * stride - padding + kx;
              if (x < 0 || x >= m) continue;
              const std::size_t col = (static_cast<std::size_t>(ic) * m + y) * m + x;
              mat[row * cols + col] += kernel.at(oc, ic, ky, kx);
            }
          }
      }
  return mat;
}

std::string to_string(SpectralMethod m) {
  switch (m) {
    case SpectralMethod::DenseExact: return "dense-exact";
    case SpectralMethod::PowerIteration: return "power-iteration";
    case SpectralMethod::CirculantExact: return "circulant-exact";
  }
  return "?";
}

SpectralMethod parse_spectral_method(const std::string& text) {
  if (text == "dense-exact" || text == "dense") return SpectralMethod::DenseExact;
  if (text == "power-iteration" || text == "power") return SpectralMethod::PowerIteration;
  if (text == "circulant-exact" || text == "circulant") return SpectralMethod::CirculantExact;
  throw ValidationError("unknown spectral method '" + text + "'");
}

SpectralResult spectral_norm(const Tensor& weight, const LayerShape& shape, const SpectralOptions& o) {
  if (shape.kind == LayerKind::Linear || weight.rank() == 2) {
    if (weight.rank() != 2) throw ShapeError("spectral_norm: linear weight must be [out, in], got " + shape_string(weight.shape()));
    check_scale(o, static_cast<int>(weight.dim(1)));
    Matrix a = as_matrix(weight);
    if (!o.input_scale.empty()) {
      for (Eigen::Index j = 0; j < a.cols(); ++j) a.col(j) *= o.input_scale[static_cast<std::size_t>(j)];
    }
    if (o.method != SpectralMethod::PowerIteration) {
      if (a.size() > 1'000'000) throw ValidationError("spectral_norm: dense-exact limited to 1e6 entries");
      return {gram_spectral_norm(a), 0, true};
    }
    const Shape in{static_cast<std::size_t>(a.cols())};
    auto fwd = [&](const Tensor& v) {
      Tensor u(Shape{static_cast<std::size_t>(a.rows())});
      Eigen::Map<Eigen::VectorXd>(u.raw(), a.rows()) = a * Eigen::Map<const Eigen::VectorXd>(v.raw(), a.cols());
      return u;
    };
    auto adj = [&](const Tensor& u) {
      Tensor v(in);
      Eigen::Map<Eigen::VectorXd>(v.raw(), a.cols()) = a.transpose() * Eigen::Map<const Eigen::VectorXd>(u.raw(), a.rows());
      return v;
    };
    return power_iteration(fwd, adj, in, o);
  }

  if (weight.rank() != 4) throw ShapeError("spectral_norm: conv weight must be [out, in, k, k], got " + shape_string(weight.shape()));
  const int in_c = static_cast<int>(weight.dim(1)), k = static_cast<int>(weight.dim(2));
  const int m = shape.spatial, stride = std::max(1, shape.stride);
  const int pad = o.padding >= 0 ? o.padding : (k - 1) / 2;
  check_scale(o, in_c);
  if (m < 1) throw ValidationError("spectral_norm: conv layer needs a positive feature-map size");

  if (o.method != SpectralMethod::PowerIteration) {
    if (o.method == SpectralMethod::CirculantExact && m > 16) {
      throw ValidationError("spectral_norm: circulant-exact limited to feature maps up to 16");
    }
    const int out_sp = (m + 2 * pad - k) / stride + 1;
    const double entries = static_cast<double>(weight.dim(0)) * out_sp * out_sp * in_c * m * m;
    if (o.method == SpectralMethod::DenseExact && entries > 1e6) {
      throw ValidationError("spectral_norm: dense-exact limited to 1e6 entries");
    }
    const Tensor mat = conv_to_matrix(weight, m, stride, pad);
    Matrix a = as_matrix(mat);
    if (!o.input_scale.empty()) {
      const Eigen::Index plane = static_cast<Eigen::Index>(m) * m;
      for (Eigen::Index j = 0; j < a.cols(); ++j) a.col(j) *= o.input_scale[static_cast<std::size_t>(j / plane)];
    }
    return {gram_spectral_norm(a), 0, true};
  }

  const Shape in_shape{1, static_cast<std::size_t>(in_c), static_cast<std::size_t>(m), static_cast<std::size_t>(m)};
  const std::size_t plane = static_cast<std::size_t>(m) * m;
  auto scaled = [&](Tensor t) {
    if (!o.input_scale.empty()) {
      for (std::size_t i = 0; i < t.numel(); ++i) t[i] *= o.input_scale[i / plane];
    }
    return t;
  };
  auto fwd = [&](const Tensor& v) { return ops::conv2d_forward(scaled(v), weight, stride, pad); };
  auto adj = [&](const Tensor& u) { return scaled(ops::conv2d_backward_input(u, weight, in_shape, stride, pad)); };
  return power_iteration(fwd, adj, in_shape, o);
}

SingularRange singular_range(const Tensor& matrix) {
  const Matrix a = as_matrix(matrix);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return {};
  return {s.maxCoeff(), s.minCoeff()};
}

SigmaEstimate estimate_sigma(std::span<const double> values) {
  if (values.size() < 2) throw ValidationError("estimate_sigma: needs at least two elements");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double m2 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double d = (v - mean) * (v - mean);
    m2 += d;
    m4 += d * d;
  }
  m2 /= n;
  m4 /= n;
  SigmaEstimate e;
  e.mean = mean;
  e.std = std::sqrt(m2);
  if (m2 == 0.0) {
    e.degenerate = true;
    e.excess_kurtosis = std::numeric_limits<double>::quiet_NaN();
  } else {
    e.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  }
  return e;
}

SigmaEstimate estimate_sigma(const Tensor& weight) { return estimate_sigma(std::span<const double>(weight.raw(), weight.numel())); }

MCStats mc_singular_values(int rows, int cols, int trials, std::uint64_t seed, double scale, int workers) {
  if (cols < 1 || rows < cols) throw ValidationError("mc_singular_values: requires N >= n >= 1");
  if (trials < 1) throw ValidationError("mc_singular_values: trials must be positive");
  std::vector<SingularRange> draws(static_cast<std::size_t>(trials));
  parallel_for(draws.size(), workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t t = b; t < e; ++t) {
      auto rng = stream_rng(seed, t);
      std::normal_distribution<double> g(0.0, 1.0);
      Tensor a(Shape{static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)});
      for (auto& v : a.data()) v = scale * g(rng);
      draws[t] = singular_range(a);
    }
  });
  MCStats s;
  s.rows = rows;
  s.cols = cols;
  s.trials = trials;
  auto summarize = [&](auto pick, double& mean, double& se) {
    double sum = 0.0;
    for (const auto& d : draws) sum += pick(d);
    mean = sum / trials;
    if (trials < 2) {
      se = 0.0;
      return;
    }
    double ss = 0.0;
    for (const auto& d : draws) ss += (pick(d) - mean) * (pick(d) - mean);
    se = std::sqrt(ss / (trials - 1)) / std::sqrt(static_cast<double>(trials));
  };
  summarize([](const SingularRange& d) { return d.max; }, s.mean_lambda_max, s.se_lambda_max);
  summarize([](const SingularRange& d) { return d.min; }, s.mean_lambda_min, s.se_lambda_min);
  return s;
}

std::string to_string(BoundMethod m) { return m == BoundMethod::Spectral ? "spectral" : "theorem-sigma"; }

BoundMethod parse_bound_method(const std::string& text) {
  if (text == "spectral") return BoundMethod::Spectral;
  if (text == "theorem-sigma" || text == "theorem") return BoundMethod::TheoremSigma;
  throw ValidationError("unknown bound method '" + text + "'");
}

namespace {

// Lipschitz state of a network node: `lip` bounds |d node| / |d input| in
// L2. A node that is a per-channel affine/ReLU image of `base` also carries
// the accumulated channel scale so the next linear map can absorb it.
struct NodeBound {
  double lip = 1.0;
  int base = -1;
  std::vector<double> scale;
};

}  // namespace

template <typename T>
BoundReport network_bound(const Network<T>& net, const BoundOptions& options) {
  BoundReport report;
  report.method = options.method;
  const bool spectral = options.method == BoundMethod::Spectral;
  const auto& layers = net.layers();
  const auto& params = net.parameters();

  std::vector<BoundRole> roles(layers.size(), BoundRole::Chain);
  for (const auto& b : net.blocks()) {
    for (int c : b.branch_convs) roles[static_cast<std::size_t>(c)] = BoundRole::Branch;
    if (b.shortcut_conv >= 0) roles[static_cast<std::size_t>(b.shortcut_conv)] = BoundRole::Shortcut;
  }

  std::vector<NodeBound> nodes(layers.size() + 1);
  std::vector<int> layer_entry(layers.size(), -1);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    const NodeBound& in = nodes[static_cast<std::size_t>(l.inputs.front())];
    NodeBound& out = nodes[i + 1];
    switch (l.kind) {
      case LayerKind::Conv:
      case LayerKind::Linear: {
        const Tensor w = params[l.params.front()].value.template cast<double>();
        LayerBound lb;
        lb.layer_index = static_cast<int>(i);
        lb.name = l.name;
        lb.role = roles[i];
        lb.shape = l.shape;
        lb.sigma_hat = estimate_sigma(w).std;
        if (l.kind == LayerKind::Conv) {
          // Zero padding embeds the input isometrically into an (m + 2p) map.
          const int m = static_cast<int>(l.in_shape[1]) + 2 * l.padding;
          lb.theorem_term = conv_bound(m, l.shape.kernel, l.shape.in_channels, l.shape.out_channels, lb.sigma_hat);
        } else {
          lb.theorem_term = (std::sqrt(static_cast<double>(l.shape.in_channels)) +
                             std::sqrt(static_cast<double>(l.shape.out_channels))) *
                            lb.sigma_hat;
        }
        double source_lip = in.lip;
        if (spectral) {
          SpectralOptions so = options.spectral;
          so.padding = l.padding;
          if (in.base >= 0) {
            so.input_scale = in.scale;
            source_lip = nodes[static_cast<std::size_t>(in.base)].lip;
          }
          LayerShape shape = l.shape;
          shape.spatial = l.kind == LayerKind::Conv ? static_cast<int>(l.in_shape[1]) : 1;
          const SpectralResult r = spectral_norm(w, shape, so);
          lb.spectral_norm = r.value;
          lb.converged = r.converged;
          report.all_converged = report.all_converged && r.converged;
        } else {
          SpectralOptions so = options.spectral;
          so.padding = l.padding;
          LayerShape shape = l.shape;
          shape.spatial = l.kind == LayerKind::Conv ? static_cast<int>(l.in_shape[1]) : 1;
          const SpectralResult r = spectral_norm(w, shape, so);
          lb.spectral_norm = r.value;
          lb.converged = r.converged;
        }
        out.lip = lb.term(options.method) * source_lip;
        layer_entry[i] = static_cast<int>(report.per_layer.size());
        report.per_layer.push_back(std::move(lb));
        break;
      }
      case LayerKind::BatchNorm: {
        if (!spectral) {
          out.lip = in.lip;
          break;
        }
        const auto& gamma = params[l.params.front()].value;
        const auto& var = net.batch_norm_states()[static_cast<std::size_t>(l.bn_state)].running_var;
        std::vector<double> s(gamma.numel());
        for (std::size_t c = 0; c < s.size(); ++c) {
          s[c] = static_cast<double>(gamma[c]) / std::sqrt(static_cast<double>(var[c]) + kBatchNormEps);
        }
        if (in.base >= 0) {
          for (std::size_t c = 0; c < s.size(); ++c) s[c] *= in.scale[c];
          out.base = in.base;
        } else {
          out.base = l.inputs.front();
        }
        out.scale = std::move(s);
        double peak = 0.0;
        for (double v : out.scale) peak = std::max(peak, std::abs(v));
        out.lip = peak * nodes[static_cast<std::size_t>(out.base)].lip;
        break;
      }
      case LayerKind::Relu:
      case LayerKind::Pool:
        out = in;
        break;
      case LayerKind::Flatten: {
        out = in;
        if (in.base >= 0 && l.in_shape.size() == 3) {
          const std::size_t plane = l.in_shape[1] * l.in_shape[2];
          out.scale.clear();
          for (double v : in.scale) out.scale.insert(out.scale.end(), plane, v);
        }
        break;
      }
      case LayerKind::Add:
        out.lip = in.lip + nodes[static_cast<std::size_t>(l.inputs.at(1))].lip;
        break;
    }
  }

  report.product_bound = 1.0;
  for (const auto& lb : report.per_layer) {
    if (lb.role != BoundRole::Shortcut) report.product_bound *= lb.term(options.method);
  }
  double blocks = 1.0;
  for (const auto& b : net.blocks()) {
    std::vector<double> terms;
    for (int c : b.branch_convs) terms.push_back(report.per_layer[static_cast<std::size_t>(layer_entry[static_cast<std::size_t>(c)])].term(options.method));
    blocks *= residual_bound(terms);
  }
  report.block_count = static_cast<int>(net.blocks().size());
  report.residual_form_bound = report.block_count + blocks;
  report.composed_bound = nodes.back().lip;
  const double in_dim = static_cast<double>(shape_numel(net.input_shape()));
  const double out_dim = static_cast<double>(shape_numel(net.node_shape(net.output_node())));
  report.l1_linf_factor = std::sqrt(in_dim * out_dim);
  return report;
}

std::string to_csv(const BoundReport& r) {
  std::ostringstream os;
  os.precision(12);
  os << "layer_index,kind,m,k,w_in,w_out,sigma_hat,bound_term,spectral_norm\n";
  for (const auto& lb : r.per_layer) {
    os << lb.layer_index << "," << to_string(lb.shape.kind) << "," << lb.shape.spatial << "," << lb.shape.kernel << ","
       << lb.shape.in_channels << "," << lb.shape.out_channels << "," << lb.sigma_hat << "," << lb.theorem_term << ","
       << lb.spectral_norm << "\n";
  }
  os << "product_bound,summary,,,,,," << r.product_bound << ",\n";
  os << "residual_form_bound,summary,,,,,," << r.residual_form_bound << ",\n";
  os << "composed_bound,summary,,,,,," << r.composed_bound << ",\n";
  os << "l1_linf_bound,summary,,,,,," << r.l1_linf_bound() << ",\n";
  return os.str();
}

template BoundReport network_bound(const Network<float>&, const BoundOptions&);
template BoundReport network_bound(const Network<double>&, const BoundOptions&);

}  // namespace wrnlab
