#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wrnlab/arch.hpp"
#include "wrnlab/network.hpp"
#include "wrnlab/tensor.hpp"

namespace wrnlab {

// prod_j (sqrt(h_{j-1}) + sqrt(h_j)) * sigma_j
double mlp_bound(std::span<const int> widths, std::span<const double> sigmas);

// (m sqrt(w_in) + (m - k + 1) sqrt(w_out)) * sigma
double conv_bound(int m, int k, int w_in, int w_out, double sigma);

// 1 + prod of the branch norms.
double residual_bound(std::span<const double> conv_spectral_norms);

// Explicit matrix of a 2-D convolution on an m x m input, rows ordered
// (out channel, out row, out col) and columns (in channel, row, col).
// Without stride/padding this is the valid convolution with
// out * (m-k+1)^2 rows and in * m^2 columns.
Tensor conv_to_matrix(const Tensor& kernel, int m);
Tensor conv_to_matrix(const Tensor& kernel, int m, int stride, int padding);

enum class SpectralMethod { DenseExact, PowerIteration, CirculantExact };

std::string to_string(SpectralMethod method);
SpectralMethod parse_spectral_method(const std::string& text);

struct SpectralOptions {
  SpectralMethod method = SpectralMethod::PowerIteration;
  int padding = -1;  // conv only; -1: (k - 1) / 2
  double tolerance = 1e-6;
  int max_iterations = 100;
  std::uint64_t seed = 0;
  // Optional per-input-channel scale applied before the layer (folded BN).
  std::vector<double> input_scale;
};

struct SpectralResult {
  double value = 0.0;
  int iterations = 0;
  bool converged = true;
};

// Largest singular value of a linear weight [out, in] or of the linear map
// a conv weight [out, in, k, k] applies to a shape.in_channels x m x m input.
SpectralResult spectral_norm(const Tensor& weight, const LayerShape& shape, const SpectralOptions& options = {});

// Extreme singular values of a dense matrix [rows, cols].
struct SingularRange {
  double max = 0.0;
  double min = 0.0;
};
SingularRange singular_range(const Tensor& matrix);

struct SigmaEstimate {
  double mean = 0.0;
  double std = 0.0;  // population
  double excess_kurtosis = 0.0;
  bool degenerate = false;  // constant tensor; kurtosis undefined (NaN)
};

SigmaEstimate estimate_sigma(std::span<const double> values);
SigmaEstimate estimate_sigma(const Tensor& weight);

struct MCStats {
  int rows = 0;  // N
  int cols = 0;  // n
  int trials = 0;
  double mean_lambda_max = 0.0;
  double mean_lambda_min = 0.0;
  double se_lambda_max = 0.0;
  double se_lambda_min = 0.0;
};

// Standard Gaussian N x n matrices scaled by `scale`, one RNG stream per
// trial.
MCStats mc_singular_values(int rows, int cols, int trials, std::uint64_t seed, double scale = 1.0, int workers = 1);

enum class BoundMethod { Spectral, TheoremSigma };

std::string to_string(BoundMethod method);
BoundMethod parse_bound_method(const std::string& text);

enum class BoundRole { Chain, Branch, Shortcut };

struct LayerBound {
  int layer_index = 0;
  std::string name;
  BoundRole role = BoundRole::Chain;
  LayerShape shape;
  double sigma_hat = 0.0;
  double theorem_term = 0.0;
  double spectral_norm = 0.0;  // with the preceding BN scale folded in
  bool converged = true;

  double term(BoundMethod method) const { return method == BoundMethod::Spectral ? spectral_norm : theorem_term; }
};

struct BoundReport {
  BoundMethod method = BoundMethod::Spectral;
  std::vector<LayerBound> per_layer;
  // Product of the selected terms over the plain chain: stem, residual
  // branch convs, stage projections and the classifier.
  double product_bound = 0.0;
  // n + prod over blocks of (1 + prod of branch terms), n = block count.
  double residual_form_bound = 0.0;
  // L2 -> L2 bound propagated through the actual graph (sums at residual
  // adds, shortcut convs included).
  double composed_bound = 0.0;
  // sqrt(output dim * input dim): converts an L2 bound into one on
  // |f(x) - f(x')|_1 / |x - x'|_inf.
  double l1_linf_factor = 1.0;
  int block_count = 0;
  bool all_converged = true;

  double l1_linf_bound() const { return composed_bound * l1_linf_factor; }
};

struct BoundOptions {
  BoundMethod method = BoundMethod::Spectral;
  SpectralOptions spectral;
};

template <typename T>
BoundReport network_bound(const Network<T>& net, const BoundOptions& options = {});

// layer_index,kind,m,k,w_in,w_out,sigma_hat,bound_term,spectral_norm rows
// followed by summary rows (layer_index holds the summary name).
std::string to_csv(const BoundReport& report);

}  // namespace wrnlab
