#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "wrnlab/network.hpp"

namespace wrnlab {

enum class AttackLoss { CrossEntropy, CwMargin };

std::string to_string(AttackLoss loss);
AttackLoss parse_attack_loss(const std::string& text);

struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  int steps = 20;
  double step_size = 0.8 / 255.0;
  bool random_start = false;
  AttackLoss loss = AttackLoss::CrossEntropy;
  double lower = 0.0;
  double upper = 1.0;
  std::uint64_t seed = 0;  // random-start streams, one per sample index

  // 20 steps, alpha = eps / 10, deterministic start.
  static AttackConfig evaluation(double epsilon = 8.0 / 255.0);
  // 10 steps, alpha = 2/255, uniform random start.
  static AttackConfig training(double epsilon = 8.0 / 255.0);

  void validate() const;
};

// Elementwise clamp of `candidate` into [anchor - eps, anchor + eps] and the
// box [lower, upper]. The result satisfies |out - anchor| <= eps when the
// difference is evaluated in T.
template <typename T>
BasicTensor<T> project_linf(const BasicTensor<T>& candidate, const BasicTensor<T>& anchor, double epsilon,
                            double lower = 0.0, double upper = 1.0);

// Builds a scalar objective to maximize on the pass's tape. `first_sample`
// is the global index of row 0 of the batch.
template <typename T>
using AttackObjective = std::function<NodeId(ForwardPass<T>&, std::size_t first_sample)>;

// Projected sign-gradient ascent on an arbitrary objective; the core of
// fgsm, pgd and the Lipschitz estimator. sign(0) = 0.
template <typename T>
BasicTensor<T> pgd_maximize(const Network<T>& net, const BasicTensor<T>& x, const AttackConfig& cfg,
                            const AttackObjective<T>& objective, std::size_t first_sample = 0);

template <typename T>
BasicTensor<T> fgsm(const Network<T>& net, const BasicTensor<T>& x, std::span<const int> labels, double epsilon);

template <typename T>
BasicTensor<T> pgd(const Network<T>& net, const BasicTensor<T>& x, std::span<const int> labels,
                   const AttackConfig& cfg, std::size_t first_sample = 0);

// Same as pgd with the batch split into `workers` contiguous shards.
template <typename T>
BasicTensor<T> pgd_sharded(const Network<T>& net, const BasicTensor<T>& x, std::span<const int> labels,
                           const AttackConfig& cfg, int workers, std::size_t first_sample = 0);

// Mean over the batch of max_{j != y} z_j - z_y.
template <typename T>
double cw_margin_loss(const BasicTensor<T>& logits, std::span<const int> labels);

}  // namespace wrnlab
