#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "wrnlab/attacks.hpp"
#include "wrnlab/data.hpp"
#include "wrnlab/network.hpp"

namespace wrnlab {

struct EvalOptions {
  std::size_t batch_size = 128;
  int workers = 1;
};

// argmax with ties resolved to the lowest class index.
template <typename T>
std::vector<int> argmax_rows(const BasicTensor<T>& logits);

template <typename T>
std::vector<int> predict(const Network<T>& net, const Dataset& data, const EvalOptions& opts = {});

template <typename T>
double accuracy(const Network<T>& net, const Dataset& data, const EvalOptions& opts = {});

struct SampleOutcome {
  int label = 0;
  int clean_pred = 0;
  int adv_pred = 0;

  bool correct() const { return clean_pred == label; }
  bool stable() const { return adv_pred == clean_pred; }
  bool robust() const { return correct() && adv_pred == label; }
};

// Per-sample record of one attack run; every robustness metric is set
// arithmetic over these.
struct AttackOutcomes {
  std::vector<SampleOutcome> samples;

  double clean_accuracy() const;
  double robust_accuracy() const;
  double stability() const;
  // |{correct} ∩ {stable}| / N
  double correct_and_stable() const;
};

// Crafts x' against the model's own clean prediction for every sample. For
// correctly classified samples this is the same x' an untargeted attack on
// the true label produces, so robust accuracy and stability come from one
// batch.
template <typename T>
AttackOutcomes attack_outcomes(const Network<T>& net, const Dataset& data, const AttackConfig& attack,
                               const EvalOptions& opts = {});

// Fraction of samples classified correctly both before and after the attack
// (crafted with the true label). Never exceeds clean accuracy.
template <typename T>
double robust_accuracy(const Network<T>& net, const Dataset& data, const AttackConfig& attack,
                       const EvalOptions& opts = {});

// Fraction whose prediction the attack cannot change, regardless of
// correctness.
template <typename T>
double perturbation_stability(const Network<T>& net, const Dataset& data, const AttackConfig& attack,
                              const EvalOptions& opts = {});

struct NetworkScope {};
using LipschitzScope = std::variant<NetworkScope, int>;  // int: 1-based residual block index

struct LipschitzEstimate {
  double value = 0.0;       // mean over used samples of |f(x) - f(x')|_1 / |x - x'|_inf
  double normalized = 0.0;  // value / representation dimension
  std::size_t used = 0;
  std::size_t skipped = 0;
  std::size_t dimension = 0;
};

// The attack maximizes |f(x) - f(x')|_1 directly with sign-gradient steps.
// A random start is always used (the objective has zero subgradient at
// x' = x); samples whose x' equals x are skipped.
template <typename T>
LipschitzEstimate empirical_lipschitz(const Network<T>& net, const Dataset& data, const AttackConfig& attack,
                                      LipschitzScope scope, const EvalOptions& opts = {});

// Per-block values followed by the whole network (the last entry).
template <typename T>
std::vector<LipschitzEstimate> per_block_lipschitz(const Network<T>& net, const Dataset& data,
                                                   const AttackConfig& attack, const EvalOptions& opts = {});

// Robust accuracy of `target` on x' crafted against `surrogate`.
template <typename T>
double transfer_eval(const Network<T>& surrogate, const Network<T>& target, const Dataset& data,
                     const AttackConfig& attack, const EvalOptions& opts = {});

struct EvalReport {
  double clean_acc = 0.0;
  std::map<std::string, double> robust_acc;
  double stability = 0.0;  // under the first attack
  std::map<std::string, double> empirical_lipschitz;  // "network" or block index
  std::size_t sample_count = 0;

  void check_invariants() const;
};

struct NamedAttack {
  std::string name;
  AttackConfig config;
};

template <typename T>
EvalReport evaluate(const Network<T>& net, const Dataset& data, const std::vector<NamedAttack>& attacks,
                    bool with_lipschitz, const EvalOptions& opts = {});

std::string to_report_text(const EvalReport& report);
std::string csv_header(const EvalReport& report);
std::string csv_row(const EvalReport& report);
// block_index,value rows; the network value is labelled "network".
std::string per_block_csv(const std::vector<LipschitzEstimate>& estimates, bool normalized = false);

}  // namespace wrnlab
