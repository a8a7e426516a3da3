#include "wrnlab/attacks.hpp"

#include <cmath>
#include <random>

#include "wrnlab/parallel.hpp"

namespace wrnlab {

std::string to_string(AttackLoss loss) { return loss == AttackLoss::CwMargin ? "cw-margin" : "cross-entropy"; }

AttackLoss parse_attack_loss(const std::string& text) {
  if (text == "cross-entropy" || text == "ce") return AttackLoss::CrossEntropy;
  if (text == "cw-margin" || text == "cw") return AttackLoss::CwMargin;
  throw ValidationError("unknown attack loss '" + text + "'");
}

AttackConfig AttackConfig::evaluation(double epsilon) {
  AttackConfig c;
  c.epsilon = epsilon;
  c.steps = 20;
  c.step_size = epsilon / 10.0;
  c.random_start = false;
  return c;
}

AttackConfig AttackConfig::training(double epsilon) {
  AttackConfig c;
  c.epsilon = epsilon;
  c.steps = 10;
  c.step_size = 2.0 / 255.0;
  c.random_start = true;
  return c;
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0) || epsilon > 1.0) throw ValidationError("attack epsilon must lie in [0, 1]");
  if (steps < 1) throw ValidationError("attack steps must be positive");
  if (!(step_size > 0.0) && epsilon != 0.0) throw ValidationError("attack step size must be positive");
  if (!(lower < upper)) throw ValidationError("attack input bounds must satisfy lower < upper");
}

template <typename T>
BasicTensor<T> project_linf(const BasicTensor<T>& candidate, const BasicTensor<T>& anchor, double epsilon,
                            double lower, double upper) {
  if (candidate.shape() != anchor.shape()) {
    throw ShapeError("project_linf: candidate " + shape_string(candidate.shape()) + " vs anchor " +
                     shape_string(anchor.shape()));
  }
  const T eps = static_cast<T>(epsilon);
  const T lo_box = static_cast<T>(lower), hi_box = static_cast<T>(upper);
  BasicTensor<T> out = candidate;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const T a = anchor[i];
    const T lo = std::max(a - eps, lo_box);
    const T hi = std::min(a + eps, hi_box);
    T v = std::clamp(out[i], std::min(lo, hi), hi);
    // a + eps may round up; pull back until the difference test holds in T.
    while (v - a > eps) v = std::nextafter(v, a);
    while (a - v > eps) v = std::nextafter(v, a);
    out[i] = v;
  }
  return out;
}

template <typename T>
BasicTensor<T> pgd_maximize(const Network<T>& net, const BasicTensor<T>& x, const AttackConfig& cfg,
                            const AttackObjective<T>& objective, std::size_t first_sample) {
  cfg.validate();
  BasicTensor<T> adv = x;
  if (cfg.epsilon == 0.0) return adv;
  const std::size_t n = x.dim(0);
  const std::size_t per = x.numel() / n;
  if (cfg.random_start) {
    const T eps = static_cast<T>(cfg.epsilon);
    for (std::size_t i = 0; i < n; ++i) {
      auto rng = stream_rng(cfg.seed, first_sample + i);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (std::size_t j = 0; j < per; ++j) {
        const std::size_t k = i * per + j;
        const T lo = std::max(x[k] - eps, static_cast<T>(cfg.lower));
        const T hi = std::min(x[k] + eps, static_cast<T>(cfg.upper));
        adv[k] = static_cast<T>(lo + (hi - lo) * u(rng));
      }
    }
    adv = project_linf(adv, x, cfg.epsilon, cfg.lower, cfg.upper);
  }
  const T alpha = static_cast<T>(cfg.step_size);
  for (int step = 0; step < cfg.steps; ++step) {
    ForwardPass<T> pass = forward_network(net, adv, GradTarget::Input);
    const NodeId loss = objective(pass, first_sample);
    const GradientMap<T> g = gradients(pass, net, loss, GradTarget::Input);
    const BasicTensor<T>& grad = *g.input;
    for (std::size_t k = 0; k < adv.numel(); ++k) {
      const T s = grad[k] > T{0} ? T{1} : (grad[k] < T{0} ? T{-1} : T{0});
      adv[k] += alpha * s;
    }
    adv = project_linf(adv, x, cfg.epsilon, cfg.lower, cfg.upper);
  }
  return adv;
}

namespace {

template <typename T>
AttackObjective<T> label_objective(std::span<const int> labels, AttackLoss loss) {
  return [labels, loss](ForwardPass<T>& pass, std::size_t) {
    const auto n = static_cast<T>(labels.size());
    const NodeId mean = loss == AttackLoss::CwMargin ? ops::cw_margin(pass.tape, pass.logits, labels)
                                                     : ops::softmax_cross_entropy(pass.tape, pass.logits, labels);
    return ops::scale(pass.tape, mean, n);
  };
}

template <typename T>
void check_batch(const BasicTensor<T>& x, std::span<const int> labels) {
  if (x.rank() < 2 || x.dim(0) != labels.size()) {
    throw ShapeError("attack: batch " + shape_string(x.shape()) + " does not match " +
                     std::to_string(labels.size()) + " labels");
  }
}

}  // namespace

template <typename T>
BasicTensor<T> fgsm(const Network<T>& net, const BasicTensor<T>& x, std::span<const int> labels, double epsilon) {
  if (epsilon < 0.0) throw ValidationError("fgsm: epsilon must be non-negative");
  check_batch(x, labels);
  AttackConfig cfg;
  cfg.epsilon = epsilon;
  cfg.steps = 1;
  cfg.step_size = epsilon > 0.0 ? epsilon : 1.0;
  cfg.random_start = false;
  return pgd_maximize<T>(net, x, cfg, label_objective<T>(labels, AttackLoss::CrossEntropy));
}

template <typename T>
BasicTensor<T> pgd(const Network<T>& net, const BasicTensor<T>& x, std::span<const int> labels,
                   const AttackConfig& cfg, std::size_t first_sample) {
  check_batch(x, labels);
  return pgd_maximize<T>(net, x, cfg, label_objective<T>(labels, cfg.loss), first_sample);
}

template <typename T>
BasicTensor<T> pgd_sharded(const Network<T>& net, const BasicTensor<T>& x, std::span<const int> labels,
                           const AttackConfig& cfg, int workers, std::size_t first_sample) {
  check_batch(x, labels);
  BasicTensor<T> out = x;
  const std::size_t per = x.numel() / x.dim(0);
  parallel_for(x.dim(0), workers, [&](std::size_t b, std::size_t e) {
    BasicTensor<T> shard = x.slice_rows(b, e);
    BasicTensor<T> adv = pgd(net, shard, labels.subspan(b, e - b), cfg, first_sample + b);
    std::copy(adv.data().begin(), adv.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * per));
  });
  return out;
}

template <typename T>
double cw_margin_loss(const BasicTensor<T>& logits, std::span<const int> labels) {
  Tape<T> tape;
  const NodeId z = tape.leaf(logits, false);
  return static_cast<double>(tape.value(ops::cw_margin(tape, z, labels))[0]);
}

#define WRNLAB_INSTANTIATE_ATTACKS(T)                                                                             \
  template BasicTensor<T> project_linf(const BasicTensor<T>&, const BasicTensor<T>&, double, double, double);     \
  template BasicTensor<T> pgd_maximize(const Network<T>&, const BasicTensor<T>&, const AttackConfig&,             \
                                       const AttackObjective<T>&, std::size_t);                                   \
  template BasicTensor<T> fgsm(const Network<T>&, const BasicTensor<T>&, std::span<const int>, double);           \
  template BasicTensor<T> pgd(const Network<T>&, const BasicTensor<T>&, std::span<const int>, const AttackConfig&, \
                              std::size_t);                                                                        \
  template BasicTensor<T> pgd_sharded(const Network<T>&, const BasicTensor<T>&, std::span<const int>,             \
                                      const AttackConfig&, int, std::size_t);                                     \
  template double cw_margin_loss(const BasicTensor<T>&, std::span<const int>);

WRNLAB_INSTANTIATE_ATTACKS(float)
WRNLAB_INSTANTIATE_ATTACKS(double)

}  // namespace wrnlab
