#include "wrnlab/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "wrnlab/parallel.hpp"

namespace wrnlab {

namespace {

// Neumaier summation so the mean does not depend on accumulation order.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

void require_nonempty(const Dataset& data, const char* op) {
  if (data.size() == 0) throw ValidationError(std::string(op) + ": empty dataset");
}

template <typename T>
void require_compatible(const Network<T>& net, const Dataset& data, const char* op) {
  if (data.sample_shape() != net.input_shape()) {
    throw ShapeError(std::string(op) + ": data sample shape " + shape_string(data.sample_shape()) +
                     " does not match network input " + shape_string(net.input_shape()));
  }
}

// Runs fn(begin, end) over mini-batches, with contiguous sample ranges split
// across workers.
void for_each_batch(std::size_t count, const EvalOptions& opts,
                    const std::function<void(std::size_t, std::size_t)>& fn) {
  const std::size_t bs = std::max<std::size_t>(1, opts.batch_size);
  parallel_for(count, opts.workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t s = b; s < e; s += bs) fn(s, std::min(e, s + bs));
  });
}

double fraction(std::size_t k, std::size_t n) { return n == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(n); }

}  // namespace

template <typename T>
std::vector<int> argmax_rows(const BasicTensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("argmax_rows: expected [N, K] logits, got " + shape_string(logits.shape()));
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (logits[i * k + j] > logits[i * k + best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

template <typename T>
std::vector<int> predict(const Network<T>& net, const Dataset& data, const EvalOptions& opts) {
  require_compatible(net, data, "predict");
  std::vector<int> preds(data.size(), 0);
  for_each_batch(data.size(), opts, [&](std::size_t b, std::size_t e) {
    const auto p = argmax_rows(predict_logits(net, data.images_as<T>(b, e)));
    std::copy(p.begin(), p.end(), preds.begin() + static_cast<std::ptrdiff_t>(b));
  });
  return preds;
}

template <typename T>
double accuracy(const Network<T>& net, const Dataset& data, const EvalOptions& opts) {
  require_nonempty(data, "accuracy");
  const auto preds = predict(net, data, opts);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == data.labels[i] ? 1 : 0;
  return fraction(hits, data.size());
}

double AttackOutcomes::clean_accuracy() const {
  std::size_t k = 0;
  for (const auto& s : samples) k += s.correct() ? 1 : 0;
  return fraction(k, samples.size());
}

double AttackOutcomes::robust_accuracy() const {
  std::size_t k = 0;
  for (const auto& s : samples) k += s.robust() ? 1 : 0;
  return fraction(k, samples.size());
}

double AttackOutcomes::stability() const {
  std::size_t k = 0;
  for (const auto& s : samples) k += s.stable() ? 1 : 0;
  return fraction(k, samples.size());
}

double AttackOutcomes::correct_and_stable() const {
  std::size_t k = 0;
  for (const auto& s : samples) k += (s.correct() && s.stable()) ? 1 : 0;
  return fraction(k, samples.size());
}

namespace {

enum class CraftLabel { Truth, OwnPrediction };

template <typename T>
AttackOutcomes run_attack(const Network<T>& crafter, const Network<T>& target, const Dataset& data,
                          const AttackConfig& attack, CraftLabel craft, const EvalOptions& opts, const char* op) {
  require_nonempty(data, op);
  require_compatible(crafter, data, op);
  require_compatible(target, data, op);
  attack.validate();
  AttackOutcomes out;
  out.samples.resize(data.size());
  for_each_batch(data.size(), opts, [&](std::size_t b, std::size_t e) {
    const BasicTensor<T> x = data.images_as<T>(b, e);
    const auto clean_target = argmax_rows(predict_logits(target, x));
    std::vector<int> labels(data.labels.begin() + static_cast<std::ptrdiff_t>(b),
                            data.labels.begin() + static_cast<std::ptrdiff_t>(e));
    if (craft == CraftLabel::OwnPrediction) labels = argmax_rows(predict_logits(crafter, x));
    const BasicTensor<T> adv = pgd(crafter, x, labels, attack, b);
    const auto adv_pred = argmax_rows(predict_logits(target, adv));
    for (std::size_t i = b; i < e; ++i) {
      out.samples[i] = SampleOutcome{data.labels[i], clean_target[i - b], adv_pred[i - b]};
    }
  });
  return out;
}

}  // namespace

template <typename T>
AttackOutcomes attack_outcomes(const Network<T>& net, const Dataset& data, const AttackConfig& attack,
                               const EvalOptions& opts) {
  return run_attack(net, net, data, attack, CraftLabel::OwnPrediction, opts, "attack_outcomes");
}

template <typename T>
double robust_accuracy(const Network<T>& net, const Dataset& data, const AttackConfig& attack,
                       const EvalOptions& opts) {
  return run_attack(net, net, data, attack, CraftLabel::Truth, opts, "robust_accuracy").robust_accuracy();
}

template <typename T>
double perturbation_stability(const Network<T>& net, const Dataset& data, const AttackConfig& attack,
                              const EvalOptions& opts) {
  return attack_outcomes(net, data, attack, opts).stability();
}

template <typename T>
double transfer_eval(const Network<T>& surrogate, const Network<T>& target, const Dataset& data,
                     const AttackConfig& attack, const EvalOptions& opts) {
  if (surrogate.input_shape() != target.input_shape() || surrogate.num_classes() != target.num_classes()) {
    throw ShapeError("transfer_eval: surrogate " + shape_string(surrogate.input_shape()) + "/" +
                     std::to_string(surrogate.num_classes()) + " classes vs target " +
                     shape_string(target.input_shape()) + "/" + std::to_string(target.num_classes()) + " classes");
  }
  return run_attack(surrogate, target, data, attack, CraftLabel::Truth, opts, "transfer_eval").robust_accuracy();
}

namespace {

template <typename T>
int scope_node(const Network<T>& net, LipschitzScope scope) {
  if (std::holds_alternative<NetworkScope>(scope)) return net.output_node();
  const int j = std::get<int>(scope);
  const auto& blocks = net.blocks();
  if (j < 1 || j > static_cast<int>(blocks.size())) {
    throw ValidationError("empirical_lipschitz: block index " + std::to_string(j) + " out of range [1, " +
                          std::to_string(blocks.size()) + "]");
  }
  return blocks[static_cast<std::size_t>(j - 1)].output_node;
}

}  // namespace

template <typename T>
LipschitzEstimate empirical_lipschitz(const Network<T>& net, const Dataset& data, const AttackConfig& attack,
                                      LipschitzScope scope, const EvalOptions& opts) {
  require_nonempty(data, "empirical_lipschitz");
  require_compatible(net, data, "empirical_lipschitz");
  const int node = scope_node(net, scope);
  AttackConfig cfg = attack;
  cfg.random_start = true;
  cfg.validate();

  const std::size_t n = data.size();
  std::vector<double> ratio(n, 0.0);
  std::vector<char> used(n, 0);
  std::size_t dimension = shape_numel(net.node_shape(node));

  for_each_batch(n, opts, [&](std::size_t b, std::size_t e) {
    const BasicTensor<T> x = data.images_as<T>(b, e);
    const BasicTensor<T> fx = forward_network(net, x).node_value(node);
    AttackObjective<T> objective = [&fx, node](ForwardPass<T>& pass, std::size_t) {
      return ops::l1_distance(pass.tape, pass.nodes.at(static_cast<std::size_t>(node)), fx);
    };
    const BasicTensor<T> adv = pgd_maximize(net, x, cfg, objective, b);
    const BasicTensor<T> fadv = forward_network(net, adv).node_value(node);
    const std::size_t per_x = x.numel() / x.dim(0);
    const std::size_t per_f = fx.numel() / fx.dim(0);
    for (std::size_t i = 0; i < e - b; ++i) {
      double dx = 0.0;
      for (std::size_t k = i * per_x; k < (i + 1) * per_x; ++k) {
        dx = std::max(dx, std::abs(static_cast<double>(adv[k]) - static_cast<double>(x[k])));
      }
      if (dx == 0.0) continue;
      double df = 0.0;
      for (std::size_t k = i * per_f; k < (i + 1) * per_f; ++k) {
        df += std::abs(static_cast<double>(fadv[k]) - static_cast<double>(fx[k]));
      }
      ratio[b + i] = df / dx;
      used[b + i] = 1;
    }
  });

  LipschitzEstimate est;
  est.dimension = dimension;
  CompensatedSum total;
  for (std::size_t i = 0; i < n; ++i) {
    if (used[i]) {
      total.add(ratio[i]);
      ++est.used;
    } else {
      ++est.skipped;
    }
  }
  if (est.used == 0) throw NumericError("empirical_lipschitz: degenerate attack (every sample left unperturbed)");
  est.value = total.value() / static_cast<double>(est.used);
  est.normalized = est.value / static_cast<double>(dimension);
  return est;
}

template <typename T>
std::vector<LipschitzEstimate> per_block_lipschitz(const Network<T>& net, const Dataset& data,
                                                   const AttackConfig& attack, const EvalOptions& opts) {
  std::vector<LipschitzEstimate> out;
  for (std::size_t j = 1; j <= net.blocks().size(); ++j) {
    out.push_back(empirical_lipschitz(net, data, attack, static_cast<int>(j), opts));
  }
  out.push_back(empirical_lipschitz(net, data, attack, NetworkScope{}, opts));
  return out;
}

void EvalReport::check_invariants() const {
  for (const auto& [name, r] : robust_acc) {
    if (r > clean_acc) throw NumericError("eval report: robust accuracy under " + name + " exceeds clean accuracy");
  }
  if (!robust_acc.empty() && robust_acc.begin()->second > stability) {
    throw NumericError("eval report: robust accuracy exceeds stability");
  }
}

template <typename T>
EvalReport evaluate(const Network<T>& net, const Dataset& data, const std::vector<NamedAttack>& attacks,
                    bool with_lipschitz, const EvalOptions& opts) {
  require_nonempty(data, "evaluate");
  EvalReport report;
  report.sample_count = data.size();
  report.clean_acc = accuracy(net, data, opts);
  bool first = true;
  for (const auto& a : attacks) {
    if (first) {
      // One crafted batch gives robust accuracy and stability together.
      const AttackOutcomes o = attack_outcomes(net, data, a.config, opts);
      report.robust_acc[a.name] = o.correct_and_stable();
      report.stability = o.stability();
      first = false;
    } else {
      report.robust_acc[a.name] = robust_accuracy(net, data, a.config, opts);
    }
  }
  if (attacks.empty()) report.stability = 1.0;
  if (with_lipschitz) {
    const AttackConfig cfg = attacks.empty() ? AttackConfig::evaluation() : attacks.front().config;
    const auto est = per_block_lipschitz(net, data, cfg, opts);
    for (std::size_t j = 0; j + 1 < est.size(); ++j) report.empirical_lipschitz[std::to_string(j + 1)] = est[j].value;
    report.empirical_lipschitz["network"] = est.back().value;
  }
  report.check_invariants();
  return report;
}

namespace {

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// Block keys sort numerically, "network" last.
std::vector<std::string> lipschitz_keys(const EvalReport& r) {
  std::vector<std::string> keys;
  for (const auto& [k, v] : r.empirical_lipschitz) {
    if (k != "network") keys.push_back(k);
  }
  std::sort(keys.begin(), keys.end(), [](const std::string& a, const std::string& b) { return std::stoi(a) < std::stoi(b); });
  if (r.empirical_lipschitz.count("network")) keys.push_back("network");
  return keys;
}

}  // namespace

std::string to_report_text(const EvalReport& r) {
  std::ostringstream os;
  os << "samples: " << r.sample_count << "\n";
  os << "clean_acc: " << fmt(r.clean_acc) << "\n";
  for (const auto& [name, v] : r.robust_acc) os << "robust_acc[" << name << "]: " << fmt(v) << "\n";
  os << "stability: " << fmt(r.stability) << "\n";
  for (const auto& k : lipschitz_keys(r)) {
    os << "empirical_lipschitz[" << k << "]: " << fmt(r.empirical_lipschitz.at(k)) << "\n";
  }
  return os.str();
}

std::string csv_header(const EvalReport& r) {
  std::string h = "samples,clean_acc";
  for (const auto& [name, v] : r.robust_acc) h += ",robust_acc_" + name;
  h += ",stability";
  for (const auto& k : lipschitz_keys(r)) h += ",emp_lip_" + k;
  return h;
}

std::string csv_row(const EvalReport& r) {
  std::string row = std::to_string(r.sample_count) + "," + fmt(r.clean_acc, 10);
  for (const auto& [name, v] : r.robust_acc) row += "," + fmt(v, 10);
  row += "," + fmt(r.stability, 10);
  for (const auto& k : lipschitz_keys(r)) row += "," + fmt(r.empirical_lipschitz.at(k), 10);
  return row;
}

std::string per_block_csv(const std::vector<LipschitzEstimate>& estimates, bool normalized) {
  std::string out = "block_index,value\n";
  for (std::size_t j = 0; j < estimates.size(); ++j) {
    const bool last = j + 1 == estimates.size();
    const double v = normalized ? estimates[j].normalized : estimates[j].value;
    out += (last ? std::string("network") : std::to_string(j + 1)) + "," + fmt(v, 10) + "\n";
  }
  return out;
}

#define WRNLAB_INSTANTIATE_METRICS(T)                                                                               \
  template std::vector<int> argmax_rows(const BasicTensor<T>&);                                                     \
  template std::vector<int> predict(const Network<T>&, const Dataset&, const EvalOptions&);                         \
  template double accuracy(const Network<T>&, const Dataset&, const EvalOptions&);                                  \
  template AttackOutcomes attack_outcomes(const Network<T>&, const Dataset&, const AttackConfig&,                   \
                                          const EvalOptions&);                                                      \
  template double robust_accuracy(const Network<T>&, const Dataset&, const AttackConfig&, const EvalOptions&);      \
  template double perturbation_stability(const Network<T>&, const Dataset&, const AttackConfig&,                    \
                                         const EvalOptions&);                                                       \
  template LipschitzEstimate empirical_lipschitz(const Network<T>&, const Dataset&, const AttackConfig&,            \
                                                 LipschitzScope, const EvalOptions&);                               \
  template std::vector<LipschitzEstimate> per_block_lipschitz(const Network<T>&, const Dataset&,                    \
                                                              const AttackConfig&, const EvalOptions&);             \
  template double transfer_eval(const Network<T>&, const Network<T>&, const Dataset&, const AttackConfig&,          \
                                const EvalOptions&);                                                                \
  template EvalReport evaluate(const Network<T>&, const Dataset&, const std::vector<NamedAttack>&, bool,            \
                               const EvalOptions&);

WRNLAB_INSTANTIATE_METRICS(float)
WRNLAB_INSTANTIATE_METRICS(double)

}  // namespace wrnlab
