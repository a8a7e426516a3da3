#include "wrnlab/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "wrnlab/metrics.hpp"
#include "wrnlab/parallel.hpp"

namespace wrnlab {

namespace {

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    item = item.substr(b, item.find_last_not_of(" \t") - b + 1);
    out.push_back(parse_real(item, "train.milestones"));
  }
  return out;
}

}  // namespace

AttackConfig attack_config_from(const KeyValueConfig& sub, AttackConfig base) {
  sub.require_known({"epsilon", "steps", "step_size", "random_start", "loss", "seed"});
  base.epsilon = sub.get_double("epsilon", base.epsilon);
  base.steps = sub.get_int("steps", base.steps);
  base.step_size = sub.get_double("step_size", base.step_size);
  base.random_start = sub.get_bool("random_start", base.random_start);
  if (auto l = sub.find("loss")) base.loss = parse_attack_loss(*l);
  base.seed = static_cast<std::uint64_t>(sub.get_int64("seed", static_cast<std::int64_t>(base.seed)));
  base.validate();
  return base;
}

std::string attack_config_text(const AttackConfig& a, const std::string& prefix) {
  std::ostringstream os;
  os << prefix << ".epsilon = " << num(a.epsilon) << "\n";
  os << prefix << ".steps = " << a.steps << "\n";
  os << prefix << ".step_size = " << num(a.step_size) << "\n";
  os << prefix << ".random_start = " << (a.random_start ? "true" : "false") << "\n";
  os << prefix << ".loss = " << to_string(a.loss) << "\n";
  os << prefix << ".seed = " << a.seed << "\n";
  return os.str();
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("train.epochs must be positive");
  if (batch_size < 1) throw ValidationError("train.batch_size must be positive");
  if (!(lr0 > 0.0)) throw ValidationError("train.lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("train.momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ValidationError("train.weight_decay must be non-negative");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0)) throw ValidationError("train.lr_decay must lie in (0, 1)");
  for (std::size_t i = 0; i < milestone_fractions.size(); ++i) {
    const double f = milestone_fractions[i];
    if (!(f > 0.0 && f < 1.0)) throw ValidationError("train.milestones entries must lie in (0, 1)");
    if (i > 0 && !(f > milestone_fractions[i - 1])) {
      throw ValidationError("train.milestones must be strictly increasing");
    }
  }
  if (augment_pad < 0) throw ValidationError("train.augment_pad must be non-negative");
  inner_attack.validate();
  eval_attack.validate();
}

std::vector<int> TrainConfig::milestones() const {
  std::vector<int> m;
  for (double f : milestone_fractions) m.push_back(static_cast<int>(std::floor(f * epochs)));
  return m;
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& all) {
  TrainConfig c;
  const KeyValueConfig cfg = all.subtree("train");
  std::set<std::string> known{"epochs", "batch_size", "lr", "momentum", "weight_decay", "milestones", "lr_decay",
                              "augment", "augment_pad", "eval_samples", "workers", "seed"};
  for (const auto& [k, v] : cfg.entries()) {
    if (k.rfind("inner_attack.", 0) == 0 || k.rfind("eval_attack.", 0) == 0) known.insert(k);
  }
  cfg.require_known(known);
  c.epochs = cfg.get_int("epochs", c.epochs);
  c.batch_size = cfg.get_int("batch_size", c.batch_size);
  c.lr0 = cfg.get_double("lr", c.lr0);
  c.momentum = cfg.get_double("momentum", c.momentum);
  c.weight_decay = cfg.get_double("weight_decay", c.weight_decay);
  if (auto m = cfg.find("milestones")) c.milestone_fractions = parse_list(*m);
  c.lr_decay_factor = cfg.get_double("lr_decay", c.lr_decay_factor);
  c.augment = cfg.get_bool("augment", c.augment);
  c.augment_pad = cfg.get_int("augment_pad", c.augment_pad);
  c.eval_samples = static_cast<std::size_t>(cfg.get_int64("eval_samples", 0));
  c.workers = cfg.get_int("workers", c.workers);
  c.seed = static_cast<std::uint64_t>(cfg.get_int64("seed", 0));
  c.inner_attack = attack_config_from(cfg.subtree("inner_attack"), c.inner_attack);
  c.eval_attack = attack_config_from(cfg.subtree("eval_attack"), c.eval_attack);
  c.validate();
  return c;
}

std::string TrainConfig::to_config_text() const {
  std::ostringstream os;
  os << "train.epochs = " << epochs << "\n";
  os << "train.batch_size = " << batch_size << "\n";
  os << "train.lr = " << num(lr0) << "\n";
  os << "train.momentum = " << num(momentum) << "\n";
  os << "train.weight_decay = " << num(weight_decay) << "\n";
  os << "train.milestones = ";
  for (std::size_t i = 0; i < milestone_fractions.size(); ++i) os << (i ? "," : "") << num(milestone_fractions[i]);
  os << "\n";
  os << "train.lr_decay = " << num(lr_decay_factor) << "\n";
  os << "train.augment = " << (augment ? "true" : "false") << "\n";
  os << "train.augment_pad = " << augment_pad << "\n";
  os << "train.eval_samples = " << eval_samples << "\n";
  os << "train.seed = " << seed << "\n";
  os << attack_config_text(inner_attack, "train.inner_attack");
  os << attack_config_text(eval_attack, "train.eval_attack");
  return os.str();
}

double lr_at(int epoch, const TrainConfig& cfg) {
  double lr = cfg.lr0;
  for (int m : cfg.milestones()) {
    if (epoch >= m) lr *= cfg.lr_decay_factor;
  }
  return lr;
}

template <typename T>
OptimizerState<T> OptimizerState<T>::init(const Network<T>& net, std::uint64_t seed) {
  OptimizerState s;
  for (const auto& p : net.parameters()) s.velocity.push_back(BasicTensor<T>::zeros_like(p.value));
  s.rng.seed(seed);
  return s;
}

template <typename T>
std::string OptimizerState<T>::rng_state() const {
  std::ostringstream os;
  os << rng;
  return os.str();
}

template <typename T>
void OptimizerState<T>::set_rng_state(const std::string& text) {
  std::istringstream is(text);
  is >> rng;
  if (!is) throw ValidationError("optimizer: malformed RNG state");
}

template <typename T>
void sgd_step(Network<T>& net, const GradientMap<T>& grads, OptimizerState<T>& state, double lr,
              const TrainConfig& cfg) {
  auto& params = net.parameters();
  if (state.velocity.size() != params.size()) {
    throw ValidationError("sgd_step: optimizer state has " + std::to_string(state.velocity.size()) +
                          " velocity tensors for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto it = grads.params.find(p.name);
    if (it == grads.params.end()) throw ValidationError("sgd_step: no gradient for parameter " + p.name);
    const BasicTensor<T>& g = it->second;
    if (g.shape() != p.value.shape() || state.velocity[i].shape() != p.value.shape()) {
      throw ShapeError("sgd_step: shape mismatch for parameter " + p.name);
    }
    if (!g.all_finite()) throw NumericError("sgd_step: non-finite gradient in parameter " + p.name);
    const T wd = p.decays() ? static_cast<T>(cfg.weight_decay) : T{0};
    const T mu = static_cast<T>(cfg.momentum);
    const T eta = static_cast<T>(lr);
    auto& v = state.velocity[i];
    for (std::size_t k = 0; k < g.numel(); ++k) {
      const T gk = g[k] + wd * p.value[k];
      v[k] = mu * v[k] + gk;
      p.value[k] -= eta * v[k];
    }
  }
  ++state.step;
}

std::string epoch_csv_header() { return "epoch,lr,train_loss,clean_acc,robust_acc"; }

std::string epoch_csv_row(const EpochStats& s) {
  std::ostringstream os;
  os.precision(10);
  os << s.epoch << "," << s.lr << "," << s.train_loss << "," << s.clean_acc << "," << s.robust_acc;
  return os.str();
}

template <typename T>
TrainResult sat_train(Network<T>& net, const Dataset& train, const Dataset* heldout, const TrainConfig& cfg,
                      const TrainHooks<T>& hooks, OptimizerState<T>* resume) {
  cfg.validate();
  if (train.size() == 0) throw ValidationError("sat_train: empty dataset");
  if (train.sample_shape() != net.input_shape()) {
    throw ShapeError("sat_train: data sample shape " + shape_string(train.sample_shape()) +
                     " does not match network input " + shape_string(net.input_shape()));
  }
  OptimizerState<T> local = resume ? *resume : OptimizerState<T>::init(net, cfg.seed);
  OptimizerState<T>& state = resume ? *resume : local;
  if (state.velocity.size() != net.parameters().size()) state = OptimizerState<T>::init(net, cfg.seed);

  const Dataset& eval_full = heldout ? *heldout : train;
  const Dataset eval_set =
      cfg.eval_samples > 0 && cfg.eval_samples < eval_full.size() ? eval_full.slice(0, cfg.eval_samples) : eval_full;
  const EvalOptions eval_opts{static_cast<std::size_t>(cfg.batch_size), cfg.workers};

  TrainResult result;
  const std::size_t n = train.size();
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch, cfg);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), state.rng);
    const std::uint64_t epoch_seed = state.rng();

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (std::size_t b = 0; b < n; b += bs) {
      const std::size_t e = std::min(n, b + bs);
      // Batch statistics are undefined for a single sample.
      if (e - b < 2) break;
      const Dataset batch = train.subset(std::span<const std::size_t>(order).subspan(b, e - b));
      Tensor images = batch.images;
      if (cfg.augment) images = augment_flip_crop(images, cfg.augment_pad, epoch_seed, b);
      const BasicTensor<T> x = images.template cast<T>();
      AttackConfig attack = cfg.inner_attack;
      attack.seed = epoch_seed ^ (attack.seed * 0x9E3779B97F4A7C15ULL);
      const BasicTensor<T> adv = pgd_sharded<T>(net, x, batch.labels, attack, cfg.workers, b);

      ForwardPass<T> pass = forward_network(net, adv, Mode::Train, GradTarget::Params);
      const NodeId loss = ops::softmax_cross_entropy(pass.tape, pass.logits, std::span<const int>(batch.labels));
      const double lv = static_cast<double>(pass.tape.value(loss)[0]);
      if (!std::isfinite(lv)) {
        throw NumericError("sat_train: non-finite loss at epoch " + std::to_string(epoch) + ", batch offset " +
                           std::to_string(b));
      }
      const GradientMap<T> grads = gradients(pass, net, loss, GradTarget::Params);
      sgd_step(net, grads, state, lr, cfg);
      loss_sum += lv * static_cast<double>(e - b);
      loss_count += e - b;
    }
    state.epoch = epoch + 1;

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    stats.clean_acc = accuracy(static_cast<const Network<T>&>(net), eval_set, eval_opts);
    stats.robust_acc = robust_accuracy(static_cast<const Network<T>&>(net), eval_set, cfg.eval_attack, eval_opts);
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.epochs.push_back(stats);

    if (hooks.checkpoint) hooks.checkpoint("last", net, state, stats);
    if (stats.robust_acc > result.best_robust_acc) {
      result.best_robust_acc = stats.robust_acc;
      result.best_epoch = epoch;
      if (hooks.checkpoint) hooks.checkpoint("best", net, state, stats);
    }
    if (hooks.on_epoch) hooks.on_epoch(stats);
  }
  return result;
}

#define WRNLAB_INSTANTIATE_TRAINING(T)                                                                            \
  template struct OptimizerState<T>;                                                                             \
  template void sgd_step(Network<T>&, const GradientMap<T>&, OptimizerState<T>&, double, const TrainConfig&);    \
  template TrainResult sat_train(Network<T>&, const Dataset&, const Dataset*, const TrainConfig&,                \
                                 const TrainHooks<T>&, OptimizerState<T>*);

WRNLAB_INSTANTIATE_TRAINING(float)
WRNLAB_INSTANTIATE_TRAINING(double)

}  // namespace wrnlab
