// Acceptance suite: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "support.hpp"
#include "wrnlab/arch.hpp"
#include "wrnlab/attacks.hpp"
#include "wrnlab/bounds.hpp"
#include "wrnlab/checkpoint.hpp"
#include "wrnlab/explorer.hpp"
#include "wrnlab/metrics.hpp"
#include "wrnlab/ops.hpp"
#include "wrnlab/training.hpp"
#include "wrnlab/wrn.hpp"

using namespace wrnlab;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

template <typename... A>
std::string fmtn(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, a...);
  return buf;
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

// ---------------------------------------------------------------- 1
Verdict parameter_counts() {
  struct Row {
    const char* notation;
    int classes;
    double millions;
  };
  const Row rows[] = {
      {"d5-5-5_w10-10-10", 10, 46.16}, {"d9-7-1_w10-10-10", 10, 22.19}, {"d9-9-1_w10-10-10", 10, 25.88},
      {"d7-5-1_w10-10-10", 10, 17.58}, {"d5-5-5_w10-10-2", 10, 12.66},  {"d5-5-5_w10-10-4", 10, 17.05},
      {"d5-5-5_w10-10-6", 10, 24.10},  {"d5-5-5_w10-10-8", 10, 33.80},  {"d5-5-5_w10-10-4_g0.25", 10, 1.07},
      {"d5-5-5_w10-10-4_g0.5", 10, 4.27}, {"d5-5-5_w10-10-4_g1", 10, 17.05}, {"d5-5-5_w10-10-4_g1.5", 10, 38.33},
      {"d5-5-5_w10-10-4_g2", 10, 68.12}, {"d5-5-5_w12-12-12", 10, 66.46}, {"d5-5-5_w12-12-12", 100, 66.53},
  };
  Verdict v;
  double worst = 0.0;
  for (const auto& r : rows) {
    const double got = static_cast<double>(count_params(parse_notation(r.notation, r.classes))) / 1e6;
    const double err = std::abs(got - r.millions);
    worst = std::max(worst, err);
    if (err > 0.01) {
      v.pass = false;
      v.detail += fmtn("%s/%d=%.4fM (want %.2fM) ", r.notation, r.classes, got, r.millions);
    }
  }
  v.detail += fmtn("%zu specs, max |error| %.4fM (tol 0.01M)", std::size(rows), worst);
  return v;
}

// ---------------------------------------------------------------- 2
Verdict monte_carlo() {
  Verdict v;
  const std::pair<int, int> dims[] = {{400, 100}, {100, 100}, {900, 400}};
  for (const auto& [n_rows, n_cols] : dims) {
    const MCStats s = mc_singular_values(n_rows, n_cols, 200, 2024);
    const double lo = std::sqrt(n_rows) - std::sqrt(n_cols), hi = std::sqrt(n_rows) + std::sqrt(n_cols);
    const bool max_ok = s.mean_lambda_max - lo >= 3 * s.se_lambda_max && hi - s.mean_lambda_max >= 3 * s.se_lambda_max;
    const bool min_ok = s.mean_lambda_min >= lo - 3 * s.se_lambda_min;
    v.pass = v.pass && max_ok && min_ok;
    v.detail += fmtn("(%d,%d): max %.3f+-%.3f in [%.0f,%.0f], min %.3f>=%.0f-3se; ", n_rows, n_cols,
                     s.mean_lambda_max, s.se_lambda_max, lo, hi, s.mean_lambda_min, lo);
  }
  return v;
}

// ---------------------------------------------------------------- 3
Verdict theorem_dominance() {
  Verdict v;
  std::mt19937_64 arch_rng(33);
  constexpr int kDraws = 100;
  constexpr double kSigma = 0.1;
  int exceed_2x = 0, total = 0;
  std::string worst_line;
  double worst_margin = 1e300;
  auto judge = [&](const std::string& label, const std::vector<double>& products, double bound) {
    double mean = 0.0;
    for (double p : products) mean += p;
    mean /= static_cast<double>(products.size());
    double ss = 0.0;
    for (double p : products) ss += (p - mean) * (p - mean);
    const double se = std::sqrt(ss / static_cast<double>(products.size() - 1) / static_cast<double>(products.size()));
    for (double p : products) exceed_2x += p > 2 * bound;
    total += static_cast<int>(products.size());
    const double margin = se > 0 ? (bound - mean) / se : (bound >= mean ? 1e9 : -1e9);
    if (margin < 3) v.pass = false;
    if (margin < worst_margin) {
      worst_margin = margin;
      worst_line = fmtn("%s mean %.4g vs bound %.4g", label.c_str(), mean, bound);
    }
  };
  // Linear chains: widths <= 64, depth <= 4.
  for (int a = 0; a < 6; ++a) {
    const int depth = 1 + static_cast<int>(arch_rng() % 4);
    std::vector<int> widths;
    for (int j = 0; j <= depth; ++j) widths.push_back(1 + static_cast<int>(arch_rng() % 64));
    const double bound = mlp_bound(widths, std::vector<double>(static_cast<std::size_t>(depth), kSigma));
    std::vector<double> products;
    for (int d = 0; d < kDraws; ++d) {
      double prod = 1.0;
      for (int j = 0; j < depth; ++j) {
        const Shape s{static_cast<std::size_t>(widths[j + 1]), static_cast<std::size_t>(widths[j])};
        const Tensor w = testing::gaussian_tensor(s, arch_rng(), kSigma);
        prod *= singular_range(w).max;
      }
      products.push_back(prod);
    }
    std::string label = "mlp";
    for (int w : widths) label += "-" + std::to_string(w);
    judge(label, products, bound);
  }
  // Valid-convolution chains: m <= 8, k = 3.
  for (int a = 0; a < 6; ++a) {
    const int m0 = 3 + static_cast<int>(arch_rng() % 6);
    const int depth = 1 + static_cast<int>(arch_rng() % std::min<std::uint64_t>(3, static_cast<std::uint64_t>((m0 - 1) / 2)));
    std::vector<int> channels;
    for (int j = 0; j <= depth; ++j) channels.push_back(1 + static_cast<int>(arch_rng() % 8));
    double bound = 1.0;
    for (int j = 0, m = m0; j < depth; ++j, m -= 2) bound *= conv_bound(m, 3, channels[j], channels[j + 1], kSigma);
    std::vector<double> products;
    for (int d = 0; d < kDraws; ++d) {
      double prod = 1.0;
      for (int j = 0, m = m0; j < depth; ++j, m -= 2) {
        const Shape s{static_cast<std::size_t>(channels[j + 1]), static_cast<std::size_t>(channels[j]), 3, 3};
        const Tensor w = testing::gaussian_tensor(s, arch_rng(), kSigma);
        LayerShape shape;
        shape.kind = LayerKind::Conv;
        shape.in_channels = channels[j];
        shape.out_channels = channels[j + 1];
        shape.kernel = 3;
        shape.spatial = m;
        SpectralOptions o;
        o.method = SpectralMethod::CirculantExact;
        o.padding = 0;
        prod *= spectral_norm(w, shape, o).value;
      }
      products.push_back(prod);
    }
    std::string label = "conv m" + std::to_string(m0);
    for (int c : channels) label += "-" + std::to_string(c);
    judge(label, products, bound);
  }
  if (exceed_2x > 0) v.pass = false;
  v.detail = fmtn("12 chain families x %d draws; tightest: %s (%.1f se margin, need 3); draws above 2x bound: %d/%d",
                  kDraws, worst_line.c_str(), worst_margin, exceed_2x, total);
  return v;
}

// ---------------------------------------------------------------- 4
Verdict circulant_equivalence() {
  Verdict v;
  double worst = 0.0;
  int cases = 0;
  std::mt19937_64 rng(44);
  for (int m = 1; m <= 8; ++m)
    for (int k = 1; k <= m; ++k)
      for (int t = 0; t < 20; ++t) {
        const std::size_t in = 1 + rng() % 3, out = 1 + rng() % 3, mm = static_cast<std::size_t>(m);
        const Tensor kernel = testing::random_tensor({out, in, static_cast<std::size_t>(k), static_cast<std::size_t>(k)}, rng());
        const Tensor x = testing::random_tensor({1, in, mm, mm}, rng());
        const Tensor mat = conv_to_matrix(kernel, m);
        const Tensor want = testing::conv_loops(x, kernel, 1, 0);
        const std::size_t r = mat.dim(0), c = mat.dim(1);
        if (r != want.numel() || c != x.numel()) {
          v.pass = false;
          continue;
        }
        for (std::size_t i = 0; i < r; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < c; ++j) s += mat[i * c + j] * x[j];
          worst = std::max(worst, std::abs(s - want[i]));
        }
        ++cases;
      }
  v.pass = v.pass && worst < 1e-10;
  v.detail = fmtn("%d kernels over all k <= m <= 8, max |diff| %.2e (tol 1e-10)", cases, worst);
  return v;
}

// ---------------------------------------------------------------- 5
Verdict gradient_check() {
  ArchSpec spec = parse_notation("d1-1-1_w1-1-1", 4, {3, 8, 8});
  Network<double> net = build_network<double>(spec, 55);
  testing::randomize_batch_norm(net, 56);
  const Tensor x = testing::random_tensor({3, 3, 8, 8}, 57, 0.0, 1.0);
  const std::vector<int> y{0, 3, 1};
  auto loss_of = [&](Network<double>& n, const Tensor& in) {
    Network<double> copy = n;
    ForwardPass<double> pass = forward_network(copy, in, Mode::Train);
    return pass.tape.value(ops::softmax_cross_entropy(pass.tape, pass.logits, std::span<const int>(y)))[0];
  };
  Network<double> probe = net;
  ForwardPass<double> pass = forward_network(probe, x, Mode::Train, GradTarget::Both);
  const NodeId loss = ops::softmax_cross_entropy(pass.tape, pass.logits, std::span<const int>(y));
  const GradientMap<double> g = gradients(pass, probe, loss, GradTarget::Both);

  std::mt19937_64 rng(58);
  double worst = 0.0;
  const double h = 1e-5;
  Tensor xin = x;
  for (int c = 0; c < 50; ++c) {
    double analytic = 0.0, fd = 0.0;
    if (c % 5 == 4) {
      const std::size_t i = rng() % xin.numel();
      const double saved = xin[i];
      xin[i] = saved + h;
      const double lp = loss_of(net, xin);
      xin[i] = saved - h;
      const double lm = loss_of(net, xin);
      xin[i] = saved;
      fd = (lp - lm) / (2 * h);
      analytic = (*g.input)[i];
    } else {
      auto& p = net.parameters()[rng() % net.parameters().size()];
      const std::size_t i = rng() % p.value.numel();
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double lp = loss_of(net, x);
      p.value[i] = saved - h;
      const double lm = loss_of(net, x);
      p.value[i] = saved;
      fd = (lp - lm) / (2 * h);
      analytic = g.params.at(p.name)[i];
    }
    worst = std::max(worst, std::abs(fd - analytic) / std::max(1e-6, std::max(std::abs(fd), std::abs(analytic))));
  }
  Verdict v;
  v.pass = worst < 1e-4;
  v.detail = fmtn("50 coordinates (40 parameter, 10 input) of d1-1-1_w1-1-1 in float64, max rel error %.2e (tol 1e-4)", worst);
  return v;
}

// ---------------------------------------------------------------- 6
Verdict attack_contracts() {
  Verdict v;
  std::mt19937_64 rng(66);
  std::uniform_real_distribution<double> u(0.0, 1.0), wide(-1.0, 2.0);
  int violations = 0;
  for (int t = 0; t < 1000; ++t) {
    const double eps = u(rng) * 0.3;
    const std::size_t n = 1 + rng() % 64;
    TensorF anchor(Shape{1, n}), cand(Shape{1, n});
    for (std::size_t i = 0; i < n; ++i) {
      anchor[i] = static_cast<float>(u(rng));
      cand[i] = static_cast<float>(wide(rng));
    }
    const TensorF p = project_linf(cand, anchor, eps);
    for (std::size_t i = 0; i < n; ++i)
      violations += std::abs(p[i] - anchor[i]) > static_cast<float>(eps) || p[i] < 0.0f || p[i] > 1.0f;
  }

  Network<float> net = build_network<float>(parse_notation("d1-1-1_w1-1-1", 10, {3, 16, 16}), 67);
  testing::randomize_batch_norm(net, 68);
  const TensorF x = testing::random_tensor({8, 3, 16, 16}, 69, 0.0, 1.0).cast<float>();
  const std::vector<int> y{0, 1, 2, 3, 4, 5, 6, 7};
  AttackConfig one;
  one.epsilon = 8.0 / 255;
  one.steps = 1;
  one.step_size = one.epsilon;
  const bool bitwise = fgsm<float>(net, x, y, one.epsilon) == pgd<float>(net, x, y, one);

  double worst = 1.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t d = 1 + rng() % 12;
    const auto lin = testing::random_linear_model<double>(d, 2, rng(), 1.0);
    const Tensor& w = lin.parameter("linear.weight").value;
    const Tensor& b = lin.parameter("linear.bias").value;
    const Tensor xs = testing::random_tensor({1, d, 1, 1}, rng(), 0.0, 1.0);
    const int label = static_cast<int>(rng() % 2);
    const double eps = 0.02 + 0.2 * u(rng);
    const std::vector<int> ys{label};
    const Tensor adv = pgd<double>(lin, xs, ys, AttackConfig::evaluation(eps));
    const std::vector<double> a(adv.data().begin(), adv.data().end()), x0(xs.data().begin(), xs.data().end());
    worst = std::min(worst, testing::linear_ce(w, b, a, label) / testing::corner_optimum(w, b, x0, label, eps));
  }
  v.pass = violations == 0 && bitwise && worst >= 0.999;
  v.detail = fmtn("containment violations %d/1000 cases; FGSM==PGD(K=1,a=eps) bitwise: %s; "
                  "PGD20/corner optimum min %.6f over 100 logistic models d<=12 (need >= 0.999)",
                  violations, bitwise ? "yes" : "no", worst);
  return v;
}

// ---------------------------------------------------------------- toy family
struct ToyModel {
  std::string name;
  std::uint64_t seed = 0;
  bool adversarial = true;
  std::int64_t params = 0;
  double clean = 0, robust = 0, lipschitz = 0, bound = 0;
  bool identity_ok = false;
  Network<float> net{Shape{3, 16, 16}, 2};
};

struct ToyFamily {
  Dataset train, test;
  std::vector<ToyModel> models;
  double seconds = 0;
};

Dataset toy_split(int per_class, std::uint64_t first, const std::string& split) {
  SynthOptions o;
  o.classes = 2;
  o.per_class = per_class;
  o.image_size = 16;
  o.amplitude = 0.08;
  o.noise = 0.05;
  o.seed = 7;
  o.first_index = first;
  o.split = split;
  return synth_dataset(o);
}

ToyFamily train_toy_family() {
  ToyFamily f;
  f.train = toy_split(128, 0, "train");
  f.test = toy_split(100, f.train.size(), "test");
  const auto t0 = std::chrono::steady_clock::now();
  const AttackConfig eval = AttackConfig::evaluation(8.0 / 255);
  const Dataset lip_data = f.test.slice(0, 50);
  struct Variant {
    const char* name;
    const char* notation;
    bool adversarial;
  };
  const Variant variants[] = {{"baseline", "d1-1-1_w2-2-2_g0.25", true},
                              {"stage1-depth0", "d0-1-1_w2-2-2_g0.25", true},
                              {"stage3-width-half", "d1-1-1_w2-2-1_g0.25", true},
                              {"natural", "d1-1-1_w2-2-2_g0.25", false}};
  for (std::uint64_t seed : {1, 2, 3}) {
    for (const auto& var : variants) {
      ToyModel m;
      m.name = var.name;
      m.seed = seed;
      m.adversarial = var.adversarial;
      const ArchSpec spec = parse_notation(var.notation, 2, {3, 16, 16});
      m.net = build_network<float>(spec, seed);
      TrainConfig cfg;
      cfg.epochs = 20;
      cfg.batch_size = 32;
      cfg.lr0 = 0.05;
      cfg.seed = seed;
      cfg.inner_attack = AttackConfig::training(var.adversarial ? 8.0 / 255 : 0.0);
      cfg.eval_attack = eval;
      cfg.eval_samples = 20;
      sat_train(m.net, f.train, &f.test, cfg);
      m.params = m.net.parameter_count();
      const AttackOutcomes o = attack_outcomes(m.net, f.test, eval);
      std::size_t both = 0;
      for (const auto& s : o.samples) both += s.correct() && s.stable();
      const double recomputed = static_cast<double>(both) / static_cast<double>(o.samples.size());
      m.clean = o.clean_accuracy();
      m.robust = robust_accuracy(m.net, f.test, eval);
      m.identity_ok = recomputed == m.robust && o.robust_accuracy() == m.robust;
      m.lipschitz = empirical_lipschitz(m.net, lip_data, eval, NetworkScope{}).value;
      m.bound = network_bound(m.net).l1_linf_bound();
      std::fprintf(stderr, "  toy %-18s seed %llu: params %lld clean %.3f robust %.3f emp-lip %.2f bound %.3g\n",
                   m.name.c_str(), static_cast<unsigned long long>(seed), static_cast<long long>(m.params), m.clean,
                   m.robust, m.lipschitz, m.bound);
      f.models.push_back(std::move(m));
    }
  }
  f.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return f;
}

std::vector<const ToyModel*> pick(const ToyFamily& f, const std::string& name) {
  std::vector<const ToyModel*> out;
  for (const auto& m : f.models)
    if (m.name == name) out.push_back(&m);
  return out;
}

// ---------------------------------------------------------------- 7
Verdict set_identity(const ToyFamily& f) {
  Verdict v;
  int checked = 0;
  for (const auto& m : f.models) {
    ++checked;
    v.pass = v.pass && m.identity_ok;
  }
  std::mt19937_64 rng(77);
  for (int t = 0; t < 20; ++t) {
    const std::size_t d = 1 + rng() % 12;
    const int classes = 2 + static_cast<int>(rng() % 4);
    const auto lin = testing::random_linear_model<double>(d, classes, rng(), 1.0);
    std::vector<int> labels(64);
    for (auto& y : labels) y = static_cast<int>(rng() % static_cast<std::uint64_t>(classes));
    const Dataset data = testing::make_dataset(testing::random_tensor({64, d, 1, 1}, rng(), 0.0, 1.0), labels, classes);
    const AttackConfig atk = AttackConfig::evaluation(0.05);
    const AttackOutcomes o = attack_outcomes(lin, data, atk);
    std::size_t both = 0;
    for (const auto& s : o.samples) both += s.correct() && s.stable();
    v.pass = v.pass && static_cast<double>(both) / 64.0 == robust_accuracy(lin, data, atk);
    ++checked;
  }
  v.detail = fmtn("%d evaluations (12 trained toy models, 20 linear models): robust_acc == |correct & stable|/N exactly",
                  checked);
  return v;
}

// ---------------------------------------------------------------- 8
Verdict trends(const ToyFamily& f) {
  auto med = [&](const std::string& name, double ToyModel::*field) {
    std::vector<double> xs;
    for (const auto* m : pick(f, name)) xs.push_back(m->*field);
    return median3(xs);
  };
  const double base_r = med("baseline", &ToyModel::robust), nat_r = med("natural", &ToyModel::robust);
  const double d0_r = med("stage1-depth0", &ToyModel::robust), w_r = med("stage3-width-half", &ToyModel::robust);
  const double base_l = med("baseline", &ToyModel::lipschitz), w_l = med("stage3-width-half", &ToyModel::lipschitz);
  bool gap = true;
  for (std::size_t i = 0; i < 3; ++i) gap = gap && pick(f, "baseline")[i]->robust - pick(f, "natural")[i]->robust >= 0.10;
  const bool fewer = pick(f, "stage3-width-half")[0]->params < pick(f, "baseline")[0]->params;
  const bool a = gap && base_r - nat_r >= 0.10;
  const bool b = fewer && w_r >= base_r - 0.02 && d0_r <= base_r;
  const bool c = w_l <= base_l;
  Verdict v;
  v.pass = a && b && c && f.seconds <= 15 * 60;
  v.detail = fmtn("medians over seeds 1-3: (a) SAT %.3f vs natural %.3f [%s]; (b) stage-3 halved %.3f >= %.3f-0.02 "
                  "with %lld<%lld params, stage-1 removed %.3f <= %.3f [%s]; (c) emp-lip %.1f <= %.1f [%s]; %.0fs CPU",
                  base_r, nat_r, a ? "ok" : "fail", w_r, base_r, static_cast<long long>(pick(f, "stage3-width-half")[0]->params),
                  static_cast<long long>(pick(f, "baseline")[0]->params), d0_r, base_r, b ? "ok" : "fail", w_l, base_l,
                  c ? "ok" : "fail", f.seconds);
  return v;
}

// ---------------------------------------------------------------- 9
Verdict bound_dominates(const ToyFamily& f) {
  Verdict v;
  double tightest = 1e300;
  for (const auto& m : f.models) {
    v.pass = v.pass && m.bound >= m.lipschitz;
    tightest = std::min(tightest, m.bound / m.lipschitz);
  }
  v.detail = fmtn("%zu trained toy models, min bound/empirical ratio %.3g (spectral, L1/Linf converted)",
                  f.models.size(), tightest);
  return v;
}

// ---------------------------------------------------------------- 10
Verdict reproducibility(const ToyFamily& f) {
  Verdict v;
  SweepPlan plan;
  plan.base = parse_notation("d1-1-1_w1-1-1_g0.5", 2, {3, 16, 16});
  plan.train.epochs = 2;
  plan.train.batch_size = 32;
  plan.train.lr0 = 0.05;
  plan.train.eval_samples = 10;
  plan.lipschitz_samples = 10;
  const Dataset train = f.train.slice(0, 64), test = f.test.slice(0, 40);
  const RunContext ctx{&train, &test, {}};
  const RunRecord a = run_record(plan.base, 11, plan, ctx), b = run_record(plan.base, 11, plan, ctx);
  const bool records = a.ok() && b.ok() && a.clean_acc == b.clean_acc && a.robust_acc == b.robust_acc &&
                       a.stability == b.stability && a.empirical_lipschitz == b.empirical_lipschitz &&
                       RecordStore::to_csv_row(a) == RecordStore::to_csv_row(b);

  const fs::path dir = fs::temp_directory_path() / ("wrnlab_accept_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  bool ckpt = true;
  int models = 0;
  for (const auto& m : f.models) {
    if (m.seed != 1) continue;
    const std::string path = (dir / m.name).string();
    save_checkpoint(m.net, static_cast<const OptimizerState<float>*>(nullptr), path, m.seed);
    const auto back = load_checkpoint<float>(path);
    for (std::size_t i = 0; i < m.net.parameters().size(); ++i)
      ckpt = ckpt && back.net.parameters()[i].value == m.net.parameters()[i].value;
    for (std::size_t i = 0; i < m.net.batch_norm_states().size(); ++i)
      ckpt = ckpt && back.net.batch_norm_states()[i].running_mean == m.net.batch_norm_states()[i].running_mean &&
             back.net.batch_norm_states()[i].running_var == m.net.batch_norm_states()[i].running_var;
    const TensorF x = f.test.images_as<float>(0, 50);
    ckpt = ckpt && predict_logits(back.net, x) == predict_logits(m.net, x);
    ++models;
  }
  fs::remove_all(dir);
  v.pass = records && ckpt;
  v.detail = fmtn("explorer record %s re-run: %s; %d checkpoint round trips bit-exact: %s",
                  a.key().c_str(), records ? "identical" : "DIFFERS", models, ckpt ? "yes" : "no");
  return v;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* title, const std::function<Verdict()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %2d %s: %s [%.1fs]\n", v.pass ? "PASS" : "FAIL", id, title, v.detail.c_str(), s);
    std::fflush(stdout);
    failures += !v.pass;
  };
  report(1, "parameter counts", parameter_counts);
  report(2, "random-matrix singular values", monte_carlo);
  report(3, "chain bounds dominate spectral products", theorem_dominance);
  report(4, "conv matrix equals direct convolution", circulant_equivalence);
  report(5, "autodiff vs finite differences", gradient_check);
  report(6, "attack contracts", attack_contracts);
  std::fprintf(stderr, "training the toy family (12 models)...\n");
  ToyFamily family;
  bool trained = true;
  try {
    family = train_toy_family();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "toy family failed: %s\n", e.what());
    trained = false;
  }
  auto needs_family = [&](std::function<Verdict(const ToyFamily&)> fn) {
    return [&, fn] {
      if (!trained) return Verdict{false, "toy family training failed"};
      return fn(family);
    };
  };
  report(7, "robust accuracy set identity", needs_family(set_identity));
  report(8, "desk-scale trends", needs_family(trends));
  report(9, "spectral bound dominates empirical Lipschitz", needs_family(bound_dominates));
  report(10, "reproducibility", needs_family(reproducibility));
  std::printf("%d/10 criteria passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
