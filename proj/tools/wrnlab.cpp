#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wrnlab/arch.hpp"
#include "wrnlab/attacks.hpp"
#include "wrnlab/bounds.hpp"
#include "wrnlab/checkpoint.hpp"
#include "wrnlab/config.hpp"
#include "wrnlab/data.hpp"
#include "wrnlab/errors.hpp"
#include "wrnlab/explorer.hpp"
#include "wrnlab/metrics.hpp"
#include "wrnlab/training.hpp"
#include "wrnlab/wrn.hpp"

using namespace wrnlab;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  std::int64_t seed = -1;
  int workers = 1;
  bool dry_run = false;
  int verbosity = 0;
};

int g_verbosity = 0;

void note(int level, const std::string& text) {
  if (g_verbosity >= level) std::cerr << text << "\n";
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
  }
  return out;
}

const std::vector<std::string> kSections{"arch", "train", "data", "attack", "eval", "bounds", "explore"};

KeyValueConfig load_config(const Common& c) {
  KeyValueConfig cfg;
  if (!c.config.empty()) {
    if (!fs::exists(c.config)) throw ValidationError("config file not found: " + c.config);
    cfg = KeyValueConfig::load(c.config);
  }
  for (const auto& o : c.overrides) cfg.apply_override(o);
  for (const auto& [k, v] : cfg.entries()) {
    const std::string section = k.substr(0, k.find('.'));
    if (k.find('.') == std::string::npos ||
        std::find(kSections.begin(), kSections.end(), section) == kSections.end()) {
      throw ValidationError("unknown config key '" + k + "'");
    }
  }
  return cfg;
}

ArchSpec arch_from(const KeyValueConfig& cfg) { return arch_from_config_text(cfg.subtree("arch").to_text()); }

std::string out_dir(const Common& c) {
  std::string dir = c.out;
  if (dir.empty()) {
    const char* env = std::getenv("WRNLAB_OUT");
    dir = env && *env ? env : "wrnlab-out";
  }
  fs::create_directories(dir);
  return dir;
}

void write_file(const std::string& dir, const std::string& name, const std::string& text) {
  const fs::path p = fs::path(dir) / name;
  std::ofstream f(p);
  if (!f) throw IoError("cannot write " + p.string());
  f << text;
  if (!f) throw IoError("write failed: " + p.string());
  note(1, "wrote " + p.string());
}

struct Splits {
  Dataset train, test;
};

Splits load_data(const KeyValueConfig& cfg, const ArchSpec& spec) {
  const KeyValueConfig d = cfg.subtree("data");
  d.require_known({"source", "train", "test", "train_images", "train_labels", "test_images", "test_labels",
                   "per_class", "test_per_class", "noise", "amplitude", "seed", "limit_train", "limit_test"});
  const std::string source = d.get_string("source", "synth");
  Splits s;
  if (source == "synth") {
    SynthOptions o;
    o.classes = spec.num_classes;
    o.channels = spec.input_shape[0];
    o.image_size = spec.input_shape[1];
    o.per_class = d.get_int("per_class", 128);
    o.noise = d.get_double("noise", o.noise);
    o.amplitude = d.get_double("amplitude", o.amplitude);
    o.seed = static_cast<std::uint64_t>(d.get_int64("seed", 0));
    s.train = synth_dataset(o);
    o.first_index = s.train.size();
    o.per_class = d.get_int("test_per_class", 64);
    o.split = "test";
    s.test = synth_dataset(o);
  } else if (source == "cifar") {
    s.train = load_cifar_binary(split_list(d.get_string("train", "")), spec.num_classes);
    s.test = load_cifar_binary(split_list(d.get_string("test", "")), spec.num_classes);
    s.test.split = "test";
  } else if (source == "idx") {
    s.train = load_idx_dataset(d.get_string("train_images", ""), d.get_string("train_labels", ""), spec.num_classes);
    s.test = load_idx_dataset(d.get_string("test_images", ""), d.get_string("test_labels", ""), spec.num_classes);
    s.test.split = "test";
  } else {
    throw ValidationError("data.source must be synth, cifar or idx, got '" + source + "'");
  }
  const auto limit = [](Dataset& ds, std::int64_t n) {
    if (n > 0 && static_cast<std::size_t>(n) < ds.size()) ds = ds.slice(0, static_cast<std::size_t>(n));
  };
  limit(s.train, d.get_int64("limit_train", 0));
  limit(s.test, d.get_int64("limit_test", 0));
  const Shape want{static_cast<std::size_t>(spec.input_shape[0]), static_cast<std::size_t>(spec.input_shape[1]),
                   static_cast<std::size_t>(spec.input_shape[2])};
  if (s.train.sample_shape() != want || s.test.sample_shape() != want) {
    throw ValidationError("data sample shape does not match arch.input_shape");
  }
  return s;
}

AttackConfig attack_from(const KeyValueConfig& cfg) {
  return attack_config_from(cfg.subtree("attack"), AttackConfig::evaluation());
}

EvalOptions eval_options(const KeyValueConfig& cfg, const Common& c) {
  EvalOptions o;
  o.workers = c.workers;
  o.batch_size = static_cast<std::size_t>(cfg.subtree("eval").get_int("batch_size", 128));
  return o;
}

std::string spec_summary(const ArchSpec& spec) {
  std::ostringstream os;
  os << spec.notation() << " classes=" << spec.num_classes << " input=" << spec.input_shape[0] << "x"
     << spec.input_shape[1] << "x" << spec.input_shape[2] << " params=" << count_params(spec) << " ("
     << format_millions(count_params(spec)) << ") flops=" << count_flops(spec) << " ("
     << format_millions(count_flops(spec)) << ")";
  return os.str();
}

Network<float> load_model(const std::string& checkpoint) {
  if (checkpoint.empty()) throw ValidationError("--checkpoint is required");
  return load_checkpoint<float>(checkpoint).net;
}

// ------------------------------------------------------------------ verbs

struct CountArgs {
  std::string depths = "d5-5-5", widths = "w10-10-10", gamma = "1", input_shape;
  int classes = 10;
};

int run_count(const Common& c, const CountArgs& a, bool from_config) {
  ArchSpec spec;
  if (from_config) {
    spec = arch_from(load_config(c));
  } else {
    spec = parse_config(a.depths, a.widths, Rational::parse(a.gamma), a.classes);
    if (!a.input_shape.empty()) {
      spec = arch_from_config_text(to_config_text(spec) + "input_shape = " + a.input_shape + "\n");
    }
  }
  spec.validate();
  const std::int64_t params = count_params(spec);
  std::cout << "params=" << params << "\n" << format_millions(params) << "\n";
  note(1, spec_summary(spec));
  if (c.dry_run) return 0;
  const std::string dir = out_dir(c);
  write_file(dir, "count.csv",
             "spec_notation,classes,params,params_m,flops\n" + spec.notation() + "," + std::to_string(spec.num_classes) +
                 "," + std::to_string(params) + "," + format_millions(params) + "," +
                 std::to_string(count_flops(spec)) + "\n");
  return 0;
}

int run_train(const Common& c, const std::string& resume) {
  KeyValueConfig cfg = load_config(c);
  if (c.seed >= 0) cfg.set("train.seed", std::to_string(c.seed));
  cfg.set("train.workers", std::to_string(c.workers));
  const ArchSpec spec = arch_from(cfg);
  const TrainConfig tc = TrainConfig::from_config(cfg);
  std::cout << spec_summary(spec) << "\n";
  std::cout << "epochs=" << tc.epochs << " batch=" << tc.batch_size << " lr=" << tc.lr0
            << " eps=" << tc.inner_attack.epsilon << " steps=" << tc.inner_attack.steps << " seed=" << tc.seed << "\n";
  const Splits data = load_data(cfg, spec);
  std::cout << "train=" << data.train.size() << " test=" << data.test.size() << " runs=1\n";
  if (c.dry_run) return 0;

  const std::string dir = out_dir(c);
  write_file(dir, "config.txt", to_config_text(spec) + tc.to_config_text());
  Network<float> net = build_network<float>(spec, tc.seed);
  std::optional<OptimizerState<float>> state;
  if (!resume.empty()) {
    state = OptimizerState<float>::init(net, tc.seed);
    load_checkpoint_into(net, resume, &*state);
    note(1, "resuming after epoch " + std::to_string(state->epoch));
  }
  const fs::path ckpt = fs::path(dir) / "checkpoints";
  std::ofstream epochs(fs::path(dir) / "epochs.csv");
  epochs << epoch_csv_header() << "\n";
  TrainHooks<float> hooks;
  hooks.checkpoint = [&](const std::string& tag, const Network<float>& n, const OptimizerState<float>& s,
                         const EpochStats&) { save_checkpoint(n, &s, (ckpt / tag).string(), tc.seed, tag); };
  hooks.on_epoch = [&](const EpochStats& s) {
    epochs << epoch_csv_row(s) << "\n" << std::flush;
    if (g_verbosity >= 0) {
      std::printf("epoch %d lr %.4g loss %.4f clean %.4f robust %.4f (%.1fs)\n", s.epoch, s.lr, s.train_loss,
                  s.clean_acc, s.robust_acc, s.seconds);
      std::fflush(stdout);
    }
  };
  const TrainResult r = sat_train(net, data.train, &data.test, tc, hooks, state ? &*state : nullptr);
  std::cout << "best epoch " << r.best_epoch << " robust " << r.best_robust_acc << "\n";
  return 0;
}

int run_attack(const Common& c, const std::string& checkpoint, const std::string& method, const std::string& split) {
  KeyValueConfig cfg = load_config(c);
  if (c.seed >= 0) cfg.set("attack.seed", std::to_string(c.seed));
  AttackConfig atk = attack_from(cfg);
  if (method == "fgsm") {
    atk.steps = 1;
    atk.step_size = atk.epsilon;
    atk.random_start = false;
  } else if (method == "cw") {
    atk.loss = AttackLoss::CwMargin;
  } else if (method != "pgd") {
    throw ValidationError("--method must be pgd, fgsm or cw, got '" + method + "'");
  }
  if (split != "train" && split != "test") throw ValidationError("--split must be train or test");
  const Network<float> net = load_model(checkpoint);
  const ArchSpec spec = read_manifest(checkpoint).spec.value();
  const Splits data = load_data(cfg, spec);
  const Dataset& ds = split == "train" ? data.train : data.test;
  std::cout << spec.notation() << " " << method << " eps=" << atk.epsilon << " steps=" << atk.steps
            << " samples=" << ds.size() << "\n";
  if (c.dry_run) return 0;
  const AttackOutcomes o = attack_outcomes(net, ds, atk, eval_options(cfg, c));
  std::ostringstream rows;
  rows << "index,label,clean_pred,adv_pred,correct,stable,robust\n";
  for (std::size_t i = 0; i < o.samples.size(); ++i) {
    const auto& s = o.samples[i];
    rows << i << "," << s.label << "," << s.clean_pred << "," << s.adv_pred << "," << s.correct() << "," << s.stable()
         << "," << s.robust() << "\n";
  }
  const std::string dir = out_dir(c);
  write_file(dir, "attack_samples.csv", rows.str());
  std::ostringstream summary;
  summary << "method,epsilon,steps,clean,robust,stability\n"
          << method << "," << atk.epsilon << "," << atk.steps << "," << o.clean_accuracy() << ","
          << o.robust_accuracy() << "," << o.stability() << "\n";
  write_file(dir, "attack.csv", summary.str());
  std::printf("clean %.4f robust %.4f stability %.4f\n", o.clean_accuracy(), o.robust_accuracy(), o.stability());
  return 0;
}

int run_eval(const Common& c, const std::string& checkpoint, bool lipschitz, bool per_block) {
  KeyValueConfig cfg = load_config(c);
  if (c.seed >= 0) cfg.set("attack.seed", std::to_string(c.seed));
  cfg.subtree("eval").require_known({"batch_size", "samples", "cw"});
  const AttackConfig pgd_cfg = attack_from(cfg);
  const Network<float> net = load_model(checkpoint);
  const ArchSpec spec = read_manifest(checkpoint).spec.value();
  Splits data = load_data(cfg, spec);
  const std::int64_t n = cfg.get_int64("eval.samples", 0);
  if (n > 0 && static_cast<std::size_t>(n) < data.test.size()) data.test = data.test.slice(0, static_cast<std::size_t>(n));
  std::vector<NamedAttack> attacks{{"pgd" + std::to_string(pgd_cfg.steps), pgd_cfg}};
  AttackConfig fg = pgd_cfg;
  fg.steps = 1;
  fg.step_size = fg.epsilon;
  fg.random_start = false;
  attacks.push_back({"fgsm", fg});
  if (cfg.get_bool("eval.cw", false)) {
    AttackConfig cw = pgd_cfg;
    cw.loss = AttackLoss::CwMargin;
    attacks.push_back({"cw" + std::to_string(cw.steps), cw});
  }
  std::cout << spec.notation() << " samples=" << data.test.size() << " attacks=" << attacks.size() << "\n";
  if (c.dry_run) return 0;
  const EvalOptions opts = eval_options(cfg, c);
  const EvalReport report = evaluate(net, data.test, attacks, lipschitz, opts);
  const std::string dir = out_dir(c);
  write_file(dir, "eval.csv", csv_header(report) + "\n" + csv_row(report) + "\n");
  write_file(dir, "eval.txt", to_report_text(report));
  std::cout << to_report_text(report);
  if (per_block) {
    const auto est = per_block_lipschitz(net, data.test, pgd_cfg, opts);
    write_file(dir, "lipschitz_blocks.csv", per_block_csv(est));
    write_file(dir, "lipschitz_blocks_normalized.csv", per_block_csv(est, true));
    for (std::size_t i = 0; i < est.size(); ++i) {
      std::printf("%s %.4f\n", i + 1 == est.size() ? "network" : ("block " + std::to_string(i + 1)).c_str(),
                  est[i].value);
    }
  }
  return 0;
}

int run_bounds(const Common& c, const std::string& checkpoint, const std::string& method, const std::string& spectral) {
  KeyValueConfig cfg = load_config(c);
  BoundOptions opts;
  opts.method = parse_bound_method(method);
  opts.spectral.method = parse_spectral_method(spectral);
  if (c.seed >= 0) opts.spectral.seed = static_cast<std::uint64_t>(c.seed);
  Network<float> net = checkpoint.empty() ? Network<float>(Shape{3, 32, 32}, 10) : load_model(checkpoint);
  if (checkpoint.empty()) {
    const ArchSpec spec = arch_from(cfg);
    std::cout << spec_summary(spec) << " (fresh init)\n";
    if (c.dry_run) return 0;
    net = build_network<float>(spec, static_cast<std::uint64_t>(std::max<std::int64_t>(c.seed, 0)));
  } else if (c.dry_run) {
    return 0;
  }
  const BoundReport r = network_bound(net, opts);
  write_file(out_dir(c), "bounds.csv", to_csv(r));
  std::printf("method %s product %.6g residual-form %.6g composed %.6g l1/linf %.6g blocks %d%s\n",
              to_string(r.method).c_str(), r.product_bound, r.residual_form_bound, r.composed_bound,
              r.l1_linf_bound(), r.block_count, r.all_converged ? "" : " (some layers did not converge)");
  return 0;
}

int run_mc(const Common& c, int rows, int cols, int trials, double scale) {
  if (rows < 1 || cols < 1 || trials < 2) throw ValidationError("mc-check needs N, n >= 1 and trials >= 2");
  if (rows < cols) throw ValidationError("mc-check needs N >= n");
  std::printf("N=%d n=%d trials=%d scale=%g\n", rows, cols, trials, scale);
  if (c.dry_run) return 0;
  const MCStats s = mc_singular_values(rows, cols, trials, static_cast<std::uint64_t>(std::max<std::int64_t>(c.seed, 0)),
                                       scale, c.workers);
  const double lo = scale * (std::sqrt(rows) - std::sqrt(cols)), hi = scale * (std::sqrt(rows) + std::sqrt(cols));
  const bool pass = s.mean_lambda_max - lo >= 3 * s.se_lambda_max && hi - s.mean_lambda_max >= 3 * s.se_lambda_max &&
                    s.mean_lambda_min >= lo - 3 * s.se_lambda_min;
  std::printf("mean lambda_max %.6f (se %.6f) bracket [%.6f, %.6f]\n", s.mean_lambda_max, s.se_lambda_max, lo, hi);
  std::printf("mean lambda_min %.6f (se %.6f) lower %.6f\n", s.mean_lambda_min, s.se_lambda_min, lo);
  std::printf("%s\n", pass ? "PASS" : "FAIL");
  std::ostringstream csv;
  csv << "N,n,trials,scale,mean_lambda_max,se_lambda_max,mean_lambda_min,se_lambda_min,lower,upper,verdict\n"
      << rows << "," << cols << "," << trials << "," << scale << "," << s.mean_lambda_max << "," << s.se_lambda_max
      << "," << s.mean_lambda_min << "," << s.se_lambda_min << "," << lo << "," << hi << "," << (pass ? "PASS" : "FAIL")
      << "\n";
  write_file(out_dir(c), "mc.csv", csv.str());
  return 0;
}

int run_explore(const Common& c) {
  KeyValueConfig cfg = load_config(c);
  cfg.set("train.workers", std::to_string(c.workers));
  const KeyValueConfig e = cfg.subtree("explore");
  e.require_known({"axis", "stage", "values", "cross_depths", "cross_widths", "seeds", "lipschitz_samples", "top"});
  SweepPlan plan;
  plan.base = arch_from(cfg);
  plan.train = TrainConfig::from_config(cfg);
  plan.eval_attack = attack_from(cfg);
  plan.axis = parse_sweep_axis(e.get_string("axis", "depth"));
  plan.stage = e.get_int("stage", 0);
  plan.values = split_list(e.get_string("values", ""));
  plan.cross_depths = split_list(e.get_string("cross_depths", ""));
  plan.cross_widths = split_list(e.get_string("cross_widths", ""));
  plan.lipschitz_samples = static_cast<std::size_t>(e.get_int64("lipschitz_samples", 64));
  plan.seeds.clear();
  if (c.seed >= 0) {
    plan.seeds.push_back(static_cast<std::uint64_t>(c.seed));
  } else {
    for (const auto& s : split_list(e.get_string("seeds", "0"))) plan.seeds.push_back(std::stoull(s));
  }
  plan.validate();
  const auto specs = plan_specs(plan);
  std::cout << "plan: " << specs.size() << " specs x " << plan.seeds.size() << " seeds = "
            << specs.size() * plan.seeds.size() << " runs\n";
  for (const auto& s : specs) std::cout << "  " << spec_summary(s) << "\n";
  if (c.dry_run) return 0;
  const Splits data = load_data(cfg, plan.base);
  const std::string dir = out_dir(c);
  RecordStore store((fs::path(dir) / "runs.csv").string(), plan.base.num_classes, plan.base.input_shape);
  RunContext ctx{&data.train, &data.test, eval_options(cfg, c)};
  const auto records = run_plan(plan, ctx, &store, [](const RunRecord& r, bool reused) {
    std::printf("%s seed %llu: %s clean %.4f robust %.4f lip %.3f%s\n", r.spec.notation().c_str(),
                static_cast<unsigned long long>(r.seed), r.status.c_str(), r.clean_acc, r.robust_acc,
                r.empirical_lipschitz, reused ? " (stored)" : "");
    std::fflush(stdout);
  });
  const auto top = topk(records, static_cast<std::size_t>(e.get_int("top", 10)), "robust_acc");
  write_file(dir, "leaderboard.csv", leaderboard_table(top));
  write_file(dir, "summary.csv", summary_table(records));
  std::cout << summary_table(records);
  return 0;
}

int run_report(const Common& c, const std::vector<std::string>& runs, std::size_t k, const std::string& metric,
               bool minimize, int classes, const std::string& input_shape) {
  if (runs.empty()) throw ValidationError("--runs is required");
  const ArchSpec probe = arch_from_config_text("input_shape = " + (input_shape.empty() ? "3,32,32" : input_shape) +
                                               "\nnum_classes = " + std::to_string(classes) + "\n");
  std::vector<RunRecord> all;
  for (const auto& path : runs) {
    if (!fs::exists(path)) throw ValidationError("runs file not found: " + path);
    RecordStore store(path, classes, probe.input_shape);
    all.insert(all.end(), store.records().begin(), store.records().end());
  }
  const auto top = topk(all, k, metric, minimize ? Direction::Min : Direction::Max);
  std::cout << leaderboard_table(top);
  if (c.dry_run) return 0;
  const std::string dir = out_dir(c);
  write_file(dir, "leaderboard.csv", leaderboard_table(top));
  write_file(dir, "summary.csv", summary_table(all));
  return 0;
}

void add_common(CLI::App* app, Common& c, bool with_config = true) {
  if (with_config) {
    app->add_option("--config", c.config, "key = value config file");
    app->add_option("--set", c.overrides, "dotted-key override, e.g. train.epochs=5")->take_all();
  }
  app->add_option("--out", c.out, "output directory (default: $WRNLAB_OUT or ./wrnlab-out)");
  app->add_option("--seed", c.seed, "seed for every random stream");
  app->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
  app->add_flag("--dry-run", c.dry_run, "validate and print the resolved plan only");
  app->add_flag("--verbose", c.verbosity, "more diagnostics (repeatable)");
  app->add_flag("--quiet{-1}", c.verbosity, "suppress progress output");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wrnlab: wide residual networks, adversarial training and Lipschitz analysis"};
  app.require_subcommand(1);
  app.allow_windows_style_options(false);
  Common c;

  auto* count = app.add_subcommand("count", "exact parameter count of an architecture");
  CountArgs ca;
  count->add_option("--depths", ca.depths, "depth notation, e.g. d5-5-5");
  count->add_option("--widths", ca.widths, "width notation, e.g. w10-10-10");
  count->add_option("--gamma", ca.gamma, "uniform width scale, e.g. 0.5 or 1/2");
  count->add_option("--classes", ca.classes, "number of classes");
  count->add_option("--input-shape", ca.input_shape, "C,H,W");
  add_common(count, c);

  auto* train = app.add_subcommand("train", "adversarial training from a config");
  std::string resume;
  train->add_option("--resume", resume, "checkpoint directory to continue from");
  add_common(train, c);

  auto* attack = app.add_subcommand("attack", "attack a checkpoint and store per-sample outcomes");
  std::string checkpoint, method = "pgd", split = "test";
  attack->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  attack->add_option("--method", method, "pgd | fgsm | cw");
  attack->add_option("--split", split, "train | test");
  add_common(attack, c);

  auto* eval = app.add_subcommand("eval", "clean/robust accuracy, stability and empirical Lipschitz");
  bool lipschitz = false, per_block = false;
  eval->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  eval->add_flag("--lipschitz", lipschitz, "include the network-scope empirical Lipschitz value");
  eval->add_flag("--per-block", per_block, "per-block empirical Lipschitz values");
  add_common(eval, c);

  auto* bounds = app.add_subcommand("bounds", "per-layer spectral norms and Lipschitz upper bounds");
  std::string bound_method = "spectral", spectral = "power";
  bounds->add_option("--checkpoint", checkpoint, "checkpoint directory (default: fresh init of arch.*)");
  bounds->add_option("--method", bound_method, "spectral | theorem");
  bounds->add_option("--spectral", spectral, "power | dense | circulant");
  add_common(bounds, c);

  auto* mc = app.add_subcommand("mc-check", "Monte Carlo check of Gaussian extreme singular values");
  int rows = 400, cols = 100, trials = 200;
  double scale = 1.0;
  mc->add_option("--N", rows, "rows");
  mc->add_option("--n", cols, "columns");
  mc->add_option("--trials", trials, "trials");
  mc->add_option("--scale", scale, "entry standard deviation");
  add_common(mc, c, false);

  auto* explore = app.add_subcommand("explore", "depth/width/gamma sweeps with a resumable run store");
  add_common(explore, c);

  auto* report = app.add_subcommand("report", "leaderboard from stored runs");
  std::vector<std::string> runs;
  std::size_t top = 10;
  std::string metric = "robust_acc", input_shape;
  bool minimize = false;
  int classes = 10;
  report->add_option("--runs", runs, "runs.csv files")->required();
  report->add_option("--top", top, "rows to keep");
  report->add_option("--metric", metric, "robust_acc | clean_acc | stability | empirical_lipschitz | params | flops");
  report->add_flag("--min", minimize, "smaller is better");
  report->add_option("--classes", classes, "class count of the stored specs");
  report->add_option("--input-shape", input_shape, "C,H,W of the stored specs");
  add_common(report, c, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: usage: " << msg << "\n";
    return 1;
  }
  g_verbosity = c.verbosity;

  try {
    if (*count) return run_count(c, ca, !c.config.empty() || !c.overrides.empty());
    if (*train) return run_train(c, resume);
    if (*attack) return run_attack(c, checkpoint, method, split);
    if (*eval) return run_eval(c, checkpoint, lipschitz, per_block);
    if (*bounds) return run_bounds(c, checkpoint, bound_method, spectral);
    if (*mc) return run_mc(c, rows, cols, trials, scale);
    if (*explore) return run_explore(c);
    if (*report) return run_report(c, runs, top, metric, minimize, classes, input_shape);
  } catch (const ValidationError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: validation: " << msg << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: runtime: " << msg << "\n";
    return 2;
  }
  return 1;
}
