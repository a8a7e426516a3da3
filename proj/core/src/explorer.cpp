#include "wrnlab/explorer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "wrnlab/wrn.hpp"

namespace wrnlab {

namespace fs = std::filesystem;

std::string RunRecord::key() const { return spec.notation() + "#" + std::to_string(seed); }

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Depth: return "depth";
    case SweepAxis::Width: return "width";
    case SweepAxis::Gamma: return "gamma";
  }
  return "?";
}

SweepAxis parse_sweep_axis(const std::string& text) {
  if (text == "depth") return SweepAxis::Depth;
  if (text == "width") return SweepAxis::Width;
  if (text == "gamma") return SweepAxis::Gamma;
  throw ValidationError("unknown sweep axis '" + text + "' (expected depth, width or gamma)");
}

void SweepPlan::validate() const {
  if (seeds.empty()) throw ValidationError("sweep plan: no seeds");
  const bool cross = !cross_depths.empty() || !cross_widths.empty();
  if (cross) {
    if (cross_depths.empty() || cross_widths.empty()) {
      throw ValidationError("sweep plan: cross-product mode needs both depth and width lists");
    }
    return;
  }
  if (values.empty()) throw ValidationError("sweep plan: empty value list");
  if (stage < 0 || stage > 3) throw ValidationError("sweep plan: stage must be 1, 2, 3 or all");
  if (stage == 0 && axis != SweepAxis::Depth && axis != SweepAxis::Gamma) {
    throw ValidationError("sweep plan: stage=all is only valid for the depth grid");
  }
}

std::vector<ArchSpec> plan_specs(const SweepPlan& plan) {
  plan.validate();
  std::vector<ArchSpec> out;
  if (!plan.cross_depths.empty()) {
    for (const auto& d : plan.cross_depths)
      for (const auto& w : plan.cross_widths) {
        ArchSpec s = parse_config(d, w, plan.base.gamma, plan.base.num_classes);
        s.input_shape = plan.base.input_shape;
        s.validate();
        out.push_back(s);
      }
    return out;
  }
  auto depth_value = [](const std::string& v) {
    int d = 0;
    try {
      std::size_t used = 0;
      d = std::stoi(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
    } catch (const std::exception&) {
      throw ParseError("sweep plan: depth values must be integers", v);
    }
    if (d < 0) throw ParseError("sweep plan: depth values must be non-negative", v);
    return d;
  };
  switch (plan.axis) {
    case SweepAxis::Gamma:
      for (const auto& v : plan.values) out.push_back(scale(plan.base, Rational::parse(v)));
      break;
    case SweepAxis::Depth:
      if (plan.stage == 0) {
        std::vector<int> ds;
        for (const auto& v : plan.values) ds.push_back(depth_value(v));
        for (int a : ds)
          for (int b : ds)
            for (int c : ds) {
              ArchSpec s = plan.base;
              s.stages[0].depth = a;
              s.stages[1].depth = b;
              s.stages[2].depth = c;
              s.validate();
              out.push_back(s);
            }
      } else {
        for (const auto& v : plan.values) {
          ArchSpec s = plan.base;
          s.stages[static_cast<std::size_t>(plan.stage - 1)].depth = depth_value(v);
          s.validate();
          out.push_back(s);
        }
      }
      break;
    case SweepAxis::Width:
      for (const auto& v : plan.values) {
        ArchSpec s = plan.base;
        s.stages[static_cast<std::size_t>(plan.stage - 1)].width = Rational::parse(v);
        s.validate();
        out.push_back(s);
      }
      break;
  }
  return out;
}

RunRecord run_record(const ArchSpec& spec, std::uint64_t seed, const SweepPlan& plan, const RunContext& ctx) {
  RunRecord r;
  r.spec = spec;
  r.seed = seed;
  r.param_count = count_params(spec);
  r.flops = count_flops(spec);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (!ctx.train || !ctx.test) throw ValidationError("run_record: missing train or test data");
    Network<float> net = build_network<float>(spec, seed);
    TrainConfig cfg = plan.train;
    cfg.seed = seed;
    cfg.workers = ctx.eval.workers;
    sat_train(net, *ctx.train, ctx.test, cfg);
    const Network<float>& frozen = net;
    const AttackOutcomes o = attack_outcomes(frozen, *ctx.test, plan.eval_attack, ctx.eval);
    r.clean_acc = o.clean_accuracy();
    r.robust_acc = o.correct_and_stable();
    r.stability = o.stability();
    if (plan.lipschitz_samples > 0) {
      const std::size_t n = std::min(plan.lipschitz_samples, ctx.test->size());
      r.empirical_lipschitz =
          empirical_lipschitz(frozen, ctx.test->slice(0, n), plan.eval_attack, NetworkScope{}, ctx.eval).value;
    }
  } catch (const Error& e) {
    r.status = "failed";
    r.error = e.what();
    r.clean_acc = r.robust_acc = r.stability = r.empirical_lipschitz = 0.0;
  }
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

RecordStore::RecordStore(std::string path, int num_classes, std::array<int, 3> input_shape) : path_(std::move(path)) {
  std::ifstream f(path_);
  if (!f) return;
  std::string line;
  if (!std::getline(f, line)) return;
  if (line != kHeader) throw IoError("record store " + path_ + ": unexpected header '" + line + "'");
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    RunRecord r = from_csv_row(line, num_classes, input_shape);
    const std::string k = r.key();
    if (index_.count(k)) {
      records_[index_[k]] = r;
    } else {
      index_[k] = records_.size();
      records_.push_back(std::move(r));
    }
  }
}

bool RecordStore::contains(const std::string& key) const { return index_.count(key) != 0; }

const RunRecord* RecordStore::find(const std::string& key) const {
  const auto it = index_.find(key);
  return it == index_.end() ? nullptr : &records_[it->second];
}

void RecordStore::append(const RunRecord& record) {
  const std::string k = record.key();
  if (index_.count(k)) {
    records_[index_[k]] = record;
  } else {
    index_[k] = records_.size();
    records_.push_back(record);
  }
  if (!path_.empty()) flush();
}

void RecordStore::flush() const {
  const fs::path target(path_);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const std::string tmp = path_ + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw IoError("record store: cannot write " + tmp);
    f << kHeader << "\n";
    for (const auto& r : records_) f << to_csv_row(r) << "\n";
    if (!f) throw IoError("record store: short write to " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("record store: cannot rename " + tmp + ": " + ec.message());
}

std::string RecordStore::to_csv_row(const RunRecord& r) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << r.spec.notation() << "," << r.spec.gamma.str() << "," << r.param_count << "," << r.flops << "," << r.clean_acc
     << "," << r.robust_acc << "," << r.stability << "," << r.empirical_lipschitz << "," << r.seed << "," << r.status;
  return os.str();
}

RunRecord RecordStore::from_csv_row(const std::string& line, int num_classes, std::array<int, 3> input_shape) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (f.size() != 10) throw ParseError("record store: expected 10 fields", line);
  RunRecord r;
  try {
    r.spec = parse_notation(f[0], num_classes, input_shape);
    r.param_count = std::stoll(f[2]);
    r.flops = std::stoll(f[3]);
    r.clean_acc = std::stod(f[4]);
    r.robust_acc = std::stod(f[5]);
    r.stability = std::stod(f[6]);
    r.empirical_lipschitz = std::stod(f[7]);
    r.seed = std::stoull(f[8]);
  } catch (const std::logic_error&) {
    throw ParseError("record store: malformed numeric field", line);
  }
  r.status = f[9];
  return r;
}

std::vector<RunRecord> run_plan(const SweepPlan& plan, const RunContext& ctx, RecordStore* store,
                                const RecordCallback& on_record) {
  const auto specs = plan_specs(plan);
  std::vector<RunRecord> out;
  for (const auto& spec : specs) {
    for (std::uint64_t seed : plan.seeds) {
      const std::string key = spec.notation() + "#" + std::to_string(seed);
      if (store) {
        if (const RunRecord* done = store->find(key); done && done->ok()) {
          out.push_back(*done);
          if (on_record) on_record(*done, true);
          continue;
        }
      }
      RunRecord r = run_record(spec, seed, plan, ctx);
      if (store) store->append(r);
      if (on_record) on_record(r, false);
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<RunRecord> grid_search(const SweepPlan& plan, const RunContext& ctx, RecordStore* store,
                                   const RecordCallback& on_record) {
  if (plan.values.empty()) throw ValidationError("grid_search: empty value list");
  if (plan.axis != SweepAxis::Depth || plan.stage != 0) {
    throw ValidationError("grid_search: requires axis=depth and stage=all");
  }
  return run_plan(plan, ctx, store, on_record);
}

std::vector<RunRecord> stage_sweep(const SweepPlan& plan, const RunContext& ctx, RecordStore* store,
                                   const RecordCallback& on_record) {
  if (plan.values.empty()) throw ValidationError("stage_sweep: empty value list");
  if (plan.stage < 1 || plan.stage > 3) throw ValidationError("stage_sweep: stage must be 1, 2 or 3");
  if (plan.axis == SweepAxis::Gamma) throw ValidationError("stage_sweep: axis must be depth or width");
  return run_plan(plan, ctx, store, on_record);
}

std::vector<RunRecord> scale_sweep(const ArchSpec& base, const std::vector<Rational>& gammas, const SweepPlan& plan,
                                   const RunContext& ctx, RecordStore* store, const RecordCallback& on_record) {
  if (gammas.empty()) throw ValidationError("scale_sweep: empty gamma list");
  SweepPlan p = plan;
  p.base = base;
  p.axis = SweepAxis::Gamma;
  p.stage = 0;
  p.cross_depths.clear();
  p.cross_widths.clear();
  p.values.clear();
  for (const auto& g : gammas) {
    if (g <= Rational(0)) throw ValidationError("scale_sweep: gamma must be positive, got " + g.str());
    p.values.push_back(g.str());
  }
  return run_plan(p, ctx, store, on_record);
}

namespace {

double metric_of(const RunRecord& r, const std::string& metric) {
  if (metric == "clean_acc" || metric == "clean") return r.clean_acc;
  if (metric == "robust_acc" || metric == "robust") return r.robust_acc;
  if (metric == "stability") return r.stability;
  if (metric == "empirical_lipschitz" || metric == "emp_lip") return r.empirical_lipschitz;
  if (metric == "param_count" || metric == "params") return static_cast<double>(r.param_count);
  if (metric == "flops") return static_cast<double>(r.flops);
  if (metric == "wall_time") return r.wall_time;
  throw ValidationError("topk: unknown metric '" + metric + "'");
}

std::string pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * v;
  return os.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<RunRecord> topk(const std::vector<RunRecord>& records, std::size_t k, const std::string& metric,
                            Direction direction) {
  if (k < 1) throw ValidationError("topk: k must be at least 1");
  RunRecord probe;
  metric_of(probe, metric);
  std::vector<RunRecord> ok;
  for (const auto& r : records) {
    if (r.ok()) ok.push_back(r);
  }
  std::stable_sort(ok.begin(), ok.end(), [&](const RunRecord& a, const RunRecord& b) {
    const double ma = metric_of(a, metric), mb = metric_of(b, metric);
    if (ma != mb) return direction == Direction::Max ? ma > mb : ma < mb;
    return a.param_count < b.param_count;
  });
  if (ok.size() > k) ok.resize(k);
  return ok;
}

std::string leaderboard_table(const std::vector<RunRecord>& records) {
  std::ostringstream os;
  os << "Model,Params,Clean,PGD20\n";
  for (const auto& r : records) {
    os << r.spec.notation() << "," << format_millions(r.param_count) << "," << pct(r.clean_acc) << ","
       << pct(r.robust_acc) << "\n";
  }
  return os.str();
}

std::string summary_table(const std::vector<RunRecord>& records) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunRecord*>> groups;
  for (const auto& r : records) {
    if (!r.ok()) continue;
    const std::string n = r.spec.notation();
    if (!groups.count(n)) order.push_back(n);
    groups[n].push_back(&r);
  }
  std::ostringstream os;
  os << "Model,Params,FLOPs,Clean,Robust,Stability,EmpLip,Runs\n";
  for (const auto& n : order) {
    const auto& g = groups[n];
    std::vector<double> c, rb, st, lp;
    for (const auto* r : g) {
      c.push_back(r->clean_acc);
      rb.push_back(r->robust_acc);
      st.push_back(r->stability);
      lp.push_back(r->empirical_lipschitz);
    }
    std::ostringstream lip;
    lip << std::fixed << std::setprecision(3) << median(lp);
    os << n << "," << format_millions(g.front()->param_count) << "," << format_millions(g.front()->flops) << ","
       << pct(median(c)) << "," << pct(median(rb)) << "," << pct(median(st)) << "," << lip.str() << "," << g.size()
       << "\n";
  }
  return os.str();
}

}  // namespace wrnlab
