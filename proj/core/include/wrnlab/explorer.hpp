#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wrnlab/arch.hpp"
#include "wrnlab/data.hpp"
#include "wrnlab/metrics.hpp"
#include "wrnlab/training.hpp"

namespace wrnlab {

struct RunRecord {
  ArchSpec spec;
  std::int64_t param_count = 0;
  std::int64_t flops = 0;
  double clean_acc = 0.0;
  double robust_acc = 0.0;
  double stability = 0.0;
  double empirical_lipschitz = 0.0;
  double wall_time = 0.0;
  std::uint64_t seed = 0;
  std::string status = "ok";  // ok | failed
  std::string error;

  bool ok() const { return status == "ok"; }
  std::string key() const;  // notation + seed
};

enum class SweepAxis { Depth, Width, Gamma };

std::string to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(const std::string& text);

struct SweepPlan {
  ArchSpec base;
  SweepAxis axis = SweepAxis::Depth;
  int stage = 0;  // 1..3, or 0 for all stages (depth grid only)
  std::vector<std::string> values;
  // Cross-product mode: every (depth notation, width notation) pair.
  std::vector<std::string> cross_depths;
  std::vector<std::string> cross_widths;
  TrainConfig train;
  AttackConfig eval_attack = AttackConfig::evaluation();
  std::size_t lipschitz_samples = 64;  // 0 disables the empirical Lipschitz column
  std::vector<std::uint64_t> seeds{0};

  void validate() const;
};

// Every architecture the plan covers, in run order.
std::vector<ArchSpec> plan_specs(const SweepPlan& plan);

struct RunContext {
  const Dataset* train = nullptr;
  const Dataset* test = nullptr;
  EvalOptions eval;
};

// Trains with SAT and evaluates one (spec, seed). Library errors are caught
// and returned as a failed record.
RunRecord run_record(const ArchSpec& spec, std::uint64_t seed, const SweepPlan& plan, const RunContext& ctx);

// Append-only CSV record store; every append rewrites the file through a
// temporary and a rename.
class RecordStore {
 public:
  static constexpr const char* kHeader = "spec_notation,gamma,params,flops,clean,robust,stability,emp_lip,seed,status";

  RecordStore() = default;
  // Loads existing records if the file exists. Specs are rebuilt with the
  // given class count and input shape.
  explicit RecordStore(std::string path, int num_classes = 10, std::array<int, 3> input_shape = {3, 32, 32});

  bool contains(const std::string& key) const;
  const RunRecord* find(const std::string& key) const;
  void append(const RunRecord& record);
  const std::vector<RunRecord>& records() const noexcept { return records_; }
  const std::string& path() const noexcept { return path_; }

  static std::string to_csv_row(const RunRecord& r);
  static RunRecord from_csv_row(const std::string& line, int num_classes, std::array<int, 3> input_shape);

 private:
  void flush() const;

  std::string path_;
  std::vector<RunRecord> records_;
  std::map<std::string, std::size_t> index_;
};

using RecordCallback = std::function<void(const RunRecord&, bool reused)>;

// Runs every (spec, seed) of the plan not already in `store` (when given).
// Records come back in plan order.
std::vector<RunRecord> run_plan(const SweepPlan& plan, const RunContext& ctx, RecordStore* store = nullptr,
                                const RecordCallback& on_record = {});

// axis = depth, stage = all: |values|^3 runs.
std::vector<RunRecord> grid_search(const SweepPlan& plan, const RunContext& ctx, RecordStore* store = nullptr,
                                   const RecordCallback& on_record = {});
// One stage swept, the others fixed at the base.
std::vector<RunRecord> stage_sweep(const SweepPlan& plan, const RunContext& ctx, RecordStore* store = nullptr,
                                   const RecordCallback& on_record = {});
std::vector<RunRecord> scale_sweep(const ArchSpec& base, const std::vector<Rational>& gammas, const SweepPlan& plan,
                                   const RunContext& ctx, RecordStore* store = nullptr,
                                   const RecordCallback& on_record = {});

enum class Direction { Max, Min };

// Stable sort on `metric` (clean_acc, robust_acc, stability,
// empirical_lipschitz, param_count, flops, wall_time), ties going to fewer
// parameters; failed runs are dropped.
std::vector<RunRecord> topk(const std::vector<RunRecord>& records, std::size_t k, const std::string& metric,
                            Direction direction = Direction::Max);

// Model,Params,Clean,PGD20 table.
std::string leaderboard_table(const std::vector<RunRecord>& records);
// Per-architecture medians over seeds: Model,Params,FLOPs,Clean,Robust,Stability,EmpLip,Runs.
std::string summary_table(const std::vector<RunRecord>& records);

}  // namespace wrnlab
