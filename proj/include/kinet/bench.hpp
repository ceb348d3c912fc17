#pragma once

// Paired timing benchmark over a task list: every method sees the same
// targets and the same per-task random stream.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "kinet/baselines.hpp"

namespace kinet {

struct BenchTask {
  std::uint64_t task_id = 0;
  Pose6 target;
};

std::vector<BenchTask> tasks_from_records(const std::vector<DatasetRecord>& records, std::size_t limit = 0);

struct BenchConfig {
  std::vector<Method> methods;
  int repetitions = 3;  // timings are the per-phase median over repetitions
  std::uint64_t seed = 1;
  /// Tasks given to RS_WB, from the front of the list; 0 means all. Each of
  /// its rows can take the whole time cap.
  std::size_t whole_body_rs_tasks = 0;
  int threads = 1;

  void validate() const;
};

struct BenchRow {
  std::uint64_t task_id = 0;
  PipelineResult result;
};

struct MethodSummary {
  Method method = Method::rs;
  std::size_t tasks = 0;
  double mean_attempts = 0.0;
  double single_sample_ms = 0.0;  // mean over tasks of sample_ms / attempts
  double single_check_ms = 0.0;   // mean over tasks of check_ms / attempts
  double total_ms = 0.0;          // mean over tasks
  /// Mean total of the table's base method over this method's total: RS for
  /// chassis methods, RS_WB for whole-body ones. NaN without a base row.
  double speedup = 0.0;
  double success_rate = 0.0;
  std::size_t capped = 0;
};

struct TimingReport {
  std::vector<BenchRow> rows;  // method-major, tasks in list order
  std::vector<MethodSummary> summary;

  const MethodSummary* find(Method m) const;
};

/// Runs every method on every task. The random stream of a task depends
/// only on (seed, task_id). Worker threads split tasks; results are merged
/// by index so the row order never depends on scheduling.
TimingReport bench(const std::vector<BenchTask>& tasks, const BenchConfig& cfg, const PipelineContext& ctx);

MethodSummary summarize(Method m, const std::vector<BenchRow>& rows);

/// Columns: method, task_id, attempts, sample_ms, check_ms, total_ms, valid, reason.
void write_bench_csv(std::ostream& os, const TimingReport& report);
/// Columns: method, tasks, mean_attempts, single_sample_ms, single_check_ms,
/// total_ms, speedup, success_rate, capped.
void write_summary_csv(std::ostream& os, const TimingReport& report);

/// KINET_THREADS when set to a positive integer, else the hardware count.
int default_threads();

}  // namespace kinet
