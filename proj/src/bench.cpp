#include "kinet/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <ostream>
#include <thread>

namespace kinet {

std::vector<BenchTask> tasks_from_records(const std::vector<DatasetRecord>& records, std::size_t limit) {
  std::vector<BenchTask> out;
  for (const DatasetRecord& r : records) {
    if (limit && out.size() == limit) break;
    out.push_back({r.task_id, r.target});
  }
  return out;
}

void BenchConfig::validate() const {
  if (methods.empty()) throw std::invalid_argument("bench needs at least one method");
  if (repetitions < 1) throw std::invalid_argument("repetitions must be at least 1");
  if (threads < 1) throw std::invalid_argument("threads must be at least 1");
}

const MethodSummary* TimingReport::find(Method m) const {
  for (const MethodSummary& s : summary)
    if (s.method == m) return &s;
  return nullptr;
}

int default_threads() {
  if (const char* v = std::getenv("KINET_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (end != v && *end == '\0' && n > 0) return static_cast<int>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

PipelineResult timed_run(Method m, const BenchTask& task, const BenchConfig& cfg, const PipelineContext& ctx) {
  std::vector<double> sample, check, total;
  PipelineResult first;
  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    Rng rng(cfg.seed, Stream::Bench, task.task_id);
    PipelineResult r = run_pipeline(m, task.target, ctx, rng);
    sample.push_back(r.sample_ms);
    check.push_back(r.check_ms);
    total.push_back(r.total_ms);
    if (rep == 0) first = r;
    // A capped run would only hit the cap again.
    if (r.capped) break;
  }
  first.sample_ms = median(sample);
  first.check_ms = median(check);
  first.total_ms = median(total);
  return first;
}

}  // namespace

MethodSummary summarize(Method m, const std::vector<BenchRow>& rows) {
  MethodSummary s;
  s.method = m;
  double attempts = 0.0, single_sample = 0.0, single_check = 0.0, total = 0.0, ok = 0.0;
  for (const BenchRow& row : rows) {
    const PipelineResult& r = row.result;
    if (r.method != m) continue;
    ++s.tasks;
    const double a = static_cast<double>(std::max<std::uint64_t>(1, r.attempts));
    attempts += static_cast<double>(r.attempts);
    single_sample += r.sample_ms / a;
    single_check += r.check_ms / a;
    total += r.total_ms;
    ok += r.valid ? 1.0 : 0.0;
    s.capped += r.capped ? 1 : 0;
  }
  if (s.tasks) {
    const double n = static_cast<double>(s.tasks);
    s.mean_attempts = attempts / n;
    s.single_sample_ms = single_sample / n;
    s.single_check_ms = single_check / n;
    s.total_ms = total / n;
    s.success_rate = ok / n;
  }
  s.speedup = std::numeric_limits<double>::quiet_NaN();
  return s;
}

TimingReport bench(const std::vector<BenchTask>& tasks, const BenchConfig& cfg, const PipelineContext& ctx) {
  cfg.validate();
  if (tasks.empty()) throw std::invalid_argument("bench needs at least one task");
  for (Method m : cfg.methods) {
    if (m == Method::cmp && !ctx.cmp) throw std::invalid_argument("CMP needs a checkpoint");
    if (m == Method::nnreg && !ctx.nnreg) throw std::invalid_argument("NNreg needs a checkpoint");
    if (m == Method::fmp && !ctx.fmp) throw std::invalid_argument("FMP needs a checkpoint");
  }

  TimingReport rep;
  for (Method m : cfg.methods) {
    std::size_t n = tasks.size();
    if (m == Method::rs_wb && cfg.whole_body_rs_tasks) n = std::min(n, cfg.whole_body_rs_tasks);
    std::vector<BenchRow> rows(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next++; i < n; i = next++) rows[i] = {tasks[i].task_id, timed_run(m, tasks[i], cfg, ctx)};
    };
    const int nt = std::min<int>(cfg.threads, static_cast<int>(n));
    if (nt <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
    rep.summary.push_back(summarize(m, rep.rows));
  }

  const MethodSummary* rs = rep.find(Method::rs);
  const MethodSummary* rs_wb = rep.find(Method::rs_wb);
  for (MethodSummary& s : rep.summary) {
    const MethodSummary* base = method_whole_body(s.method) ? rs_wb : rs;
    if (base && s.total_ms > 0.0) s.speedup = base->total_ms / s.total_ms;
  }
  return rep;
}

void write_bench_csv(std::ostream& os, const TimingReport& report) {
  os << "method,task_id,attempts,sample_ms,check_ms,total_ms,valid,reason\n";
  for (const BenchRow& row : report.rows) {
    const PipelineResult& r = row.result;
    os << method_name(r.method) << "," << row.task_id << "," << r.attempts << "," << format_double(r.sample_ms) << ","
       << format_double(r.check_ms) << "," << format_double(r.total_ms) << "," << (r.valid ? 1 : 0) << ","
       << reason_name(r.reason) << "\n";
  }
}

void write_summary_csv(std::ostream& os, const TimingReport& report) {
  os << "method,tasks,mean_attempts,single_sample_ms,single_check_ms,total_ms,speedup,success_rate,capped\n";
  for (const MethodSummary& s : report.summary) {
    os << method_name(s.method) << "," << s.tasks << "," << format_double(s.mean_attempts) << ","
       << format_double(s.single_sample_ms) << "," << format_double(s.single_check_ms) << ","
       << format_double(s.total_ms) << ",";
    if (std::isfinite(s.speedup)) os << format_double(s.speedup);
    os << "," << format_double(s.success_rate) << "," << s.capped << "\n";
  }
}

}  // namespace kinet
