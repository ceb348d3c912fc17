// kinet command-line tool.
//
// Exit codes: 0 success, 1 verification failure, 2 configuration or input error.

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "kinet/bench.hpp"
#include "kinet/config.hpp"
#include "kinet/selftest.hpp"

namespace fs = std::filesystem;
using namespace kinet;

namespace {

constexpr int kOk = 0;
constexpr int kVerificationFailure = 1;
constexpr int kConfigError = 2;

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out = "kinet_out";
  bool quiet = false;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg = load_run_config(g.config_path);
  std::stringstream ss;
  for (const std::string& kv : g.overrides) ss << kv << "\n";
  apply_key_values(cfg, parse_key_values(ss));
  cfg.validate();
  return cfg;
}

fs::path prepare_out(const Globals& g) {
  fs::path out(g.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ConfigError("cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

// Everything needed to rerun the command. The start time is the only
// wall-clock field.
void write_manifest(const fs::path& out, const std::string& command, const RunConfig& cfg,
                    const std::vector<std::pair<std::string, std::string>>& extra) {
  std::ofstream os(out / "manifest.txt");
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  os << "# kinet run manifest\n";
  os << "command = " << command << "\n";
  os << "started_at = " << stamp << "\n";
  os << "dh_hash = " << cfg.table.hash_hex() << "\n";
  for (const auto& [k, v] : extra) os << k << " = " << v << "\n";
  os << "[config]\n";
  write_run_config(os, cfg);
}

void print_accuracy_row(std::ostream& os, const std::string& mode, const AccuracyReport& a, double mean_attempts) {
  os << mode << "," << a.n << "," << a.successes << "," << format_double(a.acc);
  for (std::size_t r = 0; r < kReasonCount; ++r) os << "," << a.counts[r];
  os << "," << format_double(mean_attempts) << "\n";
}

std::optional<ModelKind> kind_from_checkpoint_flag(const std::string& model) {
  if (model == "cmp1" || model == "cmp2" || model == "cmp") return ModelKind::cmp;
  if (model == "fmp") return ModelKind::fmp;
  if (model == "nnreg" || model == "nnreg3") return ModelKind::nnreg3;
  if (model == "nnreg9") return ModelKind::nnreg9;
  return std::nullopt;
}

Pose6 parse_pose(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ConfigError("--pose: malformed number '" + item + "'");
    }
  }
  if (v.size() != 6) throw ConfigError("--pose needs six comma-separated values phi,theta,psi,x,y,z");
  return pose_from_array({v[0], v[1], v[2], v[3], v[4], v[5]});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kinematics-informed configuration prediction for mobile manipulators"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("-c,--config", g.config_path, "Run configuration file (key = value with [sections])");
  app.add_option("-s,--set", g.overrides, "Override one config key, e.g. --set train.epochs=50");
  app.add_option("-o,--out", g.out, "Output directory")->capture_default_str();
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress output");

  // selftest
  auto* selftest = app.add_subcommand("selftest", "Gradient checks, FK/IK round trips, loss branch cases");
  SelftestOptions st;
  selftest->add_option("--round-trips", st.round_trips, "Random FK/IK round trips")->capture_default_str();
  selftest->add_option("--inject-fault", st.inject_fault, "Perturb one gradient case to exercise the failure path");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a dataset with feasibility witnesses");
  std::size_t gen_n = 1000;
  std::optional<std::uint64_t> gen_seed;
  std::string gen_file = "data.csv";
  gen->add_option("-n,--n", gen_n, "Number of records")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Data seed (overrides data.seed)");
  gen->add_option("--file", gen_file, "File name inside the output directory")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a predictor");
  std::string model, data_path, val_path;
  train_cmd->add_option("--model", model, "cmp1 (U=1), cmp2 (U=0), fmp, nnreg or nnreg9")
      ->required()
      ->check(CLI::IsMember({"cmp1", "cmp2", "fmp", "nnreg", "nnreg9"}));
  train_cmd->add_option("--data", data_path, "Dataset file")->required();
  train_cmd->add_option("--val", val_path, "Validation dataset; default is a split of --data");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Accuracy of a checkpoint on a dataset");
  std::string ckpt_path;
  eval_cmd->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  eval_cmd->add_option("--data", data_path, "Dataset file")->required();

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Paired timing benchmark");
  std::string methods = "RS,EBS,NNreg,CMP";
  std::size_t n_tasks = 300;
  std::string cmp_ckpt, nnreg_ckpt, fmp_ckpt;
  bench_cmd->add_option("--methods", methods, "Comma-separated: RS,EBS,NNreg,CMP,RS_WB,RS+DLS,EBS+DLS,FMP")
      ->capture_default_str();
  bench_cmd->add_option("--tasks", n_tasks, "Number of tasks taken from --data")->capture_default_str();
  bench_cmd->add_option("--data", data_path, "Dataset providing the targets")->required();
  bench_cmd->add_option("--cmp", cmp_ckpt, "CMP checkpoint");
  bench_cmd->add_option("--nnreg", nnreg_ckpt, "NN regression checkpoint");
  bench_cmd->add_option("--fmp", fmp_ckpt, "FMP checkpoint");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Predict a configuration for one pose");
  std::string pose_text;
  std::optional<int> max_attempts;
  std::uint64_t predict_seed = 1;
  bool no_dropout = false;
  predict_cmd->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  predict_cmd->add_option("--pose", pose_text, "phi,theta,psi,x,y,z")->required();
  predict_cmd->add_option("--max-attempts", max_attempts, "Attempt cap (default infer.max_attempts)");
  predict_cmd->add_option("--seed", predict_seed, "Dropout seed")->capture_default_str();
  predict_cmd->add_flag("--no-dropout", no_dropout, "Disable inference dropout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  const std::string command = [&] {
    std::string s;
    for (int i = 0; i < argc; ++i) s += (i ? " " : "") + std::string(argv[i]);
    return s;
  }();
  static std::ostream null_stream(nullptr);
  std::ostream& log = g.quiet ? null_stream : std::cerr;

  try {
    if (*selftest) {
      const SelftestReport rep = run_selftest(st);
      rep.print(std::cout);
      std::cout << (rep.passed() ? "selftest passed" : "selftest FAILED") << "\n";
      return rep.passed() ? kOk : kVerificationFailure;
    }

    const RunConfig cfg = resolve_config(g);
    const fs::path out = prepare_out(g);

    if (*gen) {
      const std::uint64_t seed = gen_seed.value_or(cfg.data_seed);
      const RobotModel robot = cfg.robot();
      const DatasetFile f = generate_dataset(gen_n, seed, cfg.data, robot);
      save_dataset(out / gen_file, f);
      write_manifest(out, command, cfg, {{"data_seed", std::to_string(seed)}, {"records", std::to_string(gen_n)}});
      std::cout << "wrote " << f.records.size() << " records to " << (out / gen_file).string() << "\n";
      return kOk;
    }

    if (*train_cmd) {
      const RobotModel robot = cfg.robot();
      const DatasetFile data = load_dataset(data_path, cfg.table);
      std::vector<DatasetRecord> tr, va;
      if (val_path.empty()) {
        const DatasetSplit sp = split_dataset(data.records, cfg.split, cfg.split_seed);
        tr = sp.train;
        va = sp.val;
      } else {
        tr = data.records;
        va = load_dataset(val_path, cfg.table).records;
      }
      TrainConfig tc = cfg.train;
      tc.kind = *kind_from_checkpoint_flag(model);
      if (model == "cmp1") tc.weights.U = true;
      if (model == "cmp2") tc.weights.U = false;
      auto progress = [&](const EpochLog& e) {
        if (e.train_acc >= 0.0)
          log << "epoch " << e.epoch << " loss " << e.loss.total << " train_acc " << e.train_acc << " val_acc "
              << e.val_acc << "\n";
      };
      TrainResult r;
      try {
        r = train(tr, va, tc, robot, progress);
      } catch (const DivergenceError& e) {
        std::cerr << "training diverged: " << e.what()
                  << "\nno checkpoint was written; rerun with a smaller train.lr or a positive train.grad_clip\n";
        return kVerificationFailure;
      }
      save_checkpoint(out / "checkpoint.txt", r.checkpoint);
      std::ofstream lg(out / "train_log.csv");
      write_training_log(lg, r.log);
      write_manifest(out, command, cfg,
                     {{"model", model}, {"train_records", std::to_string(tr.size())},
                      {"val_records", std::to_string(va.size())}, {"final_loss", format_double(r.checkpoint.final_loss)}});
      std::cout << "checkpoint " << (out / "checkpoint.txt").string() << " epochs " << r.checkpoint.epochs_run
                << " final_val_acc " << format_double(r.log.empty() ? -1.0 : r.log.back().val_acc) << "\n";
      return kOk;
    }

    if (*eval_cmd) {
      const RobotModel robot = cfg.robot();
      const Checkpoint ck = load_checkpoint(ckpt_path, cfg.table);
      const DatasetFile data = load_dataset(data_path, cfg.table);
      const AccuracyReport single = evaluate_single(ck, data.records, robot, cfg.eval_seed);
      const ResamplingReport res =
          evaluate_resampling(ck, data.records, robot, cfg.learned_max_attempts, cfg.eval_seed);
      std::ofstream os(out / "eval.csv");
      for (std::ostream* s : {static_cast<std::ostream*>(&os), &std::cout}) {
        *s << "mode,n,successes,acc";
        for (std::size_t r = 0; r < kReasonCount; ++r) *s << "," << reason_name(static_cast<Reason>(r));
        *s << ",mean_attempts\n";
        print_accuracy_row(*s, "single", single, 1.0);
        print_accuracy_row(*s, "resampling", res.final, res.mean_attempts);
      }
      write_manifest(out, command, cfg, {{"checkpoint", ckpt_path}, {"data", data_path}});
      return kOk;
    }

    if (*bench_cmd) {
      PipelineContext ctx = cfg.pipeline_context();
      BenchConfig bc = cfg.bench;
      bc.methods.clear();
      std::stringstream ss(methods);
      std::string name;
      while (std::getline(ss, name, ',')) {
        const auto m = parse_method(name);
        if (!m) throw ConfigError("unknown method " + name);
        bc.methods.push_back(*m);
      }
      bc.threads = default_threads();
      std::optional<Checkpoint> cmp, nnreg, fmp;
      if (!cmp_ckpt.empty()) cmp = load_checkpoint(cmp_ckpt, cfg.table, ModelKind::cmp);
      if (!nnreg_ckpt.empty()) nnreg = load_checkpoint(nnreg_ckpt, cfg.table, ModelKind::nnreg3);
      if (!fmp_ckpt.empty()) fmp = load_checkpoint(fmp_ckpt, cfg.table, ModelKind::fmp);
      ctx.cmp = cmp ? &*cmp : nullptr;
      ctx.nnreg = nnreg ? &*nnreg : nullptr;
      ctx.fmp = fmp ? &*fmp : nullptr;
      const DatasetFile data = load_dataset(data_path, cfg.table);
      const std::vector<BenchTask> tasks = tasks_from_records(data.records, n_tasks);
      TimingReport rep;
      try {
        rep = bench(tasks, bc, ctx);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      std::ofstream rows(out / "bench.csv");
      write_bench_csv(rows, rep);
      std::ofstream summary(out / "bench_summary.csv");
      write_summary_csv(summary, rep);
      write_summary_csv(std::cout, rep);
      write_manifest(out, command, cfg,
                     {{"methods", methods}, {"tasks", std::to_string(tasks.size())},
                      {"threads", std::to_string(bc.threads)}});
      return kOk;
    }

    if (*predict_cmd) {
      const RobotModel robot = cfg.robot();
      Checkpoint ck = load_checkpoint(ckpt_path, cfg.table);
      if (no_dropout) ck.dropout.active_in_inference = false;
      const Pose6 target = parse_pose(pose_text);
      Rng rng(predict_seed, Stream::Dropout);
      const PredictResult p =
          predict_with_resampling(ck, target, max_attempts.value_or(cfg.learned_max_attempts), rng, robot);
      const FullConfig& c = p.success ? p.config : p.rejected.back();
      std::cout << "valid=" << (p.success ? 1 : 0) << " attempts=" << p.attempts
                << " reason=" << reason_name(p.success ? Reason::ok : p.last_reason)
                << " chassis=" << format_double(c.chassis.psi) << "," << format_double(c.chassis.x) << ","
                << format_double(c.chassis.y) << " joints=";
      for (std::size_t j = 0; j < 6; ++j) std::cout << (j ? "," : "") << format_double(c.joints[j]);
      std::cout << "\n";
      return p.success ? kOk : kVerificationFailure;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kVerificationFailure;
  }
  return kOk;
}
