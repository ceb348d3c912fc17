#pragma once

// Run configuration: flat "key = value" text with [section] headers that
// prefix the keys that follow ("[train]" then "lr = 3e-5" sets train.lr).

#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>

#include "kinet/baselines.hpp"
#include "kinet/bench.hpp"

namespace kinet {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  DHTable table = DHTable::ur10e();
  MountTransform mount;
  AnnulusOptions annulus;
  DataGenConfig data;
  std::uint64_t data_seed = 1;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 1;
  TrainConfig train;
  SamplerConfig sampler;
  DLSConfig dls;
  BenchConfig bench;
  int learned_max_attempts = 20;
  double time_cap_ms = 30000.0;
  std::uint64_t eval_seed = 1;

  /// Throws ConfigError naming the first invalid section.
  void validate() const;
  /// Robot model with the annulus derived from table, mount and options.
  RobotModel robot() const;
  PipelineContext pipeline_context() const;
};

/// Parses key/value text into dotted keys. Throws ConfigError with the line
/// number on syntax errors and duplicate keys.
std::map<std::string, std::string> parse_key_values(std::istream& is);

/// Applies each key to cfg. Unknown keys and malformed values throw ConfigError.
void apply_key_values(RunConfig& cfg, const std::map<std::string, std::string>& kv);

RunConfig load_run_config(const std::filesystem::path& path);

/// Every key with its current value, in the format parse_key_values reads.
void write_run_config(std::ostream& os, const RunConfig& cfg);

}  // namespace kinet
