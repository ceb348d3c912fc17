#pragma once

// Synthetic task generation with feasibility witnesses, dataset files and
// train/validation/test splits.

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "kinet/evalbench.hpp"

namespace kinet {

/// Malformed or mismatched input file. `line` is 1-based, 0 when not tied to a line.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct DatasetRecord {
  std::uint64_t task_id = 0;
  Pose6 target;
  ChassisPose witness_chassis;
  JointVector witness_joints{};
};

struct DatasetFile {
  static constexpr int kVersion = 1;
  int version = kVersion;
  std::uint64_t seed = 0;
  std::string dh_hash;
  HomTransform mount = MountTransform{}.transform;
  std::vector<DatasetRecord> records;
};

struct Bounds2 {
  double x_min = -2.0, x_max = 2.0;
  double y_min = -2.0, y_max = 2.0;

  void validate() const;
};

struct DataGenConfig {
  Bounds2 chassis_bounds;
  std::array<double, 6> joint_lo{-kPi + 0.1, -kPi + 0.1, -kPi + 0.1, -kPi + 0.1, -kPi + 0.1, -kPi + 0.1};
  std::array<double, 6> joint_hi{kPi - 0.1, kPi - 0.1, kPi - 0.1, kPi - 0.1, kPi - 0.1, kPi - 0.1};
  double singular_band = 0.05;
  std::size_t max_draws_per_record = 1000000;

  void validate() const;
};

/// Draws one witness (chassis, joints) for record `index` and returns the
/// record. Joint draws inside a singular band, witnesses outside the reach
/// annulus and witnesses the oracle rejects are redrawn.
DatasetRecord generate_record(std::uint64_t index, std::uint64_t seed, const DataGenConfig& cfg,
                              const RobotModel& robot);

DatasetFile generate_dataset(std::size_t n, std::uint64_t seed, const DataGenConfig& cfg, const RobotModel& robot);

/// 17 significant digits; parses back to the same double.
std::string format_double(double v);

void write_dataset(std::ostream& os, const DatasetFile& file);
void save_dataset(const std::filesystem::path& path, const DatasetFile& file);
/// Throws DataError on malformed input, version mismatch, or when the DH hash
/// differs from `table`.
DatasetFile read_dataset(std::istream& is, const DHTable& table);
DatasetFile load_dataset(const std::filesystem::path& path, const DHTable& table);

struct DatasetSplit {
  std::vector<DatasetRecord> train, val, test;
};

/// Seeded shuffle then cut. Fractions must be nonnegative and sum to 1; any
/// empty part throws std::invalid_argument.
DatasetSplit split_dataset(const std::vector<DatasetRecord>& records, std::array<double, 3> fractions,
                           std::uint64_t seed);

}  // namespace kinet
