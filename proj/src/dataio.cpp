#include "kinet/dataio.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "kinet/rng.hpp"

namespace kinet {

void Bounds2::validate() const {
  if (!(std::isfinite(x_min) && std::isfinite(x_max) && std::isfinite(y_min) && std::isfinite(y_max)) ||
      !(x_max > x_min) || !(y_max > y_min))
    throw std::invalid_argument("workspace bounds must be finite and non-degenerate");
}

void DataGenConfig::validate() const {
  chassis_bounds.validate();
  for (std::size_t j = 0; j < 6; ++j)
    if (!(joint_lo[j] < joint_hi[j]) || joint_lo[j] < -kPi || joint_hi[j] > kPi)
      throw std::invalid_argument("joint sampling range " + std::to_string(j + 1) + " must lie inside [-pi, pi]");
  if (!(singular_band >= 0.0)) throw std::invalid_argument("singular band must be nonnegative");
  if (max_draws_per_record == 0) throw std::invalid_argument("max_draws_per_record must be positive");
}

DatasetRecord generate_record(std::uint64_t index, std::uint64_t seed, const DataGenConfig& cfg,
                              const RobotModel& robot) {
  Rng rng(seed, Stream::Data, index);
  const Bounds2& b = cfg.chassis_bounds;
  for (std::size_t draw = 0; draw < cfg.max_draws_per_record; ++draw) {
    DatasetRecord r;
    r.task_id = index;
    r.witness_chassis.x = rng.uniform(b.x_min, b.x_max);
    r.witness_chassis.y = rng.uniform(b.y_min, b.y_max);
    r.witness_chassis.psi = wrap_angle(rng.uniform(-kPi, kPi));
    for (std::size_t j = 0; j < 6; ++j) r.witness_joints[j] = rng.uniform(cfg.joint_lo[j], cfg.joint_hi[j]);
    if (near_singular(r.witness_joints, robot.table, cfg.singular_band)) continue;

    const HomTransform h = world_fk(r.witness_chassis, r.witness_joints, robot.mount, robot.table);
    const PoseExtraction<double> e = hom_to_pose(h);
    if (e.gimbal_degenerate) continue;
    r.target = normalized(e.pose);
    if (!robot.reach.contains(base_to_target_radius(r.witness_chassis, r.target, robot.mount))) continue;
    if (!chassis_verdict(r.witness_chassis, r.target, robot).valid) continue;
    return r;
  }
  throw std::runtime_error("no acceptable witness for record " + std::to_string(index) + " after " +
                           std::to_string(cfg.max_draws_per_record) + " draws");
}

DatasetFile generate_dataset(std::size_t n, std::uint64_t seed, const DataGenConfig& cfg, const RobotModel& robot) {
  if (n == 0) throw std::invalid_argument("dataset size must be at least 1");
  cfg.validate();
  robot.table.validate();
  DatasetFile f;
  f.seed = seed;
  f.dh_hash = robot.table.hash_hex();
  f.mount = robot.mount.transform;
  f.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) f.records.push_back(generate_record(i, seed, cfg, robot));
  return f;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

constexpr const char* kMagic = "# kinet-dataset";
constexpr const char* kColumns =
    "task_id,phi,theta,psi,x,y,z,chassis_psi,chassis_x,chassis_y,q1,q2,q3,q4,q5,q6";

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t k = s.find(',', start);
    out.push_back(s.substr(start, k == std::string::npos ? std::string::npos : k - start));
    if (k == std::string::npos) break;
    start = k + 1;
  }
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
    throw DataError("malformed number '" + s + "'", line);
  return v;
}

std::uint64_t parse_u64(const std::string& s, std::size_t line, int base = 10) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
    throw DataError("malformed integer '" + s + "'", line);
  return v;
}

std::string header_value(const std::string& text, const std::string& key, std::size_t line) {
  const std::string prefix = "# " + key + "=";
  if (text.rfind(prefix, 0) != 0) throw DataError("expected header '" + key + "'", line);
  return text.substr(prefix.size());
}

}  // namespace

void write_dataset(std::ostream& os, const DatasetFile& file) {
  os << kMagic << " v" << file.version << "\n";
  os << "# seed=" << file.seed << "\n";
  os << "# dh_hash=" << file.dh_hash << "\n";
  os << "# mount=";
  for (int k = 0; k < 9; ++k) os << format_double(file.mount.R[k]) << ",";
  os << format_double(file.mount.p[0]) << "," << format_double(file.mount.p[1]) << ","
     << format_double(file.mount.p[2]) << "\n";
  os << "# count=" << file.records.size() << "\n";
  os << kColumns << "\n";
  for (const DatasetRecord& r : file.records) {
    os << r.task_id;
    for (double v : r.target.values()) os << "," << format_double(v);
    os << "," << format_double(r.witness_chassis.psi) << "," << format_double(r.witness_chassis.x) << ","
       << format_double(r.witness_chassis.y);
    for (double v : r.witness_joints) os << "," << format_double(v);
    os << "\n";
  }
}

void save_dataset(const std::filesystem::path& path, const DatasetFile& file) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  write_dataset(os, file);
  if (!os) throw DataError("write failed for " + path.string());
}

DatasetFile read_dataset(std::istream& is, const DHTable& table) {
  DatasetFile f;
  std::string text;
  std::size_t line = 0;
  auto next = [&](const char* what) {
    if (!std::getline(is, text)) throw DataError(std::string("unexpected end of file, expected ") + what, line + 1);
    ++line;
  };

  next("format header");
  const std::string magic = std::string(kMagic) + " v";
  if (text.rfind(magic, 0) != 0) throw DataError("not a kinet dataset", line);
  f.version = static_cast<int>(parse_u64(text.substr(magic.size()), line));
  if (f.version != DatasetFile::kVersion)
    throw DataError("unsupported dataset version " + std::to_string(f.version), line);

  next("seed");
  f.seed = parse_u64(header_value(text, "seed", line), line);
  next("dh_hash");
  f.dh_hash = header_value(text, "dh_hash", line);
  if (f.dh_hash != table.hash_hex())
    throw DataError("dataset DH hash " + f.dh_hash + " does not match the robot table " + table.hash_hex(), line);
  next("mount");
  const auto m = split_commas(header_value(text, "mount", line));
  if (m.size() != 12) throw DataError("mount needs 12 values", line);
  for (int k = 0; k < 9; ++k) f.mount.R[k] = parse_double(m[k], line);
  for (int k = 0; k < 3; ++k) f.mount.p[k] = parse_double(m[9 + k], line);
  next("count");
  const std::uint64_t count = parse_u64(header_value(text, "count", line), line);
  next("column header");
  if (text != kColumns) throw DataError("unexpected column header", line);

  f.records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    next("record");
    const auto cells = split_commas(text);
    if (cells.size() != 16)
      throw DataError("expected 16 fields, found " + std::to_string(cells.size()), line);
    DatasetRecord r;
    r.task_id = parse_u64(cells[0], line);
    std::array<double, 15> v{};
    for (std::size_t k = 0; k < 15; ++k) v[k] = parse_double(cells[k + 1], line);
    r.target = pose_from_array({v[0], v[1], v[2], v[3], v[4], v[5]});
    r.witness_chassis = {v[6], v[7], v[8]};
    for (std::size_t j = 0; j < 6; ++j) r.witness_joints[j] = v[9 + j];
    f.records.push_back(r);
  }
  while (std::getline(is, text)) {
    ++line;
    if (!text.empty()) throw DataError("trailing content after " + std::to_string(count) + " records", line);
  }
  return f;
}

DatasetFile load_dataset(const std::filesystem::path& path, const DHTable& table) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  return read_dataset(is, table);
}

DatasetSplit split_dataset(const std::vector<DatasetRecord>& records, std::array<double, 3> fractions,
                           std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw std::invalid_argument("split fractions must be nonnegative");
    total += f;
  }
  if (std::fabs(total - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");

  const std::size_t n = records.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed, Stream::Split);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_val = std::min(n - std::min(n, n_train),
                              static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n))));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n)
    throw std::invalid_argument("split of " + std::to_string(n) + " records leaves an empty part");

  DatasetSplit s;
  for (std::size_t i = 0; i < n; ++i) {
    auto& part = i < n_train ? s.train : (i < n_train + n_val ? s.val : s.test);
    part.push_back(records[order[i]]);
  }
  return s;
}

}  // namespace kinet
