#include "kinet/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace kinet {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(out))
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  int out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || r.ec != std::errc() || r.ptr != v.data() + v.size())
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& v, std::size_t n) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  if (out.size() != n) throw ConfigError(key + ": expected " + std::to_string(n) + " comma-separated numbers");
  return out;
}

std::string join(const double* v, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

struct Field {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

Field number(std::string key, double& ref) {
  return {key, [&ref] { return format_double(ref); }, [&ref, key](const std::string& v) { ref = to_double(key, v); }};
}
Field integer(std::string key, int& ref) {
  return {key, [&ref] { return std::to_string(ref); }, [&ref, key](const std::string& v) { ref = to_int(key, v); }};
}
Field seed(std::string key, std::uint64_t& ref) {
  return {key, [&ref] { return std::to_string(ref); }, [&ref, key](const std::string& v) { ref = to_u64(key, v); }};
}
Field size(std::string key, std::size_t& ref) {
  return {key, [&ref] { return std::to_string(ref); },
          [&ref, key](const std::string& v) { ref = static_cast<std::size_t>(to_u64(key, v)); }};
}
Field flag(std::string key, bool& ref) {
  return {key, [&ref] { return std::string(ref ? "true" : "false"); },
          [&ref, key](const std::string& v) { ref = to_bool(key, v); }};
}
Field bounds(std::string key, Bounds2& b) {
  return {key,
          [&b] {
            const double v[4] = {b.x_min, b.x_max, b.y_min, b.y_max};
            return join(v, 4);
          },
          [&b, key](const std::string& v) {
            const auto l = to_list(key, v, 4);
            b = {l[0], l[1], l[2], l[3]};
          }};
}

std::vector<Field> fields(RunConfig& c) {
  std::vector<Field> f;
  f.push_back({"robot.dh",
               [&c] {
                 std::vector<double> v;
                 for (const DHRow& r : c.table.rows()) v.insert(v.end(), {r.a, r.d, r.alpha, r.theta_offset});
                 return join(v.data(), v.size());
               },
               [&c](const std::string& v) {
                 const auto l = to_list("robot.dh", v, 24);
                 std::array<DHRow, 6> rows;
                 for (std::size_t i = 0; i < 6; ++i) rows[i] = {l[4 * i], l[4 * i + 1], l[4 * i + 2], l[4 * i + 3]};
                 c.table = DHTable(rows);
               }});
  f.push_back({"robot.mount",
               [&c] {
                 std::vector<double> v(c.mount.transform.R.begin(), c.mount.transform.R.end());
                 v.insert(v.end(), c.mount.transform.p.begin(), c.mount.transform.p.end());
                 return join(v.data(), v.size());
               },
               [&c](const std::string& v) {
                 const auto l = to_list("robot.mount", v, 12);
                 for (int k = 0; k < 9; ++k) c.mount.transform.R[k] = l[k];
                 for (int k = 0; k < 3; ++k) c.mount.transform.p[k] = l[9 + k];
               }});
  f.push_back(size("annulus.samples", c.annulus.samples));
  f.push_back(number("annulus.margin", c.annulus.margin));
  f.push_back(seed("annulus.seed", c.annulus.seed));

  f.push_back(seed("data.seed", c.data_seed));
  f.push_back(bounds("data.chassis_bounds", c.data.chassis_bounds));
  f.push_back({"data.joint_range",
               [&c] {
                 std::vector<double> v(c.data.joint_lo.begin(), c.data.joint_lo.end());
                 v.insert(v.end(), c.data.joint_hi.begin(), c.data.joint_hi.end());
                 return join(v.data(), v.size());
               },
               [&c](const std::string& v) {
                 const auto l = to_list("data.joint_range", v, 12);
                 for (std::size_t j = 0; j < 6; ++j) {
                   c.data.joint_lo[j] = l[j];
                   c.data.joint_hi[j] = l[6 + j];
                 }
               }});
  f.push_back(number("data.singular_band", c.data.singular_band));
  f.push_back(size("data.max_draws_per_record", c.data.max_draws_per_record));
  f.push_back({"split.fractions", [&c] { return join(c.split.data(), 3); },
               [&c](const std::string& v) {
                 const auto l = to_list("split.fractions", v, 3);
                 c.split = {l[0], l[1], l[2]};
               }});
  f.push_back(seed("split.seed", c.split_seed));

  TrainConfig& t = c.train;
  f.push_back({"train.case", [&t] { return std::to_string(t.stochasticity_case); },
               [&t](const std::string& v) {
                 try {
                   t.apply_case(to_int("train.case", v));
                 } catch (const std::invalid_argument& e) {
                   throw ConfigError(std::string("train.case: ") + e.what());
                 }
               }});
  f.push_back(integer("train.epochs", t.epochs));
  f.push_back(integer("train.batch_size", t.batch_size));
  f.push_back(number("train.lr", t.adam.lr));
  f.push_back(number("train.beta1", t.adam.beta1));
  f.push_back(number("train.beta2", t.adam.beta2));
  f.push_back(number("train.eps", t.adam.eps));
  f.push_back(number("train.lr_final_factor", t.lr_final_factor));
  f.push_back(number("train.grad_clip", t.grad_clip));
  f.push_back(seed("train.seed", t.seed));
  f.push_back(number("train.position_threshold", t.train_position_threshold));
  f.push_back(integer("train.eval_every", t.eval_every));
  f.push_back(integer("train.hidden1", t.hidden[1]));
  f.push_back(integer("train.hidden2", t.hidden[2]));

  LossWeights& w = t.weights;
  f.push_back(number("loss.illroot", w.illroot));
  f.push_back(number("loss.outdom", w.outdom));
  f.push_back(number("loss.illsolu", w.illsolu));
  f.push_back(number("loss.idesolu", w.idesolu));
  f.push_back(number("loss.pre_error", w.pre_error));
  f.push_back(number("loss.distance", w.distance));
  f.push_back(number("loss.orien", w.orien));
  f.push_back(flag("loss.U", w.U));

  f.push_back(number("dropout.rate", t.dropout.rate));
  f.push_back(flag("dropout.train", t.dropout.active_in_training));
  f.push_back(flag("dropout.infer", t.dropout.active_in_inference));

  f.push_back(number("heads.input_scale", t.heads.input_scale));
  f.push_back(number("heads.offset_scale", t.heads.offset_scale));
  f.push_back(number("heads.prior_x", t.heads.prior_x));
  f.push_back(number("heads.prior_y", t.heads.prior_y));

  SamplerConfig& s = c.sampler;
  f.push_back(bounds("sampler.bounds", s.bounds));
  f.push_back({"sampler.rs_heading",
               [&s] { return std::string(s.rs_heading == HeadingPolicy::uniform ? "uniform" : "face_target"); },
               [&s](const std::string& v) {
                 if (v == "uniform")
                   s.rs_heading = HeadingPolicy::uniform;
                 else if (v == "face_target")
                   s.rs_heading = HeadingPolicy::face_target;
                 else
                   throw ConfigError("sampler.rs_heading: expected uniform or face_target, got '" + v + "'");
               }});
  f.push_back(number("sampler.ebs_mean_factor", s.ebs_mean_factor));
  f.push_back(number("sampler.ebs_sigma", s.ebs_sigma));
  f.push_back(number("sampler.ebs_heading_sigma", s.ebs_heading_sigma));
  f.push_back(seed("sampler.seed", s.seed));

  DLSConfig& d = c.dls;
  f.push_back(number("dls.lambda", d.lambda));
  f.push_back(number("dls.position_tolerance", d.position_tolerance));
  f.push_back(number("dls.rotation_tolerance", d.rotation_tolerance));
  f.push_back(integer("dls.max_iterations", d.max_iterations));
  f.push_back(number("dls.fd_step", d.fd_step));
  f.push_back({"dls.seed_policy", [&d] { return std::string(d.seed_policy == SeedPolicy::zero ? "zero" : "uniform"); },
               [&d](const std::string& v) {
                 if (v == "zero")
                   d.seed_policy = SeedPolicy::zero;
                 else if (v == "uniform")
                   d.seed_policy = SeedPolicy::uniform;
                 else
                   throw ConfigError("dls.seed_policy: expected zero or uniform, got '" + v + "'");
               }});

  f.push_back(integer("bench.repetitions", c.bench.repetitions));
  f.push_back(seed("bench.seed", c.bench.seed));
  f.push_back(size("bench.whole_body_rs_tasks", c.bench.whole_body_rs_tasks));
  f.push_back(number("bench.time_cap_ms", c.time_cap_ms));
  f.push_back(integer("infer.max_attempts", c.learned_max_attempts));
  f.push_back(seed("eval.seed", c.eval_seed));
  return f;
}

}  // namespace

void RunConfig::validate() const {
  auto check = [](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string(section) + ": " + e.what());
    }
  };
  check("robot", [&] { table.validate(); });
  check("annulus", [&] {
    if (annulus.samples == 0) throw std::invalid_argument("samples must be positive");
    if (!(annulus.margin >= 0.0)) throw std::invalid_argument("margin must be nonnegative");
  });
  check("data", [&] { data.validate(); });
  check("split", [&] {
    double sum = 0.0;
    for (double v : split) {
      if (!(v >= 0.0)) throw std::invalid_argument("fractions must be nonnegative");
      sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw std::invalid_argument("fractions must sum to 1");
  });
  check("train", [&] { train.validate(); });
  check("sampler", [&] { sampler.validate(); });
  check("dls", [&] { dls.validate(); });
  check("bench", [&] {
    if (bench.repetitions < 1) throw std::invalid_argument("repetitions must be at least 1");
    if (!(time_cap_ms > 0.0)) throw std::invalid_argument("time cap must be positive");
  });
  check("infer", [&] {
    if (learned_max_attempts < 1) throw std::invalid_argument("max_attempts must be at least 1");
  });
}

RobotModel RunConfig::robot() const {
  RobotModel r;
  r.table = table;
  r.mount = mount;
  r.reach = derive_annulus(table, mount, annulus);
  return r;
}

PipelineContext RunConfig::pipeline_context() const {
  PipelineContext ctx;
  ctx.robot = robot();
  ctx.sampler = sampler;
  ctx.dls = dls;
  ctx.learned_max_attempts = learned_max_attempts;
  ctx.time_cap_ms = time_cap_ms;
  return ctx;
}

std::map<std::string, std::string> parse_key_values(std::istream& is) {
  std::map<std::string, std::string> kv;
  std::string text, section;
  std::size_t line = 0;
  while (std::getline(is, text)) {
    ++line;
    const auto hash = text.find('#');
    if (hash != std::string::npos) text.resize(hash);
    text = trim(text);
    if (text.empty()) continue;
    const std::string where = " (line " + std::to_string(line) + ")";
    if (text.front() == '[') {
      if (text.back() != ']' || text.size() < 3) throw ConfigError("malformed section header" + where);
      section = trim(text.substr(1, text.size() - 2));
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value" + where);
    const std::string key = trim(text.substr(0, eq));
    if (key.empty()) throw ConfigError("empty key" + where);
    const std::string full = section.empty() ? key : section + "." + key;
    if (!kv.emplace(full, trim(text.substr(eq + 1))).second) throw ConfigError("duplicate key " + full + where);
  }
  return kv;
}

void apply_key_values(RunConfig& cfg, const std::map<std::string, std::string>& kv) {
  std::vector<Field> f = fields(cfg);
  // The case resets dropout flags and epochs, so it goes first.
  if (auto it = kv.find("train.case"); it != kv.end())
    for (Field& field : f)
      if (field.key == "train.case") field.set(it->second);
  for (const auto& [key, value] : kv) {
    if (key == "train.case") continue;
    auto it = std::find_if(f.begin(), f.end(), [&](const Field& x) { return x.key == key; });
    if (it == f.end()) throw ConfigError("unknown key " + key);
    try {
      it->set(value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(key + ": " + e.what());
    }
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  RunConfig cfg;
  apply_key_values(cfg, parse_key_values(is));
  cfg.validate();
  return cfg;
}

void write_run_config(std::ostream& os, const RunConfig& cfg) {
  RunConfig copy = cfg;
  for (const Field& f : fields(copy)) os << f.key << " = " << f.get() << "\n";
}

}  // namespace kinet
