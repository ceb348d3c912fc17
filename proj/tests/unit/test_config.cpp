#include <doctest.h>

#include <sstream>

#include "kinet/config.hpp"

using namespace kinet;

namespace {

std::map<std::string, std::string> parse(const std::string& text) {
  std::istringstream is(text);
  return parse_key_values(is);
}

}  // namespace

TEST_CASE("key/value parsing") {
  const auto kv = parse("# comment\nseed_top = 3\n[train]\nlr = 1e-4   # trailing\n\nepochs=7\n[dls]\nlambda = 0.1\n");
  CHECK(kv.at("seed_top") == "3");
  CHECK(kv.at("train.lr") == "1e-4");
  CHECK(kv.at("train.epochs") == "7");
  CHECK(kv.at("dls.lambda") == "0.1");
}

TEST_CASE("syntax errors carry the line number") {
  auto message = [](const std::string& text) {
    try {
      parse(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("[train]\nlr 3\n").find("line 2") != std::string::npos);
  CHECK(message("[train\n").find("line 1") != std::string::npos);
  CHECK(message("a = 1\nb = 2\na = 3\n").find("duplicate key a") != std::string::npos);
}

TEST_CASE("applying keys") {
  RunConfig cfg;
  apply_key_values(cfg, parse("[train]\nepochs = 12\ncase = 1\nlr = 2e-4\n[sampler]\nebs_sigma = 0.25\n"
                              "rs_heading = face_target\n[dropout]\nrate = 0.1\n[loss]\nU = false\n"));
  // the case is applied first so explicit epochs win
  CHECK(cfg.train.epochs == 12);
  CHECK_FALSE(cfg.train.dropout.active_in_training);
  CHECK(cfg.train.adam.lr == 2e-4);
  CHECK(cfg.sampler.ebs_sigma == 0.25);
  CHECK(cfg.sampler.rs_heading == HeadingPolicy::face_target);
  CHECK(cfg.train.dropout.rate == 0.1);
  CHECK_FALSE(cfg.train.weights.U);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("bad keys and values are configuration errors") {
  RunConfig cfg;
  CHECK_THROWS_AS(apply_key_values(cfg, parse("train.nope = 1\n")), ConfigError);
  CHECK_THROWS_AS(apply_key_values(cfg, parse("train.lr = fast\n")), ConfigError);
  CHECK_THROWS_AS(apply_key_values(cfg, parse("train.epochs = 3.5\n")), ConfigError);
  CHECK_THROWS_AS(apply_key_values(cfg, parse("robot.dh = 1,2,3\n")), ConfigError);
  CHECK_THROWS_AS(apply_key_values(cfg, parse("dropout.train = maybe\n")), ConfigError);
  CHECK_THROWS_AS(apply_key_values(cfg, parse("train.case = 5\n")), ConfigError);
  RunConfig bad;
  bad.train.dropout.rate = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  RunConfig badtable;
  apply_key_values(badtable, parse("robot.dh = 0,0.1807,0,0, -0.6127,0,0,0, -0.57155,0,0,0, 0,0.17415,1.5707963267948966,0,"
                                   " 0,0.11985,-1.5707963267948966,0, 0,0.11655,0,0\n"));
  CHECK_THROWS_AS(badtable.validate(), ConfigError);
}

TEST_CASE("written configuration reads back identically") {
  RunConfig cfg;
  cfg.train.adam.lr = 0.1 + 0.2;  // not exactly representable in short decimal
  cfg.sampler.bounds = {-4.4, 4.4, -4.0, 4.5};
  cfg.bench.whole_body_rs_tasks = 10;
  cfg.dls.seed_policy = SeedPolicy::zero;
  std::ostringstream a;
  write_run_config(a, cfg);
  RunConfig back;
  std::istringstream is(a.str());
  apply_key_values(back, parse_key_values(is));
  std::ostringstream b;
  write_run_config(b, back);
  CHECK(a.str() == b.str());
  CHECK(back.train.adam.lr == cfg.train.adam.lr);
  CHECK(back.dls.seed_policy == SeedPolicy::zero);
}

TEST_CASE("pipeline context takes the configured caps") {
  RunConfig cfg;
  cfg.annulus.samples = 20000;
  cfg.time_cap_ms = 1234.0;
  cfg.learned_max_attempts = 7;
  const PipelineContext ctx = cfg.pipeline_context();
  CHECK(ctx.time_cap_ms == 1234.0);
  CHECK(ctx.learned_max_attempts == 7);
  CHECK(ctx.robot.reach.r_max > 1.0);
}
