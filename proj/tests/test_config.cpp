#include <filesystem>
#include <fstream>
#include <string>

#include "chinv/config.hpp"
#include "chinv/errors.hpp"
#include "chinv/experiment.hpp"
#include "chinv/field.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace chinv;
using chinv::testing::tiny_config;
using config::ExperimentConfig;

namespace {

// Runs the parser and reports whether the ConfigError mentions the token.
bool rejects_mentioning(const std::string& json_text, const std::string& token) {
  try {
    config::parse_config(json_text);
  } catch (const ConfigError& e) {
    return std::string(e.what()).find(token) != std::string::npos;
  }
  return false;
}

}  // namespace

TEST_SUITE_BEGIN("config");

TEST_CASE("method names round trip") {
  CHECK(config::method_from_name("mcmc") == config::Method::Mcmc);
  CHECK(config::method_from_name("rlmcmc") == config::Method::Rlmcmc);
  CHECK(config::method_from_name("erlmcmc") == config::Method::Erlmcmc);
  for (auto m : {config::Method::Mcmc, config::Method::Rlmcmc,
                 config::Method::Erlmcmc})
    CHECK(config::method_from_name(config::method_name(m)) == m);
  CHECK_THROWS_AS(config::method_from_name("hmc"), ConfigError);
}

TEST_CASE("an empty document parses to the defaults") {
  const ExperimentConfig parsed = config::parse_config("{}");
  CHECK(parsed == ExperimentConfig{});
  CHECK(parsed.levels == std::vector<int>{2, 4});
  CHECK(parsed.allowed_actions.size() == 8);
  CHECK(parsed.rl.batch == 32);
  CHECK(parsed.deterministic_trace);
}

TEST_CASE("serialize then parse is the identity") {
  for (const std::string name : {"exp1", "exp2_onechannel", "exp3_diagonal"}) {
    const ExperimentConfig cfg = config::build_experiment(name);
    CHECK(config::parse_config(config::serialize_config(cfg)) == cfg);
  }
  ExperimentConfig cfg = tiny_config();
  cfg.method = config::Method::Erlmcmc;
  cfg.seed = 123456789012345ULL;
  cfg.audit_proposals = true;
  CHECK(config::parse_config(config::serialize_config(cfg)) == cfg);
}

TEST_CASE("a fully explicit document sets every field") {
  const char* text = R"({
    "experiment": "custom",
    "method": "erlmcmc",
    "seed": 42,
    "max_steps": 7,
    "grid": {"fine_n": 20, "coarse_n": 4, "nt": 5, "t_final": 0.25},
    "field": {
      "contrast": 800.0,
      "background": 2.0,
      "target_channels": [{"x": 4, "y": 9, "w": 8, "d": 2}],
      "target_segments": []
    },
    "sources": [{"x0": 0.1, "y0": 0.4, "x1": 0.3, "y1": 0.6, "amplitude": 10.0}],
    "levels": [1, 2, 3],
    "sigma_f": 0.5,
    "threshold": 2.5,
    "threshold_channels": [{"x": 5, "y": 9, "w": 8, "d": 2}],
    "initial_channels": [{"x": 8, "y": 9, "w": 8, "d": 2}],
    "allowed_actions": ["shift_left", "stretch_h"],
    "pure_rl": true,
    "deterministic_trace": false,
    "audit_proposals": true,
    "rl": {
      "gamma": 0.8, "lr_actor": 2.0, "lr_critic": 0.25, "batch": 16,
      "tau_target": 0.5, "c1": 0.9, "c2": 0.05, "p_rl": 0.6,
      "buffer_capacity": 5000, "buffer_init": 100, "max_traj": 50,
      "retry_cap": 10, "hidden": 12, "critic_local": true
    }
  })";
  const ExperimentConfig cfg = config::parse_config(text);
  CHECK(cfg.experiment == "custom");
  CHECK(cfg.method == config::Method::Erlmcmc);
  CHECK(cfg.seed == 42);
  CHECK(cfg.max_steps == 7);
  CHECK(cfg.grid == config::GridConfig{20, 4, 5, 0.25});
  CHECK(cfg.field.contrast == 800.0);
  CHECK(cfg.field.background == 2.0);
  REQUIRE(cfg.field.target_channels.size() == 1);
  CHECK(cfg.field.target_channels[0] == field::ChannelRect{4, 9, 8, 2});
  CHECK(cfg.field.target_segments.empty());
  REQUIRE(cfg.sources.size() == 1);
  CHECK(cfg.sources[0].amplitude == 10.0);
  CHECK(cfg.levels == std::vector<int>{1, 2, 3});
  CHECK(cfg.sigma_f == 0.5);
  CHECK(cfg.threshold == 2.5);
  CHECK(cfg.threshold_channels[0] == field::ChannelRect{5, 9, 8, 2});
  CHECK(cfg.initial_channels[0] == field::ChannelRect{8, 9, 8, 2});
  CHECK(cfg.allowed_actions ==
        std::vector<field::ActionId>{field::ActionId::ShiftLeft,
                                     field::ActionId::StretchH});
  CHECK(cfg.pure_rl);
  CHECK_FALSE(cfg.deterministic_trace);
  CHECK(cfg.audit_proposals);
  CHECK(cfg.rl.gamma == 0.8);
  CHECK(cfg.rl.batch == 16);
  CHECK(cfg.rl.critic_local);
  CHECK(config::parse_config(config::serialize_config(cfg)) == cfg);
  config::validate(cfg);
}

TEST_CASE("unknown keys are rejected by name at every nesting level") {
  CHECK(rejects_mentioning(R"({"bogus": 1})", "bogus"));
  CHECK(rejects_mentioning(R"({"grid": {"fine_m": 40}})", "fine_m"));
  CHECK(rejects_mentioning(R"({"field": {"contrasts": 2}})", "contrasts"));
  CHECK(rejects_mentioning(R"({"rl": {"lr": 0.1}})", "'lr'"));
  CHECK(rejects_mentioning(
      R"({"initial_channels": [{"x": 1, "y": 1, "w": 2, "h": 2}]})", "'h'"));
  CHECK(rejects_mentioning(
      R"({"sources": [{"x0": 0, "y0": 0, "x1": 1, "y1": 1, "amp": 3}]})",
      "amp"));
  CHECK(rejects_mentioning(
      R"({"field": {"target_segments": [{"x0": 0, "y0": 0, "x1": 1, "y1": 1, "width": 0.1}]}})",
      "width"));
}

TEST_CASE("malformed documents and values raise config errors") {
  CHECK_THROWS_AS(config::parse_config("{"), ConfigError);
  CHECK_THROWS_AS(config::parse_config("[1, 2]"), ConfigError);
  CHECK(rejects_mentioning(R"({"max_steps": "lots"})", "max_steps"));
  CHECK(rejects_mentioning(R"({"levels": "all"})", "levels"));
  CHECK(rejects_mentioning(R"({"allowed_actions": ["sideways"]})", "sideways"));
  CHECK_THROWS_AS(config::parse_config(R"({"method": "gibbs"})"), ConfigError);
  CHECK_THROWS_AS(config::parse_config(R"({"sources": 3})"), ConfigError);
}

TEST_CASE("validation accepts the shipped presets and the tiny fixture") {
  config::validate(tiny_config());
  config::validate(config::build_experiment("exp1"));
  config::validate(config::build_experiment("exp2_onechannel"));
  config::validate(config::build_experiment("exp3_diagonal"));
}

TEST_CASE("validation names the offending cross-field constraint") {
  auto broken = [](auto mutate) {
    ExperimentConfig cfg = tiny_config();
    mutate(cfg);
    return cfg;
  };
  CHECK_THROWS_AS(
      config::validate(broken([](auto& c) { c.grid.fine_n = 2; })), ConfigError);
  CHECK_THROWS_AS(
      config::validate(broken([](auto& c) { c.grid.coarse_n = 3; })),
      ConfigError);
  CHECK_THROWS_AS(
      config::validate(broken([](auto& c) { c.grid.coarse_n = 1; })),
      ConfigError);
  CHECK_THROWS_AS(config::validate(broken([](auto& c) { c.grid.nt = 0; })),
                  ConfigError);
  CHECK_THROWS_AS(
      config::validate(broken([](auto& c) { c.grid.t_final = 0.0; })),
      ConfigError);
  CHECK_THROWS_AS(config::validate(broken([](auto& c) { c.max_steps = -1; })),
                  ConfigError);
  CHECK_THROWS_AS(
      config::validate(broken([](auto& c) { c.field.contrast = 0.0; })),
      ConfigError);
  CHECK_THROWS_AS(
      config::validate(broken([](auto& c) { c.field.background = -1.0; })),
      ConfigError);
  CHECK_THROWS_AS(config::validate(broken([](auto& c) {
                    c.field.target_segments = {{0.1, 0.2, 0.6, 0.35, 0.04}};
                  })),
                  ConfigError);  // both target kinds set
  CHECK_THROWS_AS(config::validate(broken([](auto& c) {
                    c.field.target_channels.clear();
                  })),
                  ConfigError);  // neither target kind set
  CHECK_THROWS_AS(config::validate(broken([](auto& c) { c.sources.clear(); })),
                  ConfigError);
  CHECK_THROWS_AS(config::validate(broken([](auto& c) {
                    c.sources[0].x1 = c.sources[0].x0;
                  })),
                  ConfigError);
  CHECK_THROWS_AS(config::validate(broken([](auto& c) { c.levels.clear(); })),
                  ConfigError);
  CHECK_THROWS_AS(config::validate(broken([](auto& c) { c.levels = {0}; })),
                  ConfigError);
  CHECK_THROWS_AS(
      config::validate(broken([](auto& c) { c.initial_channels.clear(); })),
      ConfigError);
  CHECK_THROWS_AS(config::validate(broken([](auto& c) {
                    c.initial_channels = {{15, 9, 8, 2}};  // x + w > fine_n
                  })),
                  StateError);
  CHECK_THROWS_AS(config::validate(broken([](auto& c) {
                    c.threshold_channels = {{1, 1, 2, 2}, {5, 5, 2, 2}};
                  })),
                  ConfigError);  // count differs from initial_channels
  CHECK_THROWS_AS(config::validate(broken([](auto& c) {
                    c.field.target_channels = {{1, 1, 2, 2}, {5, 5, 2, 2}};
                  })),
                  ConfigError);  // count differs from initial_channels
  CHECK_THROWS_AS(
      config::validate(broken([](auto& c) { c.allowed_actions.clear(); })),
      ConfigError);
  CHECK_THROWS_AS(config::validate(broken([](auto& c) { c.sigma_f = -0.5; })),
                  ConfigError);
  CHECK_THROWS_AS(config::validate(broken([](auto& c) { c.rl.gamma = 1.0; })),
                  ContractError);
}

TEST_CASE("segment targets need an explicit threshold or stand-in channels") {
  auto seg_cfg = [] {
    ExperimentConfig cfg = tiny_config();
    cfg.field.target_channels.clear();
    cfg.field.target_segments = {{0.1, 0.2, 0.6, 0.35, 0.04}};
    return cfg;
  };
  ExperimentConfig auto_thr = seg_cfg();
  CHECK_THROWS_AS(config::validate(auto_thr), ConfigError);

  ExperimentConfig no_thr = seg_cfg();
  no_thr.threshold = -1.0;
  config::validate(no_thr);

  ExperimentConfig standins = seg_cfg();
  standins.threshold_channels = {{4, 9, 8, 2}};
  config::validate(standins);
}

TEST_CASE("experiment presets pin the published setups") {
  const ExperimentConfig e1 = config::build_experiment("exp1");
  CHECK(e1.grid == config::GridConfig{40, 8, 20, 1.0});
  REQUIRE(e1.sources.size() == 4);
  CHECK(e1.sources[0].amplitude == 20.0);
  CHECK(e1.sources[1].amplitude == -5.0);
  CHECK(e1.field.target_channels ==
        std::vector<field::ChannelRect>{{4, 10, 22, 3}, {14, 26, 22, 3}});
  CHECK(e1.initial_channels ==
        std::vector<field::ChannelRect>{{10, 16, 22, 3}, {8, 20, 22, 3}});
  CHECK(e1.levels == std::vector<int>{2, 4});
  CHECK(e1.max_steps == 2000);
  CHECK(e1.method == config::Method::Mcmc);
  CHECK_FALSE(e1.pure_rl);
  CHECK(e1.rl.lr_actor == 8.0);
  CHECK(e1.rl.lr_critic == 0.5);
  CHECK(e1.rl.tau_target == 0.0);
  CHECK(e1.rl.batch == 64);
  CHECK(e1.rl.buffer_init == 1000);

  const ExperimentConfig e2 = config::build_experiment("exp2_onechannel");
  CHECK(e2.allowed_actions ==
        std::vector<field::ActionId>{field::ActionId::ShiftLeft,
                                     field::ActionId::ShiftRight});
  CHECK(e2.levels == std::vector<int>{4});
  CHECK(e2.method == config::Method::Rlmcmc);
  CHECK(e2.pure_rl);
  CHECK(e2.threshold == -1.0);
  CHECK(e2.max_steps == 100000);
  CHECK(e2.field.target_channels ==
        std::vector<field::ChannelRect>{{6, 18, 8, 4}});
  CHECK(e2.initial_channels == std::vector<field::ChannelRect>{{26, 18, 8, 4}});
  CHECK(e2.rl.max_traj == 500);
  CHECK(e2.rl.lr_actor == 3.0);
  CHECK(e2.rl.tau_target == 0.0);

  const ExperimentConfig e3 = config::build_experiment("exp3_diagonal");
  CHECK(e3.field.target_channels.empty());
  REQUIRE(e3.field.target_segments.size() == 2);
  CHECK(e3.field.target_segments[0].half_width == 0.04);
  CHECK(e3.threshold_channels.size() == 2);
  CHECK(e3.initial_channels.size() == 2);
  CHECK(e3.max_steps == 2500);
  CHECK(e3.sources == config::build_experiment("exp1").sources);

  CHECK_THROWS_AS(config::build_experiment("exp9"), ConfigError);
}

TEST_CASE("config files round trip through disk") {
  const std::string dir = chinv::testing::temp_dir("config_roundtrip");
  ExperimentConfig cfg = config::build_experiment("exp1");
  cfg.seed = 9;
  cfg.method = config::Method::Erlmcmc;
  const std::string path = dir + "/cfg.json";
  {
    std::ofstream out(path);
    out << config::serialize_config(cfg);
  }
  CHECK(config::load_config_file(path) == cfg);
  CHECK_THROWS_AS(config::load_config_file(dir + "/missing.json"), IoError);
}

TEST_SUITE_END();
