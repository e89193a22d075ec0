#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "chinv/config.hpp"
#include "chinv/errors.hpp"
#include "chinv/fem.hpp"
#include "chinv/field.hpp"
#include "chinv/mesh.hpp"
#include "chinv/nn.hpp"
#include "chinv/report.hpp"
#include "chinv/run.hpp"
#include "chinv/trace.hpp"
#include "doctest.h"
#include "helpers.hpp"
#include "json.hpp"

using namespace chinv;
using chinv::testing::temp_dir;
using chinv::testing::tiny_config;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  return line;
}

trace::TraceRow row(long step, long acc, double misfit, int lvl,
                    const field::GlobalState& s) {
  trace::TraceRow r;
  r.step = step;
  r.accepted_total = acc;
  r.misfit = misfit;
  r.level_reached = lvl;
  r.state = s;
  return r;
}

field::GlobalState st(int x) { return field::GlobalState{{{x, 9, 8, 2}}}; }

// Writes a trace + meta pair the report helpers can consume.
void write_pair(const std::string& dir, const std::vector<trace::TraceRow>& rows,
                const trace::RunMeta& meta) {
  trace::write_trace_csv(dir + "/trace.csv", rows);
  trace::write_meta_json(dir + "/meta.json", meta);
}

}  // namespace

TEST_SUITE_BEGIN("harness");

TEST_CASE("state strings round trip") {
  const field::GlobalState two{{{10, 16, 22, 3}, {8, 20, 22, 3}}};
  CHECK(trace::state_to_string(two) == "10,16,22,3;8,20,22,3");
  CHECK(trace::state_from_string("10,16,22,3;8,20,22,3") == two);
  CHECK(trace::state_from_string(trace::state_to_string(st(5))) == st(5));
  CHECK_THROWS_AS(trace::state_from_string("1,2,3"), DataError);
  CHECK_THROWS_AS(trace::state_from_string("a,b,c,d"), DataError);
}

TEST_CASE("trace csv round trips with the exact column order") {
  const std::string dir = temp_dir("trace_roundtrip");
  std::vector<trace::TraceRow> rows;
  rows.push_back(row(0, 0, 2.25, 2, st(8)));
  rows.push_back(row(1, 1, 0.12345678901234567, 1, st(7)));
  trace::TraceRow timed = row(2, 1, 1e-12, 0, {{{1, 2, 3, 4}, {5, 6, 7, 8}}});
  timed.wall_ms = 17.5;
  rows.push_back(timed);

  const std::string path = dir + "/trace.csv";
  trace::write_trace_csv(path, rows);
  CHECK(first_line(path) ==
        "step,accepted_total,misfit,level_reached,wall_ms,state");

  const std::vector<trace::TraceRow> back = trace::read_trace_csv(path);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].step == rows[i].step);
    CHECK(back[i].accepted_total == rows[i].accepted_total);
    CHECK(back[i].misfit == rows[i].misfit);
    CHECK(back[i].level_reached == rows[i].level_reached);
    CHECK(back[i].wall_ms == rows[i].wall_ms);
    CHECK(back[i].state == rows[i].state);
  }

  CHECK_THROWS_AS(trace::read_trace_csv(dir + "/nope.csv"), IoError);
  {
    std::ofstream bad(dir + "/bad.csv");
    bad << "step,misfit\n";
  }
  CHECK_THROWS_AS(trace::read_trace_csv(dir + "/bad.csv"), DataError);
}

TEST_CASE("rl update rows and run meta round trip") {
  const std::string dir = temp_dir("sidecar_roundtrip");
  std::vector<trace::RlUpdateRow> ups;
  trace::RlUpdateRow u;
  u.update = 1;
  u.agent = 0;
  u.critic_loss = 0.5;
  u.actor_loss = -0.25;
  u.probe_probs = {0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125, 0.125};
  ups.push_back(u);
  u.update = 2;
  u.agent = 1;
  u.probe_probs[0] = 0.9;
  ups.push_back(u);
  trace::write_rl_updates_csv(dir + "/rl_updates.csv", ups);
  const auto back = trace::read_rl_updates_csv(dir + "/rl_updates.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[0].update == 1);
  CHECK(back[1].agent == 1);
  CHECK(back[0].critic_loss == 0.5);
  CHECK(back[0].actor_loss == -0.25);
  REQUIRE(back[1].probe_probs.size() == 8);
  CHECK(back[1].probe_probs[0] == 0.9);
  CHECK(back[0].probe_probs[3] == 0.125);

  trace::RunMeta m;
  m.experiment = "tiny";
  m.method = "erlmcmc";
  m.seed = 99;
  m.steps_total = 10;
  m.accepted_total = 4;
  m.final_misfit = 0.75;
  m.threshold = 1.5;
  m.sigma_f = 0.25;
  m.steps_to_threshold = 6;
  m.accepted_to_threshold = 3;
  m.stalls = 1;
  m.updates_total = 5;
  m.wall_ms_total = 123.5;
  m.final_state = "4,9,8,2";
  trace::write_meta_json(dir + "/meta.json", m);
  const trace::RunMeta back_m = trace::read_meta_json(dir + "/meta.json");
  CHECK(back_m.experiment == m.experiment);
  CHECK(back_m.method == m.method);
  CHECK(back_m.seed == m.seed);
  CHECK(back_m.steps_total == m.steps_total);
  CHECK(back_m.accepted_total == m.accepted_total);
  CHECK(back_m.final_misfit == m.final_misfit);
  CHECK(back_m.threshold == m.threshold);
  CHECK(back_m.sigma_f == m.sigma_f);
  CHECK(back_m.steps_to_threshold == m.steps_to_threshold);
  CHECK(back_m.accepted_to_threshold == m.accepted_to_threshold);
  CHECK(back_m.stalls == m.stalls);
  CHECK(back_m.updates_total == m.updates_total);
  CHECK(back_m.wall_ms_total == m.wall_ms_total);
  CHECK(back_m.final_state == m.final_state);
}

TEST_CASE("a zero-step run emits just the initial row") {
  config::ExperimentConfig cfg = tiny_config();
  cfg.max_steps = 0;
  const run::RunResult res = run::run_experiment(cfg, "");
  REQUIRE(res.rows.size() == 1);
  CHECK(res.rows[0].step == 0);
  CHECK(res.rows[0].accepted_total == 0);
  CHECK(res.rows[0].level_reached == 2);  // one coarse level plus fine
  CHECK(res.rows[0].misfit > 0);
  CHECK(res.rows[0].state == field::GlobalState{cfg.initial_channels});
  CHECK(res.meta.steps_total == 0);
  CHECK(res.meta.steps_to_threshold == -1);
  CHECK(res.meta.final_misfit == res.rows[0].misfit);
  CHECK(res.meta.final_state == "8,9,8,2");
  CHECK(res.updates.empty());
}

TEST_CASE("auto noise and threshold derive from the coarse model error") {
  config::ExperimentConfig cfg = tiny_config();
  cfg.max_steps = 0;
  cfg.threshold = 0.0;  // auto
  const run::RunResult res = run::run_experiment(cfg, "");
  CHECK(res.meta.sigma_f > 0);
  CHECK(res.meta.threshold ==
        doctest::Approx(1.5 * res.meta.sigma_f).epsilon(1e-12));

  config::ExperimentConfig pinned = tiny_config();
  pinned.max_steps = 0;
  pinned.sigma_f = 0.123;
  const run::RunResult res2 = run::run_experiment(pinned, "");
  CHECK(res2.meta.sigma_f == 0.123);
  CHECK(res2.meta.threshold == -1.0);
}

TEST_CASE("an immediately satisfied threshold stops the run at step zero") {
  config::ExperimentConfig cfg = tiny_config();
  cfg.max_steps = 50;
  cfg.threshold = 1e18;
  const run::RunResult res = run::run_experiment(cfg, "");
  CHECK(res.meta.steps_total == 0);
  CHECK(res.meta.steps_to_threshold == 0);
  CHECK(res.meta.accepted_to_threshold == 0);
  CHECK(res.meta.threshold == 1e18);
  CHECK(res.rows.size() == 1);
}

TEST_CASE("identical seeds give byte-identical artifacts") {
  config::ExperimentConfig cfg = tiny_config();
  cfg.method = config::Method::Erlmcmc;
  cfg.seed = 7;
  const std::string a = temp_dir("repro_a");
  const std::string b = temp_dir("repro_b");
  run::run_experiment(cfg, a);
  run::run_experiment(cfg, b);
  CHECK(slurp(a + "/trace.csv") == slurp(b + "/trace.csv"));
  CHECK(slurp(a + "/rl_updates.csv") == slurp(b + "/rl_updates.csv"));
  CHECK(slurp(a + "/buffer.txt") == slurp(b + "/buffer.txt"));
  CHECK(slurp(a + "/config.json") == slurp(b + "/config.json"));
}

TEST_CASE("an untrained policy chain replays the plain chain bit for bit") {
  config::ExperimentConfig base = tiny_config();
  base.max_steps = 1;
  base.rl.buffer_init = 0;
  base.seed = 3;

  config::ExperimentConfig plain = base;
  plain.method = config::Method::Mcmc;
  config::ExperimentConfig policy = base;
  policy.method = config::Method::Rlmcmc;

  const std::string a = temp_dir("first_step_mcmc");
  const std::string b = temp_dir("first_step_rlmcmc");
  const run::RunResult ra = run::run_experiment(plain, a);
  const run::RunResult rb = run::run_experiment(policy, b);
  CHECK(ra.meta.steps_total == 1);
  CHECK(rb.meta.steps_total == 1);
  CHECK(slurp(a + "/trace.csv") == slurp(b + "/trace.csv"));
}

TEST_CASE("recorded misfits match an independent fine-solver evaluation") {
  config::ExperimentConfig cfg = tiny_config();
  cfg.max_steps = 12;
  cfg.seed = 11;
  const run::RunResult res = run::run_experiment(cfg, "");

  const mesh::GridHierarchy grid =
      mesh::build_hierarchy(cfg.grid.fine_n, cfg.grid.coarse_n);
  fem::ProblemSpec spec;
  spec.t_final = cfg.grid.t_final;
  spec.nt = cfg.grid.nt;
  spec.source.boxes = cfg.sources;
  fem::FineSolver fine(&grid, spec);
  const fem::WellObservation f_obs =
      fine.observe(field::rasterize(field::GlobalState{cfg.field.target_channels},
                                    grid, cfg.field.contrast,
                                    cfg.field.background));
  for (const trace::TraceRow& r : res.rows) {
    const double m = fem::misfit(
        fine.observe(field::rasterize(r.state, grid, cfg.field.contrast,
                                      cfg.field.background)),
        f_obs);
    CHECK(r.misfit == doctest::Approx(m).epsilon(1e-12));
  }
}

TEST_CASE("run artifacts land on disk and echo the config") {
  config::ExperimentConfig cfg = tiny_config();
  cfg.method = config::Method::Erlmcmc;
  cfg.max_steps = 4;
  const std::string dir = temp_dir("artifacts_rl");
  const run::RunResult res = run::run_experiment(cfg, dir);

  CHECK(config::load_config_file(dir + "/config.json") == cfg);
  CHECK(trace::read_trace_csv(dir + "/trace.csv").size() == res.rows.size());
  const trace::RunMeta meta = trace::read_meta_json(dir + "/meta.json");
  CHECK(meta.experiment == "tiny");
  CHECK(meta.method == "erlmcmc");
  CHECK(meta.steps_total == res.meta.steps_total);
  CHECK(meta.accepted_total == res.meta.accepted_total);
  CHECK(meta.updates_total == static_cast<long>(res.updates.size()));

  const nlohmann::json fin = nlohmann::json::parse(slurp(dir + "/final_state.json"));
  CHECK(fin.at("state").get<std::string>() == meta.final_state);

  for (const char* name : {"policy_0.txt", "critic_0.txt", "target_0.txt"}) {
    std::ifstream in(dir + "/checkpoints/" + name);
    REQUIRE(in.good());
    const nn::Mlp net = nn::Mlp::load(in);
    CHECK(net.n_params() > 0);
  }
  CHECK(fs::exists(dir + "/buffer.txt"));
  CHECK(trace::read_rl_updates_csv(dir + "/rl_updates.csv").size() ==
        res.updates.size());

  // A plain chain leaves no rl sidecars behind.
  config::ExperimentConfig plain = tiny_config();
  plain.max_steps = 2;
  const std::string pdir = temp_dir("artifacts_plain");
  run::run_experiment(plain, pdir);
  CHECK(fs::exists(pdir + "/trace.csv"));
  CHECK_FALSE(fs::exists(pdir + "/rl_updates.csv"));
  CHECK_FALSE(fs::exists(pdir + "/buffer.txt"));
}

TEST_CASE("training updates log the probe distribution") {
  config::ExperimentConfig cfg = tiny_config();
  cfg.method = config::Method::Erlmcmc;
  cfg.max_steps = 6;
  const run::RunResult res = run::run_experiment(cfg, "");
  REQUIRE(!res.updates.empty());
  CHECK(res.meta.updates_total == static_cast<long>(res.updates.size()));
  for (std::size_t i = 0; i < res.updates.size(); ++i) {
    const trace::RlUpdateRow& u = res.updates[i];
    CHECK(u.update == static_cast<long>(i) + 1);
    CHECK(u.agent == 0);
    REQUIRE(u.probe_probs.size() == 8);
    double sum = 0;
    for (double p : u.probe_probs) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::isfinite(u.critic_loss));
    CHECK(u.critic_loss >= 0.0);
    CHECK(std::isfinite(u.actor_loss));
  }
}

TEST_CASE("pure policy runs accept every move") {
  config::ExperimentConfig cfg = tiny_config();
  cfg.method = config::Method::Rlmcmc;
  cfg.pure_rl = true;
  cfg.rl.max_traj = 3;
  cfg.max_steps = 100;  // trajectory budget binds first
  const run::RunResult res = run::run_experiment(cfg, "");
  CHECK(res.meta.steps_total == 3);
  CHECK(res.meta.accepted_total == 3);
  REQUIRE(res.rows.size() == 4);
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    CHECK(res.rows[i].step == static_cast<long>(i));
    CHECK(res.rows[i].accepted_total == static_cast<long>(i));
    CHECK(res.rows[i].level_reached == 2);
  }
}

TEST_CASE("proposal audits pass on a live mixed chain") {
  config::ExperimentConfig cfg = tiny_config();
  cfg.method = config::Method::Erlmcmc;
  cfg.audit_proposals = true;
  cfg.max_steps = 5;
  const run::RunResult res = run::run_experiment(cfg, "");
  CHECK(res.meta.steps_total == 5);
}

TEST_CASE("summaries recompute the crossing from the rows") {
  const std::string dir = temp_dir("summary_recompute");
  std::vector<trace::TraceRow> rows;
  rows.push_back(row(0, 0, 5.0, 2, st(8)));
  rows.push_back(row(1, 1, 3.0, 2, st(7)));
  rows.push_back(row(2, 1, 2.0, 0, st(7)));
  rows.push_back(row(3, 2, 4.0, 2, st(6)));
  trace::RunMeta meta;
  meta.experiment = "hand";
  meta.method = "mcmc";
  meta.seed = 5;
  meta.threshold = 2.5;
  meta.steps_to_threshold = -1;  // deliberately wrong; rows win
  meta.wall_ms_total = 7.5;
  write_pair(dir, rows, meta);

  const report::TraceSummary s = report::summarize_trace(dir + "/trace.csv");
  CHECK(s.experiment == "hand");
  CHECK(s.method == "mcmc");
  CHECK(s.seed == 5);
  CHECK(s.steps_total == 3);
  CHECK(s.accepted_total == 2);
  CHECK(s.final_misfit == 4.0);
  CHECK(s.steps_to_threshold == 2);
  CHECK(s.accepted_to_threshold == 1);
  CHECK(s.wall_ms == 7.5);

  // A disabled threshold reports no crossing however low the misfit gets.
  trace::RunMeta off = meta;
  off.threshold = -1.0;
  const std::string dir2 = temp_dir("summary_disabled");
  write_pair(dir2, rows, off);
  CHECK(report::summarize_trace(dir2 + "/trace.csv").steps_to_threshold == -1);

  const std::string dir3 = temp_dir("summary_empty");
  write_pair(dir3, {}, meta);
  CHECK_THROWS_AS(report::summarize_trace(dir3 + "/trace.csv"), DataError);
}

TEST_CASE("median handles both parities and empty input") {
  CHECK(report::median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(report::median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(report::median({7.0}) == 7.0);
  CHECK(std::isnan(report::median({})));
}

TEST_CASE("compare aggregates per method and rejects mismatches") {
  config::ExperimentConfig cfg = tiny_config();
  cfg.max_steps = 6;
  const std::string d1 = temp_dir("cmp_mcmc1");
  const std::string d2 = temp_dir("cmp_mcmc2");
  const std::string d3 = temp_dir("cmp_rl");
  cfg.seed = 1;
  run::run_experiment(cfg, d1);
  cfg.seed = 2;
  run::run_experiment(cfg, d2);
  config::ExperimentConfig rlcfg = cfg;
  rlcfg.method = config::Method::Erlmcmc;
  rlcfg.seed = 1;
  run::run_experiment(rlcfg, d3);

  const std::vector<std::string> paths{d1 + "/trace.csv", d2 + "/trace.csv",
                                       d3 + "/trace.csv"};
  const report::Comparison c = report::compare_traces(paths);
  CHECK(c.experiment == "tiny");
  REQUIRE(c.runs.size() == 3);
  REQUIRE(c.aggregates.size() == 2);
  CHECK(c.aggregates[0].method == "mcmc");
  CHECK(c.aggregates[0].runs == 2);
  CHECK(c.aggregates[1].method == "erlmcmc");
  CHECK(c.aggregates[1].runs == 1);
  const double acc1 = static_cast<double>(c.runs[0].accepted_total);
  const double acc2 = static_cast<double>(c.runs[1].accepted_total);
  CHECK(c.aggregates[0].median_accepted == 0.5 * (acc1 + acc2));
  // Disabled threshold: no crossing, medians saturate at +inf.
  CHECK(std::isinf(c.aggregates[0].median_steps_to_threshold));

  // Duplicates are fine and collapse to the same summary.
  const report::Comparison dup =
      report::compare_traces({paths[0], paths[0]});
  CHECK(dup.aggregates[0].median_accepted == acc1);

  CHECK_THROWS_AS(report::compare_traces({paths[0]}), ContractError);

  config::ExperimentConfig other = cfg;
  other.experiment = "other";
  const std::string d4 = temp_dir("cmp_other");
  run::run_experiment(other, d4);
  CHECK_THROWS_AS(
      report::compare_traces({paths[0], d4 + "/trace.csv"}), ContractError);

  const std::string table = report::comparison_table(c);
  CHECK(table.find("tiny") != std::string::npos);
  for (const char* quoted :
       {"289", "8060.6", "191", "7274.6", "349", "9680.4", "383", "174", "347"})
    CHECK(table.find(quoted) != std::string::npos);

  const std::string csv = temp_dir("cmp_csv") + "/comparison.csv";
  report::write_comparison_csv(csv, c);
  CHECK(slurp(csv).find("median,") != std::string::npos);

  const std::string svg = temp_dir("cmp_svg") + "/overlay.svg";
  report::write_overlay_svg(svg, paths);
  const std::string body = slurp(svg);
  CHECK(body.find("<svg") != std::string::npos);
  CHECK(body.find("<polyline") != std::string::npos);

  const std::string empty_dir = temp_dir("cmp_empty_trace");
  trace::write_trace_csv(empty_dir + "/trace.csv", {});
  CHECK_THROWS_AS(
      report::write_overlay_svg(empty_dir + "/overlay.svg",
                                {empty_dir + "/trace.csv"}),
      DataError);
}

TEST_SUITE_END();
