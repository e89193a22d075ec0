#include "chinv/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "chinv/errors.hpp"
#include "json.hpp"

namespace chinv::config {

using nlohmann::json;

Method method_from_name(const std::string& name) {
  if (name == "mcmc") return Method::Mcmc;
  if (name == "rlmcmc") return Method::Rlmcmc;
  if (name == "erlmcmc") return Method::Erlmcmc;
  throw ConfigError("unknown method '" + name + "' (mcmc|rlmcmc|erlmcmc)");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::Mcmc: return "mcmc";
    case Method::Rlmcmc: return "rlmcmc";
    default: return "erlmcmc";
  }
}

namespace {

void require_keys(const json& j, std::initializer_list<const char*> allowed,
                  const std::string& ctx) {
  if (!j.is_object()) throw ConfigError(ctx + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) known = known || it.key() == k;
    if (!known)
      throw ConfigError("unknown key '" + it.key() + "' in " + ctx);
  }
}

template <typename T>
void get_to(const json& j, const char* key, T& out, const std::string& ctx) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + std::string(key) + "' in " + ctx +
                      ": " + e.what());
  }
}

field::ChannelRect parse_rect(const json& j, const std::string& ctx) {
  require_keys(j, {"x", "y", "w", "d"}, ctx);
  field::ChannelRect r;
  get_to(j, "x", r.x, ctx);
  get_to(j, "y", r.y, ctx);
  get_to(j, "w", r.w, ctx);
  get_to(j, "d", r.d, ctx);
  return r;
}

json rect_json(const field::ChannelRect& r) {
  return json{{"x", r.x}, {"y", r.y}, {"w", r.w}, {"d", r.d}};
}

std::vector<field::ChannelRect> parse_rects(const json& j, const std::string& ctx) {
  if (!j.is_array()) throw ConfigError(ctx + " must be an array");
  std::vector<field::ChannelRect> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(parse_rect(j[i], ctx + "[" + std::to_string(i) + "]"));
  return out;
}

fem::SourceBox parse_source(const json& j, const std::string& ctx) {
  require_keys(j, {"x0", "y0", "x1", "y1", "amplitude"}, ctx);
  fem::SourceBox b;
  get_to(j, "x0", b.x0, ctx);
  get_to(j, "y0", b.y0, ctx);
  get_to(j, "x1", b.x1, ctx);
  get_to(j, "y1", b.y1, ctx);
  get_to(j, "amplitude", b.amplitude, ctx);
  return b;
}

field::SegmentSpec parse_segment(const json& j, const std::string& ctx) {
  require_keys(j, {"x0", "y0", "x1", "y1", "half_width"}, ctx);
  field::SegmentSpec s;
  get_to(j, "x0", s.x0, ctx);
  get_to(j, "y0", s.y0, ctx);
  get_to(j, "x1", s.x1, ctx);
  get_to(j, "y1", s.y1, ctx);
  get_to(j, "half_width", s.half_width, ctx);
  return s;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse failure: ") + e.what());
  }
  require_keys(j,
               {"experiment", "method", "seed", "max_steps", "grid", "field",
                "sources", "levels", "sigma_f", "threshold",
                "threshold_channels", "initial_channels", "allowed_actions",
                "pure_rl", "deterministic_trace", "audit_proposals", "rl"},
               "config");

  ExperimentConfig cfg;
  get_to(j, "experiment", cfg.experiment, "config");
  if (j.contains("method"))
    cfg.method = method_from_name(j.at("method").get<std::string>());
  get_to(j, "seed", cfg.seed, "config");
  get_to(j, "max_steps", cfg.max_steps, "config");

  if (j.contains("grid")) {
    const json& g = j.at("grid");
    require_keys(g, {"fine_n", "coarse_n", "nt", "t_final"}, "grid");
    get_to(g, "fine_n", cfg.grid.fine_n, "grid");
    get_to(g, "coarse_n", cfg.grid.coarse_n, "grid");
    get_to(g, "nt", cfg.grid.nt, "grid");
    get_to(g, "t_final", cfg.grid.t_final, "grid");
  }

  if (j.contains("field")) {
    const json& f = j.at("field");
    require_keys(f, {"contrast", "background", "target_channels",
                     "target_segments"},
                 "field");
    get_to(f, "contrast", cfg.field.contrast, "field");
    get_to(f, "background", cfg.field.background, "field");
    if (f.contains("target_channels"))
      cfg.field.target_channels =
          parse_rects(f.at("target_channels"), "field.target_channels");
    if (f.contains("target_segments")) {
      const json& segs = f.at("target_segments");
      if (!segs.is_array())
        throw ConfigError("field.target_segments must be an array");
      for (std::size_t i = 0; i < segs.size(); ++i)
        cfg.field.target_segments.push_back(parse_segment(
            segs[i], "field.target_segments[" + std::to_string(i) + "]"));
    }
  }

  if (j.contains("sources")) {
    const json& srcs = j.at("sources");
    if (!srcs.is_array()) throw ConfigError("sources must be an array");
    for (std::size_t i = 0; i < srcs.size(); ++i)
      cfg.sources.push_back(
          parse_source(srcs[i], "sources[" + std::to_string(i) + "]"));
  }

  get_to(j, "levels", cfg.levels, "config");
  get_to(j, "sigma_f", cfg.sigma_f, "config");
  get_to(j, "threshold", cfg.threshold, "config");
  if (j.contains("threshold_channels"))
    cfg.threshold_channels =
        parse_rects(j.at("threshold_channels"), "threshold_channels");
  if (j.contains("initial_channels"))
    cfg.initial_channels =
        parse_rects(j.at("initial_channels"), "initial_channels");

  if (j.contains("allowed_actions")) {
    cfg.allowed_actions.clear();
    const json& acts = j.at("allowed_actions");
    if (!acts.is_array()) throw ConfigError("allowed_actions must be an array");
    for (const json& a : acts) {
      const std::string name = a.get<std::string>();
      const auto id = field::action_from_name(name);
      if (!id) throw ConfigError("unknown action '" + name + "'");
      cfg.allowed_actions.push_back(*id);
    }
  }

  get_to(j, "pure_rl", cfg.pure_rl, "config");
  get_to(j, "deterministic_trace", cfg.deterministic_trace, "config");
  get_to(j, "audit_proposals", cfg.audit_proposals, "config");

  if (j.contains("rl")) {
    const json& r = j.at("rl");
    require_keys(r,
                 {"gamma", "lr_actor", "lr_critic", "batch", "tau_target", "c1",
                  "c2", "p_rl", "buffer_capacity", "buffer_init", "max_traj",
                  "retry_cap", "hidden", "critic_local"},
                 "rl");
    get_to(r, "gamma", cfg.rl.gamma, "rl");
    get_to(r, "lr_actor", cfg.rl.lr_actor, "rl");
    get_to(r, "lr_critic", cfg.rl.lr_critic, "rl");
    get_to(r, "batch", cfg.rl.batch, "rl");
    get_to(r, "tau_target", cfg.rl.tau_target, "rl");
    get_to(r, "c1", cfg.rl.c1, "rl");
    get_to(r, "c2", cfg.rl.c2, "rl");
    get_to(r, "p_rl", cfg.rl.p_rl, "rl");
    get_to(r, "buffer_capacity", cfg.rl.buffer_capacity, "rl");
    get_to(r, "buffer_init", cfg.rl.buffer_init, "rl");
    get_to(r, "max_traj", cfg.rl.max_traj, "rl");
    get_to(r, "retry_cap", cfg.rl.retry_cap, "rl");
    get_to(r, "hidden", cfg.rl.hidden, "rl");
    get_to(r, "critic_local", cfg.rl.critic_local, "rl");
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  json j;
  j["experiment"] = cfg.experiment;
  j["method"] = method_name(cfg.method);
  j["seed"] = cfg.seed;
  j["max_steps"] = cfg.max_steps;
  j["grid"] = {{"fine_n", cfg.grid.fine_n},
               {"coarse_n", cfg.grid.coarse_n},
               {"nt", cfg.grid.nt},
               {"t_final", cfg.grid.t_final}};
  json channels = json::array();
  for (const auto& r : cfg.field.target_channels) channels.push_back(rect_json(r));
  json segments = json::array();
  for (const auto& s : cfg.field.target_segments)
    segments.push_back({{"x0", s.x0},
                        {"y0", s.y0},
                        {"x1", s.x1},
                        {"y1", s.y1},
                        {"half_width", s.half_width}});
  j["field"] = {{"contrast", cfg.field.contrast},
                {"background", cfg.field.background},
                {"target_channels", channels},
                {"target_segments", segments}};
  json sources = json::array();
  for (const auto& b : cfg.sources)
    sources.push_back({{"x0", b.x0},
                       {"y0", b.y0},
                       {"x1", b.x1},
                       {"y1", b.y1},
                       {"amplitude", b.amplitude}});
  j["sources"] = sources;
  j["levels"] = cfg.levels;
  j["sigma_f"] = cfg.sigma_f;
  j["threshold"] = cfg.threshold;
  json thr = json::array();
  for (const auto& r : cfg.threshold_channels) thr.push_back(rect_json(r));
  j["threshold_channels"] = thr;
  json init = json::array();
  for (const auto& r : cfg.initial_channels) init.push_back(rect_json(r));
  j["initial_channels"] = init;
  json acts = json::array();
  for (field::ActionId a : cfg.allowed_actions)
    acts.push_back(field::action_name(a));
  j["allowed_actions"] = acts;
  j["pure_rl"] = cfg.pure_rl;
  j["deterministic_trace"] = cfg.deterministic_trace;
  j["audit_proposals"] = cfg.audit_proposals;
  j["rl"] = {{"gamma", cfg.rl.gamma},
             {"lr_actor", cfg.rl.lr_actor},
             {"lr_critic", cfg.rl.lr_critic},
             {"batch", cfg.rl.batch},
             {"tau_target", cfg.rl.tau_target},
             {"c1", cfg.rl.c1},
             {"c2", cfg.rl.c2},
             {"p_rl", cfg.rl.p_rl},
             {"buffer_capacity", cfg.rl.buffer_capacity},
             {"buffer_init", cfg.rl.buffer_init},
             {"max_traj", cfg.rl.max_traj},
             {"retry_cap", cfg.rl.retry_cap},
             {"hidden", cfg.rl.hidden},
             {"critic_local", cfg.rl.critic_local}};
  return j.dump(2) + "\n";
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.grid.fine_n < 3)
    throw ConfigError("grid.fine_n must be >= 3");
  if (cfg.grid.coarse_n < 2 || cfg.grid.fine_n % cfg.grid.coarse_n != 0)
    throw ConfigError("grid.coarse_n must be >= 2 and divide fine_n");
  if (cfg.grid.nt < 1 || !(cfg.grid.t_final > 0))
    throw ConfigError("grid.nt must be >= 1 and t_final positive");
  if (cfg.max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (!(cfg.field.contrast > 0) || !(cfg.field.background > 0))
    throw ConfigError("field contrast and background must be positive");
  const bool rects = !cfg.field.target_channels.empty();
  const bool segs = !cfg.field.target_segments.empty();
  if (rects == segs)
    throw ConfigError(
        "field: exactly one of target_channels/target_segments required");
  if (segs && cfg.threshold_channels.empty() && cfg.threshold == 0.0)
    throw ConfigError(
        "threshold_channels required for the automatic threshold with "
        "segment targets");
  if (cfg.sources.empty()) throw ConfigError("sources must be non-empty");
  for (std::size_t i = 0; i < cfg.sources.size(); ++i) {
    const auto& b = cfg.sources[i];
    if (!(b.x1 > b.x0) || !(b.y1 > b.y0))
      throw ConfigError("sources[" + std::to_string(i) + "] box is empty");
  }
  if (cfg.levels.empty()) throw ConfigError("levels must be non-empty");
  for (int li : cfg.levels)
    if (li < 1) throw ConfigError("levels entries must be >= 1");
  if (cfg.initial_channels.empty())
    throw ConfigError("initial_channels must be non-empty");
  field::validate_state(field::GlobalState{cfg.initial_channels},
                        cfg.grid.fine_n);
  if (rects)
    field::validate_state(field::GlobalState{cfg.field.target_channels},
                          cfg.grid.fine_n);
  if (!cfg.threshold_channels.empty()) {
    field::validate_state(field::GlobalState{cfg.threshold_channels},
                          cfg.grid.fine_n);
    if (cfg.threshold_channels.size() != cfg.initial_channels.size())
      throw ConfigError("threshold_channels count differs from initial_channels");
  }
  if (rects && cfg.field.target_channels.size() != cfg.initial_channels.size())
    throw ConfigError("target_channels count differs from initial_channels");
  if (cfg.allowed_actions.empty())
    throw ConfigError("allowed_actions must be non-empty");
  if (cfg.sigma_f < 0) throw ConfigError("sigma_f must be >= 0 (0 = auto)");
  rl::validate(cfg.rl);
}

}  // namespace chinv::config
