#include "chinv/trace.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "chinv/errors.hpp"
#include "json.hpp"

namespace chinv::trace {

namespace {

constexpr const char* kTraceHeader =
    "step,accepted_total,misfit,level_reached,wall_ms,state";

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const char* what) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw DataError(std::string("bad ") + what + " value '" + s + "'");
  return v;
}

long parse_long(const std::string& s, const char* what) {
  long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw DataError(std::string("bad ") + what + " value '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t at = s.find(sep, start);
    if (at == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, at - start));
    start = at + 1;
  }
}

}  // namespace

std::string state_to_string(const field::GlobalState& s) {
  std::string out;
  for (std::size_t i = 0; i < s.channels.size(); ++i) {
    const auto& c = s.channels[i];
    if (i) out += ';';
    out += std::to_string(c.x) + ',' + std::to_string(c.y) + ',' +
           std::to_string(c.w) + ',' + std::to_string(c.d);
  }
  return out;
}

field::GlobalState state_from_string(const std::string& text) {
  field::GlobalState s;
  for (const std::string& group : split(text, ';')) {
    const std::vector<std::string> parts = split(group, ',');
    if (parts.size() != 4)
      throw DataError("bad state group '" + group + "' (need x,y,w,d)");
    field::ChannelRect c;
    c.x = static_cast<int>(parse_long(parts[0], "state x"));
    c.y = static_cast<int>(parse_long(parts[1], "state y"));
    c.w = static_cast<int>(parse_long(parts[2], "state w"));
    c.d = static_cast<int>(parse_long(parts[3], "state d"));
    s.channels.push_back(c);
  }
  return s;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write trace '" + path + "'");
  out << kTraceHeader << "\n";
  for (const TraceRow& r : rows)
    out << r.step << ',' << r.accepted_total << ',' << fmt(r.misfit) << ','
        << r.level_reached << ',' << fmt(r.wall_ms) << ",\""
        << state_to_string(r.state) << "\"\n";
  if (!out) throw IoError("trace write failed for '" + path + "'");
}

std::vector<TraceRow> read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read trace '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kTraceHeader)
    throw DataError("trace '" + path + "' has an unexpected header");
  std::vector<TraceRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> parts = split(line, ',');
    if (parts.size() < 6)
      throw DataError("trace '" + path + "' row has too few columns: " + line);
    TraceRow r;
    r.step = parse_long(parts[0], "step");
    r.accepted_total = parse_long(parts[1], "accepted_total");
    r.misfit = parse_double(parts[2], "misfit");
    r.level_reached = static_cast<int>(parse_long(parts[3], "level_reached"));
    r.wall_ms = parse_double(parts[4], "wall_ms");
    std::string state = parts[5];
    for (std::size_t i = 6; i < parts.size(); ++i) state += ',' + parts[i];
    if (state.size() < 2 || state.front() != '"' || state.back() != '"')
      throw DataError("trace '" + path + "' state field is not quoted: " + state);
    r.state = state_from_string(state.substr(1, state.size() - 2));
    rows.push_back(r);
  }
  return rows;
}

void write_rl_updates_csv(const std::string& path,
                          const std::vector<RlUpdateRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write rl updates '" + path + "'");
  out << "update,agent,critic_loss,actor_loss";
  const std::size_t n_probe = rows.empty() ? field::kNumActions
                                           : rows.front().probe_probs.size();
  for (std::size_t a = 0; a < n_probe; ++a)
    out << ",p_" << field::action_name(static_cast<field::ActionId>(a));
  out << "\n";
  for (const RlUpdateRow& r : rows) {
    out << r.update << ',' << r.agent << ',' << fmt(r.critic_loss) << ','
        << fmt(r.actor_loss);
    for (double p : r.probe_probs) out << ',' << fmt(p);
    out << "\n";
  }
  if (!out) throw IoError("rl updates write failed for '" + path + "'");
}

std::vector<RlUpdateRow> read_rl_updates_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read rl updates '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw DataError("rl updates '" + path + "' is empty");
  std::vector<RlUpdateRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> parts = split(line, ',');
    if (parts.size() < 4)
      throw DataError("rl updates '" + path + "' row too short: " + line);
    RlUpdateRow r;
    r.update = parse_long(parts[0], "update");
    r.agent = static_cast<int>(parse_long(parts[1], "agent"));
    r.critic_loss = parse_double(parts[2], "critic_loss");
    r.actor_loss = parse_double(parts[3], "actor_loss");
    for (std::size_t i = 4; i < parts.size(); ++i)
      r.probe_probs.push_back(parse_double(parts[i], "probe probability"));
    rows.push_back(r);
  }
  return rows;
}

void write_meta_json(const std::string& path, const RunMeta& meta) {
  nlohmann::json j;
  j["experiment"] = meta.experiment;
  j["method"] = meta.method;
  j["seed"] = meta.seed;
  j["steps_total"] = meta.steps_total;
  j["accepted_total"] = meta.accepted_total;
  j["final_misfit"] = meta.final_misfit;
  j["threshold"] = meta.threshold;
  j["sigma_f"] = meta.sigma_f;
  j["steps_to_threshold"] = meta.steps_to_threshold;
  j["accepted_to_threshold"] = meta.accepted_to_threshold;
  j["stalls"] = meta.stalls;
  j["updates_total"] = meta.updates_total;
  j["wall_ms_total"] = meta.wall_ms_total;
  j["final_state"] = meta.final_state;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write meta '" + path + "'");
  out << j.dump(2) << "\n";
}

RunMeta read_meta_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read meta '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("meta '" + path + "' is not valid JSON: " + e.what());
  }
  RunMeta m;
  m.experiment = j.value("experiment", std::string{});
  m.method = j.value("method", std::string{});
  m.seed = j.value("seed", std::uint64_t{0});
  m.steps_total = j.value("steps_total", 0L);
  m.accepted_total = j.value("accepted_total", 0L);
  m.final_misfit = j.value("final_misfit", 0.0);
  m.threshold = j.value("threshold", 0.0);
  m.sigma_f = j.value("sigma_f", 0.0);
  m.steps_to_threshold = j.value("steps_to_threshold", -1L);
  m.accepted_to_threshold = j.value("accepted_to_threshold", -1L);
  m.stalls = j.value("stalls", 0L);
  m.updates_total = j.value("updates_total", 0L);
  m.wall_ms_total = j.value("wall_ms_total", 0.0);
  m.final_state = j.value("final_state", std::string{});
  return m;
}

}  // namespace chinv::trace
