#include "chinv/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "chinv/errors.hpp"
#include "chinv/trace.hpp"

namespace chinv::report {

namespace {

namespace fs = std::filesystem;

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string num(double v, int precision = 6) {
  if (std::isinf(v)) return "none";
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

std::string ord(long v) { return v < 0 ? "none" : std::to_string(v); }

double ord_value(long v) { return v < 0 ? kInf : static_cast<double>(v); }

}  // namespace

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  if (v.size() % 2 == 1) return v[mid];
  return 0.5 * (v[mid - 1] + v[mid]);
}

TraceSummary summarize_trace(const std::string& trace_path) {
  const std::vector<trace::TraceRow> rows = trace::read_trace_csv(trace_path);
  if (rows.empty()) throw DataError("trace '" + trace_path + "' has no rows");
  const fs::path meta_path = fs::path(trace_path).parent_path() / "meta.json";
  const trace::RunMeta meta = trace::read_meta_json(meta_path.string());

  TraceSummary s;
  s.path = trace_path;
  s.experiment = meta.experiment;
  s.method = meta.method;
  s.seed = meta.seed;
  s.steps_total = rows.back().step;
  s.accepted_total = rows.back().accepted_total;
  s.final_misfit = rows.back().misfit;
  s.threshold = meta.threshold;
  s.wall_ms = meta.wall_ms_total;
  if (meta.threshold >= 0)
    for (const trace::TraceRow& r : rows)
      if (r.misfit <= meta.threshold) {
        s.steps_to_threshold = r.step;
        s.accepted_to_threshold = r.accepted_total;
        break;
      }
  return s;
}

Comparison compare_traces(const std::vector<std::string>& trace_paths) {
  if (trace_paths.size() < 2)
    throw ContractError("compare needs at least two traces");
  Comparison c;
  for (const std::string& p : trace_paths) {
    TraceSummary s = summarize_trace(p);
    if (c.runs.empty())
      c.experiment = s.experiment;
    else if (s.experiment != c.experiment)
      throw ContractError("cannot compare traces of '" + s.experiment +
                          "' against '" + c.experiment + "'");
    c.runs.push_back(std::move(s));
  }

  std::vector<std::string> order;
  for (const TraceSummary& s : c.runs)
    if (std::find(order.begin(), order.end(), s.method) == order.end())
      order.push_back(s.method);
  for (const std::string& m : order) {
    MethodAggregate a;
    a.method = m;
    std::vector<double> acc, mis, wall, stt, att;
    for (const TraceSummary& s : c.runs) {
      if (s.method != m) continue;
      ++a.runs;
      acc.push_back(static_cast<double>(s.accepted_total));
      mis.push_back(s.final_misfit);
      wall.push_back(s.wall_ms);
      stt.push_back(ord_value(s.steps_to_threshold));
      att.push_back(ord_value(s.accepted_to_threshold));
    }
    a.median_accepted = median(acc);
    a.median_final_misfit = median(mis);
    a.median_wall_ms = median(wall);
    a.median_steps_to_threshold = median(stt);
    a.median_accepted_to_threshold = median(att);
    c.aggregates.push_back(a);
  }
  return c;
}

std::string comparison_table(const Comparison& c) {
  std::ostringstream os;
  os << "# experiment: " << c.experiment << "\n";
  os << "# published accepted-step counts, quoted for orientation only:\n";
  os << "#   two-rectangle run: mcmc 289 (8060.6 s), rlmcmc 191 (7274.6 s), "
        "erlmcmc 349 (9680.4 s)\n";
  os << "#   diagonal run:      mcmc 383, rlmcmc 174, erlmcmc 347\n";
  os << "method,seed,steps,accepted,final_misfit,wall_s,steps_to_threshold,"
        "accepted_to_threshold\n";
  for (const TraceSummary& s : c.runs)
    os << s.method << ',' << s.seed << ',' << s.steps_total << ','
       << s.accepted_total << ',' << num(s.final_misfit) << ','
       << num(s.wall_ms / 1000.0) << ',' << ord(s.steps_to_threshold) << ','
       << ord(s.accepted_to_threshold) << "\n";
  os << "# medians per method\n";
  os << "method,runs,accepted,final_misfit,wall_s,steps_to_threshold,"
        "accepted_to_threshold\n";
  for (const MethodAggregate& a : c.aggregates)
    os << a.method << ',' << a.runs << ',' << num(a.median_accepted) << ','
       << num(a.median_final_misfit) << ',' << num(a.median_wall_ms / 1000.0)
       << ',' << num(a.median_steps_to_threshold) << ','
       << num(a.median_accepted_to_threshold) << "\n";
  return os.str();
}

void write_comparison_csv(const std::string& path, const Comparison& c) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write comparison '" + path + "'");
  out << "kind,method,seed,runs,steps,accepted,final_misfit,wall_ms,"
         "steps_to_threshold,accepted_to_threshold\n";
  for (const TraceSummary& s : c.runs)
    out << "run," << s.method << ',' << s.seed << ",1," << s.steps_total << ','
        << s.accepted_total << ',' << num(s.final_misfit, 17) << ','
        << num(s.wall_ms, 17) << ',' << ord(s.steps_to_threshold) << ','
        << ord(s.accepted_to_threshold) << "\n";
  for (const MethodAggregate& a : c.aggregates)
    out << "median," << a.method << ",," << a.runs << ",,"
        << num(a.median_accepted, 17) << ',' << num(a.median_final_misfit, 17)
        << ',' << num(a.median_wall_ms, 17) << ','
        << num(a.median_steps_to_threshold, 17) << ','
        << num(a.median_accepted_to_threshold, 17) << "\n";
}

void write_overlay_svg(const std::string& path,
                       const std::vector<std::string>& trace_paths) {
  struct Curve {
    std::string label;
    std::vector<double> x, y;  // accepted step, misfit
  };
  std::vector<Curve> curves;
  double xmax = 1, ymin = kInf, ymax = -kInf;
  for (const std::string& p : trace_paths) {
    const std::vector<trace::TraceRow> rows = trace::read_trace_csv(p);
    Curve cv;
    try {
      const trace::RunMeta meta = trace::read_meta_json(
          (fs::path(p).parent_path() / "meta.json").string());
      cv.label = meta.method + " seed " + std::to_string(meta.seed);
    } catch (const Error&) {
      cv.label = fs::path(p).parent_path().filename().string();
    }
    long last_accepted = -1;
    for (const trace::TraceRow& r : rows) {
      if (r.accepted_total == last_accepted) continue;  // accepted rows only
      last_accepted = r.accepted_total;
      cv.x.push_back(static_cast<double>(r.accepted_total));
      cv.y.push_back(r.misfit);
      xmax = std::max(xmax, cv.x.back());
      ymin = std::min(ymin, r.misfit);
      ymax = std::max(ymax, r.misfit);
    }
    if (!cv.x.empty()) curves.push_back(std::move(cv));
  }
  if (curves.empty()) throw DataError("no accepted steps to plot");
  if (ymax <= ymin) ymax = ymin + 1;

  const double W = 860, H = 520, L = 70, R = 190, T = 30, B = 50;
  const double pw = W - L - R, ph = H - T - B;
  auto tx = [&](double x) { return L + pw * x / xmax; };
  auto ty = [&](double y) { return T + ph * (1 - (y - ymin) / (ymax - ymin)); };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write plot '" + path + "'");
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='"
      << H << "' viewBox='0 0 " << W << " " << H << "'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n"
      << "<line x1='" << L << "' y1='" << T + ph << "' x2='" << L + pw
      << "' y2='" << T + ph << "' stroke='black'/>\n"
      << "<line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='"
      << T + ph << "' stroke='black'/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmax * i / 4.0, fy = ymin + (ymax - ymin) * i / 4.0;
    out << "<text x='" << tx(fx) << "' y='" << T + ph + 20
        << "' font-size='12' text-anchor='middle'>" << num(fx, 4)
        << "</text>\n";
    out << "<text x='" << L - 8 << "' y='" << ty(fy) + 4
        << "' font-size='12' text-anchor='end'>" << num(fy, 4) << "</text>\n";
  }
  out << "<text x='" << L + pw / 2 << "' y='" << H - 12
      << "' font-size='13' text-anchor='middle'>accepted steps</text>\n"
      << "<text x='18' y='" << T + ph / 2
      << "' font-size='13' text-anchor='middle' transform='rotate(-90 18 "
      << T + ph / 2 << ")'>misfit</text>\n";
  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const Curve& cv = curves[ci];
    const char* color = kColors[ci % 8];
    out << "<polyline fill='none' stroke='" << color
        << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < cv.x.size(); ++i)
      out << tx(cv.x[i]) << ',' << ty(cv.y[i]) << ' ';
    out << "'/>\n";
    const double ly = T + 16 + 18 * static_cast<double>(ci);
    out << "<line x1='" << L + pw + 12 << "' y1='" << ly << "' x2='"
        << L + pw + 36 << "' y2='" << ly << "' stroke='" << color
        << "' stroke-width='2'/>\n"
        << "<text x='" << L + pw + 42 << "' y='" << ly + 4
        << "' font-size='12'>" << cv.label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace chinv::report
