#include "chinv/field.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "chinv/errors.hpp"

namespace chinv::field {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace

std::size_t StateHash::operator()(const GlobalState& s) const {
  std::uint64_t h = kFnvOffset;
  for (const ChannelRect& c : s.channels) {
    const int v[4] = {c.x, c.y, c.w, c.d};
    h = fnv1a(h, v, sizeof v);
  }
  return static_cast<std::size_t>(h);
}

std::string_view action_name(ActionId a) {
  switch (a) {
    case ActionId::ShiftLeft: return "shift_left";
    case ActionId::ShiftRight: return "shift_right";
    case ActionId::ShiftDown: return "shift_down";
    case ActionId::ShiftUp: return "shift_up";
    case ActionId::SqueezeH: return "squeeze_h";
    case ActionId::StretchH: return "stretch_h";
    case ActionId::SqueezeV: return "squeeze_v";
    case ActionId::StretchV: return "stretch_v";
  }
  return "?";
}

std::optional<ActionId> action_from_name(std::string_view name) {
  for (ActionId a : all_actions())
    if (action_name(a) == name) return a;
  return std::nullopt;
}

ActionId inverse_action(ActionId a) {
  switch (a) {
    case ActionId::ShiftLeft: return ActionId::ShiftRight;
    case ActionId::ShiftRight: return ActionId::ShiftLeft;
    case ActionId::ShiftDown: return ActionId::ShiftUp;
    case ActionId::ShiftUp: return ActionId::ShiftDown;
    case ActionId::SqueezeH: return ActionId::StretchH;
    case ActionId::StretchH: return ActionId::SqueezeH;
    case ActionId::SqueezeV: return ActionId::StretchV;
    case ActionId::StretchV: return ActionId::SqueezeV;
  }
  return a;
}

bool rect_valid(const ChannelRect& c, int fine_n) {
  return c.w >= 1 && c.d >= 1 && c.x >= 0 && c.y >= 0 &&
         c.x + c.w <= fine_n && c.y + c.d <= fine_n;
}

void validate_state(const GlobalState& s, int fine_n) {
  for (std::size_t i = 0; i < s.channels.size(); ++i) {
    const ChannelRect& c = s.channels[i];
    if (!rect_valid(c, fine_n))
      throw StateError("agent " + std::to_string(i) + ": channel (" +
                       std::to_string(c.x) + "," + std::to_string(c.y) + "," +
                       std::to_string(c.w) + "," + std::to_string(c.d) +
                       ") violates domain bounds for fine_n=" +
                       std::to_string(fine_n));
  }
}

namespace {

ChannelRect moved(const ChannelRect& c, ActionId a, int step) {
  ChannelRect r = c;
  switch (a) {
    case ActionId::ShiftLeft: r.x -= step; break;
    case ActionId::ShiftRight: r.x += step; break;
    case ActionId::ShiftDown: r.y -= step; break;
    case ActionId::ShiftUp: r.y += step; break;
    case ActionId::SqueezeH: r.w -= step; break;
    case ActionId::StretchH: r.w += step; break;
    case ActionId::SqueezeV: r.d -= step; break;
    case ActionId::StretchV: r.d += step; break;
  }
  return r;
}

}  // namespace

bool action_feasible(const ChannelRect& c, ActionId a, int fine_n, int step) {
  return rect_valid(moved(c, a, step), fine_n);
}

ChannelRect apply_action(const ChannelRect& c, ActionId a, int fine_n,
                         int step) {
  ChannelRect r = moved(c, a, step);
  if (!rect_valid(r, fine_n))
    throw InfeasibleActionError(std::string("action ") +
                                std::string(action_name(a)) +
                                " infeasible from channel (" +
                                std::to_string(c.x) + "," + std::to_string(c.y) +
                                "," + std::to_string(c.w) + "," +
                                std::to_string(c.d) + ")");
  return r;
}

std::vector<ActionId> feasible_actions(const ChannelRect& c, int fine_n,
                                       std::span<const ActionId> allowed) {
  std::vector<ActionId> out;
  for (ActionId a : allowed)
    if (action_feasible(c, a, fine_n)) out.push_back(a);
  return out;
}

std::optional<std::pair<int, ActionId>> single_move(const GlobalState& from,
                                                    const GlobalState& to) {
  if (from.channels.size() != to.channels.size()) return std::nullopt;
  int mover = -1;
  for (std::size_t i = 0; i < from.channels.size(); ++i) {
    if (from.channels[i] == to.channels[i]) continue;
    if (mover >= 0) return std::nullopt;  // more than one channel changed
    mover = static_cast<int>(i);
  }
  if (mover < 0) return std::nullopt;  // identical states
  const ChannelRect& a = from.channels[mover];
  const ChannelRect& b = to.channels[mover];
  for (ActionId act : all_actions())
    if (moved(a, act, 1) == b) return std::make_pair(mover, act);
  return std::nullopt;
}

PermeabilityField rasterize(const GlobalState& s, const mesh::GridHierarchy& g,
                            double contrast, double background) {
  validate_state(s, g.fine_n());
  PermeabilityField f;
  f.contrast = contrast;
  f.background = background;
  f.kappa = Eigen::VectorXd::Constant(g.n_fine_cells(), background);
  for (const ChannelRect& c : s.channels)
    for (int j = c.y; j < c.y + c.d; ++j)
      for (int i = c.x; i < c.x + c.w; ++i) f.kappa[g.fine_cell(i, j)] = contrast;
  return f;
}

PermeabilityField rasterize_diagonal_target(
    const std::vector<SegmentSpec>& segments, const mesh::GridHierarchy& g,
    double contrast, double background) {
  for (const SegmentSpec& seg : segments) {
    const double len = std::hypot(seg.x1 - seg.x0, seg.y1 - seg.y0);
    if (len < 1e-12)
      throw ConfigError("diagonal target: degenerate zero-length segment");
    if (seg.x0 < 0 || seg.x0 > 1 || seg.x1 < 0 || seg.x1 > 1 || seg.y0 < 0 ||
        seg.y0 > 1 || seg.y1 < 0 || seg.y1 > 1)
      throw ConfigError("diagonal target: segment endpoint outside the domain");
    if (seg.half_width <= 0)
      throw ConfigError("diagonal target: half_width must be positive");
  }

  PermeabilityField f;
  f.contrast = contrast;
  f.background = background;
  f.kappa = Eigen::VectorXd::Constant(g.n_fine_cells(), background);
  for (int cell = 0; cell < g.n_fine_cells(); ++cell) {
    const auto [cx, cy] = g.fine_cell_center(cell);
    for (const SegmentSpec& seg : segments) {
      const double ax = seg.x1 - seg.x0, ay = seg.y1 - seg.y0;
      const double len2 = ax * ax + ay * ay;
      const double t = ((cx - seg.x0) * ax + (cy - seg.y0) * ay) / len2;
      if (t < 0.0 || t > 1.0) continue;  // rectangle body only, no end caps
      const double px = seg.x0 + t * ax, py = seg.y0 + t * ay;
      const double dist = std::hypot(cx - px, cy - py);
      if (dist <= seg.half_width) {
        f.kappa[cell] = contrast;
        break;
      }
    }
  }
  return f;
}

std::uint64_t kappa_hash(const PermeabilityField& f) {
  std::uint64_t h = kFnvOffset;
  h = fnv1a(h, f.kappa.data(), sizeof(double) * f.kappa.size());
  return h;
}

}  // namespace chinv::field
