#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "chinv/mesh.hpp"

namespace chinv::field {

/// Axis-aligned channel rectangle on the fine-cell lattice. (x, y) is the
/// lower-left corner, (w, d) the width and height, all in fine cells.
struct ChannelRect {
  int x = 0, y = 0, w = 1, d = 1;
  bool operator==(const ChannelRect&) const = default;
};

/// Full sampler state: one rectangle per agent, order fixed for a run.
struct GlobalState {
  std::vector<ChannelRect> channels;
  bool operator==(const GlobalState&) const = default;
};

struct StateHash {
  std::size_t operator()(const GlobalState& s) const;
};

enum class ActionId : int {
  ShiftLeft = 0,
  ShiftRight,
  ShiftDown,
  ShiftUp,
  SqueezeH,
  StretchH,
  SqueezeV,
  StretchV,
};
inline constexpr int kNumActions = 8;

inline constexpr std::array<ActionId, kNumActions> kAllActions = {
    ActionId::ShiftLeft, ActionId::ShiftRight, ActionId::ShiftDown,
    ActionId::ShiftUp,   ActionId::SqueezeH,   ActionId::StretchH,
    ActionId::SqueezeV,  ActionId::StretchV};

constexpr const std::array<ActionId, kNumActions>& all_actions() {
  return kAllActions;
}

std::string_view action_name(ActionId a);
std::optional<ActionId> action_from_name(std::string_view name);

/// Pairs within the action set: left<->right, down<->up, squeeze<->stretch.
ActionId inverse_action(ActionId a);

bool rect_valid(const ChannelRect& c, int fine_n);

/// Throws StateError naming the offending agent index.
void validate_state(const GlobalState& s, int fine_n);

bool action_feasible(const ChannelRect& c, ActionId a, int fine_n, int step = 1);

/// Applies one deterministic lattice move; throws InfeasibleActionError if the
/// result would leave the domain or collapse the rectangle.
ChannelRect apply_action(const ChannelRect& c, ActionId a, int fine_n,
                         int step = 1);

std::vector<ActionId> feasible_actions(const ChannelRect& c, int fine_n,
                                       std::span<const ActionId> allowed);

/// If `to` is exactly one feasible move away from `from`, returns the mover
/// agent and action; otherwise nullopt.
std::optional<std::pair<int, ActionId>> single_move(const GlobalState& from,
                                                    const GlobalState& to);

/// Piecewise-constant permeability per fine cell (row-major cell order).
struct PermeabilityField {
  Eigen::VectorXd kappa;
  double contrast = 1000.0;
  double background = 1.0;
};

/// Cells covered by any channel get the contrast value, everything else the
/// background; overlaps stay at contrast.
PermeabilityField rasterize(const GlobalState& s, const mesh::GridHierarchy& g,
                            double contrast, double background = 1.0);

/// Rotated-rectangle segment: axis from (x0,y0) to (x1,y1), covering cells
/// whose centers project onto the axis within the given half width.
struct SegmentSpec {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double half_width = 0;
  bool operator==(const SegmentSpec&) const = default;
};

/// Builds target fields with diagonal channels; never used as sampler states.
PermeabilityField rasterize_diagonal_target(
    const std::vector<SegmentSpec>& segments, const mesh::GridHierarchy& g,
    double contrast, double background = 1.0);

/// FNV-1a over the raw coefficient bits; cache key for solver memoization.
std::uint64_t kappa_hash(const PermeabilityField& f);

}  // namespace chinv::field
