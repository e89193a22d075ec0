#pragma once

// Shared fixtures for the unit tests and the acceptance gate. Header is
// doctest-free so acceptance.cpp can include it too.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "chinv/config.hpp"
#include "chinv/fem.hpp"
#include "chinv/field.hpp"
#include "chinv/mcmc.hpp"
#include "chinv/mesh.hpp"

namespace chinv::testing {

/// Single-well, single-step observation holding one value; misfit against
/// obs1(0) is exactly |v|.
inline fem::WellObservation obs1(double v) {
  fem::WellObservation o;
  o.values.resize(1, 1);
  o.values(0, 0) = v;
  o.well_defs = {{0.4, 0.4, 0.6, 0.6, 1.0}};
  return o;
}

/// Forward model backed by a lookup table keyed on the rasterized
/// coefficient. Lets sampler tests pin exact posterior values per state and
/// count forward-model invocations.
struct TableForward {
  const mesh::GridHierarchy* grid;
  double contrast = 1000.0;
  double background = 1.0;
  std::unordered_map<std::uint64_t, fem::WellObservation> table;
  fem::WellObservation fallback;
  bool has_fallback = false;
  long calls = 0;

  explicit TableForward(const mesh::GridHierarchy* g) : grid(g) {}

  void set(const field::GlobalState& s, double value) {
    const field::PermeabilityField k =
        field::rasterize(s, *grid, contrast, background);
    table[field::kappa_hash(k)] = obs1(value);
  }

  /// Value returned for any state not explicitly set.
  void set_fallback(double value) {
    fallback = obs1(value);
    has_fallback = true;
  }

  const fem::WellObservation& operator()(const field::PermeabilityField& k) {
    ++calls;
    auto it = table.find(field::kappa_hash(k));
    if (it == table.end()) {
      if (has_fallback) return fallback;
      throw std::runtime_error("TableForward: coefficient not in the table");
    }
    return it->second;
  }

  mcmc::PosteriorLevel::ForwardFn fn() {
    return [this](const field::PermeabilityField& k)
               -> const fem::WellObservation& { return (*this)(k); };
  }
};

/// Level whose misfit of a state is the absolute table value set for it.
inline mcmc::PosteriorLevel make_level(const mesh::GridHierarchy* g,
                                       TableForward& tf, double sigma) {
  return mcmc::PosteriorLevel(g, tf.fn(), obs1(0.0), sigma, tf.contrast,
                              tf.background);
}

/// Small but fully featured experiment: 20x20 fine grid, one channel, two
/// wells, one coarse level plus the fine one.
inline config::ExperimentConfig tiny_config() {
  config::ExperimentConfig cfg;
  cfg.experiment = "tiny";
  cfg.max_steps = 5;
  cfg.grid = {20, 4, 5, 0.2};
  cfg.field.target_channels = {{4, 9, 8, 2}};
  cfg.initial_channels = {{8, 9, 8, 2}};
  cfg.sources = {{0.1, 0.4, 0.3, 0.6, 10.0}, {0.7, 0.4, 0.9, 0.6, -10.0}};
  cfg.levels = {2};
  cfg.threshold = -1.0;
  cfg.rl.batch = 4;
  cfg.rl.buffer_init = 8;
  cfg.rl.hidden = 8;
  cfg.rl.max_traj = 100;
  return cfg;
}

/// Fresh empty scratch directory under the system temp root.
inline std::string temp_dir(const std::string& tag) {
  const std::filesystem::path p =
      std::filesystem::temp_directory_path() / ("chinv_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace chinv::testing
