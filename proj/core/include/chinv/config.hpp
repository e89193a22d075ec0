#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chinv/fem.hpp"
#include "chinv/field.hpp"
#include "chinv/rl.hpp"

namespace chinv::config {

enum class Method { Mcmc, Rlmcmc, Erlmcmc };

Method method_from_name(const std::string& name);
std::string method_name(Method m);

struct GridConfig {
  int fine_n = 40;
  int coarse_n = 8;
  int nt = 20;
  double t_final = 1.0;
  bool operator==(const GridConfig&) const = default;
};

/// Target field: rectangle channels on the lattice, or diagonal segments
/// (exactly one of the two must be non-empty).
struct FieldConfig {
  double contrast = 1000.0;
  double background = 1.0;
  std::vector<field::ChannelRect> target_channels;
  std::vector<field::SegmentSpec> target_segments;
  bool operator==(const FieldConfig&) const = default;
};

struct ExperimentConfig {
  std::string experiment;
  Method method = Method::Mcmc;
  std::uint64_t seed = 0;
  int max_steps = 2000;  // proposal budget
  GridConfig grid;
  FieldConfig field;
  std::vector<fem::SourceBox> sources;  // wells collocated with sources
  std::vector<int> levels{2, 4};        // basis counts; fine solver appended
  double sigma_f = 0.0;    // 0 = auto: the coarsest level's own misfit at the
                           // threshold state, so level disagreements stay O(1)
                           // in noise units (fallback 0.01 * ||F_obs||)
  double threshold = 0.0;  // 0 = auto: 1.5x that same coarse-model misfit;
                           // negative = never stop on misfit
  std::vector<field::ChannelRect> threshold_channels;  // empty = target_channels
  std::vector<field::ChannelRect> initial_channels;
  std::vector<field::ActionId> allowed_actions{field::all_actions().begin(),
                                               field::all_actions().end()};
  bool pure_rl = false;  // policy moves applied directly, no MH screen
  bool deterministic_trace = true;  // wall_ms column zeroed for bit-stable CSVs
  bool audit_proposals = false;     // per-step density invariant checks
  rl::RlHyper rl;
  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config_file(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

/// Cross-field checks; throws ConfigError with the offending field named.
void validate(const ExperimentConfig& cfg);

}  // namespace chinv::config
