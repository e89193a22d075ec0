#pragma once

#include <string>

#include "chinv/config.hpp"

namespace chinv::config {

/// Canned experiment definitions at desk scale. Source boxes and amplitudes
/// are fixed; target/initial geometry and noise scale are documented
/// reconstructions (see the config echo each run writes).
///   exp1           two rectangle channels, four wells, full action set
///   exp2_onechannel one channel, x only, {left,right}, trained without MH
///   exp3_diagonal  two diagonal target segments, rectangle sampler states
ExperimentConfig build_experiment(const std::string& name);

}  // namespace chinv::config
