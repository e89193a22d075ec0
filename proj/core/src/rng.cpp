#include "chinv/rng.hpp"

#include <vector>

#include "chinv/errors.hpp"

namespace chinv {

std::size_t sample_index(std::span<const double> weights, Rng& rng) {
  if (weights.empty()) throw ContractError("sample_index: empty weight vector");
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ContractError("sample_index: negative weight");
    total += w;
  }
  if (!(total > 0.0)) throw ContractError("sample_index: weights sum to zero");

  const double u = uniform01(rng);
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] > 0.0) last_positive = i;
    acc += weights[i] / total;
    if (u < acc) return i;
  }
  return last_positive;  // u landed in the rounding gap at the top
}

}  // namespace chinv
