#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "bsda/numerics.hpp"

namespace bsda {

struct TrainConfig {
  std::size_t epochs = 150;
  std::size_t batch_size = 4;
  num::OptimizerConfig optimizer;
  std::uint64_t seed = 7;
};

struct TrainLog {
  std::vector<double> epoch_loss;  // mean item loss per epoch
};

/// Minibatch training over `n_items` windows visited in a seeded random order
/// each epoch. `item_loss` builds one window's scalar loss on the given tape.
/// Throws NumericalError when the loss diverges.
TrainLog run_training(const num::ParameterRefs& params, std::size_t n_items,
                      const std::function<num::Var(num::Tape&, std::size_t)>& item_loss, const TrainConfig& config);

}  // namespace bsda
