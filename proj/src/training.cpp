#include "bsda/training.hpp"

#include <cmath>
#include <numeric>

#include "bsda/errors.hpp"
#include "bsda/random.hpp"

namespace bsda {

TrainLog run_training(const num::ParameterRefs& params, std::size_t n_items,
                      const std::function<num::Var(num::Tape&, std::size_t)>& item_loss, const TrainConfig& config) {
  TrainLog log;
  if (config.epochs == 0) return log;
  if (n_items == 0) throw DataError("nothing to train on: no training windows");
  if (config.batch_size == 0) throw UsageError("batch_size must be >= 1");

  for (auto* p : params) p->zero_grad();
  num::Optimizer optimizer(config.optimizer);
  Rng rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  std::vector<std::size_t> order(n_items);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < n_items; start += config.batch_size) {
      const auto stop = std::min(n_items, start + config.batch_size);
      for (std::size_t k = start; k < stop; ++k) {
        num::Tape tape;
        auto loss = item_loss(tape, order[k]);
        const double value = tape.value(loss)[0];
        if (!std::isfinite(value)) throw NumericalError("training diverged: non-finite loss");
        total += value;
        tape.backward(tape.scale(loss, 1.0 / static_cast<double>(stop - start)));
      }
      optimizer.step(params);
    }
    const double mean = total / static_cast<double>(n_items);
    if (!std::isfinite(mean)) throw NumericalError("training diverged at epoch " + std::to_string(epoch));
    log.epoch_loss.push_back(mean);
  }
  return log;
}

}  // namespace bsda
