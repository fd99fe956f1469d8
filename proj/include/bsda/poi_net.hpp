#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bsda/data.hpp"
#include "bsda/matrix.hpp"
#include "bsda/numerics.hpp"
#include "bsda/training.hpp"
#include "bsda/user_net.hpp"

namespace bsda {

struct PoiNetConfig {
  std::size_t dim = 10;
  std::size_t slot_dim = 4;
  int slots_per_day = 24;
  std::size_t context = 20;
};

/// Recurrent next-visitor model over a POI's visit sequence. Each step reads
/// the visitor, time-slot and weekday embeddings; the current hidden state is
/// concatenated with the POI embedding and mapped to scores over all users.
class PoiNet {
 public:
  PoiNet(std::size_t users, std::size_t pois, PoiNetConfig config, std::uint64_t seed);

  static PoiNet from_checkpoint(const num::Checkpoint& ckpt);
  num::Checkpoint checkpoint() const;

  std::size_t num_users() const { return users_; }
  std::size_t num_pois() const { return pois_; }
  const PoiNetConfig& config() const { return config_; }

  num::ParameterRefs parameters();
  num::ConstParameterRefs parameters() const;

  std::vector<num::Var> forward(num::Tape& tape, std::span<const VisitEvent> visits, PoiIndex poi);
  std::vector<num::Var> forward(num::Tape& tape, std::span<const VisitEvent> visits, PoiIndex poi) const;

  num::Var window_loss(num::Tape& tape, std::span<const VisitEvent> window, PoiIndex poi);

  /// Next-visitor scores after `history`; empty history gives a uniform row.
  std::vector<double> scores(std::span<const VisitEvent> history, PoiIndex poi,
                             ScoreOutput output = ScoreOutput::probability) const;

 private:
  template <class Self>
  static std::vector<num::Var> forward_impl(Self& self, num::Tape& tape, std::span<const VisitEvent> visits,
                                            PoiIndex poi);

  std::size_t users_;
  std::size_t pois_;
  PoiNetConfig config_;
  num::Parameter user_embedding_;
  num::Parameter slot_embedding_;
  num::Parameter weekday_embedding_;
  num::Parameter poi_embedding_;
  num::Parameter w_hidden_;
  num::Parameter w_input_;
  num::Parameter b_hidden_;
  num::Parameter w_out_;
  num::Parameter b_out_;
};

TrainLog train_poi_net(PoiNet& net, const Dataset& dataset, const TrainConfig& config);

double poi_net_train_accuracy(const PoiNet& net, const Dataset& dataset);

/// S_L (N x M): row l scores the next visitor after l's whole train history.
/// Cold POIs get uniform rows.
Matrix predict_poi_scores(const Dataset& dataset, const PoiNet& net, ScoreOutput output = ScoreOutput::probability);

}  // namespace bsda
