#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bsda/data.hpp"
#include "bsda/matrix.hpp"
#include "bsda/numerics.hpp"
#include "bsda/training.hpp"

namespace bsda {

inline constexpr double kEarthRadiusKm = 6371.0;

/// Great-circle distance between two (lat, lon) points given in degrees.
double haversine_km(double lat1, double lon1, double lat2, double lon2);

/// hvc(theta) = (1 + cos theta) / 2
double havercosine(double theta);

/// Flashback weight hvc(2 pi dt) exp(-alpha dt) exp(-beta dd); dt in days, dd in km.
double decay_weight(double delta_t_days, double delta_d_km, double alpha, double beta);

struct UserNetConfig {
  std::size_t dim = 10;
  double alpha = 0.1;    // per day
  double beta = 100.0;   // per km
  std::size_t context = 20;  // events of history fed at prediction time
};

enum class ScoreOutput { probability, raw_logits };

/// Recurrent next-POI model. Hidden states of a window are aggregated with
/// spatiotemporal decay weights, concatenated with the user embedding and
/// mapped to scores over all POIs.
class UserNet {
 public:
  UserNet(std::size_t users, std::size_t pois, UserNetConfig config, std::uint64_t seed);

  static UserNet from_checkpoint(const num::Checkpoint& ckpt);
  num::Checkpoint checkpoint() const;

  std::size_t num_users() const { return users_; }
  std::size_t num_pois() const { return pois_; }
  const UserNetConfig& config() const { return config_; }

  num::ParameterRefs parameters();
  num::ConstParameterRefs parameters() const;

  /// One logit column per event; entry t scores the event after events[0..t].
  std::vector<num::Var> forward(num::Tape& tape, std::span<const CheckIn> events, UserIndex user);
  std::vector<num::Var> forward(num::Tape& tape, std::span<const CheckIn> events, UserIndex user) const;

  /// Mean next-POI cross-entropy over a window of at least two events.
  num::Var window_loss(num::Tape& tape, std::span<const CheckIn> window, UserIndex user);

  /// Scores for the event following `history` (last `context` events used).
  /// Empty history gives a uniform row.
  std::vector<double> scores(std::span<const CheckIn> history, UserIndex user,
                             ScoreOutput output = ScoreOutput::probability) const;

  /// Decay-weighted aggregate hidden state at the last step of `events`.
  std::vector<double> aggregated_state(std::span<const CheckIn> events) const;

 private:
  template <class Self>
  static std::vector<num::Var> forward_impl(Self& self, num::Tape& tape, std::span<const CheckIn> events,
                                            UserIndex user, std::vector<num::Var>* aggregates);

  std::size_t users_;
  std::size_t pois_;
  UserNetConfig config_;
  num::Parameter poi_embedding_;
  num::Parameter user_embedding_;
  num::Parameter w_hidden_;
  num::Parameter w_input_;
  num::Parameter b_hidden_;
  num::Parameter w_out_;
  num::Parameter b_out_;
};

TrainLog train_user_net(UserNet& net, const Dataset& dataset, const TrainConfig& config);

/// Fraction of train-window steps whose top-scored POI is the true next POI.
double user_net_train_accuracy(const UserNet& net, const Dataset& dataset);

/// S_U with row u predicted from u's events strictly before `cut`.
Matrix predict_user_scores_at(const Dataset& dataset, const UserNet& net, Timestamp cut,
                              ScoreOutput output = ScoreOutput::probability);

/// S_U with row u predicted from u's whole train history.
Matrix predict_user_scores_train_end(const Dataset& dataset, const UserNet& net,
                                     ScoreOutput output = ScoreOutput::probability);

std::vector<double> softmax(std::span<const double> logits);

}  // namespace bsda
