#include "bsda/user_net.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bsda/errors.hpp"
#include "bsda/random.hpp"

namespace bsda {

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double rad = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * rad;
  const double dlon = (lon2 - lon1) * rad;
  const double s = std::sin(dlat / 2.0);
  const double c = std::sin(dlon / 2.0);
  const double a = s * s + std::cos(lat1 * rad) * std::cos(lat2 * rad) * c * c;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

double havercosine(double theta) { return (1.0 + std::cos(theta)) / 2.0; }

double decay_weight(double delta_t_days, double delta_d_km, double alpha, double beta) {
  return havercosine(2.0 * std::numbers::pi * delta_t_days) * std::exp(-alpha * delta_t_days) *
         std::exp(-beta * delta_d_km);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double m = *std::max_element(p.begin(), p.end());
  double s = 0.0;
  for (double& v : p) s += (v = std::exp(v - m));
  for (double& v : p) v /= s;
  return p;
}

UserNet::UserNet(std::size_t users, std::size_t pois, UserNetConfig config, std::uint64_t seed)
    : users_(users), pois_(pois), config_(config) {
  if (users == 0 || pois == 0 || config.dim == 0) throw UsageError("UserNet needs users, POIs and dim > 0");
  if (config.alpha < 0.0 || config.beta < 0.0) throw UsageError("alpha and beta must be >= 0");
  if (config.context == 0) throw UsageError("context must be >= 1");
  const auto d = config.dim;
  poi_embedding_ = num::Parameter("user_net.poi_embedding", Matrix(pois, d));
  user_embedding_ = num::Parameter("user_net.user_embedding", Matrix(users, d));
  w_hidden_ = num::Parameter("user_net.w_hidden", Matrix(d, d));
  w_input_ = num::Parameter("user_net.w_input", Matrix(d, d));
  b_hidden_ = num::Parameter("user_net.b_hidden", Matrix(d, 1));
  w_out_ = num::Parameter("user_net.w_out", Matrix(pois, 2 * d));
  b_out_ = num::Parameter("user_net.b_out", Matrix(pois, 1));

  Rng rng(seed);
  const double rnn_bound = 1.0 / std::sqrt(static_cast<double>(d));
  const double out_bound = 1.0 / std::sqrt(static_cast<double>(2 * d));
  num::init_normal(poi_embedding_, 1.0, rng);
  num::init_normal(user_embedding_, 1.0, rng);
  num::init_uniform(w_hidden_, rnn_bound, rng);
  num::init_uniform(w_input_, rnn_bound, rng);
  num::init_uniform(b_hidden_, rnn_bound, rng);
  num::init_uniform(w_out_, out_bound, rng);
  num::init_uniform(b_out_, out_bound, rng);
}

num::ParameterRefs UserNet::parameters() {
  return {&poi_embedding_, &user_embedding_, &w_hidden_, &w_input_, &b_hidden_, &w_out_, &b_out_};
}

num::ConstParameterRefs UserNet::parameters() const {
  return {&poi_embedding_, &user_embedding_, &w_hidden_, &w_input_, &b_hidden_, &w_out_, &b_out_};
}

num::Checkpoint UserNet::checkpoint() const {
  return num::snapshot(parameters(), {{"kind", "user_net"},
                                      {"users", std::to_string(users_)},
                                      {"pois", std::to_string(pois_)},
                                      {"dim", std::to_string(config_.dim)},
                                      {"alpha", format_double(config_.alpha)},
                                      {"beta", format_double(config_.beta)},
                                      {"context", std::to_string(config_.context)}});
}

UserNet UserNet::from_checkpoint(const num::Checkpoint& ckpt) {
  auto get = [&](const char* k) -> const std::string& {
    auto it = ckpt.meta.find(k);
    if (it == ckpt.meta.end()) throw DataError(std::string("checkpoint missing meta '") + k + "'");
    return it->second;
  };
  if (get("kind") != "user_net") throw DataError("checkpoint is not a user_net checkpoint");
  UserNetConfig cfg;
  cfg.dim = std::stoul(get("dim"));
  cfg.alpha = std::stod(get("alpha"));
  cfg.beta = std::stod(get("beta"));
  cfg.context = std::stoul(get("context"));
  UserNet net(std::stoul(get("users")), std::stoul(get("pois")), cfg, 0);
  num::restore(ckpt, net.parameters());
  return net;
}

template <class Self>
std::vector<num::Var> UserNet::forward_impl(Self& self, num::Tape& tape, std::span<const CheckIn> events,
                                            UserIndex user, std::vector<num::Var>* aggregates) {
  if (events.empty()) throw ShapeError("UserNet::forward on an empty sequence");
  if (user >= self.users_) throw ShapeError("user index " + std::to_string(user) + " out of range");
  const auto& cfg = self.config_;
  auto w_h = tape.parameter(self.w_hidden_);
  auto w_x = tape.parameter(self.w_input_);
  auto b_h = tape.parameter(self.b_hidden_);
  auto w_o = tape.parameter(self.w_out_);
  auto b_o = tape.parameter(self.b_out_);
  auto e_u = tape.embedding(self.user_embedding_, user);

  std::vector<num::Var> hidden;
  std::vector<num::Var> logits;
  std::vector<double> weights;
  hidden.reserve(events.size());
  logits.reserve(events.size());
  for (std::size_t t = 0; t < events.size(); ++t) {
    if (events[t].poi >= self.pois_) throw ShapeError("POI index out of range in UserNet::forward");
    auto x = tape.embedding(self.poi_embedding_, events[t].poi);
    auto pre = tape.add(tape.matmul(w_x, x), b_h);
    if (t > 0) pre = tape.add(pre, tape.matmul(w_h, hidden.back()));
    hidden.push_back(tape.tanh(pre));

    weights.resize(t + 1);
    for (std::size_t j = 0; j <= t; ++j) {
      const double dt = static_cast<double>(events[t].timestamp - events[j].timestamp) / kSecondsPerDay;
      const double dd = haversine_km(events[t].lat, events[t].lon, events[j].lat, events[j].lon);
      weights[j] = decay_weight(std::max(0.0, dt), dd, cfg.alpha, cfg.beta);
    }
    auto h_w = tape.weighted_average(hidden, weights);
    if (aggregates) aggregates->push_back(h_w);
    logits.push_back(tape.add(tape.matmul(w_o, tape.concat({h_w, e_u})), b_o));
  }
  return logits;
}

std::vector<num::Var> UserNet::forward(num::Tape& tape, std::span<const CheckIn> events, UserIndex user) {
  return forward_impl(*this, tape, events, user, nullptr);
}

std::vector<num::Var> UserNet::forward(num::Tape& tape, std::span<const CheckIn> events, UserIndex user) const {
  return forward_impl(*this, tape, events, user, nullptr);
}

num::Var UserNet::window_loss(num::Tape& tape, std::span<const CheckIn> window, UserIndex user) {
  if (window.size() < 2) throw ShapeError("training window needs at least two events");
  const auto logits = forward(tape, window.first(window.size() - 1), user);
  std::vector<num::Var> losses;
  losses.reserve(logits.size());
  for (std::size_t t = 0; t < logits.size(); ++t) losses.push_back(tape.softmax_cross_entropy(logits[t], window[t + 1].poi));
  return tape.mean(losses);
}

std::vector<double> UserNet::scores(std::span<const CheckIn> history, UserIndex user, ScoreOutput output) const {
  if (history.empty()) {
    return std::vector<double>(pois_, output == ScoreOutput::probability ? 1.0 / static_cast<double>(pois_) : 0.0);
  }
  if (history.size() > config_.context) history = history.last(config_.context);
  num::Tape tape;
  const auto logits = forward(tape, history, user);
  const auto v = tape.value(logits.back()).values();
  if (output == ScoreOutput::raw_logits) return {v.begin(), v.end()};
  return softmax(v);
}

std::vector<double> UserNet::aggregated_state(std::span<const CheckIn> events) const {
  num::Tape tape;
  std::vector<num::Var> aggregates;
  forward_impl(*this, tape, events, 0, &aggregates);
  const auto v = tape.value(aggregates.back()).values();
  return {v.begin(), v.end()};
}

TrainLog train_user_net(UserNet& net, const Dataset& dataset, const TrainConfig& config) {
  if (dataset.num_users() != net.num_users() || dataset.num_pois() != net.num_pois())
    throw ShapeError("UserNet shape does not match dataset");
  const auto& windows = dataset.user_windows();
  return run_training(
      net.parameters(), windows.size(),
      [&](num::Tape& tape, std::size_t i) {
        const auto& w = windows[i];
        return net.window_loss(tape, dataset.train(w.owner).subspan(w.begin, w.length()), w.owner);
      },
      config);
}

double user_net_train_accuracy(const UserNet& net, const Dataset& dataset) {
  std::size_t hits = 0, total = 0;
  for (const auto& w : dataset.user_windows()) {
    const auto window = dataset.train(w.owner).subspan(w.begin, w.length());
    num::Tape tape;
    const auto logits = net.forward(tape, window.first(window.size() - 1), w.owner);
    for (std::size_t t = 0; t < logits.size(); ++t) {
      const auto v = tape.value(logits[t]).values();
      const auto best = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
      hits += best == window[t + 1].poi;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

Matrix predict_user_scores_at(const Dataset& dataset, const UserNet& net, Timestamp cut, ScoreOutput output) {
  Matrix s(dataset.num_users(), dataset.num_pois());
  for (UserIndex u = 0; u < dataset.num_users(); ++u) {
    const auto traj = dataset.trajectory(u);
    const auto end = std::lower_bound(traj.begin(), traj.end(), cut,
                                      [](const CheckIn& c, Timestamp t) { return c.timestamp < t; });
    const auto row = net.scores(traj.first(static_cast<std::size_t>(end - traj.begin())), u, output);
    std::copy(row.begin(), row.end(), s.row(u).begin());
  }
  return s;
}

Matrix predict_user_scores_train_end(const Dataset& dataset, const UserNet& net, ScoreOutput output) {
  Matrix s(dataset.num_users(), dataset.num_pois());
  for (UserIndex u = 0; u < dataset.num_users(); ++u) {
    const auto row = net.scores(dataset.train(u), u, output);
    std::copy(row.begin(), row.end(), s.row(u).begin());
  }
  return s;
}

}  // namespace bsda
