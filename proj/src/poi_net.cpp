#include "bsda/poi_net.hpp"

#include <algorithm>
#include <cmath>

#include "bsda/errors.hpp"
#include "bsda/random.hpp"

namespace bsda {

PoiNet::PoiNet(std::size_t users, std::size_t pois, PoiNetConfig config, std::uint64_t seed)
    : users_(users), pois_(pois), config_(config) {
  if (users == 0 || pois == 0 || config.dim == 0 || config.slot_dim == 0)
    throw UsageError("PoiNet needs users, POIs, dim and slot_dim > 0");
  if (config.slots_per_day < 1 || config.context == 0) throw UsageError("slots_per_day and context must be >= 1");
  const auto d = config.dim;
  const auto ds = config.slot_dim;
  const auto input = d + 2 * ds;
  user_embedding_ = num::Parameter("poi_net.user_embedding", Matrix(users, d));
  slot_embedding_ = num::Parameter("poi_net.slot_embedding", Matrix(static_cast<std::size_t>(config.slots_per_day), ds));
  weekday_embedding_ = num::Parameter("poi_net.weekday_embedding", Matrix(7, ds));
  poi_embedding_ = num::Parameter("poi_net.poi_embedding", Matrix(pois, d));
  w_hidden_ = num::Parameter("poi_net.w_hidden", Matrix(d, d));
  w_input_ = num::Parameter("poi_net.w_input", Matrix(d, input));
  b_hidden_ = num::Parameter("poi_net.b_hidden", Matrix(d, 1));
  w_out_ = num::Parameter("poi_net.w_out", Matrix(users, 2 * d));
  b_out_ = num::Parameter("poi_net.b_out", Matrix(users, 1));

  Rng rng(seed ^ 0x5157A7E5ULL);
  const double rnn_bound = 1.0 / std::sqrt(static_cast<double>(d));
  const double out_bound = 1.0 / std::sqrt(static_cast<double>(2 * d));
  num::init_normal(user_embedding_, 1.0, rng);
  num::init_normal(slot_embedding_, 1.0, rng);
  num::init_normal(weekday_embedding_, 1.0, rng);
  num::init_normal(poi_embedding_, 1.0, rng);
  num::init_uniform(w_hidden_, rnn_bound, rng);
  num::init_uniform(w_input_, rnn_bound, rng);
  num::init_uniform(b_hidden_, rnn_bound, rng);
  num::init_uniform(w_out_, out_bound, rng);
  num::init_uniform(b_out_, out_bound, rng);
}

num::ParameterRefs PoiNet::parameters() {
  return {&user_embedding_, &slot_embedding_, &weekday_embedding_, &poi_embedding_, &w_hidden_,
          &w_input_,        &b_hidden_,       &w_out_,             &b_out_};
}

num::ConstParameterRefs PoiNet::parameters() const {
  return {&user_embedding_, &slot_embedding_, &weekday_embedding_, &poi_embedding_, &w_hidden_,
          &w_input_,        &b_hidden_,       &w_out_,             &b_out_};
}

num::Checkpoint PoiNet::checkpoint() const {
  return num::snapshot(parameters(), {{"kind", "poi_net"},
                                      {"users", std::to_string(users_)},
                                      {"pois", std::to_string(pois_)},
                                      {"dim", std::to_string(config_.dim)},
                                      {"slot_dim", std::to_string(config_.slot_dim)},
                                      {"slots_per_day", std::to_string(config_.slots_per_day)},
                                      {"context", std::to_string(config_.context)}});
}

PoiNet PoiNet::from_checkpoint(const num::Checkpoint& ckpt) {
  auto get = [&](const char* k) -> const std::string& {
    auto it = ckpt.meta.find(k);
    if (it == ckpt.meta.end()) throw DataError(std::string("checkpoint missing meta '") + k + "'");
    return it->second;
  };
  if (get("kind") != "poi_net") throw DataError("checkpoint is not a poi_net checkpoint");
  PoiNetConfig cfg;
  cfg.dim = std::stoul(get("dim"));
  cfg.slot_dim = std::stoul(get("slot_dim"));
  cfg.slots_per_day = std::stoi(get("slots_per_day"));
  cfg.context = std::stoul(get("context"));
  PoiNet net(std::stoul(get("users")), std::stoul(get("pois")), cfg, 0);
  num::restore(ckpt, net.parameters());
  return net;
}

template <class Self>
std::vector<num::Var> PoiNet::forward_impl(Self& self, num::Tape& tape, std::span<const VisitEvent> visits,
                                           PoiIndex poi) {
  if (visits.empty()) throw ShapeError("PoiNet::forward on an empty sequence");
  if (poi >= self.pois_) throw ShapeError("POI index " + std::to_string(poi) + " out of range");
  auto w_h = tape.parameter(self.w_hidden_);
  auto w_x = tape.parameter(self.w_input_);
  auto b_h = tape.parameter(self.b_hidden_);
  auto w_o = tape.parameter(self.w_out_);
  auto b_o = tape.parameter(self.b_out_);
  auto e_l = tape.embedding(self.poi_embedding_, poi);

  std::vector<num::Var> logits;
  logits.reserve(visits.size());
  num::Var h;
  for (std::size_t t = 0; t < visits.size(); ++t) {
    const auto& v = visits[t];
    if (v.user >= self.users_) throw ShapeError("user index out of range in PoiNet::forward");
    auto x = tape.concat({tape.embedding(self.user_embedding_, v.user),
                          tape.embedding(self.slot_embedding_, static_cast<std::size_t>(v.slot)),
                          tape.embedding(self.weekday_embedding_, static_cast<std::size_t>(v.weekday))});
    auto pre = tape.add(tape.matmul(w_x, x), b_h);
    if (t > 0) pre = tape.add(pre, tape.matmul(w_h, h));
    h = tape.tanh(pre);
    logits.push_back(tape.add(tape.matmul(w_o, tape.concat({h, e_l})), b_o));
  }
  return logits;
}

std::vector<num::Var> PoiNet::forward(num::Tape& tape, std::span<const VisitEvent> visits, PoiIndex poi) {
  return forward_impl(*this, tape, visits, poi);
}

std::vector<num::Var> PoiNet::forward(num::Tape& tape, std::span<const VisitEvent> visits, PoiIndex poi) const {
  return forward_impl(*this, tape, visits, poi);
}

num::Var PoiNet::window_loss(num::Tape& tape, std::span<const VisitEvent> window, PoiIndex poi) {
  if (window.size() < 2) throw ShapeError("training window needs at least two visits");
  const auto logits = forward(tape, window.first(window.size() - 1), poi);
  std::vector<num::Var> losses;
  losses.reserve(logits.size());
  for (std::size_t t = 0; t < logits.size(); ++t)
    losses.push_back(tape.softmax_cross_entropy(logits[t], window[t + 1].user));
  return tape.mean(losses);
}

std::vector<double> PoiNet::scores(std::span<const VisitEvent> history, PoiIndex poi, ScoreOutput output) const {
  if (history.empty()) {
    return std::vector<double>(users_, output == ScoreOutput::probability ? 1.0 / static_cast<double>(users_) : 0.0);
  }
  if (history.size() > config_.context) history = history.last(config_.context);
  num::Tape tape;
  const auto logits = forward(tape, history, poi);
  const auto v = tape.value(logits.back()).values();
  if (output == ScoreOutput::raw_logits) return {v.begin(), v.end()};
  return softmax(v);
}

TrainLog train_poi_net(PoiNet& net, const Dataset& dataset, const TrainConfig& config) {
  if (dataset.num_users() != net.num_users() || dataset.num_pois() != net.num_pois())
    throw ShapeError("PoiNet shape does not match dataset");
  if (dataset.options().slots_per_day != net.config().slots_per_day)
    throw ShapeError("PoiNet slots_per_day does not match dataset");
  const auto& windows = dataset.poi_windows();
  return run_training(
      net.parameters(), windows.size(),
      [&](num::Tape& tape, std::size_t i) {
        const auto& w = windows[i];
        return net.window_loss(tape, dataset.poi_train(w.owner).subspan(w.begin, w.length()), w.owner);
      },
      config);
}

double poi_net_train_accuracy(const PoiNet& net, const Dataset& dataset) {
  std::size_t hits = 0, total = 0;
  for (const auto& w : dataset.poi_windows()) {
    const auto window = dataset.poi_train(w.owner).subspan(w.begin, w.length());
    num::Tape tape;
    const auto logits = net.forward(tape, window.first(window.size() - 1), w.owner);
    for (std::size_t t = 0; t < logits.size(); ++t) {
      const auto v = tape.value(logits[t]).values();
      const auto best = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
      hits += best == window[t + 1].user;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

Matrix predict_poi_scores(const Dataset& dataset, const PoiNet& net, ScoreOutput output) {
  Matrix s(dataset.num_pois(), dataset.num_users());
  for (PoiIndex l = 0; l < dataset.num_pois(); ++l) {
    const auto row = net.scores(dataset.poi_train(l), l, output);
    std::copy(row.begin(), row.end(), s.row(l).begin());
  }
  return s;
}

}  // namespace bsda
