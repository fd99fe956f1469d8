#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bsda/errors.hpp"
#include "bsda/user_net.hpp"
#include "support.hpp"

using namespace bsda;
using namespace testing;

namespace {

/// Spherical law of cosines; fine away from very small separations.
double cosine_law_km(double lat1, double lon1, double lat2, double lon2) {
  const double r = std::numbers::pi / 180.0;
  const double c = std::sin(lat1 * r) * std::sin(lat2 * r) + std::cos(lat1 * r) * std::cos(lat2 * r) * std::cos((lon2 - lon1) * r);
  return 6371.0 * std::acos(std::clamp(c, -1.0, 1.0));
}

/// Spherical Vincenty form; accurate at every separation.
double vincenty_km(double lat1, double lon1, double lat2, double lon2) {
  const double r = std::numbers::pi / 180.0;
  const double p1 = lat1 * r, p2 = lat2 * r, dl = (lon2 - lon1) * r;
  const double a = std::cos(p2) * std::sin(dl);
  const double b = std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl);
  const double c = std::sin(p1) * std::sin(p2) + std::cos(p1) * std::cos(p2) * std::cos(dl);
  return 6371.0 * std::atan2(std::hypot(a, b), c);
}

using Vec = std::vector<double>;

Vec affine(const Matrix& w, const Vec& x, const Matrix& b) {
  Vec y(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double s = b[i];
    for (std::size_t j = 0; j < w.cols(); ++j) s += w(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

/// Plain re-derivation of the recurrence from the checkpoint tensors.
struct UserNetOracle {
  num::Checkpoint c;
  double alpha, beta;

  explicit UserNetOracle(const UserNet& net) : c(net.checkpoint()), alpha(net.config().alpha), beta(net.config().beta) {}

  const Matrix& t(const char* name) const { return c.tensor(std::string("user_net.") + name); }

  std::vector<Vec> hidden(std::span<const CheckIn> ev) const {
    const auto& E = t("poi_embedding");
    const auto& Wh = t("w_hidden");
    const auto& Wx = t("w_input");
    const auto& bh = t("b_hidden");
    const std::size_t d = Wh.rows();
    std::vector<Vec> hs;
    Vec h(d, 0.0);
    for (const auto& e : ev) {
      Vec x(E.row(e.poi).begin(), E.row(e.poi).end());
      Vec next(d);
      for (std::size_t i = 0; i < d; ++i) {
        double s = bh[i];
        for (std::size_t j = 0; j < d; ++j) s += Wx(i, j) * x[j] + Wh(i, j) * h[j];
        next[i] = std::tanh(s);
      }
      h = next;
      hs.push_back(h);
    }
    return hs;
  }

  Vec aggregate(std::span<const CheckIn> ev) const {
    const auto hs = hidden(ev);
    const auto& last = ev.back();
    Vec out(hs[0].size(), 0.0);
    double total = 0.0;
    for (std::size_t j = 0; j < ev.size(); ++j) {
      const double dt = static_cast<double>(last.timestamp - ev[j].timestamp) / 86400.0;
      const double dd = vincenty_km(last.lat, last.lon, ev[j].lat, ev[j].lon);
      const double w = 0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * dt)) * std::exp(-alpha * dt - beta * dd);
      total += w;
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * hs[j][i];
    }
    for (double& v : out) v /= total;
    return out;
  }

  Vec probabilities(std::span<const CheckIn> ev, UserIndex u) const {
    Vec z = aggregate(ev);
    const auto& U = t("user_embedding");
    z.insert(z.end(), U.row(u).begin(), U.row(u).end());
    Vec logits = affine(t("w_out"), z, t("b_out"));
    double m = *std::max_element(logits.begin(), logits.end()), s = 0.0;
    for (double& v : logits) s += (v = std::exp(v - m));
    for (double& v : logits) v /= s;
    return logits;
  }
};

std::vector<CheckIn> random_events(Rng& rng, std::size_t n, std::size_t pois, UserIndex user = 0) {
  std::vector<CheckIn> ev;
  Timestamp t = kBase;
  for (std::size_t k = 0; k < n; ++k) {
    t += static_cast<Timestamp>(rng.index(3 * kDay));
    const auto l = static_cast<PoiIndex>(rng.index(pois));
    ev.push_back({user, t, 30.0 + 0.003 * l, -97.0 + 0.002 * l, l});
  }
  return ev;
}

}  // namespace

TEST_SUITE("user_net") {
  TEST_CASE("haversine reference distances") {
    CHECK(haversine_km(0, 0, 0, 0) == 0.0);
    CHECK(haversine_km(0, 0, 1, 0) == doctest::Approx(2 * std::numbers::pi * 6371.0 / 360.0).epsilon(1e-12));
    CHECK(haversine_km(0, 0, 0, 180) == doctest::Approx(std::numbers::pi * 6371.0).epsilon(1e-12));
    CHECK(haversine_km(90, 0, -90, 0) == doctest::Approx(std::numbers::pi * 6371.0).epsilon(1e-12));
  }

  TEST_CASE("haversine agrees with the cosine law, is symmetric and obeys the triangle inequality") {
    Rng rng(5);
    for (int i = 0; i < 500; ++i) {
      const double a1 = rng.uniform(-80, 80), o1 = rng.uniform(-180, 180);
      const double a2 = rng.uniform(-80, 80), o2 = rng.uniform(-180, 180);
      const double a3 = rng.uniform(-80, 80), o3 = rng.uniform(-180, 180);
      const double d12 = haversine_km(a1, o1, a2, o2);
      CHECK(d12 == doctest::Approx(cosine_law_km(a1, o1, a2, o2)).epsilon(1e-6));
      CHECK(d12 == doctest::Approx(haversine_km(a2, o2, a1, o1)).epsilon(1e-14));
      CHECK(haversine_km(a1, o1, a3, o3) <= d12 + haversine_km(a2, o2, a3, o3) + 1e-9);
    }
  }

  TEST_CASE("decay weight reference values") {
    CHECK(decay_weight(0, 0, 0.1, 100) == 1.0);
    CHECK(decay_weight(1, 0, 0.1, 100) == doctest::Approx(std::exp(-0.1)).epsilon(1e-14));
    CHECK(decay_weight(0.5, 0, 0.1, 100) == doctest::Approx(0.0));
    CHECK(decay_weight(0, 0.01, 0.1, 100) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(decay_weight(0.25, 0, 0, 0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(havercosine(0) == 1.0);
    CHECK(havercosine(std::numbers::pi) == doctest::Approx(0.0));
  }

  TEST_CASE("decay weight lies in [0, 1] and peaks at whole-day lags") {
    Rng rng(6);
    for (int i = 0; i < 2000; ++i) {
      const double dt = rng.uniform(0, 30), dd = rng.uniform(0, 5);
      const double w = decay_weight(dt, dd, 0.1, 100);
      CHECK(w >= 0.0);
      CHECK(w <= 1.0);
      const double day = std::floor(dt);
      CHECK(w <= decay_weight(day, dd, 0.1, 100) + 1e-12);
      CHECK(decay_weight(dt, dd + 0.01, 0.1, 100) <= w);
    }
  }

  TEST_CASE("aggregated state matches a plain recurrence") {
    Rng rng(7);
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      UserNetConfig cfg;
      cfg.dim = 5;
      cfg.beta = 2.0;
      UserNet net(2, 6, cfg, seed);
      const auto ev = random_events(rng, 1 + rng.index(8), 6);
      const UserNetOracle oracle(net);
      const auto got = net.aggregated_state(ev);
      const auto want = oracle.aggregate(ev);
      REQUIRE(got.size() == want.size());
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-9));
      const auto p = net.scores(ev, 1);
      const auto q = oracle.probabilities(ev, 1);
      for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-9));
    }
  }

  TEST_CASE("aggregation edge cases") {
    UserNet net(1, 4, {}, 3);
    const UserNetOracle oracle(net);
    SUBCASE("single step returns the first hidden state") {
      const std::vector<CheckIn> ev{{0, kBase, 30.0, -97.0, 2}};
      const auto h = oracle.hidden(ev);
      const auto got = net.aggregated_state(ev);
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(h[0][i]).epsilon(1e-12));
    }
    SUBCASE("co-located events at one instant are averaged evenly") {
      const std::vector<CheckIn> ev{{0, kBase, 30.0, -97.0, 1}, {0, kBase, 30.0, -97.0, 3}};
      const auto h = oracle.hidden(ev);
      const auto got = net.aggregated_state(ev);
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx((h[0][i] + h[1][i]) / 2).epsilon(1e-12));
    }
    SUBCASE("a huge spatial decay keeps only the current state") {
      UserNetConfig cfg;
      cfg.beta = 1e9;
      UserNet sharp(1, 4, cfg, 3);
      const std::vector<CheckIn> ev{{0, kBase, 30.0, -97.0, 1}, {0, kBase + 60, 30.1, -97.0, 0}, {0, kBase + 600, 30.2, -97.0, 3}};
      const auto h = UserNetOracle(sharp).hidden(ev);
      const auto got = sharp.aggregated_state(ev);
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(h[2][i]).epsilon(1e-12));
    }
  }

  TEST_CASE("score rows are distributions; empty history is uniform") {
    Rng rng(8);
    const auto ds = random_dataset(rng, 6, 7);
    UserNet net(ds.num_users(), ds.num_pois(), {}, 1);
    for (Timestamp cut : {kBase - 1, kBase + 3 * kDay, kBase + 40 * kDay}) {
      const auto s = predict_user_scores_at(ds, net, cut);
      for (std::size_t u = 0; u < s.rows(); ++u) {
        double sum = 0;
        for (double v : s.row(u)) {
          CHECK(v >= 0.0);
          sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
    const auto early = predict_user_scores_at(ds, net, kBase - 1);
    for (double v : early.values()) CHECK(v == doctest::Approx(1.0 / static_cast<double>(ds.num_pois())));
    CHECK(net.scores({}, 0, ScoreOutput::raw_logits) == std::vector<double>(ds.num_pois(), 0.0));
  }

  TEST_CASE("scores at a cut use only strictly earlier events") {
    Rng rng(9);
    const auto ds = random_dataset(rng, 5, 6);
    UserNet net(ds.num_users(), ds.num_pois(), {}, 2);
    for (UserIndex u = 0; u < ds.num_users(); ++u) {
      const auto traj = ds.trajectory(u);
      const auto pos = traj.size() / 2;
      const auto s = predict_user_scores_at(ds, net, traj[pos].timestamp);
      std::size_t before = 0;
      while (before < traj.size() && traj[before].timestamp < traj[pos].timestamp) ++before;
      const auto want = net.scores(traj.first(before), u);
      for (std::size_t l = 0; l < want.size(); ++l) CHECK(s(u, l) == want[l]);
    }
    const auto end = predict_user_scores_train_end(ds, net);
    for (UserIndex u = 0; u < ds.num_users(); ++u) {
      const auto want = net.scores(ds.train(u), u);
      for (std::size_t l = 0; l < want.size(); ++l) CHECK(end(u, l) == want[l]);
    }
  }

  TEST_CASE("context limits the history fed to the network") {
    Rng rng(10);
    UserNetConfig cfg;
    cfg.context = 3;
    UserNet net(1, 5, cfg, 4);
    const auto ev = random_events(rng, 9, 5);
    CHECK(net.scores(ev, 0) == net.scores(std::span<const CheckIn>(ev).last(3), 0));
  }

  TEST_CASE("relabelling POIs permutes the scores") {
    Rng rng(11);
    const std::size_t N = 6;
    UserNet net(2, N, {}, 5);
    std::vector<std::uint32_t> perm = rng.sample_distinct(N, N);
    auto ck = net.checkpoint();
    auto permute_rows = [&](Matrix& m) {
      Matrix out(m.rows(), m.cols());
      for (std::size_t l = 0; l < N; ++l)
        for (std::size_t c = 0; c < m.cols(); ++c) out(perm[l], c) = m(l, c);
      m = out;
    };
    for (auto& [name, m] : ck.tensors)
      if (name == "user_net.poi_embedding" || name == "user_net.w_out" || name == "user_net.b_out") permute_rows(m);
    const auto twin = UserNet::from_checkpoint(ck);
    auto ev = random_events(rng, 7, N);
    auto relabelled = ev;
    for (auto& e : relabelled) e.poi = perm[e.poi];
    const auto a = net.scores(ev, 1);
    const auto b = twin.scores(relabelled, 1);
    for (std::size_t l = 0; l < N; ++l) CHECK(b[perm[l]] == doctest::Approx(a[l]).epsilon(1e-12));
  }

  TEST_CASE("memorizes a deterministic cycle") {
    const auto ds = make_dataset(cycle_visits("A", {"x", "y", "z"}, 60), 0.8);
    UserNet net(ds.num_users(), ds.num_pois(), {}, 1);
    TrainConfig tc;
    tc.epochs = 200;
    tc.optimizer.learning_rate = 0.01;
    const auto log = train_user_net(net, ds, tc);
    CHECK(log.epoch_loss.back() < 0.1 * log.epoch_loss.front());
    CHECK(user_net_train_accuracy(net, ds) == 1.0);
    const auto traj = ds.trajectory(0);
    for (std::size_t pos = ds.train_size(0); pos < traj.size(); ++pos) {
      const auto s = net.scores(traj.first(pos), 0);
      CHECK(std::max_element(s.begin(), s.end()) - s.begin() == traj[pos].poi);
    }
  }

  TEST_CASE("zero epochs leave the initialization untouched; training is deterministic") {
    Rng rng(12);
    const auto ds = random_dataset(rng, 4, 5);
    UserNet net(ds.num_users(), ds.num_pois(), {}, 9);
    const auto before = num::encode_checkpoint(net.checkpoint());
    TrainConfig none;
    none.epochs = 0;
    CHECK(train_user_net(net, ds, none).epoch_loss.empty());
    CHECK(num::encode_checkpoint(net.checkpoint()) == before);
    CHECK(num::encode_checkpoint(UserNet(ds.num_users(), ds.num_pois(), {}, 9).checkpoint()) == before);
    CHECK(num::encode_checkpoint(UserNet(ds.num_users(), ds.num_pois(), {}, 10).checkpoint()) != before);

    TrainConfig few;
    few.epochs = 3;
    UserNet a(ds.num_users(), ds.num_pois(), {}, 9), b(ds.num_users(), ds.num_pois(), {}, 9);
    CHECK(train_user_net(a, ds, few).epoch_loss == train_user_net(b, ds, few).epoch_loss);
    CHECK(num::encode_checkpoint(a.checkpoint()) == num::encode_checkpoint(b.checkpoint()));
    CHECK(num::encode_checkpoint(a.checkpoint()) != before);
  }

  TEST_CASE("checkpoint round trip preserves predictions") {
    Rng rng(13);
    UserNetConfig cfg;
    cfg.dim = 3;
    cfg.alpha = 0.3;
    cfg.beta = 7.5;
    cfg.context = 4;
    UserNet net(3, 4, cfg, 2);
    const auto back = UserNet::from_checkpoint(num::decode_checkpoint(num::encode_checkpoint(net.checkpoint())));
    CHECK(back.config().alpha == 0.3);
    CHECK(back.config().context == 4);
    const auto ev = random_events(rng, 6, 4);
    CHECK(back.scores(ev, 2) == net.scores(ev, 2));
    auto wrong = net.checkpoint();
    wrong.meta["kind"] = "poi_net";
    CHECK_THROWS_AS(UserNet::from_checkpoint(wrong), DataError);
  }

  TEST_CASE("invalid inputs") {
    UserNet net(2, 3, {}, 1);
    num::Tape tape;
    const std::vector<CheckIn> bad{{0, kBase, 0, 0, 3}};
    CHECK_THROWS_AS(net.forward(tape, bad, 0), ShapeError);
    const std::vector<CheckIn> ok{{0, kBase, 0, 0, 1}};
    CHECK_THROWS_AS(net.forward(tape, ok, 2), ShapeError);
    CHECK_THROWS_AS(net.window_loss(tape, ok, 0), ShapeError);
    CHECK_THROWS_AS(UserNet(0, 3, {}, 1), UsageError);
  }

  TEST_CASE("window loss passes the gradient check at the default decay") {
    Rng rng(14);
    UserNet net(3, 5, {}, 3);
    const auto ev = random_events(rng, 6, 5, 2);
    CHECK(num::gradient_check([&](num::Tape& t) { return net.window_loss(t, ev, 2); }, net.parameters()) < 1e-4);
  }
}
