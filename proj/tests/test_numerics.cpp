#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "bsda/errors.hpp"
#include "bsda/numerics.hpp"
#include "bsda/poi_net.hpp"
#include "bsda/random.hpp"
#include "bsda/user_net.hpp"
#include "support.hpp"

using namespace bsda;
using namespace bsda::num;

namespace {

Parameter scalar_param(const char* name, double v) { return Parameter(name, Matrix(1, 1, v)); }

Parameter random_param(const char* name, std::size_t r, std::size_t c, Rng& rng) {
  Parameter p(name, Matrix(r, c));
  init_normal(p, 1.0, rng);
  return p;
}

}  // namespace

TEST_SUITE("numerics") {
  TEST_CASE("tanh at zero") {
    auto x = scalar_param("x", 0.0);
    Tape tape;
    auto y = tape.tanh(tape.parameter(x));
    CHECK(tape.value(y)[0] == 0.0);
    tape.backward(y);
    CHECK(x.grad[0] == doctest::Approx(1.0).epsilon(1e-15));
  }

  TEST_CASE("cross-entropy of uniform logits is ln C") {
    Tape tape;
    auto logits = tape.constant(Matrix(10, 1, 0.7));
    auto loss = tape.softmax_cross_entropy(logits, 4);
    CHECK(tape.value(loss)[0] == doctest::Approx(std::log(10.0)).epsilon(1e-14));
    CHECK(tape.value(loss)[0] == doctest::Approx(2.302585).epsilon(1e-6));
    CHECK_THROWS_AS(tape.softmax_cross_entropy(logits, 10), ShapeError);
  }

  TEST_CASE("cross-entropy is stable for large logits") {
    Tape tape;
    Matrix m(3, 1);
    m[0] = 1000.0;
    m[1] = 0.0;
    m[2] = -1000.0;
    auto loss = tape.softmax_cross_entropy(tape.constant(m), 0);
    CHECK(tape.value(loss)[0] == doctest::Approx(0.0));
  }

  TEST_CASE("identity matmul passes values and gradients through") {
    Rng rng(1);
    auto a = random_param("a", 3, 1, rng);
    Matrix via_identity, direct;
    {
      Tape tape;
      auto y = tape.matmul(tape.constant(Matrix::identity(3)), tape.parameter(a));
      CHECK(tape.value(y) == a.value);
      tape.backward(tape.softmax_cross_entropy(y, 1));
      via_identity = a.grad;
    }
    a.zero_grad();
    {
      Tape tape;
      tape.backward(tape.softmax_cross_entropy(tape.parameter(a), 1));
      direct = a.grad;
    }
    CHECK(via_identity == direct);
  }

  TEST_CASE("shape mismatch and non-finite values are errors") {
    Tape tape;
    auto a = tape.constant(Matrix(2, 3));
    auto b = tape.constant(Matrix(2, 3));
    CHECK_THROWS_AS(tape.matmul(a, b), ShapeError);
    CHECK_THROWS_AS(tape.add(a, tape.constant(Matrix(3, 2))), ShapeError);
    auto big = tape.constant(Matrix(1, 1, 1e300));
    CHECK_THROWS_AS(tape.scale(big, 1e300), NumericalError);
    CHECK_THROWS_AS(tape.constant(Matrix(1, 1, std::numeric_limits<double>::quiet_NaN())), NumericalError);
  }

  TEST_CASE("embedding lookup gradient lands in one row") {
    Rng rng(2);
    auto table = random_param("e", 4, 3, rng);
    Tape tape;
    auto row = tape.embedding(table, 2);
    CHECK(tape.value(row).rows() == 3);
    CHECK(tape.value(row)[1] == table.value(2, 1));
    tape.backward(tape.softmax_cross_entropy(row, 0));
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 3; ++c)
        if (r != 2) CHECK(table.grad(r, c) == 0.0);
    CHECK(table.grad(2, 0) != 0.0);
    CHECK_THROWS_AS(tape.embedding(table, 4), ShapeError);
  }

  TEST_CASE("gradient check of x squared") {
    auto x = scalar_param("x", 3.0);
    auto f = [&](Tape& t) {
      auto v = t.parameter(x);
      return t.mul(v, v);
    };
    {
      Tape tape;
      tape.backward(f(tape));
      CHECK(x.grad[0] == doctest::Approx(6.0).epsilon(1e-15));
      x.zero_grad();
    }
    CHECK(gradient_check(f, {&x}) < 1e-7);
  }

  TEST_CASE("gradient check of a constant function") {
    auto x = scalar_param("x", 3.0);
    CHECK(gradient_check([&](Tape& t) { return t.constant(Matrix(1, 1, 5.0)); }, {&x}) == 0.0);
  }

  TEST_CASE("gradient check of every op") {
    Rng rng(9);
    auto w = random_param("w", 3, 4, rng);
    auto x = random_param("x", 4, 1, rng);
    auto y = random_param("y", 3, 1, rng);
    auto f = [&](Tape& t) {
      auto h = t.tanh(t.add(t.matmul(t.parameter(w), t.parameter(x)), t.parameter(y)));
      auto g = t.mul(h, t.scale(t.parameter(y), 0.5));
      const std::vector<Var> xs{h, g};
      const std::vector<double> ws{0.3, 1.7};
      auto avg = t.weighted_average(xs, ws);
      auto cat = t.concat({avg, t.parameter(y)});
      const std::vector<Var> parts{t.softmax_cross_entropy(cat, 2), t.softmax_cross_entropy(h, 0)};
      return t.add(t.mean(parts), t.sum(parts));
    };
    CHECK(gradient_check(f, {&w, &x, &y}) < 1e-6);
  }

  TEST_CASE("backward visits nodes in exact reverse order") {
    Rng rng(4);
    auto a = random_param("a", 2, 1, rng);
    Tape tape;
    auto v = tape.tanh(tape.scale(tape.parameter(a), 2.0));
    auto loss = tape.softmax_cross_entropy(tape.add(v, tape.parameter(a)), 1);
    tape.backward(loss);
    const auto& order = tape.last_backward_order();
    REQUIRE(order.size() == tape.size());
    for (std::size_t i = 0; i < order.size(); ++i) CHECK(order[i] == tape.size() - 1 - i);
  }

  TEST_CASE("backward of a sum equals the sum of backwards") {
    Rng rng(6);
    auto w = random_param("w", 3, 3, rng);
    auto x = random_param("x", 3, 1, rng);
    auto l1 = [&](Tape& t) { return t.softmax_cross_entropy(t.matmul(t.parameter(w), t.parameter(x)), 0); };
    auto l2 = [&](Tape& t) { return t.softmax_cross_entropy(t.tanh(t.matmul(t.parameter(w), t.parameter(x))), 2); };
    Matrix g1, g2, g12;
    {
      Tape t;
      t.backward(l1(t));
      g1 = w.grad;
      w.zero_grad();
      x.zero_grad();
    }
    {
      Tape t;
      t.backward(l2(t));
      g2 = w.grad;
      w.zero_grad();
      x.zero_grad();
    }
    {
      Tape t;
      const std::vector<Var> both{l1(t), l2(t)};
      t.backward(t.sum(both));
      g12 = w.grad;
    }
    for (std::size_t i = 0; i < g12.size(); ++i) CHECK(g12[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-14));
  }

  TEST_CASE("frozen parameters take no gradient") {
    auto x = scalar_param("x", 1.0);
    const Parameter& frozen = x;
    Tape tape;
    auto v = tape.parameter(frozen);
    CHECK_FALSE(tape.requires_grad(v));
    tape.backward(tape.mul(v, v));
    CHECK(x.grad[0] == 0.0);
  }

  TEST_CASE("sgd step") {
    auto p = scalar_param("p", 1.0);
    p.grad[0] = 2.0;
    Optimizer opt({OptimizerKind::sgd, 0.1});
    opt.step({&p});
    CHECK(p.value[0] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(p.grad[0] == 0.0);
    CHECK(opt.steps() == 1);
  }

  TEST_CASE("zero gradient leaves parameters unchanged") {
    for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam}) {
      auto p = scalar_param("p", 1.25);
      Optimizer opt({kind, 0.1});
      opt.step({&p});
      CHECK(p.value[0] == 1.25);
    }
  }

  TEST_CASE("adam first step matches the hand-evaluated recurrences") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      const double g = rng.uniform(-3.0, 3.0);
      const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
      auto p = scalar_param("p", 0.5);
      p.grad[0] = g;
      Optimizer opt({OptimizerKind::adam, lr, b1, b2, eps});
      opt.step({&p});
      const double m = (1 - b1) * g, v = (1 - b2) * g * g;
      const double mhat = m / (1 - b1), vhat = v / (1 - b2);
      const double expected = 0.5 - lr * mhat / (std::sqrt(vhat) + eps);
      CHECK(p.value[0] == doctest::Approx(expected).epsilon(1e-14));
      CHECK(std::abs(0.5 - p.value[0]) == doctest::Approx(lr).epsilon(1e-6));
    }
  }

  TEST_CASE("adam second step follows the moment recurrences") {
    auto p = scalar_param("p", 0.0);
    Optimizer opt({OptimizerKind::adam, 0.01});
    p.grad[0] = 1.0;
    opt.step({&p});
    p.grad[0] = -2.0;
    opt.step({&p});
    const double m = 0.9 * 0.1 + 0.1 * -2.0;
    const double v = 0.999 * 0.001 + 0.001 * 4.0;
    const double step2 = 0.01 * (m / (1 - 0.81)) / (std::sqrt(v / (1 - 0.999 * 0.999)) + 1e-8);
    const double step1 = 0.01 * 1.0 / (1.0 + 1e-8);
    CHECK(p.value[0] == doctest::Approx(-step1 - step2).epsilon(1e-12));
  }

  TEST_CASE("non-finite gradient is an error") {
    auto p = scalar_param("p", 1.0);
    p.grad[0] = std::numeric_limits<double>::infinity();
    Optimizer opt({OptimizerKind::sgd, 0.1});
    CHECK_THROWS_AS(opt.step({&p}), NumericalError);
    CHECK(p.value[0] == 1.0);
    CHECK_THROWS_AS(parse_optimizer_kind("rmsprop"), UsageError);
  }

  TEST_CASE("checkpoint round trip is bit exact") {
    Rng rng(12);
    Checkpoint c;
    c.meta = {{"kind", "test"}, {"note", "tab\tand=equals"}};
    Matrix m(3, 2);
    for (double& v : m.values()) v = rng.normal() * 1e-3;
    m[0] = -0.0;
    m[1] = std::numeric_limits<double>::denorm_min();
    m[2] = std::numeric_limits<double>::max();
    c.tensors.emplace_back("w", m);
    c.tensors.emplace_back("empty", Matrix(0, 4));
    const auto bytes = encode_checkpoint(c);
    CHECK(bytes.substr(0, 8) == "BSDACKPT");
    CHECK(static_cast<unsigned char>(bytes[8]) == 1);
    CHECK(bytes[9] == 0);
    const auto back = decode_checkpoint(bytes);
    CHECK(back.meta == c.meta);
    REQUIRE(back.tensors.size() == 2);
    CHECK(std::memcmp(back.tensor("w").values().data(), m.values().data(), m.size() * sizeof(double)) == 0);
    CHECK(std::signbit(back.tensor("w")[0]));
    CHECK(back.tensor("empty").cols() == 4);
    CHECK(encode_checkpoint(back) == bytes);
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
    CHECK_THROWS_AS(decode_checkpoint("NOTACKPT"), DataError);

    const auto dir = testing::fresh_dir("ckpt");
    save_checkpoint(dir / "c.bin", c);
    CHECK(testing::slurp(dir / "c.bin") == bytes);
    CHECK(encode_checkpoint(load_checkpoint(dir / "c.bin")) == bytes);
  }

  TEST_CASE("restore checks shapes and names") {
    Rng rng(13);
    auto a = random_param("a", 2, 2, rng);
    auto snap = snapshot({&a});
    auto b = Parameter("a", Matrix(2, 2));
    restore(snap, {&b});
    CHECK(b.value == a.value);
    auto wrong = Parameter("a", Matrix(3, 2));
    CHECK_THROWS(restore(snap, {&wrong}));
    auto missing = Parameter("z", Matrix(2, 2));
    CHECK_THROWS(restore(snap, {&missing}));
  }

  TEST_CASE("forward is deterministic") {
    UserNet net(3, 5, {4}, 21);
    std::vector<CheckIn> ev{{0, 1000, 30.0, -97.0, 1}, {0, 5000, 30.01, -97.0, 3}, {0, 90000, 30.0, -97.01, 2}};
    CHECK(net.scores(ev, 0) == net.scores(ev, 0));
    UserNet twin(3, 5, {4}, 21);
    CHECK(twin.scores(ev, 0) == net.scores(ev, 0));
  }

  TEST_CASE("composite networks pass gradient checks over 20 seeds") {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      Rng rng(seed * 7919);
      const std::size_t M = 2 + rng.index(5), N = 2 + rng.index(5), len = 2 + rng.index(3);
      UserNetConfig uc;
      uc.dim = 2 + rng.index(3);
      uc.beta = 1.0;
      UserNet un(M, N, uc, seed);
      std::vector<CheckIn> ev;
      Timestamp t = testing::kBase;
      for (std::size_t k = 0; k < len; ++k) {
        t += static_cast<Timestamp>(rng.index(2 * testing::kDay));
        ev.push_back({0, t, 30.0 + rng.uniform(0, 0.1), -97.0 + rng.uniform(0, 0.1), static_cast<PoiIndex>(rng.index(N))});
      }
      worst = std::max(worst, gradient_check([&](Tape& tp) { return un.window_loss(tp, ev, 1); }, un.parameters()));

      PoiNetConfig pc;
      pc.dim = 2 + rng.index(3);
      pc.slot_dim = 1 + rng.index(3);
      pc.slots_per_day = 4;
      PoiNet pn(M, N, pc, seed);
      std::vector<VisitEvent> vs;
      for (std::size_t k = 0; k < len; ++k)
        vs.push_back({0, static_cast<UserIndex>(rng.index(M)), static_cast<int>(rng.index(4)),
                      static_cast<int>(rng.index(7)), 0});
      worst = std::max(worst, gradient_check([&](Tape& tp) { return pn.window_loss(tp, vs, 0); }, pn.parameters()));
    }
    CHECK(worst < 1e-4);
  }
}
