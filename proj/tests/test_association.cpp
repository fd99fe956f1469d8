#include <doctest.h>

#include "bsda/association.hpp"
#include "bsda/errors.hpp"
#include "bsda/synthetic.hpp"
#include "support.hpp"

using namespace bsda;
using namespace testing;

namespace {

Matrix random_stochastic(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0;
    for (double& v : m.row(i)) s += (v = rng.uniform() + 1e-3);
    for (double& v : m.row(i)) v /= s;
  }
  return m;
}

SimilarityMatrix random_similarity(Rng& rng, SimilarityKind kind, std::size_t n) {
  SimilarityMatrix s{kind, Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s.values(i, j) = i == j ? 1.0 : (rng.bernoulli(0.3) ? 0.0 : rng.uniform());
  return s;
}

}  // namespace

TEST_SUITE("association") {
  TEST_CASE("user similarity is the share of one's locations the other visited") {
    const auto ds = make_dataset({{"A", "x", kBase},
                                  {"A", "y", kBase + 10},
                                  {"B", "x", kBase + 20},
                                  {"B", "y", kBase + 30},
                                  {"B", "z", kBase + 40},
                                  {"B", "w", kBase + 50},
                                  {"C", "q", kBase + 60},
                                  {"C", "q", kBase + 70}});
    const auto sim = user_similarity(ds);
    const auto A = *ds.user_ids().find("A"), B = *ds.user_ids().find("B"), C = *ds.user_ids().find("C");
    CHECK(sim.kind == SimilarityKind::user);
    CHECK(sim.values(A, B) == 1.0);
    CHECK(sim.values(B, A) == 0.5);
    CHECK(sim.values(A, C) == 0.0);
    CHECK(sim.values(C, C) == 1.0);
  }

  TEST_CASE("same-day user similarity needs a shared day") {
    const auto ds = make_dataset({{"A", "x", kBase},
                                  {"A", "y", kBase + kDay},
                                  {"B", "x", kBase + 3600},
                                  {"B", "y", kBase + 3 * kDay}});
    const auto A = *ds.user_ids().find("A"), B = *ds.user_ids().find("B");
    CHECK(user_similarity(ds).values(A, B) == 1.0);
    CHECK(user_similarity(ds, UserSimilarityMode::same_day).values(A, B) == 0.5);
    CHECK_THROWS_AS(parse_user_similarity_mode("jaccard"), UsageError);
  }

  TEST_CASE("POI similarity counts days with a shared visitor") {
    // x and y are visited together by one user on two days, x and z on one.
    const auto ds = make_dataset({{"A", "x", kBase},
                                  {"A", "y", kBase + 3600},
                                  {"B", "x", kBase + 7200},
                                  {"A", "x", kBase + kDay},
                                  {"A", "y", kBase + kDay + 60},
                                  {"A", "z", kBase + kDay + 120},
                                  {"B", "y", kBase + 2 * kDay},
                                  {"C", "z", kBase + 2 * kDay + 5},
                                  {"C", "z", kBase + 2 * kDay + 50}});
    const auto x = *ds.poi_ids().find("x"), y = *ds.poi_ids().find("y"), z = *ds.poi_ids().find("z");
    const auto raw = poi_shared_visitor_days(ds);
    CHECK(raw(x, y) == 2.0);
    CHECK(raw(y, x) == 2.0);
    CHECK(raw(x, z) == 1.0);
    CHECK(raw(x, x) == 0.0);
    const auto sim = poi_similarity(ds);
    CHECK(sim.values(x, y) == 1.0);
    CHECK(sim.values(x, z) == 0.5);
    CHECK(sim.values(z, z) == 1.0);
    const auto row = poi_similarity(ds, PoiNormalization::row_max);
    CHECK(row.values(z, x) == 1.0);
    CHECK(row.values(z, y) == 1.0);
  }

  TEST_CASE("similarities match brute-force oracles on random data") {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
      const auto ds = random_dataset(rng, 2 + rng.index(6), 2 + rng.index(7), 0.5 + 0.5 * rng.uniform());
      const auto u = user_similarity(ds).values;
      const auto uo = user_similarity_oracle(ds);
      for (std::size_t i = 0; i < u.size(); ++i) CHECK(u[i] == doctest::Approx(uo[i]).epsilon(1e-15));
      CHECK(poi_shared_visitor_days(ds) == poi_days_oracle(ds));
      const auto p = poi_similarity(ds).values;
      const auto po = poi_similarity_oracle(ds);
      for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == doctest::Approx(po[i]).epsilon(1e-15));
      for (double v : p.values()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }

  TEST_CASE("test events never enter the similarities") {
    const auto with_test = make_dataset({{"A", "x", kBase},
                                         {"A", "y", kBase + 10},
                                         {"A", "z", kBase + 20},
                                         {"B", "x", kBase + 30},
                                         {"B", "y", kBase + 40},
                                         {"B", "z", kBase + 50}},
                                        0.6);
    const auto z = *with_test.poi_ids().find("z");
    const auto A = *with_test.user_ids().find("A"), B = *with_test.user_ids().find("B");
    CHECK(user_similarity(with_test).values(A, B) == 1.0);
    CHECK(poi_shared_visitor_days(with_test)(0, z) == 0.0);
  }

  TEST_CASE("identity similarity leaves stochastic scores unchanged") {
    Rng rng(22);
    const auto s = random_stochastic(rng, 7, 5);
    const auto out = adjust_user_scores(identity_similarity(SimilarityKind::user, 7), s);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(out[i] - s[i]) < 1e-12);
  }

  TEST_CASE("hand-computed 2 x 2 adjustment") {
    SimilarityMatrix corr{SimilarityKind::user, Matrix(2, 2, {1.0, 0.5, 0.2, 1.0})};
    const Matrix s(2, 2, {0.6, 0.4, 0.1, 0.9});
    const auto out = adjust_user_scores(corr, s);
    CHECK(out(0, 0) == doctest::Approx(0.65 / 1.5).epsilon(1e-14));
    CHECK(out(0, 1) == doctest::Approx(0.85 / 1.5).epsilon(1e-14));
    CHECK(out(1, 0) == doctest::Approx(0.22 / 1.2).epsilon(1e-14));
    CHECK(out(1, 1) == doctest::Approx(0.98 / 1.2).epsilon(1e-14));
  }

  TEST_CASE("adjusted rows are convex blends of the rows they draw on") {
    Rng rng(23);
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t n = 2 + rng.index(6), m = 2 + rng.index(6);
      const auto corr = random_similarity(rng, SimilarityKind::poi, n);
      const auto s = random_stochastic(rng, n, m);
      const auto out = adjust_poi_scores(corr, s);
      for (std::size_t r = 0; r < n; ++r) {
        double sum = 0;
        for (std::size_t c = 0; c < m; ++c) {
          double lo = 1e300, hi = -1e300;
          for (std::size_t j = 0; j < n; ++j)
            if (corr.values(r, j) > 0) {
              lo = std::min(lo, s(j, c));
              hi = std::max(hi, s(j, c));
            }
          CHECK(out(r, c) >= lo - 1e-12);
          CHECK(out(r, c) <= hi + 1e-12);
          sum += out(r, c);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("a row with no neighbours keeps its own scores") {
    Rng rng(24);
    auto corr = random_similarity(rng, SimilarityKind::poi, 4);
    for (std::size_t j = 0; j < 4; ++j) corr.values(2, j) = j == 2 ? 1.0 : 0.0;
    const auto s = random_stochastic(rng, 4, 3);
    const auto out = adjust_poi_scores(corr, s);
    for (std::size_t c = 0; c < 3; ++c) CHECK(out(2, c) == doctest::Approx(s(2, c)).epsilon(1e-14));
  }

  TEST_CASE("raising a neighbour's weight pulls the row toward it") {
    Rng rng(25);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 3 + rng.index(4);
      auto corr = random_similarity(rng, SimilarityKind::user, n);
      const auto s = random_stochastic(rng, n, 4);
      const auto before = adjust_user_scores(corr, s);
      const std::size_t r = rng.index(n), nb = (r + 1 + rng.index(n - 1)) % n, c = rng.index(4);
      corr.values(r, nb) += 0.5;
      const auto after = adjust_user_scores(corr, s);
      if (s(nb, c) > before(r, c)) CHECK(after(r, c) > before(r, c));
      if (s(nb, c) < before(r, c)) CHECK(after(r, c) < before(r, c));
    }
  }

  TEST_CASE("planted clones are more similar than other pairs") {
    SyntheticSpec spec;
    const auto data = generate_synthetic_with_truth(spec, 3);
    const auto sim = user_similarity(data.dataset).values;
    std::set<std::pair<UserIndex, UserIndex>> clones;
    for (auto [a, b] : data.truth.clone_pairs) {
      clones.insert({a, b});
      clones.insert({b, a});
    }
    double clone_sum = 0, other_sum = 0;
    std::size_t clone_n = 0, other_n = 0;
    for (UserIndex a = 0; a < sim.rows(); ++a)
      for (UserIndex b = 0; b < sim.rows(); ++b) {
        if (a == b) continue;
        if (clones.count({a, b})) {
          clone_sum += sim(a, b);
          ++clone_n;
        } else {
          other_sum += sim(a, b);
          ++other_n;
        }
      }
    REQUIRE(clone_n > 0);
    CHECK(clone_sum / clone_n > other_sum / other_n);
  }

  TEST_CASE("top-k keeps the largest off-diagonal entries") {
    SimilarityMatrix s{SimilarityKind::user, Matrix(3, 3, {1.0, 0.2, 0.5, 0.3, 1.0, 0.3, 0.0, 0.9, 1.0})};
    auto one = s;
    truncate_top_k(one, 1);
    CHECK(one.values == Matrix(3, 3, {1.0, 0.0, 0.5, 0.3, 1.0, 0.0, 0.0, 0.9, 1.0}));
    auto none = s;
    truncate_top_k(none, 0);
    CHECK(none.values == s.values);
  }

  TEST_CASE("triplet files round trip exactly") {
    Rng rng(26);
    const auto dir = fresh_dir("triplets");
    for (auto kind : {SimilarityKind::user, SimilarityKind::poi}) {
      auto s = random_similarity(rng, kind, 6);
      s.values(0, 1) = 1.0 / 3.0;
      write_similarity(dir / "s.tsv", s);
      const auto back = read_similarity(dir / "s.tsv");
      CHECK(back.kind == kind);
      CHECK(back.values == s.values);
    }
    std::ofstream(dir / "bad.tsv") << "# bsda-similarity kind=user size=2\n5\t0\t1\n";
    CHECK_THROWS_AS(read_similarity(dir / "bad.tsv"), DataError);
    std::ofstream(dir / "junk.tsv") << "hello\n";
    CHECK_THROWS_AS(read_similarity(dir / "junk.tsv"), DataError);
  }

  TEST_CASE("mismatched shapes and kinds are rejected") {
    Rng rng(27);
    const auto s = random_stochastic(rng, 3, 4);
    CHECK_THROWS_AS(adjust_user_scores(identity_similarity(SimilarityKind::user, 4), s), ShapeError);
    CHECK_THROWS_AS(adjust_user_scores(identity_similarity(SimilarityKind::poi, 3), s), ShapeError);
    CHECK_THROWS_AS(adjust_poi_scores(identity_similarity(SimilarityKind::user, 3), s), ShapeError);
    SimilarityMatrix rect{SimilarityKind::user, Matrix(3, 2)};
    CHECK_THROWS_AS(adjust_scores(rect, s), ShapeError);
  }
}
