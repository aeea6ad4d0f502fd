#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "lewisgame/numerics.hpp"

using namespace lewisgame;

namespace {

// Independent softmax oracle: plain exp/sum, no max subtraction.
std::vector<double> softmax_oracle(const std::vector<double>& logits, double tau) {
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] / tau);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// Independent rank-then-Pearson oracle, O(n^2) ranking.
double spearman_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  auto rank = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0.0, equal = 0.0;
      for (std::size_t j = 0; j < v.size(); ++j) {
        if (v[j] < v[i]) less += 1.0;
        if (v[j] == v[i]) equal += 1.0;
      }
      r[i] = less + 0.5 * (equal + 1.0);
    }
    return r;
  };
  const std::vector<double> rx = rank(x), ry = rank(y);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(rx.size());
  my /= static_cast<double>(ry.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("vec64 and mat64 reject non-finite entries", "[numerics]") {
  CHECK_THROWS_AS(Vec64({1.0, std::nan("")}), Error);
  CHECK_THROWS_AS(Vec64({1.0, std::numeric_limits<double>::infinity()}), Error);
  CHECK_THROWS_AS(Mat64(1, 2, {0.0, std::nan("")}), Error);
  CHECK_THROWS_AS(Mat64(2, 2, {1.0, 2.0, 3.0}), Error);  // shape mismatch
}

TEST_CASE("softmax matches direct oracle and frozen values", "[numerics]") {
  const Vec64 uniform = softmax(Vec64({0.0, 0.0, 0.0}), 1.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(uniform[i] == Catch::Approx(1.0 / 3.0).epsilon(1e-12));

  // frozen from the exp/sum oracle
  const Vec64 p = softmax(Vec64({1.0, 2.0, 3.0}), 1.0);
  CHECK(p[0] == Catch::Approx(0.09003057317038046).margin(1e-12));
  CHECK(p[1] == Catch::Approx(0.24472847105479767).margin(1e-12));
  CHECK(p[2] == Catch::Approx(0.6652409557748219).margin(1e-12));
  const std::vector<double> oracle = softmax_oracle({1.0, 2.0, 3.0}, 1.0);
  for (std::size_t i = 0; i < 3; ++i) CHECK(p[i] == Catch::Approx(oracle[i]).margin(1e-14));

  SECTION("stability at extreme logits") {
    const Vec64 q = softmax(Vec64({1000.0, 0.0}), 1.0);
    CHECK(q[0] == Catch::Approx(1.0).margin(1e-12));
    CHECK(q[1] == Catch::Approx(0.0).margin(1e-12));
    CHECK(std::isfinite(q[0]));
  }

  SECTION("probabilities sum to one") {
    RngStream rng(7, Stream::kInit);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> logits(5);
      for (double& v : logits) v = 20.0 * (rng.next_double() - 0.5);
      const Vec64 sp = softmax(Vec64(logits), 0.5 + rng.next_double());
      double sum = 0.0;
      for (std::size_t i = 0; i < sp.size(); ++i) {
        CHECK(sp[i] >= 0.0);
        sum += sp[i];
      }
      CHECK(sum == Catch::Approx(1.0).margin(1e-12));
    }
  }

  SECTION("shift invariance") {
    RngStream rng(11, Stream::kInit);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> logits(6);
      for (double& v : logits) v = 10.0 * (rng.next_double() - 0.5);
      const double c = 100.0 * (rng.next_double() - 0.5);
      std::vector<double> shifted = logits;
      for (double& v : shifted) v += c;
      const Vec64 a = softmax(Vec64(logits), 1.0);
      const Vec64 b = softmax(Vec64(shifted), 1.0);
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i] == Catch::Approx(b[i]).margin(1e-12));
      }
    }
  }

  SECTION("temperature must be positive") {
    CHECK_THROWS_AS(softmax(Vec64({1.0}), 0.0), Error);
    CHECK_THROWS_AS(softmax(Vec64({1.0}), -1.0), Error);
  }
}

TEST_CASE("log_softmax agrees with log of softmax", "[numerics]") {
  const Vec64 logits({3.0, -1.0, 0.5});
  const Vec64 p = softmax(logits, 0.7);
  const Vec64 lp = log_softmax(logits, 0.7);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(lp[i] == Catch::Approx(std::log(p[i])).margin(1e-12));
  }
  // stays finite where softmax underflows
  const Vec64 wide = log_softmax(Vec64({0.0, -800.0}), 1.0);
  CHECK(std::isfinite(wide[1]));
  CHECK(wide[1] == Catch::Approx(-800.0).margin(1e-9));
}

TEST_CASE("sigmoid values and saturation", "[numerics]") {
  CHECK(sigmoid(Vec64({0.0}))[0] == Catch::Approx(0.5).margin(1e-15));
  const Vec64 s = sigmoid(Vec64({1.0, -1.0}));
  CHECK(s[0] == Catch::Approx(0.7310585786300049).margin(1e-12));
  CHECK(s[1] == Catch::Approx(0.2689414213699951).margin(1e-12));
  // direct formula oracle
  CHECK(s[0] == Catch::Approx(1.0 / (1.0 + std::exp(-1.0))).margin(1e-15));

  const Vec64 sat = sigmoid(Vec64({40.0, -40.0}));
  CHECK(sat[0] == Catch::Approx(1.0).margin(1e-12));
  CHECK(sat[0] <= 1.0);
  CHECK(sat[1] > 0.0);
  CHECK(std::isfinite(sigmoid(Vec64({-1000.0}))[0]));
}

TEST_CASE("sample_categorical follows the distribution", "[numerics]") {
  RngStream rng(42, Stream::kSampling);

  SECTION("degenerate distribution") {
    for (int i = 0; i < 1000; ++i) {
      CHECK(sample_categorical(Vec64({0.0, 1.0, 0.0}), rng) == 1);
    }
    CHECK(sample_categorical(Vec64({1.0}), rng) == 0);
  }

  SECTION("fair coin frequency") {
    int zeros = 0;
    for (int i = 0; i < 10000; ++i) {
      if (sample_categorical(Vec64({0.5, 0.5}), rng) == 0) ++zeros;
    }
    const double freq = zeros / 10000.0;
    CHECK(freq >= 0.48);
    CHECK(freq <= 0.52);
  }

  SECTION("four categories converge within 0.01 at 100k draws") {
    const Vec64 probs({0.1, 0.2, 0.3, 0.4});
    std::vector<double> counts(4, 0.0);
    for (int i = 0; i < 100000; ++i) counts[sample_categorical(probs, rng)] += 1.0;
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(std::abs(counts[k] / 100000.0 - probs[k]) <= 0.01);
    }
  }

  SECTION("rejects invalid distributions") {
    CHECK_THROWS_AS(sample_categorical(Vec64({-0.1, 1.1}), rng), Error);
    CHECK_THROWS_AS(sample_categorical(Vec64({0.3, 0.3}), rng), Error);
  }
}

TEST_CASE("cosine similarity", "[numerics]") {
  const Vec64 e1({1.0, 0.0});
  const Vec64 e2({0.0, 1.0});
  CHECK(cosine(e1, e1) == Catch::Approx(1.0).margin(1e-15));
  CHECK(cosine(e1, e2) == Catch::Approx(0.0).margin(1e-15));
  CHECK(cosine(Vec64({1.0, 1.0}), Vec64({1.0, 0.0})) ==
        Catch::Approx(0.7071067811865476).margin(1e-12));

  SECTION("scaling invariance") {
    RngStream rng(3, Stream::kInit);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> a(5), b(5);
      for (double& v : a) v = rng.next_normal();
      for (double& v : b) v = rng.next_normal();
      const double lambda = 0.01 + 10.0 * rng.next_double();
      const double mu = 0.01 + 10.0 * rng.next_double();
      std::vector<double> la = a, mb = b;
      for (double& v : la) v *= lambda;
      for (double& v : mb) v *= mu;
      CHECK(cosine(Vec64(a), Vec64(b)) ==
            Catch::Approx(cosine(Vec64(la), Vec64(mb))).margin(1e-12));
    }
  }

  SECTION("clamped against rounding") {
    const Vec64 a({1.0, 1e-8});
    CHECK(cosine(a, a) <= 1.0);
  }

  SECTION("errors") {
    CHECK_THROWS_AS(cosine(Vec64({0.0, 0.0}), e1), Error);
    CHECK_THROWS_AS(cosine(Vec64({1.0}), e1), Error);
  }
}

TEST_CASE("l2_normalize", "[numerics]") {
  const Vec64 n = l2_normalize(Vec64({3.0, 4.0}));
  CHECK(n[0] == Catch::Approx(0.6).margin(1e-15));
  CHECK(n[1] == Catch::Approx(0.8).margin(1e-15));

  const Vec64 axis = l2_normalize(Vec64({2.0, 0.0, 0.0}));
  CHECK(axis[0] == Catch::Approx(1.0).margin(1e-15));
  CHECK(axis[1] == 0.0);

  SECTION("idempotent on unit vectors, norm within 1e-12") {
    RngStream rng(5, Stream::kInit);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> v(8);
      for (double& x : v) x = rng.next_normal();
      const Vec64 u = l2_normalize(Vec64(v));
      CHECK(norm(u) == Catch::Approx(1.0).margin(1e-12));
      const Vec64 uu = l2_normalize(u);
      for (std::size_t i = 0; i < u.size(); ++i) {
        CHECK(uu[i] == Catch::Approx(u[i]).margin(1e-15));
      }
    }
  }

  CHECK_THROWS_AS(l2_normalize(Vec64({0.0, 0.0})), Error);
}

TEST_CASE("spearman rank correlation", "[numerics]") {
  const std::vector<double> x123{1.0, 2.0, 3.0};
  CHECK(spearman(x123, std::vector<double>{10.0, 20.0, 30.0}) == Catch::Approx(1.0));
  CHECK(spearman(x123, std::vector<double>{3.0, 2.0, 1.0}) == Catch::Approx(-1.0));

  SECTION("ties use average ranks, matches independent oracle") {
    const std::vector<double> x{1.0, 2.0, 2.0, 3.0};
    const std::vector<double> y{1.0, 3.0, 2.0, 4.0};
    const double expected = spearman_oracle(x, y);
    CHECK(spearman(x, y) == Catch::Approx(expected).margin(1e-12));
    // frozen from the oracle
    CHECK(spearman(x, y) == Catch::Approx(0.9486832980505138).margin(1e-12));
  }

  SECTION("random inputs match the oracle") {
    RngStream rng(9, Stream::kInit);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<double> x(12), y(12);
      for (double& v : x) v = rng.next_index(6);  // force ties
      for (double& v : y) v = rng.next_normal();
      if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) continue;
      CHECK(spearman(x, y) == Catch::Approx(spearman_oracle(x, y)).margin(1e-12));
    }
  }

  SECTION("invariant under strictly increasing transforms") {
    RngStream rng(13, Stream::kInit);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<double> x(10), y(10);
      for (double& v : x) v = rng.next_normal();
      for (double& v : y) v = rng.next_normal();
      std::vector<double> tx = x, ty = y;
      for (double& v : tx) v = std::exp(0.5 * v);                  // strictly increasing
      for (double& v : ty) v = v * v * v + 2.0 * v;                // strictly increasing
      CHECK(spearman(x, y) == Catch::Approx(spearman(tx, ty)).margin(1e-12));
    }
  }

  SECTION("constant sequence is undefined") {
    CHECK_THROWS_AS(spearman(std::vector<double>{1.0, 1.0, 1.0}, x123), Error);
    CHECK_THROWS_AS(spearman(x123, std::vector<double>{2.0, 2.0, 2.0}), Error);
  }
}

TEST_CASE("average_ranks handles runs of ties", "[numerics]") {
  const std::vector<double> v{5.0, 1.0, 5.0, 3.0};
  const std::vector<double> r = average_ranks(v);
  CHECK(r[0] == Catch::Approx(3.5));
  CHECK(r[1] == Catch::Approx(1.0));
  CHECK(r[2] == Catch::Approx(3.5));
  CHECK(r[3] == Catch::Approx(2.0));
}
