#include <doctest.h>

#include <string>
#include <vector>

#include "hdpcmdp/chain.hpp"
#include "oracles.hpp"

using namespace hdpcmdp;

namespace {

Mat mat(int r, int c, std::initializer_list<double> v) {
  Mat m(r, c);
  auto it = v.begin();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = *it++;
  return m;
}

struct WarningCapture {
  std::vector<std::string> messages;
  WarningHandler previous;
  WarningCapture() {
    previous = set_warning_handler([this](const std::string& m) { messages.push_back(m); });
  }
  ~WarningCapture() { set_warning_handler(previous); }
};

}  // namespace

TEST_CASE("validate accepts stochastic chains and rejects the rest") {
  ContextChain c = uniform_chain(3);
  CHECK_NOTHROW(c.validate());
  c.R(0, 0) += 1e-6;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = uniform_chain(3);
  c.rho0[0] = -0.1;
  c.rho0[1] += 0.1;
  CHECK_THROWS_AS(c.validate(), DomainError);
}

TEST_CASE("stationary distribution: small analytic cases") {
  const Vec p = stationary_distribution(mat(2, 2, {0.7, 0.3, 0.2, 0.8}));
  CHECK(p[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(0.6).epsilon(1e-12));

  const Vec u = stationary_distribution(mat(2, 2, {0.5, 0.5, 0.5, 0.5}));
  CHECK(u[0] == doctest::Approx(0.5));
  CHECK(u[1] == doctest::Approx(0.5));

  // Periodic: power iteration never settles, the direct solve does.
  const Vec q = stationary_distribution(mat(2, 2, {0.0, 1.0, 1.0, 0.0}));
  CHECK(q[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("stationary distribution: random irreducible 10x10 chains") {
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const Mat R = oracle::random_stochastic(10, rng, 0.5, seed % 2 == 1);
    const Vec p = stationary_distribution(R);
    CHECK((p.transpose() * R - p.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((p - oracle::stationary_eig(R)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("distill with epsilon zero is the identity") {
  Rng rng(4);
  const ContextChain c = oracle::random_chain(5, rng);
  const DistillResult d = distill(c, 0.0, DistillMode::mpc);
  CHECK(d.removed.empty());
  CHECK(d.kept.size() == 5);
  CHECK((d.chain.R - c.R).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((d.chain.rho0 - c.rho0).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("distill: three-state hand example") {
  ContextChain c{Vec::Constant(3, 1.0 / 3.0), mat(3, 3, {0.8, 0.15, 0.05, 0.1, 0.85, 0.05, 0.45, 0.45, 0.1})};
  const auto d = distill_partition(c, {0, 1}, {2}, DistillMode::mpc);
  CHECK(d.R(0, 0) == doctest::Approx(0.825).epsilon(1e-14));
  CHECK(d.R(0, 1) == doctest::Approx(0.175).epsilon(1e-14));
  CHECK(d.R(1, 0) == doctest::Approx(0.125).epsilon(1e-14));
  CHECK(d.R(1, 1) == doctest::Approx(0.875).epsilon(1e-14));
  CHECK(d.rho0[0] == doctest::Approx(0.5));

  // The threshold route: column 2 gives 0.9 p2 = 0.05 (1 - p2), so p2 = 1/19.
  const DistillResult r = distill(c, 0.06, DistillMode::mpc);
  CHECK(r.stationary[2] == doctest::Approx(1.0 / 19.0).epsilon(1e-10));
  REQUIRE(r.removed == std::vector<int>{2});
  CHECK((r.chain.R - d.R).cwiseAbs().maxCoeff() < 1e-14);

  const DistillResult pol = distill(c, 0.06, DistillMode::policy);
  CHECK(pol.chain.R.col(2).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 0; i < 3; ++i) CHECK(pol.chain.R.row(i).sum() == doctest::Approx(1.0).epsilon(1e-14));
  // escape row: (I - 0.1)^{-1} (0.45, 0.45) = (0.5, 0.5)
  CHECK(pol.chain.R(2, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(pol.chain.rho0[2] == 0.0);
}

TEST_CASE("distill matches the path-sum series and keeps stationary proportions") {
  for (int seed = 0; seed < 60; ++seed) {
    Rng rng(100 + seed);
    const int K = 3 + seed % 8;
    const ContextChain c = oracle::random_chain(K, rng, 0.3, seed % 3 == 0);
    std::vector<int> kept, removed;
    for (int i = 0; i < K; ++i) (rng.uniform() < 0.5 ? kept : removed).push_back(i);
    if (kept.empty()) kept.push_back(removed.back()), removed.pop_back();
    if (removed.empty()) removed.push_back(kept.back()), kept.pop_back();
    const ContextChain d = distill_partition(c, kept, removed, DistillMode::mpc);
    const Mat want = oracle::complement_series(c.R, kept, removed);
    CHECK((d.R - want).cwiseAbs().maxCoeff() < 1e-10);

    const Vec p = oracle::stationary_eig(c.R);
    Vec p1(kept.size());
    for (std::size_t i = 0; i < kept.size(); ++i) p1[i] = p[kept[i]];
    p1 /= p1.sum();
    const Vec ph = oracle::stationary_eig(d.R);
    CHECK(((ph - p1).array() / p1.array()).abs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("policy mode: I2 columns vanish and the I1 block equals the mpc output") {
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(500 + seed);
    const int K = 4 + seed % 5;
    const ContextChain c = oracle::random_chain(K, rng, 0.4);
    std::vector<int> kept, removed;
    for (int i = 0; i < K; ++i) (i % 3 == 1 ? removed : kept).push_back(i);
    const ContextChain m = distill_partition(c, kept, removed, DistillMode::mpc);
    const ContextChain p = distill_partition(c, kept, removed, DistillMode::policy);
    for (int j : removed) CHECK(p.R.col(j).cwiseAbs().maxCoeff() == 0.0);
    CHECK((oracle::take(p.R, kept, kept) - m.R).cwiseAbs().maxCoeff() < 1e-15);
    for (int i = 0; i < K; ++i) CHECK(p.R.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    // escape rows: (I - R22)^{-1} R21 by the series oracle
    const Mat R22 = oracle::take(c.R, removed, removed);
    Mat acc = oracle::take(c.R, removed, kept), term = acc;
    for (int n = 0; n < 100000 && term.cwiseAbs().maxCoeff() > 1e-18; ++n) term = R22 * term, acc += term;
    CHECK((oracle::take(p.R, removed, kept) - acc).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("distillation is idempotent at the rescaled threshold") {
  for (int seed = 0; seed < 30; ++seed) {
    Rng rng(900 + seed);
    const int K = 4 + seed % 6;
    const ContextChain c = oracle::random_chain(K, rng, 0.2);
    const Vec p = stationary_distribution(c.R);
    std::vector<double> sorted(p.data(), p.data() + K);
    std::sort(sorted.begin(), sorted.end());
    const double eps = 0.5 * (sorted[1] + sorted[2]);
    const DistillResult d1 = distill(c, eps, DistillMode::mpc);
    double mass = 0.0;
    for (int i : d1.kept) mass += p[i];
    const DistillResult d2 = distill(d1.chain, eps / mass, DistillMode::mpc);
    CHECK(d2.removed.empty());
  }
}

TEST_CASE("empty I1 falls back to the argmax with a warning") {
  WarningCapture cap;
  ContextChain c{Vec::Constant(3, 1.0 / 3.0), mat(3, 3, {0.5, 0.25, 0.25, 0.2, 0.6, 0.2, 0.3, 0.3, 0.4})};
  const DistillResult d = distill(c, 0.99, DistillMode::mpc);
  CHECK(d.fallback_used);
  REQUIRE(d.kept.size() == 1);
  Eigen::Index best;
  d.stationary.maxCoeff(&best);
  CHECK(d.kept[0] == best);
  CHECK(d.chain.R(0, 0) == doctest::Approx(1.0));
  CHECK(cap.messages.size() == 1);
}

TEST_CASE("singular escape block is an error") {
  // State 2 is absorbing, so I - R22 is singular.
  ContextChain c{Vec::Constant(3, 1.0 / 3.0), mat(3, 3, {0.5, 0.25, 0.25, 0.2, 0.6, 0.2, 0.0, 0.0, 1.0})};
  CHECK_THROWS_AS(distill_partition(c, {0, 1}, {2}, DistillMode::mpc), NumericalError);
}

TEST_CASE("bad partitions and thresholds are rejected") {
  const ContextChain c = uniform_chain(3);
  CHECK_THROWS_AS(distill_partition(c, {0, 1}, {1, 2}, DistillMode::mpc), DomainError);
  CHECK_THROWS_AS(distill_partition(c, {}, {0, 1, 2}, DistillMode::mpc), DomainError);
  CHECK_THROWS_AS(distill(c, 1.0, DistillMode::mpc), DomainError);
  CHECK_THROWS_AS(distill(c, -0.1, DistillMode::mpc), DomainError);
}

TEST_CASE("policy backward matches finite differences of the policy reduction") {
  Rng rng(77);
  const ContextChain c = oracle::random_chain(5, rng, 1.0);
  const std::vector<int> kept{0, 2, 3}, removed{1, 4};
  ChainGradient up{rng.normal_vector(5), Mat(5, 5)};
  for (int i = 0; i < 5; ++i) up.R.row(i) = rng.normal_vector(5).transpose();
  const ChainGradient g = distill_policy_backward(c, kept, removed, up);
  // The backward pass treats R entries as free and skips the final row
  // renormalization, so the oracle is the raw reduction.
  const double h = 1e-6;
  double worst = 0.0;
  auto raw = [&](const Mat& R) {
    const Mat R12 = oracle::take(R, kept, removed);
    const Mat R22 = oracle::take(R, removed, removed);
    const Mat R21 = oracle::take(R, removed, kept);
    const Mat X = (Mat::Identity(2, 2) - R22).lu().solve(R21);
    const Mat Rh = oracle::take(R, kept, kept) + R12 * X;
    double v = 0.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) v += up.R(kept[a], kept[b]) * Rh(a, b);
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 3; ++b) v += up.R(removed[a], kept[b]) * X(a, b);
    return v;
  };
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      Mat a = c.R, b = c.R;
      a(i, j) += h;
      b(i, j) -= h;
      const double fd = (raw(a) - raw(b)) / (2 * h);
      worst = std::max(worst, std::abs(fd - g.R(i, j)));
    }
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("chain CSV round-trip is exact") {
  Rng rng(3);
  const ContextChain c = oracle::random_chain(6, rng);
  const ContextChain back = chain_from_csv(chain_to_csv(c));
  CHECK(back == c);
  CHECK_THROWS(chain_from_csv("0.5,0.5\n1,0\n"));
}
