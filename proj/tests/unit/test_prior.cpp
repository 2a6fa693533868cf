#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "hdpcmdp/prior.hpp"
#include "hdpcmdp/special_functions.hpp"
#include "hdpcmdp/variational.hpp"
#include "oracles.hpp"

using namespace hdpcmdp;

namespace {

double log_uniform(Rng& rng, double lo, double hi) { return std::exp(rng.uniform(std::log(lo), std::log(hi))); }

}  // namespace

TEST_CASE("digamma and incomplete beta agree with Boost") {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double x = log_uniform(rng, 1e-3, 1e3);
    const double want = boost::math::digamma(x);
    CHECK(std::abs(special::digamma(x) - want) <= 1e-12 * std::max(1.0, std::abs(want)));
  }
  for (int i = 0; i < 5000; ++i) {
    const double a = log_uniform(rng, 0.05, 500.0), b = log_uniform(rng, 0.05, 500.0);
    const double x = rng.uniform();
    const double want = oracle::beta_cdf(a, b, x);
    CHECK(std::abs(special::incomplete_beta(x, a, b) - want) < 1e-12);
  }
  CHECK(special::incomplete_beta(0.0, 2.0, 3.0) == 0.0);
  CHECK(special::incomplete_beta(1.0, 2.0, 3.0) == 1.0);
}

TEST_CASE("log_add_exp handles infinities") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(special::log_add_exp(-inf, 1.5) == 1.5);
  CHECK(special::log_add_exp(2.0, -inf) == 2.0);
  CHECK(special::log_add_exp(-inf, -inf) == -inf);
  CHECK(special::log_add_exp(0.0, 0.0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("gem weights") {
  Vec nu(3);
  nu << 0.5, 0.5, 1.0;
  const Vec b = gem_weights(nu);
  CHECK(b[0] == 0.5);
  CHECK(b[1] == 0.25);
  CHECK(b[2] == 0.25);

  Vec first(4);
  first << 1.0, 0.3, 0.7, 1.0;
  const Vec e = gem_weights(first);
  CHECK(e[0] == 1.0);
  CHECK(e.tail(3).cwiseAbs().maxCoeff() == 0.0);

  Vec bad(2);
  bad << 0.0, 1.0;
  CHECK_THROWS_AS(gem_weights(bad), DomainError);
  bad << 0.5, 0.9;
  CHECK_THROWS_AS(gem_weights(bad), DomainError);
  bad << 1.2, 1.0;
  CHECK_THROWS_AS(gem_weights(bad), DomainError);
}

TEST_CASE("GEM(2) first weight has mean 1/3") {
  Rng rng(11);
  const int K = 50, n = 10000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    Vec nu(K);
    for (int k = 0; k < K - 1; ++k) nu[k] = rng.beta(1.0, 2.0);
    nu[K - 1] = 1.0;
    const Vec b = gem_weights(nu);
    CHECK(b.sum() == doctest::Approx(1.0).epsilon(1e-12));
    sum += b[0];
  }
  // sd of Beta(1,2) is 0.236, so the standard error is 0.0024.
  CHECK(std::abs(sum / n - 1.0 / 3.0) < 0.01);
}

TEST_CASE("rows from mu lie on the simplex") {
  Vec mu(3);
  mu << 0.5, 0.5, 1.0;
  const Vec r = rows_from_mu(mu);
  CHECK(r[1] == 0.25);
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const int K = 2 + i % 9;
    Vec m(K);
    for (int k = 0; k < K - 1; ++k) m[k] = rng.uniform(1e-6, 1.0);
    m[K - 1] = 1.0;
    const Vec p = rows_from_mu(m);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    CHECK(p.minCoeff() >= 0.0);
  }
}

TEST_CASE("stick breaking backward matches finite differences") {
  Rng rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    const int K = 3 + rep % 6;
    Vec f(K - 1);
    for (int k = 0; k < K - 1; ++k) f[k] = rng.uniform(0.05, 0.95);
    const Vec w = rng.normal_vector(K);
    const Vec g = stick_breaking_backward(f, w);
    const Vec fd = oracle::fd_gradient([&](const Vec& x) { return w.dot(stick_breaking(x)); }, f, 1e-6);
    CHECK(oracle::rel_error(g, fd) < 1e-8);
  }
}

TEST_CASE("sticky row priors") {
  HdpHyper h;
  h.K = 4;
  h.alpha = 1000.0;
  h.kappa = 600.0;
  Vec beta(4);
  beta << 0.2, 0.3, 0.4, 0.1;
  // Row 1 leaves context 0, so the boost sits on the first stick.
  const auto row1 = sticky_row_priors(1, beta, h);
  CHECK(row1[0].a == doctest::Approx(800.0));
  CHECK(row1[0].b == doctest::Approx(800.0));
  CHECK(row1[1].a == doctest::Approx(300.0));
  CHECK(row1[1].b == doctest::Approx(500.0));

  // Row 0 is the initial distribution: no boost anywhere.
  const auto row0 = sticky_row_priors(0, beta, h);
  for (int k = 0; k < 3; ++k) CHECK(row0[k].a == doctest::Approx(h.alpha * beta[k]));

  h.kappa = 0.0;
  const Vec uni = Vec::Constant(4, 0.25);
  for (int j = 0; j <= 4; ++j)
    for (const auto& p : sticky_row_priors(j, uni, h)) CHECK(p.a == doctest::Approx(250.0));
}

TEST_CASE("sticky row priors clamp a nonpositive second shape and warn") {
  std::vector<std::string> msgs;
  auto prev = set_warning_handler([&](const std::string& m) { msgs.push_back(m); });
  HdpHyper h;
  h.K = 3;
  h.kappa = 0.0;
  Vec beta(3);
  beta << 0.7, 0.5, 0.0;  // sums past one
  const auto row = sticky_row_priors(0, beta, h);
  set_warning_handler(prev);
  CHECK(row[1].b == doctest::Approx(1e-8));
  CHECK(!msgs.empty());
}

TEST_CASE("sticky prior raises the expected self-transition") {
  HdpHyper on, off;
  on.K = off.K = 5;
  on.alpha = off.alpha = 10.0;
  on.kappa = 6.0;
  off.kappa = 0.0;
  Rng rng(21);
  Vec beta(5);
  beta << 0.3, 0.25, 0.2, 0.15, 0.1;
  for (int j = 1; j <= 5; ++j) {
    double e_on = 0.0, e_off = 0.0;
    const int n = 10000;
    for (int s = 0; s < n; ++s) {
      for (int which = 0; which < 2; ++which) {
        const auto pri = sticky_row_priors(j, beta, which == 0 ? on : off);
        Vec mu(5);
        for (int k = 0; k < 4; ++k) mu[k] = rng.beta(pri[k].a, pri[k].b);
        mu[4] = 1.0;
        (which == 0 ? e_on : e_off) += rows_from_mu(mu)[j - 1] / n;
      }
    }
    CHECK(e_on > e_off);
  }
}

TEST_CASE("beta implicit gradient: analytic cases") {
  // Beta(2,1): F = x^2, so dx/da = -x ln x / 2.
  const auto [da, db] = beta_implicit_grad(0.5, {2.0, 1.0});
  CHECK(da == doctest::Approx(-0.5 * std::log(0.5) / 2.0).epsilon(1e-7));
  CHECK(da == doctest::Approx(0.17329).epsilon(1e-4));
  (void)db;

  for (double a : {0.7, 1.0, 3.0, 20.0}) {
    const auto [ga, gb] = beta_implicit_grad(0.5, {a, a});
    CHECK(ga == doctest::Approx(-gb).epsilon(1e-7));
  }
  CHECK_THROWS_AS(beta_implicit_grad(0.0, {2.0, 2.0}), DomainError);
  CHECK_THROWS_AS(beta_implicit_grad(1.0, {2.0, 2.0}), DomainError);
}

TEST_CASE("beta implicit gradient matches quantile finite differences") {
  Rng rng(31);
  for (int i = 0; i < 500; ++i) {
    const double a = rng.uniform(0.5, 50.0), b = rng.uniform(0.5, 50.0);
    const double u = rng.uniform(0.02, 0.98);
    const double x = oracle::beta_quantile(a, b, u);
    const auto [ga, gb] = beta_implicit_grad(x, {a, b});
    const double ha = 1e-5 * a, hb = 1e-5 * b;
    Vec fd(2), got(2);
    fd << (oracle::beta_quantile(a + ha, b, u) - oracle::beta_quantile(a - ha, b, u)) / (2 * ha),
        (oracle::beta_quantile(a, b + hb, u) - oracle::beta_quantile(a, b - hb, u)) / (2 * hb);
    got << ga, gb;
    CHECK(oracle::rel_error(got, fd) < 1e-4);
  }
}

TEST_CASE("kl_beta against quadrature") {
  CHECK(kl_beta({3, 7}, {3, 7}) == doctest::Approx(0.0).epsilon(1e-15));
  // ln 6 + 2 psi(2) - 2 psi(4)
  const double closed = std::log(6.0) + 2 * boost::math::digamma(2.0) - 2 * boost::math::digamma(4.0);
  CHECK(kl_beta({2, 2}, {1, 1}) == doctest::Approx(closed).epsilon(1e-12));
  CHECK(kl_beta({2, 2}, {1, 1}) == doctest::Approx(oracle::kl_beta_quadrature(2, 2, 1, 1)).epsilon(1e-9));

  Rng rng(41);
  for (int i = 0; i < 200; ++i) {
    const double qa = rng.uniform(0.5, 20), qb = rng.uniform(0.5, 20);
    const double pa = rng.uniform(0.5, 20), pb = rng.uniform(0.5, 20);
    CHECK(std::abs(kl_beta({qa, qb}, {pa, pb}) - oracle::kl_beta_quadrature(qa, qb, pa, pb)) < 1e-6);
  }
  for (int i = 0; i < 1000; ++i) {
    const BetaParams q{log_uniform(rng, 0.01, 1e4), log_uniform(rng, 0.01, 1e4)};
    const BetaParams p{log_uniform(rng, 0.01, 1e4), log_uniform(rng, 0.01, 1e4)};
    CHECK(kl_beta(q, p) >= 0.0);
  }
}

TEST_CASE("kl_beta gradient matches finite differences of the closed form") {
  Rng rng(43);
  for (int i = 0; i < 100; ++i) {
    const BetaParams q{rng.uniform(0.5, 50), rng.uniform(0.5, 50)};
    const BetaParams p{rng.uniform(0.5, 50), rng.uniform(0.5, 50)};
    const KlBetaGrad g = kl_beta_grad(q, p);
    Vec x(4);
    x << q.a, q.b, p.a, p.b;
    auto f = [](const Vec& v) { return kl_beta({v[0], v[1]}, {v[2], v[3]}); };
    const Vec fd = oracle::fd_gradient(f, x, 1e-4);
    Vec got(4);
    got << g.qa, g.qb, g.pa, g.pb;
    CHECK(oracle::rel_error(got, fd) < 1e-5);
  }
}

TEST_CASE("log prior variants") {
  HdpHyper h;
  h.K = 3;
  h.gamma = 2.0;
  Rng rng(2);
  const NetworkSpec spec = make_network_spec(2, 1, {});
  VariationalParams vp = init_variational(h, spec, rng);
  CHECK(log_prior(vp, h, PriorKind::mle) == 0.0);

  double gauss = 0.0;
  const double sd = h.theta_prior_std;
  for (const auto& th : vp.thetas) {
    const Vec f = th.flatten();
    gauss += (-0.5 * (f.array() / sd).square() - std::log(sd) - 0.5 * std::log(2 * M_PI)).sum();
  }
  vp.nu_hat.setConstant(0.3);
  CHECK(log_prior(vp, h, PriorKind::hdp) == doctest::Approx(gauss + 2 * (std::log(2.0) + std::log(0.7))).epsilon(1e-12));
  CHECK(std::log(2.0) + std::log(0.7) == doctest::Approx(0.3365).epsilon(1e-4));

  h.gamma = 1.0;
  CHECK(log_prior(vp, h, PriorKind::hdp) == doctest::Approx(gauss).epsilon(1e-12));
}

TEST_CASE("Rng beta and gamma moments") {
  Rng rng(99);
  for (double shape : {0.3, 1.0, 4.5}) {
    double m = 0.0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) m += rng.gamma(shape) / n;
    CHECK(std::abs(m - shape) < 4 * std::sqrt(shape / n));
  }
  double m = 0.0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) m += rng.beta(2.0, 5.0) / n;
  CHECK(std::abs(m - 2.0 / 7.0) < 0.005);
  // split streams depend only on the parent seed and the id
  Rng a(7), b(7);
  a.uniform();
  CHECK(a.split(3).next_u64() == b.split(3).next_u64());
  CHECK(a.split(3).next_u64() != a.split(4).next_u64());
}
