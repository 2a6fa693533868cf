#pragma once

// Reference computations for the test suites. Everything here is written
// independently of the library code it checks: enumeration instead of
// message passing, eigen-decomposition instead of power iteration, a
// Neumann series instead of a linear solve, Boost quantiles and quadrature
// instead of the in-house special functions.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numeric>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "hdpcmdp/chain.hpp"
#include "hdpcmdp/dynamics.hpp"
#include "hdpcmdp/rng.hpp"

namespace oracle {

using hdpcmdp::ContextChain;
using hdpcmdp::Mat;
using hdpcmdp::Rng;
using hdpcmdp::Vec;

// ---- chains ---------------------------------------------------------------

/// Left eigenvector of R for the eigenvalue closest to one.
inline Vec stationary_eig(const Mat& R) {
  Eigen::EigenSolver<Mat> es(R.transpose());
  Eigen::Index best = 0;
  double gap = 1e300;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double d = std::abs(es.eigenvalues()[i] - std::complex<double>(1.0, 0.0));
    if (d < gap) gap = d, best = i;
  }
  Vec p = es.eigenvectors().col(best).real();
  return p / p.sum();
}

inline Mat take(const Mat& m, const std::vector<int>& rows, const std::vector<int>& cols) {
  Mat out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
  return out;
}

/// R11 + R12 (sum_n R22^n) R21 by summing paths through the removed block.
inline Mat complement_series(const Mat& R, const std::vector<int>& kept, const std::vector<int>& removed) {
  const Mat R11 = take(R, kept, kept), R12 = take(R, kept, removed);
  const Mat R21 = take(R, removed, kept), R22 = take(R, removed, removed);
  Mat term = R21;
  Mat acc = R21;
  for (int n = 0; n < 200000 && term.cwiseAbs().maxCoeff() > 1e-18; ++n) {
    term = R22 * term;
    acc += term;
  }
  return R11 + R12 * acc;
}

/// Rows drawn from Dirichlet(conc); with `sparse`, entries are zeroed at
/// random but a cyclic permutation keeps the chain irreducible.
inline Mat random_stochastic(int K, Rng& rng, double conc = 1.0, bool sparse = false) {
  Mat R(K, K);
  std::vector<int> perm(K);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  for (int j = 0; j < K; ++j) {
    for (int k = 0; k < K; ++k) R(j, k) = rng.gamma(conc);
    if (sparse)
      for (int k = 0; k < K; ++k)
        if (rng.uniform() < 0.5) R(j, k) = 0.0;
  }
  // cycle perm[0] -> perm[1] -> ... -> perm[0]
  for (int i = 0; i < K; ++i) R(perm[i], perm[(i + 1) % K]) += 0.05 + rng.uniform();
  for (int j = 0; j < K; ++j) R.row(j) /= R.row(j).sum();
  return R;
}

inline ContextChain random_chain(int K, Rng& rng, double conc = 1.0, bool sparse = false) {
  ContextChain c;
  c.R = random_stochastic(K, rng, conc, sparse);
  c.rho0 = Vec(K);
  for (int k = 0; k < K; ++k) c.rho0[k] = rng.gamma(1.0) + 1e-3;
  c.rho0 /= c.rho0.sum();
  return c;
}

// ---- enumeration ----------------------------------------------------------

struct Enumerated {
  double log_evidence = 0.0;
  Mat marginals;
  std::vector<Mat> pairwise;
};

/// Sums over all K^T context sequences.
inline Enumerated enumerate(const ContextChain& chain, const Mat& loglik) {
  const int T = static_cast<int>(loglik.rows());
  const int K = static_cast<int>(loglik.cols());
  std::size_t n = 1;
  for (int t = 0; t < T; ++t) n *= static_cast<std::size_t>(K);
  std::vector<double> logp(n);
  std::vector<int> z(T);
  for (std::size_t idx = 0; idx < n; ++idx) {
    std::size_t r = idx;
    for (int t = 0; t < T; ++t) z[t] = static_cast<int>(r % K), r /= K;
    double lp = std::log(chain.rho0[z[0]]) + loglik(0, z[0]);
    for (int t = 1; t < T; ++t) lp += std::log(chain.R(z[t - 1], z[t])) + loglik(t, z[t]);
    logp[idx] = lp;
  }
  const double mx = *std::max_element(logp.begin(), logp.end());
  long double total = 0.0L;
  for (double v : logp) total += std::exp(static_cast<long double>(v - mx));
  Enumerated out;
  out.log_evidence = mx + static_cast<double>(std::log(total));
  out.marginals = Mat::Zero(T, K);
  out.pairwise.assign(std::max(0, T - 1), Mat::Zero(K, K));
  for (std::size_t idx = 0; idx < n; ++idx) {
    std::size_t r = idx;
    for (int t = 0; t < T; ++t) z[t] = static_cast<int>(r % K), r /= K;
    const double w = std::exp(logp[idx] - out.log_evidence);
    for (int t = 0; t < T; ++t) out.marginals(t, z[t]) += w;
    for (int t = 0; t + 1 < T; ++t) out.pairwise[t](z[t], z[t + 1]) += w;
  }
  return out;
}

// ---- calculus -------------------------------------------------------------

/// Central differences of a scalar function of a vector.
inline Vec fd_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double h) {
  Vec g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline double rel_error(const Vec& got, const Vec& want) {
  const double denom = std::max(want.norm(), 1e-12);
  return (got - want).norm() / denom;
}

// ---- Beta distribution ----------------------------------------------------

inline double beta_quantile(double a, double b, double u) { return boost::math::ibeta_inv(a, b, u); }
inline double beta_cdf(double a, double b, double x) { return boost::math::ibeta(a, b, x); }

/// KL(Beta(qa, qb) || Beta(pa, pb)) by tanh-sinh quadrature of q log(q/p).
inline double kl_beta_quadrature(double qa, double qb, double pa, double pb) {
  using boost::math::lgamma;
  const double lq = lgamma(qa + qb) - lgamma(qa) - lgamma(qb);
  const double lp = lgamma(pa + pb) - lgamma(pa) - lgamma(pb);
  auto g = [&](double lx, double l1) {
    const double logq = lq + (qa - 1.0) * lx + (qb - 1.0) * l1;
    const double logr = logq - (lp + (pa - 1.0) * lx + (pb - 1.0) * l1);
    return std::exp(logq) * logr;
  };
  // Each half is integrated in the variable that vanishes at its endpoint,
  // so log x and log(1 - x) keep full precision near 0 and 1.
  auto left = [&](double x) { return x <= 0.0 ? 0.0 : g(std::log(x), std::log1p(-x)); };
  auto right = [&](double y) { return y <= 0.0 ? 0.0 : g(std::log1p(-y), std::log(y)); };
  boost::math::quadrature::tanh_sinh<double> integrator;
  return integrator.integrate(left, 0.0, 0.5) + integrator.integrate(right, 0.0, 0.5);
}

// ---- control --------------------------------------------------------------

/// Scalar system s' = s + a with stage cost s'^2 + r a^2 over `horizon`
/// steps: optimal first action from the backward Riccati recursion.
inline double lq_first_action(double s0, double r, int horizon) {
  double P = 0.0;  // value of the remaining cost-to-go, V(s) = P s^2
  double gain = 0.0;
  for (int h = horizon - 1; h >= 0; --h) {
    gain = (1.0 + P) / (1.0 + P + r);
    P = (1.0 + P) * r / (1.0 + P + r);
  }
  return -gain * s0;
}

// ---- misc -----------------------------------------------------------------

inline hdpcmdp::ContextParams random_params(const hdpcmdp::NetworkSpec& spec, Rng& rng, double scale = 0.5) {
  hdpcmdp::ContextParams p = hdpcmdp::ContextParams::zeros(spec);
  Vec flat = p.flatten();
  for (Eigen::Index i = 0; i < flat.size(); ++i) flat[i] = scale * rng.normal();
  // log_std in a moderate range so densities stay informative.
  const int D = spec.state_dim();
  for (int d = 0; d < D; ++d) flat[flat.size() - D + d] = -1.0 + 0.5 * rng.uniform();
  return hdpcmdp::ContextParams::unflatten(spec, flat);
}

/// Simulates the generative model itself: z from the chain (no cool-off),
/// s' ~ N(s + MLP(s, a), std^2), actions N(0, 1).
inline hdpcmdp::Trajectory sample_model_trajectory(const ContextChain& chain,
                                                   const std::vector<hdpcmdp::ContextParams>& thetas,
                                                   int T, Rng& rng) {
  const auto& spec = thetas.front().spec;
  const int D = spec.state_dim(), A = spec.action_dim;
  hdpcmdp::Trajectory tr;
  tr.states.resize(D, T + 1);
  tr.actions.resize(A, T);
  tr.states.col(0) = rng.normal_vector(D);
  int z = rng.categorical(chain.rho0);
  for (int t = 0; t < T; ++t) {
    if (t > 0) z = rng.categorical(chain.R.row(z).transpose());
    tr.true_z.push_back(z);
    tr.actions.col(t) = rng.normal_vector(A);
    const auto g = hdpcmdp::predict(thetas[z], tr.states.col(t), tr.actions.col(t));
    tr.states.col(t + 1) = g.sample(rng.normal_vector(D));
  }
  return tr;
}

}  // namespace oracle
