#include <cmath>
#include <limits>

#include "hdpcmdp/message_passing.hpp"
#include "hdpcmdp/variational.hpp"

namespace hdpcmdp {

namespace {

// Gradient w.r.t. the (K+1) x (K-1) stick fractions from a gradient w.r.t.
// the chain those fractions produce.
Mat chain_grad_to_mu(const Mat& mu, const ChainGradient& g) {
  Mat out(mu.rows(), mu.cols());
  out.row(0) = stick_breaking_backward(mu.row(0).transpose(), g.rho0).transpose();
  for (Eigen::Index j = 1; j < mu.rows(); ++j)
    out.row(j) = stick_breaking_backward(mu.row(j).transpose(), g.R.row(j - 1).transpose()).transpose();
  return out;
}

struct ShapeGrad {
  Mat a;
  Mat b;
};

// a = mu_hat(j,k), b = mu_hat_row(j) - sum_{i<=k} mu_hat(j,i).
void shapes_to_natural(const ShapeGrad& g, ElboGradient& out) {
  const Eigen::Index rows = g.a.rows();
  const Eigen::Index cols = g.a.cols();
  out.mu_hat.resize(rows, cols);
  out.mu_hat_row.resize(rows);
  for (Eigen::Index j = 0; j < rows; ++j) {
    double tail = 0.0;  // sum_{k' >= k} g_b(j,k')
    for (Eigen::Index k = cols - 1; k >= 0; --k) {
      tail += g.b(j, k);
      out.mu_hat(j, k) = g.a(j, k) - tail;
    }
    out.mu_hat_row[j] = tail;
  }
}

}  // namespace

ElboValue elbo_with_samples(const VariationalParams& vp, const Batch& batch, const HdpHyper& hyper,
                            PriorKind kind, const std::vector<Mat>& mu_samples, double dataset_size,
                            ElboGradient* grad) {
  vp.validate();
  hyper.validate();
  if (hyper.K != vp.K()) throw DomainError("elbo: hyper.K does not match the parameters");
  if (batch.empty()) throw DomainError("elbo: empty batch");
  const bool point = kind != PriorKind::hdp;
  if (!point && mu_samples.empty()) throw DomainError("elbo: need at least one mu sample");

  const int K = vp.K();
  const double scale = dataset_size / static_cast<double>(batch.size());
  const std::vector<Mat> point_mu{mean_mu(vp)};
  const std::vector<Mat>& mus = point ? point_mu : mu_samples;
  const double inv_s = 1.0 / static_cast<double>(mus.size());

  ElboValue val;
  ShapeGrad sg{Mat::Zero(K + 1, K - 1), Mat::Zero(K + 1, K - 1)};
  if (grad) {
    grad->nu = Vec::Zero(K - 1);
    grad->thetas.assign(K, Vec());
    for (int k = 0; k < K; ++k) grad->thetas[k] = Vec::Zero(vp.thetas[k].spec.num_params());
  }

  // Likelihood block.
  std::vector<Mat> logliks;
  logliks.reserve(batch.size());
  for (const Trajectory* traj : batch) {
    logliks.push_back(context_log_likelihoods(vp.thetas, *traj));
    // Pruned contexts are outside the support: paths through them carry no
    // evidence, so flow into them is penalized rather than folded back.
    for (int c : vp.removed) logliks.back().col(c).setConstant(-std::numeric_limits<double>::infinity());
  }
  std::vector<Mat> weights(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) weights[i] = Mat::Zero(logliks[i].rows(), K);

  for (const Mat& mu : mus) {
    const ContextChain chain = chain_from_mu(mu);
    ChainGradient g_chain{Vec::Zero(K), Mat::Zero(K, K)};
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const MessageTable tab = message_pass(chain, logliks[i], false);
      val.loglik += scale * inv_s * tab.log_evidence;
      if (!grad) continue;
      weights[i] += inv_s * tab.marginals;
      const ChainGradient gi = chain_evidence_grad(logliks[i], tab);
      g_chain.rho0 += gi.rho0;
      g_chain.R += gi.R;
    }
    if (!grad) continue;
    const Mat g_mu = (scale * inv_s) * chain_grad_to_mu(mu, g_chain);
    for (int j = 0; j <= K; ++j) {
      for (int k = 0; k < K - 1; ++k) {
        const BetaParams p = vp.q(j, k);
        if (point) {
          const double s2 = (p.a + p.b) * (p.a + p.b);
          sg.a(j, k) += g_mu(j, k) * p.b / s2;
          sg.b(j, k) -= g_mu(j, k) * p.a / s2;
        } else {
          const auto [da, db] = beta_implicit_grad(mu(j, k), p);
          sg.a(j, k) += g_mu(j, k) * da;
          sg.b(j, k) += g_mu(j, k) * db;
        }
      }
    }
  }
  if (grad) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      for (int k = 0; k < K; ++k) {
        const Vec w = scale * weights[i].col(k);
        if (w.maxCoeff() > 0.0) accumulate_weighted_grad(vp.thetas[k], *batch[i], w, grad->thetas[k]);
      }
    }
  }

  // KL of q(mu) against the sticky HDP prior given nu_hat.
  if (kind == PriorKind::hdp) {
    const Vec beta = stick_breaking(vp.nu_hat);
    Vec g_beta = Vec::Zero(K);
    for (int j = 0; j <= K; ++j) {
      const auto prior = sticky_row_priors(j, beta, hyper);
      for (int k = 0; k < K - 1; ++k) {
        const BetaParams q = vp.q(j, k);
        val.kl += kl_beta(q, prior[k]);
        if (!grad) continue;
        const KlBetaGrad kg = kl_beta_grad(q, prior[k]);
        sg.a(j, k) -= kg.qa;
        sg.b(j, k) -= kg.qb;
        // d a0_jk / d beta_i = alpha [i == k], d b0_jk / d beta_i = -alpha [i <= k]
        g_beta[k] -= hyper.alpha * kg.pa;
        if (prior[k].b > 1e-8) g_beta.head(k + 1).array() += hyper.alpha * kg.pb;
      }
    }
    if (grad) {
      grad->nu += stick_breaking_backward(vp.nu_hat, g_beta);
      for (int k = 0; k < K - 1; ++k) grad->nu[k] -= (hyper.gamma - 1.0) / (1.0 - vp.nu_hat[k]);
    }
  }

  val.log_prior = log_prior(vp, hyper, kind);
  if (grad && kind != PriorKind::mle) {
    const double inv_var = 1.0 / (hyper.theta_prior_std * hyper.theta_prior_std);
    for (int k = 0; k < K; ++k) grad->thetas[k] -= inv_var * vp.thetas[k].flatten();
    if (kind == PriorKind::sticky_dirichlet) {
      const Mat mu = mean_mu(vp);
      const ContextChain c = chain_from_mu(mu);
      ChainGradient gd{Vec(K), Mat(K, K)};
      for (int k = 0; k < K; ++k) gd.rho0[k] = (hyper.alpha / K - 1.0) / c.rho0[k];
      for (int j = 0; j < K; ++j)
        for (int k = 0; k < K; ++k)
          gd.R(j, k) = (hyper.alpha / K + (j == k ? hyper.kappa : 0.0) - 1.0) / c.R(j, k);
      const Mat g_mu = chain_grad_to_mu(mu, gd);
      for (int j = 0; j <= K; ++j) {
        for (int k = 0; k < K - 1; ++k) {
          const BetaParams p = vp.q(j, k);
          const double s2 = (p.a + p.b) * (p.a + p.b);
          sg.a(j, k) += g_mu(j, k) * p.b / s2;
          sg.b(j, k) -= g_mu(j, k) * p.a / s2;
        }
      }
    }
  }

  val.total = val.loglik - val.kl + val.log_prior;
  if (!std::isfinite(val.total)) throw NumericalError("elbo: non-finite value");
  if (grad) shapes_to_natural(sg, *grad);
  return val;
}

double elbo_estimate(const VariationalParams& vp, const Batch& batch, const HdpHyper& hyper,
                     PriorKind kind, int n_samples, double dataset_size, Rng& rng) {
  if (n_samples < 1) throw DomainError("elbo_estimate: n_samples must be at least 1");
  std::vector<Mat> mus;
  if (kind == PriorKind::hdp)
    for (int s = 0; s < n_samples; ++s) mus.push_back(sample_mu(vp, rng));
  return elbo_with_samples(vp, batch, hyper, kind, mus, dataset_size, nullptr).total;
}

ElboGradient elbo_gradients(const VariationalParams& vp, const Batch& batch, const HdpHyper& hyper,
                            PriorKind kind, int n_samples, double dataset_size, Rng& rng,
                            ElboValue* value) {
  if (n_samples < 1) throw DomainError("elbo_gradients: n_samples must be at least 1");
  std::vector<Mat> mus;
  if (kind == PriorKind::hdp)
    for (int s = 0; s < n_samples; ++s) mus.push_back(sample_mu(vp, rng));
  ElboGradient g;
  const ElboValue v = elbo_with_samples(vp, batch, hyper, kind, mus, dataset_size, &g);
  if (value) *value = v;
  return g;
}

}  // namespace hdpcmdp
