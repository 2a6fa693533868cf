#include "hdpcmdp/variational.hpp"

#include <algorithm>
#include <cmath>

namespace hdpcmdp {

BetaParams VariationalParams::q(int j, int k) const {
  double used = 0.0;
  for (int i = 0; i <= k; ++i) used += mu_hat(j, i);
  return {mu_hat(j, k), mu_hat_row[j] - used};
}

double VariationalParams::slack(int j) const { return mu_hat_row[j] - mu_hat.row(j).sum(); }

std::vector<int> VariationalParams::kept() const {
  std::vector<int> out;
  for (int k = 0; k < K(); ++k)
    if (!std::binary_search(removed.begin(), removed.end(), k)) out.push_back(k);
  return out;
}

void VariationalParams::validate() const {
  const int k_ctx = K();
  if (k_ctx < 2) throw DomainError("VariationalParams: need at least two contexts");
  if (nu_hat.size() != k_ctx - 1 || mu_hat.rows() != k_ctx + 1 || mu_hat.cols() != k_ctx - 1 ||
      mu_hat_row.size() != k_ctx + 1)
    throw DomainError("VariationalParams: inconsistent dimensions");
  for (Eigen::Index k = 0; k < nu_hat.size(); ++k)
    if (!(nu_hat[k] > 0.0 && nu_hat[k] < 1.0)) throw DomainError("VariationalParams: nu_hat outside (0,1)");
  for (int j = 0; j <= k_ctx; ++j) {
    for (int k = 0; k < k_ctx - 1; ++k)
      if (!(mu_hat(j, k) > 0.0)) throw DomainError("VariationalParams: nonpositive mu_hat");
    if (!(slack(j) > 0.0)) throw DomainError("VariationalParams: row total too small for positive shapes");
  }
  for (const auto& th : thetas)
    if (!th.flatten().allFinite()) throw DomainError("VariationalParams: non-finite theta");
  if (!std::is_sorted(removed.begin(), removed.end()) ||
      static_cast<int>(removed.size()) >= k_ctx)
    throw DomainError("VariationalParams: removed set must be ascending and leave a context");
}

VariationalParams init_variational(const HdpHyper& hyper, const NetworkSpec& spec, Rng& rng) {
  hyper.validate();
  spec.validate();
  const int K = hyper.K;
  VariationalParams vp;
  vp.nu_hat = Vec::Constant(K - 1, 1.0 / (1.0 + hyper.gamma));
  const Vec beta = stick_breaking(vp.nu_hat);
  vp.mu_hat.resize(K + 1, K - 1);
  vp.mu_hat_row.resize(K + 1);
  for (int j = 0; j <= K; ++j) {
    const auto pri = sticky_row_priors(j, beta, hyper);
    for (int k = 0; k < K - 1; ++k) vp.mu_hat(j, k) = pri[k].a;
    vp.mu_hat_row[j] = vp.mu_hat.row(j).sum() + pri[K - 2].b;
  }
  for (int k = 0; k < K; ++k) vp.thetas.push_back(init_context_params(spec, hyper.theta_prior_std, rng));
  return vp;
}

ContextChain chain_from_mu(const Mat& mu) {
  const Eigen::Index K = mu.rows() - 1;
  if (K < 1 || mu.cols() != K - 1) throw DomainError("chain_from_mu: expected (K+1) x (K-1)");
  ContextChain c{Vec(K), Mat(K, K)};
  c.rho0 = stick_breaking(mu.row(0).transpose());
  for (Eigen::Index j = 1; j <= K; ++j) c.R.row(j - 1) = stick_breaking(mu.row(j).transpose()).transpose();
  return c;
}

Mat mean_mu(const VariationalParams& vp) {
  Mat mu(vp.mu_hat.rows(), vp.mu_hat.cols());
  for (Eigen::Index j = 0; j < mu.rows(); ++j) {
    for (Eigen::Index k = 0; k < mu.cols(); ++k) {
      const BetaParams p = vp.q(static_cast<int>(j), static_cast<int>(k));
      mu(j, k) = p.a / (p.a + p.b);
    }
  }
  return mu;
}

ContextChain extract_chain(const VariationalParams& vp) {
  ContextChain c = chain_from_mu(mean_mu(vp));
  c.rho0 /= c.rho0.sum();
  for (Eigen::Index i = 0; i < c.R.rows(); ++i) c.R.row(i) /= c.R.row(i).sum();
  return c;
}

ContextChain model_chain(const ContextChain& chain, const std::vector<int>& removed) {
  if (removed.empty()) return chain;
  std::vector<int> kept;
  for (int k = 0; k < chain.size(); ++k)
    if (!std::binary_search(removed.begin(), removed.end(), k)) kept.push_back(k);
  return distill_partition(chain, kept, removed, DistillMode::policy);
}

DistilledModel distilled_model(const VariationalParams& vp, double epsilon, DistillMode mode) {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw DomainError("distilled_model: epsilon must lie in [0,1)");
  const ContextChain full = extract_chain(vp);
  DistilledModel out;
  out.stationary = stationary_distribution(full.R);
  for (int k = 0; k < vp.K(); ++k) {
    const bool pruned = std::binary_search(vp.removed.begin(), vp.removed.end(), k);
    (pruned || out.stationary[k] < epsilon ? out.removed : out.kept).push_back(k);
  }
  if (out.kept.empty()) {
    Eigen::Index best = 0;
    out.stationary.maxCoeff(&best);
    out.kept.push_back(static_cast<int>(best));
    out.removed.erase(std::find(out.removed.begin(), out.removed.end(), static_cast<int>(best)));
    warn("distilled_model: every context below threshold; keeping context " + std::to_string(best));
  }
  out.chain = distill_partition(full, out.kept, out.removed, mode);
  if (mode == DistillMode::mpc) {
    for (int k : out.kept) out.thetas.push_back(vp.thetas[k]);
  } else {
    out.thetas = vp.thetas;
  }
  return out;
}

Mat sample_mu(const VariationalParams& vp, Rng& rng) {
  Mat mu(vp.mu_hat.rows(), vp.mu_hat.cols());
  for (Eigen::Index j = 0; j < mu.rows(); ++j) {
    for (Eigen::Index k = 0; k < mu.cols(); ++k) {
      const BetaParams p = vp.q(static_cast<int>(j), static_cast<int>(k));
      mu(j, k) = rng.beta(p.a, p.b);
    }
  }
  return mu;
}

Batch batch_of(const std::vector<Trajectory>& data) {
  Batch b;
  b.reserve(data.size());
  for (const auto& t : data) b.push_back(&t);
  return b;
}

}  // namespace hdpcmdp
