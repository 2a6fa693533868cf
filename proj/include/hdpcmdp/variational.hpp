#pragma once

#include <vector>

#include "hdpcmdp/chain.hpp"
#include "hdpcmdp/dynamics.hpp"
#include "hdpcmdp/prior.hpp"
#include "hdpcmdp/rng.hpp"

namespace hdpcmdp {

/// Truncated mean-field posterior. Row j of mu_hat (j = 0..K) parameterizes
/// the K-1 stick fractions of rho_j: q(mu_jk) = Beta(a_jk, b_jk) with
///   a_jk = mu_hat(j,k),  b_jk = mu_hat_row(j) - sum_{i<=k} mu_hat(j,i).
/// Row 0 is the initial distribution, row j >= 1 leaves context j-1.
struct VariationalParams {
  Vec nu_hat;      // K-1, in (0,1)
  Mat mu_hat;      // (K+1) x (K-1)
  Vec mu_hat_row;  // K+1
  std::vector<ContextParams> thetas;
  /// Contexts pruned by distillation during training, ascending. They are
  /// excluded from the support of the likelihood and their parameters frozen.
  std::vector<int> removed;

  int K() const { return static_cast<int>(thetas.size()); }
  BetaParams q(int j, int k) const;
  /// mu_hat_row(j) - sum_k mu_hat(j,k), the last second shape.
  double slack(int j) const;
  std::vector<int> kept() const;
  void validate() const;
};

/// nu_hat at the prior mean 1/(1+gamma), every q(mu_jk) equal to its prior,
/// thetas drawn with weight std = theta_prior_std.
VariationalParams init_variational(const HdpHyper& hyper, const NetworkSpec& spec, Rng& rng);

/// (K+1) x (K-1) stick fractions -> chain (row 0 = rho0).
ContextChain chain_from_mu(const Mat& mu);

/// Stick fractions at their posterior means a / (a + b).
Mat mean_mu(const VariationalParams& vp);

/// Expected chain through stick-breaking of the mean fractions, rows
/// renormalized.
ContextChain extract_chain(const VariationalParams& vp);

/// The chain handed to filtering and control after training: `chain` itself
/// when nothing has been removed, otherwise its policy-mode reduction on the
/// fixed partition.
ContextChain model_chain(const ContextChain& chain, const std::vector<int>& removed);

/// Model handed to filtering and control once training is over.
struct DistilledModel {
  ContextChain chain;
  std::vector<ContextParams> thetas;  // aligned with chain
  std::vector<int> kept;
  std::vector<int> removed;
  Vec stationary;  // of the expected chain, all K contexts
};

/// Distills the expected chain at `epsilon`; contexts already pruned during
/// training stay pruned. In mpc mode only the kept thetas are returned.
DistilledModel distilled_model(const VariationalParams& vp, double epsilon,
                               DistillMode mode = DistillMode::mpc);

/// Independent draw of every stick fraction from q.
Mat sample_mu(const VariationalParams& vp, Rng& rng);

using Batch = std::vector<const Trajectory*>;
Batch batch_of(const std::vector<Trajectory>& data);

struct ElboValue {
  double total = 0.0;
  double loglik = 0.0;  // (N/B) * mean over samples of the batch log-evidence
  double kl = 0.0;
  double log_prior = 0.0;
};

/// Gradient w.r.t. the natural parameters.
struct ElboGradient {
  Vec nu;
  Mat mu_hat;
  Vec mu_hat_row;
  std::vector<Vec> thetas;
};

/// ELBO with the stick fractions supplied by the caller (one matrix per
/// Monte-Carlo sample). For hdp the likelihood term averages over the
/// samples, subtracts the Beta KL against the sticky prior and adds the log
/// prior on nu_hat and the thetas. sticky_dirichlet and mle are point
/// estimates: they ignore `mu_samples` and evaluate the mean chain, with no KL.
/// Writes the gradient into `grad` when it is non-null.
ElboValue elbo_with_samples(const VariationalParams& vp, const Batch& batch, const HdpHyper& hyper,
                            PriorKind kind, const std::vector<Mat>& mu_samples, double dataset_size,
                            ElboGradient* grad);

double elbo_estimate(const VariationalParams& vp, const Batch& batch, const HdpHyper& hyper,
                     PriorKind kind, int n_samples, double dataset_size, Rng& rng);

ElboGradient elbo_gradients(const VariationalParams& vp, const Batch& batch, const HdpHyper& hyper,
                            PriorKind kind, int n_samples, double dataset_size, Rng& rng,
                            ElboValue* value = nullptr);

}  // namespace hdpcmdp
