#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hdpcmdp/common.hpp"

namespace hdpcmdp {

struct VariationalParams;

struct HdpHyper {
  double gamma = 2.0;
  double alpha = 1000.0;
  double kappa = 3.0;
  int K = 5;
  double theta_prior_std = 0.1;

  void validate() const;
};

struct BetaParams {
  double a;
  double b;
};

enum class PriorKind { hdp, sticky_dirichlet, mle };

PriorKind parse_prior_kind(const std::string& name);
std::string to_string(PriorKind kind);

/// Stick-breaking over K-1 free fractions; the K-th weight takes the rest.
/// Fractions must lie in [0,1].
Vec stick_breaking(const Vec& fractions);

/// Vector-Jacobian product of `stick_breaking`: gradient w.r.t. the K-1
/// fractions given the gradient w.r.t. the K weights.
Vec stick_breaking_backward(const Vec& fractions, const Vec& grad_weights);

/// GEM weights beta_k = nu_k prod_{i<k} (1 - nu_i). `nu` has K entries in
/// (0,1] and the last must equal 1.
Vec gem_weights(const Vec& nu);

/// Same map applied to one row of stick fractions mu.
Vec rows_from_mu(const Vec& mu_row);

/// Beta shapes of the K-1 stick fractions of row j (0 = initial distribution,
/// j >= 1 = transitions out of context j-1). The sticky boost lands on
/// column j-1; every row has total mass alpha + kappa.
std::vector<BetaParams> sticky_row_priors(int j, const Vec& beta, const HdpHyper& hyper);

double beta_cdf(double x, const BetaParams& p);

/// dx/da and dx/db of a Beta sample held at fixed CDF level:
/// -(dF/dshape) / pdf(x). x must lie strictly inside (0,1).
std::pair<double, double> beta_implicit_grad(double x, const BetaParams& p);

double kl_beta(const BetaParams& q, const BetaParams& p);

struct KlBetaGrad {
  double qa, qb, pa, pb;
};
/// Central differences of `kl_beta` with step 1e-5 (1 + |shape|).
KlBetaGrad kl_beta_grad(const BetaParams& q, const BetaParams& p);

/// log p(nu_hat) + log p(theta_hat) for hdp; per-row sticky Dirichlet on the
/// point chain plus the theta term for sticky_dirichlet; zero for mle.
double log_prior(const VariationalParams& vp, const HdpHyper& hyper, PriorKind kind);

}  // namespace hdpcmdp
