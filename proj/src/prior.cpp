#include "hdpcmdp/prior.hpp"

#include <cmath>
#include <limits>

#include "hdpcmdp/special_functions.hpp"
#include "hdpcmdp/variational.hpp"

namespace hdpcmdp {

void HdpHyper::validate() const {
  if (!(gamma > 0.0)) throw DomainError("HdpHyper: gamma must be positive");
  if (!(alpha > 0.0)) throw DomainError("HdpHyper: alpha must be positive");
  if (!(kappa >= 0.0)) throw DomainError("HdpHyper: kappa must be nonnegative");
  if (K < 2) throw DomainError("HdpHyper: K must be at least 2");
  if (!(theta_prior_std > 0.0)) throw DomainError("HdpHyper: theta_prior_std must be positive");
}

PriorKind parse_prior_kind(const std::string& name) {
  if (name == "hdp") return PriorKind::hdp;
  if (name == "dirichlet" || name == "sticky_dirichlet") return PriorKind::sticky_dirichlet;
  if (name == "mle") return PriorKind::mle;
  throw DomainError("unknown prior kind '" + name + "' (expected hdp, dirichlet or mle)");
}

std::string to_string(PriorKind kind) {
  switch (kind) {
    case PriorKind::hdp: return "hdp";
    case PriorKind::sticky_dirichlet: return "dirichlet";
    case PriorKind::mle: return "mle";
  }
  return "?";
}

Vec stick_breaking(const Vec& fractions) {
  const Eigen::Index n = fractions.size();
  Vec w(n + 1);
  double rest = 1.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double f = fractions[k];
    if (!(f >= 0.0 && f <= 1.0)) throw DomainError("stick_breaking: fraction outside [0,1]");
    w[k] = f * rest;
    rest *= 1.0 - f;
  }
  w[n] = rest;
  return w;
}

Vec stick_breaking_backward(const Vec& fractions, const Vec& grad_weights) {
  const Eigen::Index n = fractions.size();
  if (grad_weights.size() != n + 1) throw DomainError("stick_breaking_backward: size mismatch");
  // rest_k = prod_{i<k} (1 - f_i); no division so f_i = 1 is fine.
  Vec rest(n + 1);
  rest[0] = 1.0;
  for (Eigen::Index k = 0; k < n; ++k) rest[k + 1] = rest[k] * (1.0 - fractions[k]);
  Vec grad(n);
  double g_rest = grad_weights[n];
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    grad[k] = (grad_weights[k] - g_rest) * rest[k];
    g_rest = grad_weights[k] * fractions[k] + g_rest * (1.0 - fractions[k]);
  }
  return grad;
}

namespace {

Vec stick_map_checked(const Vec& v, const char* who) {
  const Eigen::Index K = v.size();
  if (K < 1) throw DomainError(std::string(who) + ": empty input");
  for (Eigen::Index k = 0; k < K; ++k) {
    if (!(v[k] > 0.0 && v[k] <= 1.0)) throw DomainError(std::string(who) + ": entry outside (0,1]");
  }
  if (v[K - 1] != 1.0) throw DomainError(std::string(who) + ": last entry must be 1");
  return stick_breaking(v.head(K - 1));
}

}  // namespace

Vec gem_weights(const Vec& nu) { return stick_map_checked(nu, "gem_weights"); }

Vec rows_from_mu(const Vec& mu_row) { return stick_map_checked(mu_row, "rows_from_mu"); }

std::vector<BetaParams> sticky_row_priors(int j, const Vec& beta, const HdpHyper& hyper) {
  const int K = hyper.K;
  if (j < 0 || j > K) throw DomainError("sticky_row_priors: row index out of range");
  if (beta.size() < K - 1) throw DomainError("sticky_row_priors: beta too short");
  std::vector<BetaParams> out(K - 1);
  double used = 0.0;
  for (int c = 0; c < K - 1; ++c) {
    const double a = hyper.alpha * beta[c] + (j == c + 1 ? hyper.kappa : 0.0);
    used += a;
    double b = hyper.alpha + hyper.kappa - used;
    if (!(b > 0.0)) {
      warn("sticky_row_priors: second shape " + std::to_string(b) + " at row " +
           std::to_string(j) + ", column " + std::to_string(c) + " clamped to 1e-8");
      b = 1e-8;
    }
    out[c] = {a > 0.0 ? a : 1e-8, b};
  }
  return out;
}

double beta_cdf(double x, const BetaParams& p) { return special::incomplete_beta(x, p.a, p.b); }

std::pair<double, double> beta_implicit_grad(double x, const BetaParams& p) {
  if (!(x > 0.0 && x < 1.0)) throw DomainError("beta_implicit_grad: x must lie in (0,1)");
  if (!(p.a > 0.0 && p.b > 0.0)) throw DomainError("beta_implicit_grad: shapes must be positive");
  const double density = std::exp(special::beta_log_pdf(x, p.a, p.b));
  if (!(density > 0.0)) return {0.0, 0.0};
  const double ha = 1e-5 * (1.0 + std::fabs(p.a));
  const double hb = 1e-5 * (1.0 + std::fabs(p.b));
  // Shapes near zero: fall back to a one-sided difference.
  auto dF = [&](double lo_a, double hi_a, double lo_b, double hi_b, double width) {
    return (special::incomplete_beta(x, hi_a, hi_b) - special::incomplete_beta(x, lo_a, lo_b)) /
           width;
  };
  const double dFda = p.a > ha ? dF(p.a - ha, p.a + ha, p.b, p.b, 2 * ha)
                               : dF(p.a, p.a + ha, p.b, p.b, ha);
  const double dFdb = p.b > hb ? dF(p.a, p.a, p.b - hb, p.b + hb, 2 * hb)
                               : dF(p.a, p.a, p.b, p.b + hb, hb);
  return {-dFda / density, -dFdb / density};
}

double kl_beta(const BetaParams& q, const BetaParams& p) {
  if (!(q.a > 0.0 && q.b > 0.0 && p.a > 0.0 && p.b > 0.0))
    throw DomainError("kl_beta: shapes must be positive");
  using special::digamma;
  const double psi_sum = digamma(q.a + q.b);
  const double kl = special::log_beta_function(p.a, p.b) - special::log_beta_function(q.a, q.b) +
                    (q.a - p.a) * (digamma(q.a) - psi_sum) + (q.b - p.b) * (digamma(q.b) - psi_sum);
  return kl > 0.0 ? kl : 0.0;
}

KlBetaGrad kl_beta_grad(const BetaParams& q, const BetaParams& p) {
  auto central = [](auto&& f, double x) {
    const double h = 1e-5 * (1.0 + std::fabs(x));
    if (x <= h) return (f(x + h) - f(x)) / h;
    return (f(x + h) - f(x - h)) / (2 * h);
  };
  // Unclamped value so the differences stay smooth at q == p.
  auto raw = [](double qa, double qb, double pa, double pb) {
    using special::digamma;
    const double psi_sum = digamma(qa + qb);
    return special::log_beta_function(pa, pb) - special::log_beta_function(qa, qb) +
           (qa - pa) * (digamma(qa) - psi_sum) + (qb - pb) * (digamma(qb) - psi_sum);
  };
  KlBetaGrad g;
  g.qa = central([&](double v) { return raw(v, q.b, p.a, p.b); }, q.a);
  g.qb = central([&](double v) { return raw(q.a, v, p.a, p.b); }, q.b);
  g.pa = central([&](double v) { return raw(q.a, q.b, v, p.b); }, p.a);
  g.pb = central([&](double v) { return raw(q.a, q.b, p.a, v); }, p.b);
  return g;
}

double log_prior(const VariationalParams& vp, const HdpHyper& hyper, PriorKind kind) {
  if (kind == PriorKind::mle) return 0.0;
  double lp = 0.0;
  const double var = hyper.theta_prior_std * hyper.theta_prior_std;
  const double log_norm = -0.5 * std::log(2.0 * M_PI * var);
  for (const auto& theta : vp.thetas) {
    const Vec flat = theta.flatten();
    lp += flat.size() * log_norm - 0.5 * flat.squaredNorm() / var;
  }
  if (kind == PriorKind::hdp) {
    for (Eigen::Index k = 0; k < vp.nu_hat.size(); ++k) {
      const double v = vp.nu_hat[k];
      if (!(v > 0.0 && v < 1.0)) throw DomainError("log_prior: nu_hat outside (0,1)");
      lp += special::beta_log_pdf(v, 1.0, hyper.gamma);
    }
    return lp;
  }
  // Sticky Dirichlet over every row of the point chain.
  const ContextChain chain = extract_chain(vp);
  const int K = chain.size();
  for (int j = 0; j <= K; ++j) {
    const Vec row = j == 0 ? chain.rho0 : Vec(chain.R.row(j - 1).transpose());
    double conc_sum = 0.0;
    double row_lp = 0.0;
    for (int k = 0; k < K; ++k) {
      const double conc = hyper.alpha / K + (j == k + 1 ? hyper.kappa : 0.0);
      conc_sum += conc;
      row_lp += (conc - 1.0) * std::log(row[k]) - std::lgamma(conc);
    }
    lp += row_lp + std::lgamma(conc_sum);
  }
  return lp;
}

}  // namespace hdpcmdp
