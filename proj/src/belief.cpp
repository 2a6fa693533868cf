#include "hdpcmdp/belief.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <limits>

#include "hdpcmdp/message_passing.hpp"

namespace hdpcmdp {

Vec belief_update(const Vec& prior, const Vec& loglik, int step) {
  if (prior.size() != loglik.size()) throw DomainError("belief_update: size mismatch");
  Vec logn(prior.size());
  for (Eigen::Index i = 0; i < prior.size(); ++i)
    logn[i] = prior[i] > 0.0 ? std::log(prior[i]) + loglik[i] : -std::numeric_limits<double>::infinity();
  const double lse = log_sum_exp(logn);
  if (!std::isfinite(lse))
    throw NumericalError("belief filter: all context weights underflow at step " + std::to_string(step), step);
  Vec b = (logn.array() - lse).exp();
  return b / b.sum();
}

Vec belief_predict(const Vec& b, const ContextChain& chain) {
  if (b.size() != chain.size()) throw DomainError("belief_predict: size mismatch");
  Vec p = chain.R.transpose() * b;
  return p / p.sum();
}

namespace {

Vec step_loglik(const std::vector<ContextParams>& thetas, const Vec& s, const Vec& a, const Vec& s_next) {
  Vec l(thetas.size());
  for (std::size_t k = 0; k < thetas.size(); ++k) l[k] = log_likelihood(thetas[k], s, a, s_next);
  return l;
}

}  // namespace

Vec belief_step(const Vec& b, const Vec& s, const Vec& a, const Vec& s_next,
                const ContextChain& chain, const std::vector<ContextParams>& thetas, int step) {
  if (static_cast<int>(thetas.size()) != chain.size()) throw DomainError("belief_step: K mismatch");
  return belief_update(belief_predict(b, chain), step_loglik(thetas, s, a, s_next), step);
}

Vec belief_initial(const Vec& s, const Vec& a, const Vec& s_next, const ContextChain& chain,
                   const std::vector<ContextParams>& thetas) {
  if (static_cast<int>(thetas.size()) != chain.size()) throw DomainError("belief_initial: K mismatch");
  return belief_update(chain.rho0, step_loglik(thetas, s, a, s_next), 0);
}

Mat filter_trajectory(const ContextChain& chain, const std::vector<ContextParams>& thetas,
                      const Trajectory& traj) {
  traj.validate();
  const Mat L = context_log_likelihoods(thetas, traj);
  Mat out(traj.T(), chain.size());
  Vec b = belief_update(chain.rho0, L.row(0).transpose(), 0);
  out.row(0) = b.transpose();
  for (int t = 1; t < traj.T(); ++t) {
    b = belief_update(belief_predict(b, chain), L.row(t).transpose(), t);
    out.row(t) = b.transpose();
  }
  return out;
}

std::vector<int> decode_contexts(const ContextChain& chain, const std::vector<ContextParams>& thetas,
                                 const Trajectory& traj) {
  const MessageTable tab = message_pass(chain, thetas, traj);
  std::vector<int> z(traj.T());
  for (int t = 0; t < traj.T(); ++t) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < tab.marginals.cols(); ++k)
      if (tab.marginals(t, k) > tab.marginals(t, best)) best = k;
    z[t] = static_cast<int>(best);
  }
  return z;
}

double best_permutation_accuracy(const std::vector<int>& decoded, const std::vector<int>& truth,
                                 const std::vector<bool>& counted) {
  if (decoded.size() != truth.size()) throw DomainError("best_permutation_accuracy: length mismatch");
  if (!counted.empty() && counted.size() != truth.size())
    throw DomainError("best_permutation_accuracy: mask length mismatch");
  int n_labels = 0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (decoded[t] < 0 || truth[t] < 0) throw DomainError("best_permutation_accuracy: negative label");
    n_labels = std::max({n_labels, decoded[t] + 1, truth[t] + 1});
  }
  if (n_labels > 9) throw DomainError("best_permutation_accuracy: at most 9 labels");
  Mat agree = Mat::Zero(n_labels, n_labels);
  int total = 0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (!counted.empty() && !counted[t]) continue;
    agree(decoded[t], truth[t]) += 1.0;
    ++total;
  }
  if (total == 0) return 1.0;
  std::vector<int> perm(n_labels);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    double hits = 0.0;
    for (int l = 0; l < n_labels; ++l) hits += agree(l, perm[l]);
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / total;
}

}  // namespace hdpcmdp
