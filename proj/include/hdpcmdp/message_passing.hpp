#pragma once

#include <vector>

#include "hdpcmdp/chain.hpp"
#include "hdpcmdp/dynamics.hpp"

namespace hdpcmdp {

/// Posterior over the context sequence z_1..z_T of one trajectory, where z_t
/// governs transition t (s_{t-1}, a_{t-1}) -> s_t. Row t of every T x K table
/// refers to z_{t+1} in that notation.
struct MessageTable {
  Mat log_forward;           // T x K, log p(s_1..s_t, z_t)
  Mat log_backward;          // T x K, log p(s_{t+1}..s_T | z_t); last row zero
  double log_evidence = 0.0;
  Mat marginals;             // T x K
  std::vector<Mat> pairwise; // T-1 slabs, slab t = p(z_t = j, z_{t+1} = k)
};

/// Per-step log-likelihoods: row t, column k = log p(s_{t+1} | s_t, a_t, theta_k).
Mat context_log_likelihoods(const std::vector<ContextParams>& thetas, const Trajectory& traj);

/// Forward-backward in log space on precomputed log-likelihoods. Pairwise
/// slabs are skipped when `with_pairwise` is false.
MessageTable message_pass(const ContextChain& chain, const Mat& loglik, bool with_pairwise = true);

MessageTable message_pass(const ContextChain& chain, const std::vector<ContextParams>& thetas,
                          const Trajectory& traj);

struct LikelihoodGradient {
  std::vector<Vec> thetas;  // per context, over the flattened parameters
  ChainGradient chain;      // d log_evidence / d rho0 and d / d R
};

/// d log_evidence / d(rho0, R) treating every entry as free. Uses the
/// division-free form sum_t exp(lf[t-1][j] + L[t][k] + lb[t][k] - log_ev).
ChainGradient chain_evidence_grad(const Mat& loglik, const MessageTable& table);

LikelihoodGradient likelihood_grads(const ContextChain& chain,
                                    const std::vector<ContextParams>& thetas,
                                    const Trajectory& traj, const MessageTable& table);

/// log(sum(exp(v))); -inf when every entry is -inf.
double log_sum_exp(const Eigen::Ref<const Vec>& v);

}  // namespace hdpcmdp
