#pragma once

#include <vector>

#include "hdpcmdp/chain.hpp"
#include "hdpcmdp/dynamics.hpp"

namespace hdpcmdp {

/// Posterior over the context of the transition that produced the latest
/// state: after observing s_next, N_i = p(s_next | s, a, theta_i) sum_j R_ji b_j.
/// Computed in log space. Throws NumericalError (carrying `step`) when every
/// N_i underflows.
Vec belief_step(const Vec& b, const Vec& s, const Vec& a, const Vec& s_next,
                const ContextChain& chain, const std::vector<ContextParams>& thetas, int step = -1);

/// First filter step of an episode: the prior over the first context is rho0.
Vec belief_initial(const Vec& s, const Vec& a, const Vec& s_next, const ContextChain& chain,
                   const std::vector<ContextParams>& thetas);

/// Update from a prior over the upcoming context and per-context
/// log-likelihoods; the shared core of the two functions above.
Vec belief_update(const Vec& prior, const Vec& loglik, int step = -1);

/// Prior over the next transition's context: b^T R, or rho0 before the first
/// observation.
Vec belief_predict(const Vec& b, const ContextChain& chain);

/// Filtered beliefs for every step of a trajectory (T x K).
Mat filter_trajectory(const ContextChain& chain, const std::vector<ContextParams>& thetas,
                      const Trajectory& traj);

/// Argmax of the smoothed marginals; ties go to the lowest index.
std::vector<int> decode_contexts(const ContextChain& chain, const std::vector<ContextParams>& thetas,
                                 const Trajectory& traj);

/// Fraction of counted steps where decoded == truth after relabeling the
/// decoded labels by the injective map that maximizes agreement. `counted`
/// selects steps (all when empty). Returns 1 when no step is counted.
double best_permutation_accuracy(const std::vector<int>& decoded, const std::vector<int>& truth,
                                 const std::vector<bool>& counted = {});

}  // namespace hdpcmdp
