#pragma once

#include <string>
#include <vector>

#include "hdpcmdp/common.hpp"

namespace hdpcmdp {

/// Initial distribution and row-stochastic transition matrix over K contexts.
struct ContextChain {
  Vec rho0;
  Mat R;

  int size() const { return static_cast<int>(rho0.size()); }

  /// Throws DomainError unless entries lie in [0,1] and rho0 and every row
  /// of R sum to one within `tol`.
  void validate(double tol = 1e-12) const;

  bool operator==(const ContextChain&) const = default;
};

ContextChain uniform_chain(int K);

/// Stationary distribution p = p R. Power iteration (residual 1e-12, cap
/// 100000 sweeps) with a direct solve of (R^T - I) p = 0 as fallback.
/// Throws ConvergenceError carrying the last residual if both fail.
Vec stationary_distribution(const Mat& R);

enum class DistillMode { mpc, policy };

struct DistillResult {
  ContextChain chain;
  std::vector<int> kept;     // I1
  std::vector<int> removed;  // I2
  Vec stationary;            // of the input chain
  bool fallback_used = false;
};

/// Removes contexts whose stationary mass is below `epsilon` and folds the
/// paths through them back into the kept block:
///   R_hat = R11 + R12 (I - R22)^{-1} R21.
/// In `policy` mode the result keeps all K indices: the I2 rows carry the
/// escape probabilities (I - R22)^{-1} R21 and the I2 columns are zero.
DistillResult distill(const ContextChain& chain, double epsilon, DistillMode mode);

/// Same reduction with a caller-chosen partition. `kept` must be nonempty.
ContextChain distill_partition(const ContextChain& chain, const std::vector<int>& kept,
                               const std::vector<int>& removed, DistillMode mode);

/// Vector-Jacobian product of the policy-mode reduction with a fixed
/// partition: maps gradients w.r.t. the reduced chain to gradients w.r.t.
/// the original rho0 and R.
struct ChainGradient {
  Vec rho0;
  Mat R;
};
ChainGradient distill_policy_backward(const ContextChain& chain, const std::vector<int>& kept,
                                      const std::vector<int>& removed,
                                      const ChainGradient& reduced_grad);

/// CSV: first row rho0, then K rows of R, 17 significant digits.
std::string chain_to_csv(const ContextChain& chain);
ContextChain chain_from_csv(const std::string& text);

}  // namespace hdpcmdp
