#pragma once

#include <utility>
#include <vector>

#include "hdpcmdp/common.hpp"
#include "hdpcmdp/rng.hpp"

namespace hdpcmdp {

/// Fully connected ReLU network; the output layer is linear.
struct NetworkSpec {
  std::vector<int> layer_sizes;  // input = state_dim + action_dim, output = state_dim
  int action_dim = 0;

  int state_dim() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  /// Weights and biases only.
  int num_network_params() const;
  int num_params() const { return num_network_params() + state_dim(); }
  void validate() const;

  bool operator==(const NetworkSpec&) const = default;
};

NetworkSpec make_network_spec(int state_dim, int action_dim, const std::vector<int>& hidden);

/// One context's transition model: s' ~ N(s + MLP(s, a), diag(exp(log_std))^2).
struct ContextParams {
  NetworkSpec spec;
  std::vector<Mat> weights;  // layer l: layer_sizes[l+1] x layer_sizes[l]
  std::vector<Vec> biases;
  Vec log_std;

  /// Layout: for each layer, W column-major then b; finally log_std.
  Vec flatten() const;
  static ContextParams unflatten(const NetworkSpec& spec, const Vec& flat);
  static ContextParams zeros(const NetworkSpec& spec);
};

/// Weights ~ N(0, weight_std^2), biases 0, log_std = log(0.1).
ContextParams init_context_params(const NetworkSpec& spec, double weight_std, Rng& rng);

struct Gaussian {
  Vec mean;
  Vec std;
  /// mean + std * eps for an external standard-normal vector.
  Vec sample(const Vec& eps) const { return mean + std.cwiseProduct(eps); }
};

Gaussian predict(const ContextParams& theta, const Vec& s, const Vec& a);

/// Means for many (s, a) columns at once.
Mat predict_mean_batch(const ContextParams& theta, const Mat& S, const Mat& A);

double log_likelihood(const ContextParams& theta, const Vec& s, const Vec& a, const Vec& s_next);

/// Log-density and its gradient over the flattened parameters.
std::pair<double, Vec> log_likelihood_and_grad(const ContextParams& theta, const Vec& s,
                                               const Vec& a, const Vec& s_next);

/// One episode. states: D x (T+1), actions: A x T, columns are time.
/// true_z (length T, optional) holds the generating context of each
/// transition and is only used for evaluation.
struct Trajectory {
  Mat states;
  Mat actions;
  std::vector<int> true_z;
  int T() const { return static_cast<int>(actions.cols()); }
  void validate() const;
  bool operator==(const Trajectory&) const = default;
};

/// Log-densities of the T transitions of `traj` under one context.
Vec log_likelihoods(const ContextParams& theta, const Trajectory& traj);

/// Gradient of sum_t w_t log p(s_{t+1} | s_t, a_t, theta) over the flattened
/// parameters; accumulated into `grad`.
void accumulate_weighted_grad(const ContextParams& theta, const Trajectory& traj, const Vec& w,
                              Vec& grad);

}  // namespace hdpcmdp
