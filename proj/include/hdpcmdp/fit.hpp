#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hdpcmdp/variational.hpp"

namespace hdpcmdp {

struct TrainConfig {
  PriorKind kind = PriorKind::hdp;
  double lr_theta = 5e-3;
  double lr_mu = 1e-2;
  double lr_nu = 1e-2;
  double clip_norm = 10.0;
  int epochs = 500;
  int batch_size = 100;
  int n_mu_samples = 1;
  int distill_every = 50;  // 0 disables distillation during training
  double epsilon_train = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double elbo = 0.0;  // mean of the minibatch estimates over the epoch
  int active_contexts = 0;
  double grad_norm_theta = 0.0;
  double grad_norm_mu = 0.0;
  double grad_norm_nu = 0.0;
  double wall_ms = 0.0;
};

struct FitResult {
  VariationalParams vp;
  std::vector<EpochLog> log;
  bool aborted = false;  // true when a non-finite step stopped training
  std::string message;
};

/// Clipped Adam ascent on the ELBO from `init`. Parameters live in an
/// unconstrained space: logit(nu_hat), log mu_hat and log of each row's
/// slack mu_hat_row - sum mu_hat. Every `distill_every` epochs, contexts whose
/// stationary mass in the expected chain falls below `epsilon_train` join
/// the removed set for good.
FitResult fit(const std::vector<Trajectory>& dataset, const HdpHyper& hyper,
              const TrainConfig& cfg, const VariationalParams& init);

/// Same, starting from `init_variational(hyper, spec, ...)` seeded by cfg.seed.
FitResult fit(const std::vector<Trajectory>& dataset, const HdpHyper& hyper,
              const TrainConfig& cfg, const NetworkSpec& spec);

}  // namespace hdpcmdp
