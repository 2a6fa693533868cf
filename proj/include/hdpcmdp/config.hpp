#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hdpcmdp/control.hpp"
#include "hdpcmdp/envs.hpp"
#include "hdpcmdp/fit.hpp"
#include "hdpcmdp/prior.hpp"

namespace hdpcmdp {

/// Everything one run of the outer learning loop needs.
struct ExperimentConfig {
  // Environment and context process.
  EnvKind env = EnvKind::cartpole_swingup;
  ContextMode context_mode = ContextMode::markov;
  int cooloff = 5;
  ContextChain chain;  // true context chain
  std::vector<double> chi;
  double noise_std = -1.0;  // < 0 keeps the environment default
  int episode_length = 100;

  // Model.
  HdpHyper hyper;
  std::vector<int> hidden;  // empty: linear mean map
  TrainConfig train;        // train.epochs is unused; see the iteration counts below

  // Outer loop.
  int n_warm = 100;
  int n_traj = 20;
  int n_epochs = 10;
  int warm_iterations = 500;
  int epoch_iterations = 500;
  double epsilon_test = 0.02;
  int eval_episodes = 10;

  // Planner.
  CemConfig cem;
  int replan_every = 1;

  std::uint64_t seed = 0;

  void validate() const;
};

/// Defaults for the given environment (cart-pole: chi = {1, -1}, hidden 128;
/// switching linear: chi from make_switching_linear, linear mean map).
ExperimentConfig default_config(EnvKind env);

/// Flat `key = value` text; `#` starts a comment. The `env` key, when
/// present, selects the defaults the remaining keys override. Vectors are
/// comma separated; matrix rows are separated by `;`. Unknown or repeated
/// keys are errors reporting the line number.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Canonical text form; parse_config(to_text(c)) reproduces c.
std::string to_text(const ExperimentConfig& cfg);

/// Key names understood by parse_config, in to_text order.
const std::vector<std::string>& config_keys();

Env make_env(const ExperimentConfig& cfg);

}  // namespace hdpcmdp
