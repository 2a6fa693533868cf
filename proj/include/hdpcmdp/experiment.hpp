#pragma once

#include <exception>
#include <string>
#include <vector>

#include "hdpcmdp/config.hpp"

namespace hdpcmdp {

struct RunArtifacts {
  std::string out_dir;
  std::string chain_csv;
  std::string beliefs_csv;
  std::string zseq_csv;
  std::string metrics_jsonl;
  std::string returns_jsonl;
  std::string train_log_jsonl;
  std::string dataset_jsonl;
  std::string checkpoint;
  std::vector<std::string> epoch_chains;
};

/// The outer learning loop with the MPC agent:
///   warm start with n_warm random-agent episodes and warm_iterations model
///   epochs, then for each of n_epochs: collect n_traj belief-MPC episodes,
///   refit for epoch_iterations, distill at epsilon_test and evaluate.
/// Everything lands in `out_dir` (created if missing). metrics.jsonl holds
/// no timing information, so a rerun with the same config is byte-identical.
/// On failure an error.json manifest is written and the exception rethrown.
RunArtifacts run_experiment(const ExperimentConfig& cfg, const std::string& out_dir,
                            const std::string& config_text = "");

/// {"error": ..., "type": ..., "stage": ...}; `step` is included for
/// NumericalError.
void write_error_manifest(const std::string& out_dir, const std::string& stage, const std::exception& e);

/// Seed of the n-th rollout drawn from `stream` of a run.
std::uint64_t rollout_seed(std::uint64_t run_seed, std::uint64_t stream, std::uint64_t n);

/// Switch-aware mask: true at steps at least `cooloff` steps after the most
/// recent change of `true_z` (the trajectory start counts as a change).
std::vector<bool> settled_steps(const std::vector<int>& true_z, int cooloff);

}  // namespace hdpcmdp
