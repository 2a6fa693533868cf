#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hdpcmdp/chain.hpp"
#include "hdpcmdp/dynamics.hpp"
#include "hdpcmdp/envs.hpp"
#include "hdpcmdp/rng.hpp"

namespace hdpcmdp {

struct CemConfig {
  int horizon = 10;
  int n_pops = 100;
  int n_elite = 10;
  int n_traces = 5;
  int n_iters = 5;
  double lr = 1.0;
  double init_std = 0.5;  // per action dimension, in action units
  double discount = 0.99;

  void validate() const;
};

/// H x action_dim. Candidates are actions + delta with delta ~ N(mu, sigma^2).
struct Plan {
  Mat actions;
  Mat mu;
  Mat sigma;
};

Plan initial_plan(const CemConfig& cfg, int action_dim);

/// Columns are (s, a) samples; returns the per-column reward of reaching S1.
using BatchReward = std::function<Vec(const Mat& S, const Mat& A, const Mat& S1)>;
/// Mean next state of every column under context z.
using BatchMean = std::function<Mat(int z, const Mat& S, const Mat& A)>;

/// What the planner knows: a context chain, per-context Gaussian dynamics and
/// the reward.
struct PlanningModel {
  ContextChain chain;
  BatchMean mean;
  std::vector<Vec> noise_std;  // per context
  BatchReward reward;
  Vec action_low;
  Vec action_high;
  bool sample_noise = true;

  int num_contexts() const { return chain.size(); }
};

PlanningModel learned_model(const ContextChain& chain, const std::vector<ContextParams>& thetas,
                            const Env& env);
/// The simulator itself (context process treated as its Markov chain). Noise
/// std is floored at 1e-3 so the model still defines a density.
PlanningModel true_model(const Env& env);

struct CemTrace {
  std::vector<double> median_elite_score;  // per iteration
  std::vector<double> best_score;
};

/// Refines plan.mu / plan.sigma; plan.actions is returned unchanged. Each of
/// the n_pops candidates is scored by the mean discounted reward of n_traces
/// model rollouts with z_0 ~ b and z_{h+1} ~ R[z_h].
Plan cem_plan(const PlanningModel& model, const Vec& s, const Vec& b, const Plan& plan,
              const CemConfig& cfg, Rng& rng, CemTrace* trace = nullptr);

/// First action of actions + mu, clipped to the bounds.
Vec plan_first_action(const PlanningModel& model, const Plan& plan);

/// Shift by one step: the executed prefix drops out, a zero action is
/// appended, mu resets to 0 and sigma to init_std.
Plan shift_plan(const Plan& plan, const CemConfig& cfg);

/// Receding-horizon controller. `belief` mode filters the context from the
/// observed transitions with the model's own Gaussian densities; `oracle`
/// mode plans from the true upcoming context.
class MpcAgent : public Agent {
 public:
  enum class Mode { belief, oracle };

  MpcAgent(PlanningModel model, CemConfig cfg, Mode mode, int replan_every = 1);

  std::string name() const override { return mode_ == Mode::belief ? "belief_mpc" : "oracle_mpc"; }
  void begin_episode() override;
  Vec act(const Vec& s, int true_z, Rng& rng) override;
  void observe(const Vec& s, const Vec& a, const Vec& s_next) override;
  std::optional<Vec> belief() const override;

  /// Prior over the context of the next transition handed to the planner.
  Vec planning_belief(int true_z) const;

 private:
  PlanningModel model_;
  CemConfig cfg_;
  Mode mode_;
  int replan_every_;
  Plan plan_;
  Vec b_;
  bool has_belief_ = false;
  int steps_ = 0;
};

struct EvalStats {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> returns;
  std::vector<int> misidentified_switches;  // -1 when the agent keeps no belief
  int failures = 0;
};

/// Runs `episodes` closed-loop episodes; episode e uses seed mix(seed, e)
/// so different agents face the same context sequences and noise.
EvalStats evaluate(const Env& env, Agent& agent, int episodes, int horizon, std::uint64_t seed);

std::uint64_t episode_seed(std::uint64_t seed, int episode);

/// Switch instants of the true sequence at which the belief argmax (mapped
/// to true labels by per-episode majority vote) disagrees with the truth.
int misidentified_switches(const Mat& beliefs, const std::vector<int>& true_z);

/// 95% half-width of the mean of paired differences by percentile bootstrap.
double paired_bootstrap_halfwidth(const std::vector<double>& diffs, int n_boot, std::uint64_t seed);

}  // namespace hdpcmdp
