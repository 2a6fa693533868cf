#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hdpcmdp/chain.hpp"
#include "hdpcmdp/dynamics.hpp"
#include "hdpcmdp/rng.hpp"

namespace hdpcmdp {

enum class ContextMode { markov, non_markov_lag2, state_dependent };

ContextMode parse_context_mode(const std::string& name);
std::string to_string(ContextMode mode);

struct ContextProcess {
  ContextChain chain;
  int cooloff = 5;
  ContextMode mode = ContextMode::markov;
  /// state_dependent: context = floor(s[position_index] / band_width) mod 2.
  int position_index = 0;
  double band_width = 0.1;

  void validate() const;
};

/// `z` is the context that will govern the next transition; `prev_z` the one
/// that governed the previous transition. The episode start counts as a switch.
struct EnvState {
  Vec s;
  int z = 0;
  int prev_z = 0;
  int steps_since_switch = 0;
  int t = 0;
};

/// Next value of z. Inside the cool-off window z is kept; otherwise it is
/// drawn from row z (markov), row prev_z (non_markov_lag2) or read off the
/// position band (state_dependent).
int context_step(const ContextProcess& proc, const EnvState& state, Rng& rng);

enum class EnvKind { switching_linear, cartpole_swingup };

EnvKind parse_env_kind(const std::string& name);
std::string to_string(EnvKind kind);

/// s' = A_z s + B (chi_z a) + noise, a clipped to the box.
struct LinearEnvParams {
  std::vector<Mat> A;
  Mat B;
  std::vector<double> chi;
  double noise_std = 0.05;
  Vec goal;
  double action_cost = 0.01;
  double action_bound = 1.0;
  double init_range = 1.0;  // s0 ~ U[-init_range, init_range]^2
};

/// Cart-pole swing-up; state (x, x_dot, theta, theta_dot) with theta = 0
/// upright. Effective force chi_z * clip(a, +-max_force).
struct CartPoleParams {
  double cart_mass = 0.5;
  double pole_mass = 0.5;
  double pole_length = 0.6;
  double gravity = 9.82;
  double friction = 0.1;
  double dt = 0.04;
  double max_force = 20.0;
  std::vector<double> chi;
  double noise_std = 0.0;
  double init_std = 0.2;
};

struct Env {
  EnvKind kind = EnvKind::switching_linear;
  ContextProcess process;
  LinearEnvParams linear;
  CartPoleParams cartpole;

  int num_contexts() const { return process.chain.size(); }
  int state_dim() const;
  int action_dim() const;
  Vec action_low() const;
  Vec action_high() const;
  void validate() const;
};

/// Two contexts: A_z = 0.95 Rot(+-angle), B = 0.5 I, chi = (1, -1), goal (1, 0).
Env make_switching_linear(const ContextChain& chain, int cooloff = 5, double angle = 0.25);
Env make_cartpole(const ContextChain& chain, const std::vector<double>& chi, int cooloff = 5);

/// Deterministic part of one transition for a batch of columns, all under
/// context z (no noise, action clipping applied).
Mat env_mean_step(const Env& env, int z, const Mat& S, const Mat& A);
/// Per-dimension transition noise std of the simulator.
Vec env_noise_std(const Env& env);

/// Reward of (s, a, s') columns; the planner sees the same function.
Vec env_reward(const Env& env, const Mat& S, const Mat& A, const Mat& S1);

/// Mechanical energy of a cart-pole state (used by sanity checks).
double cartpole_energy(const CartPoleParams& p, const Vec& s);

EnvState env_reset(const Env& env, Rng& ctx_rng, Rng& noise_rng);

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool failed = false;
};

StepResult env_step(const Env& env, const EnvState& state, const Vec& a, Rng& ctx_rng,
                    Rng& noise_rng);

class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string name() const = 0;
  virtual void begin_episode() {}
  /// `true_z` is the context of the upcoming transition; only oracle agents
  /// may look at it.
  virtual Vec act(const Vec& s, int true_z, Rng& rng) = 0;
  virtual void observe(const Vec& /*s*/, const Vec& /*a*/, const Vec& /*s_next*/) {}
  /// Filtered context belief after the last observation, if the agent has one.
  virtual std::optional<Vec> belief() const { return std::nullopt; }
};

class RandomAgent : public Agent {
 public:
  RandomAgent(Vec low, Vec high) : low_(std::move(low)), high_(std::move(high)) {}
  std::string name() const override { return "random"; }
  Vec act(const Vec& s, int true_z, Rng& rng) override;

 private:
  Vec low_, high_;
};

struct Episode {
  Trajectory traj;
  std::vector<double> rewards;
  double total_return = 0.0;
  bool failed = false;
  Mat beliefs;  // T x K filtered beliefs when the agent keeps one, else empty
};

/// Closed-loop episode. The context, noise and agent streams are split from
/// `seed`, so different agents see the same context sequence and noise.
Episode rollout(const Env& env, Agent& agent, int horizon, std::uint64_t seed);

}  // namespace hdpcmdp
