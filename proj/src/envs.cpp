#include "hdpcmdp/envs.hpp"

#include <cmath>

namespace hdpcmdp {

ContextMode parse_context_mode(const std::string& name) {
  if (name == "markov") return ContextMode::markov;
  if (name == "non_markov_lag2" || name == "lag2") return ContextMode::non_markov_lag2;
  if (name == "state_dependent") return ContextMode::state_dependent;
  throw DomainError("unknown context mode '" + name + "'");
}

std::string to_string(ContextMode mode) {
  switch (mode) {
    case ContextMode::markov: return "markov";
    case ContextMode::non_markov_lag2: return "non_markov_lag2";
    case ContextMode::state_dependent: return "state_dependent";
  }
  return "?";
}

EnvKind parse_env_kind(const std::string& name) {
  if (name == "switching_linear" || name == "linear") return EnvKind::switching_linear;
  if (name == "cartpole_swingup" || name == "cartpole") return EnvKind::cartpole_swingup;
  throw DomainError("unknown environment '" + name + "'");
}

std::string to_string(EnvKind kind) {
  return kind == EnvKind::switching_linear ? "switching_linear" : "cartpole_swingup";
}

void ContextProcess::validate() const {
  chain.validate(1e-9);
  if (cooloff < 0) throw DomainError("ContextProcess: cooloff must be nonnegative");
  if (mode == ContextMode::state_dependent && chain.size() < 2)
    throw DomainError("ContextProcess: state_dependent mode needs two contexts");
  if (!(band_width > 0.0)) throw DomainError("ContextProcess: band_width must be positive");
}

int context_step(const ContextProcess& proc, const EnvState& state, Rng& rng) {
  if (state.steps_since_switch < proc.cooloff) return state.z;
  switch (proc.mode) {
    case ContextMode::markov:
      return rng.categorical(proc.chain.R.row(state.z).transpose());
    case ContextMode::non_markov_lag2:
      return rng.categorical(proc.chain.R.row(state.prev_z).transpose());
    case ContextMode::state_dependent: {
      const double band = std::floor(state.s[proc.position_index] / proc.band_width);
      const long parity = static_cast<long>(std::fmod(band, 2.0));
      return static_cast<int>((parity + 2) % 2);
    }
  }
  return state.z;
}

int Env::state_dim() const { return kind == EnvKind::switching_linear ? 2 : 4; }
int Env::action_dim() const { return kind == EnvKind::switching_linear ? 2 : 1; }

Vec Env::action_low() const {
  return kind == EnvKind::switching_linear ? Vec::Constant(2, -linear.action_bound)
                                           : Vec::Constant(1, -cartpole.max_force);
}

Vec Env::action_high() const { return -action_low(); }

void Env::validate() const {
  process.validate();
  const auto K = static_cast<std::size_t>(num_contexts());
  if (kind == EnvKind::switching_linear) {
    if (linear.A.size() != K || linear.chi.size() != K)
      throw DomainError("Env: need one A matrix and one chi per context");
    for (const auto& A : linear.A)
      if (A.rows() != 2 || A.cols() != 2) throw DomainError("Env: A must be 2 x 2");
    if (linear.B.rows() != 2 || linear.B.cols() != 2) throw DomainError("Env: B must be 2 x 2");
    if (!(linear.noise_std >= 0.0)) throw DomainError("Env: noise_std must be nonnegative");
  } else {
    if (cartpole.chi.size() != K) throw DomainError("Env: need one chi per context");
    if (!(cartpole.dt > 0.0 && cartpole.max_force > 0.0)) throw DomainError("Env: bad cart-pole constants");
  }
}

namespace {

Mat rotation(double angle) {
  Mat r(2, 2);
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

Mat clip_cols(const Mat& A, const Vec& lo, const Vec& hi) {
  return A.cwiseMax(lo.replicate(1, A.cols())).cwiseMin(hi.replicate(1, A.cols()));
}

}  // namespace

Env make_switching_linear(const ContextChain& chain, int cooloff, double angle) {
  Env env;
  env.kind = EnvKind::switching_linear;
  env.process.chain = chain;
  env.process.cooloff = cooloff;
  const int K = chain.size();
  for (int k = 0; k < K; ++k) {
    const double sign = k % 2 == 0 ? 1.0 : -1.0;
    env.linear.A.push_back(0.95 * rotation(sign * angle * (1 + k / 2)));
    env.linear.chi.push_back(sign);
  }
  env.linear.B = 0.5 * Mat::Identity(2, 2);
  env.linear.goal = Vec::Zero(2);
  env.linear.goal[0] = 1.0;
  env.validate();
  return env;
}

Env make_cartpole(const ContextChain& chain, const std::vector<double>& chi, int cooloff) {
  Env env;
  env.kind = EnvKind::cartpole_swingup;
  env.process.chain = chain;
  env.process.cooloff = cooloff;
  env.cartpole.chi = chi;
  env.validate();
  return env;
}

Mat env_mean_step(const Env& env, int z, const Mat& S, const Mat& A) {
  const Mat Ac = clip_cols(A, env.action_low(), env.action_high());
  if (env.kind == EnvKind::switching_linear) {
    const auto& p = env.linear;
    return p.A[z] * S + p.chi[z] * (p.B * Ac);
  }
  const auto& p = env.cartpole;
  const double M = p.cart_mass + p.pole_mass;
  const double mpl = p.pole_mass * p.pole_length;
  Mat out(4, S.cols());
  for (Eigen::Index i = 0; i < S.cols(); ++i) {
    const double xd = S(1, i), th = S(2, i), thd = S(3, i);
    const double force = p.chi[z] * Ac(0, i);
    const double s = std::sin(th), c = std::cos(th);
    const double xdd = (-2.0 * mpl * thd * thd * s + 3.0 * p.pole_mass * p.gravity * s * c +
                        4.0 * force - 4.0 * p.friction * xd) /
                       (4.0 * M - 3.0 * p.pole_mass * c * c);
    const double thdd = (-3.0 * mpl * thd * thd * s * c + 6.0 * M * p.gravity * s +
                         6.0 * (force - p.friction * xd) * c) /
                        (4.0 * p.pole_length * M - 3.0 * mpl * c * c);
    // Semi-implicit Euler: velocities first, positions with the new velocities.
    const double xd1 = xd + p.dt * xdd;
    const double thd1 = thd + p.dt * thdd;
    out(0, i) = S(0, i) + p.dt * xd1;
    out(1, i) = xd1;
    out(2, i) = th + p.dt * thd1;
    out(3, i) = thd1;
  }
  return out;
}

Vec env_noise_std(const Env& env) {
  return env.kind == EnvKind::switching_linear ? Vec::Constant(2, env.linear.noise_std)
                                               : Vec::Constant(4, env.cartpole.noise_std);
}

Vec env_reward(const Env& env, const Mat& S, const Mat& A, const Mat& S1) {
  (void)S;
  if (env.kind == EnvKind::cartpole_swingup) return S1.row(2).array().cos().transpose();
  const auto& p = env.linear;
  const Mat Ac = clip_cols(A, env.action_low(), env.action_high());
  const Vec dist = (S1.colwise() - p.goal).colwise().squaredNorm().transpose();
  return (1.0 - dist.array() - p.action_cost * Ac.colwise().squaredNorm().transpose().array()).matrix();
}

double cartpole_energy(const CartPoleParams& p, const Vec& s) {
  const double M = p.cart_mass + p.pole_mass;
  const double lh = 0.5 * p.pole_length;
  const double c = std::cos(s[2]);
  const double kinetic = 0.5 * M * s[1] * s[1] - p.pole_mass * lh * c * s[1] * s[3] +
                         0.5 * (4.0 / 3.0) * p.pole_mass * lh * lh * s[3] * s[3];
  return kinetic + p.pole_mass * p.gravity * lh * c;
}

EnvState env_reset(const Env& env, Rng& ctx_rng, Rng& noise_rng) {
  EnvState st;
  if (env.kind == EnvKind::switching_linear) {
    st.s = Vec(2);
    for (int i = 0; i < 2; ++i) st.s[i] = noise_rng.uniform(-env.linear.init_range, env.linear.init_range);
  } else {
    st.s = Vec::Zero(4);
    st.s[2] = M_PI;
    for (int i = 0; i < 4; ++i) st.s[i] += env.cartpole.init_std * noise_rng.normal();
  }
  st.z = ctx_rng.categorical(env.process.chain.rho0);
  st.prev_z = st.z;
  st.steps_since_switch = 0;
  st.t = 0;
  return st;
}

StepResult env_step(const Env& env, const EnvState& state, const Vec& a, Rng& ctx_rng, Rng& noise_rng) {
  if (a.size() != env.action_dim()) throw DomainError("env_step: action dimension mismatch");
  StepResult res;
  Vec s_next = env_mean_step(env, state.z, state.s, a);
  const Vec noise = env_noise_std(env);
  for (Eigen::Index i = 0; i < s_next.size(); ++i) s_next[i] += noise[i] * noise_rng.normal();
  res.reward = env_reward(env, state.s, a, s_next)[0];
  res.next = state;
  res.next.s = s_next;
  res.next.t = state.t + 1;
  if (!s_next.allFinite() || !std::isfinite(res.reward)) {
    res.failed = true;
    return res;
  }
  const int z_next = context_step(env.process, res.next, ctx_rng);
  res.next.prev_z = state.z;
  if (z_next != state.z) {
    res.next.z = z_next;
    res.next.steps_since_switch = 0;
  } else {
    res.next.steps_since_switch = state.steps_since_switch + 1;
  }
  return res;
}

Vec RandomAgent::act(const Vec& s, int true_z, Rng& rng) {
  (void)s;
  (void)true_z;
  Vec a(low_.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = rng.uniform(low_[i], high_[i]);
  return a;
}

Episode rollout(const Env& env, Agent& agent, int horizon, std::uint64_t seed) {
  if (horizon < 1) throw DomainError("rollout: horizon must be at least 1");
  const Rng root(seed);
  Rng ctx_rng = root.split(11);
  Rng noise_rng = root.split(12);
  Rng agent_rng = root.split(13);

  EnvState st = env_reset(env, ctx_rng, noise_rng);
  agent.begin_episode();
  Episode ep;
  std::vector<Vec> states{st.s};
  std::vector<Vec> actions;
  std::vector<Vec> beliefs;
  for (int t = 0; t < horizon; ++t) {
    const Vec a = agent.act(st.s, st.z, agent_rng).cwiseMax(env.action_low()).cwiseMin(env.action_high());
    const StepResult r = env_step(env, st, a, ctx_rng, noise_rng);
    if (r.failed) {
      ep.failed = true;
      break;
    }
    actions.push_back(a);
    ep.traj.true_z.push_back(st.z);
    states.push_back(r.next.s);
    ep.rewards.push_back(r.reward);
    ep.total_return += r.reward;
    agent.observe(st.s, a, r.next.s);
    if (auto b = agent.belief()) beliefs.push_back(*b);
    st = r.next;
  }
  const auto T = static_cast<Eigen::Index>(actions.size());
  ep.traj.states.resize(env.state_dim(), T + 1);
  ep.traj.actions.resize(env.action_dim(), T);
  for (Eigen::Index t = 0; t <= T; ++t) ep.traj.states.col(t) = states[t];
  for (Eigen::Index t = 0; t < T; ++t) ep.traj.actions.col(t) = actions[t];
  if (!beliefs.empty()) {
    ep.beliefs.resize(T, beliefs.front().size());
    for (Eigen::Index t = 0; t < T; ++t) ep.beliefs.row(t) = beliefs[t].transpose();
  }
  return ep;
}

}  // namespace hdpcmdp
