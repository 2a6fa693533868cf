#include "hdpcmdp/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hdpcmdp/belief.hpp"

namespace hdpcmdp {

void CemConfig::validate() const {
  if (horizon < 1) throw DomainError("CemConfig: horizon must be at least 1");
  if (n_pops < 1 || n_elite < 1 || n_elite > n_pops)
    throw DomainError("CemConfig: need 1 <= n_elite <= n_pops");
  if (n_traces < 1 || n_iters < 1) throw DomainError("CemConfig: n_traces and n_iters must be positive");
  if (!(lr > 0.0 && lr <= 1.0)) throw DomainError("CemConfig: lr must lie in (0,1]");
  if (!(init_std > 0.0)) throw DomainError("CemConfig: init_std must be positive");
  if (!(discount >= 0.0 && discount <= 1.0)) throw DomainError("CemConfig: discount must lie in [0,1]");
}

Plan initial_plan(const CemConfig& cfg, int action_dim) {
  return {Mat::Zero(cfg.horizon, action_dim), Mat::Zero(cfg.horizon, action_dim),
          Mat::Constant(cfg.horizon, action_dim, cfg.init_std)};
}

PlanningModel learned_model(const ContextChain& chain, const std::vector<ContextParams>& thetas,
                            const Env& env) {
  if (static_cast<int>(thetas.size()) != chain.size())
    throw DomainError("learned_model: number of thetas does not match the chain");
  PlanningModel m;
  m.chain = chain;
  m.mean = [thetas](int z, const Mat& S, const Mat& A) { return predict_mean_batch(thetas[z], S, A); };
  for (const auto& th : thetas) m.noise_std.push_back(th.log_std.array().exp().matrix());
  m.reward = [env](const Mat& S, const Mat& A, const Mat& S1) { return env_reward(env, S, A, S1); };
  m.action_low = env.action_low();
  m.action_high = env.action_high();
  return m;
}

PlanningModel true_model(const Env& env) {
  PlanningModel m;
  m.chain = env.process.chain;
  m.mean = [env](int z, const Mat& S, const Mat& A) { return env_mean_step(env, z, S, A); };
  const Vec noise = env_noise_std(env).cwiseMax(1e-3);
  m.noise_std.assign(env.num_contexts(), noise);
  m.reward = [env](const Mat& S, const Mat& A, const Mat& S1) { return env_reward(env, S, A, S1); };
  m.action_low = env.action_low();
  m.action_high = env.action_high();
  return m;
}

Plan cem_plan(const PlanningModel& model, const Vec& s, const Vec& b, const Plan& plan,
              const CemConfig& cfg, Rng& rng, CemTrace* trace) {
  cfg.validate();
  const int H = cfg.horizon;
  const auto A_dim = model.action_low.size();
  const int K = model.num_contexts();
  if (plan.actions.rows() != H || plan.actions.cols() != A_dim || plan.mu.rows() != H ||
      plan.mu.cols() != A_dim || plan.sigma.rows() != H || plan.sigma.cols() != A_dim)
    throw DomainError("cem_plan: plan does not match horizon and action dimension");
  if (b.size() != K || (b.array() < 0.0).any() || std::fabs(b.sum() - 1.0) > 1e-8)
    throw DomainError("cem_plan: belief must be a probability vector over the model contexts");

  const int n_pops = cfg.n_pops;
  const int n_traces = cfg.n_traces;
  const int n = n_pops * n_traces;
  const auto D = s.size();
  Plan out = plan;

  std::vector<Mat> delta(n_pops, Mat(H, A_dim));
  std::vector<int> z(n);
  Vec returns(n);
  Vec scores(n_pops);
  std::vector<int> order(n_pops);
  std::vector<std::vector<Eigen::Index>> members(K);

  for (int iter = 0; iter < cfg.n_iters; ++iter) {
    for (int i = 0; i < n_pops; ++i)
      for (int h = 0; h < H; ++h)
        for (Eigen::Index d = 0; d < A_dim; ++d)
          delta[i](h, d) = out.mu(h, d) + out.sigma(h, d) * rng.normal();
    for (int c = 0; c < n; ++c) z[c] = rng.categorical(b);

    Mat S = s.replicate(1, n);
    Mat Act(A_dim, n);
    Mat S1(D, n);
    returns.setZero();
    double weight = 1.0;
    for (int h = 0; h < H; ++h) {
      for (int c = 0; c < n; ++c) {
        const Vec a = (plan.actions.row(h) + delta[c / n_traces].row(h)).transpose();
        Act.col(c) = a.cwiseMax(model.action_low).cwiseMin(model.action_high);
      }
      for (auto& m : members) m.clear();
      for (int c = 0; c < n; ++c) members[z[c]].push_back(c);
      for (int k = 0; k < K; ++k) {
        if (members[k].empty()) continue;
        const Mat Sk = S(Eigen::all, members[k]);
        const Mat Ak = Act(Eigen::all, members[k]);
        S1(Eigen::all, members[k]) = model.mean(k, Sk, Ak);
      }
      if (model.sample_noise) {
        for (int c = 0; c < n; ++c)
          for (Eigen::Index d = 0; d < D; ++d) S1(d, c) += model.noise_std[z[c]][d] * rng.normal();
      }
      returns += weight * model.reward(S, Act, S1);
      weight *= cfg.discount;
      S.swap(S1);
      if (h + 1 < H)
        for (int c = 0; c < n; ++c) z[c] = rng.categorical(model.chain.R.row(z[c]).transpose());
    }

    bool any_finite = false;
    for (int i = 0; i < n_pops; ++i) {
      const double sc = returns.segment(i * n_traces, n_traces).mean();
      scores[i] = std::isfinite(sc) ? sc : -std::numeric_limits<double>::infinity();
      any_finite = any_finite || std::isfinite(sc);
    }
    if (!any_finite) throw NumericalError("cem_plan: every model rollout is non-finite");

    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return scores[x] > scores[y]; });

    Mat mean = Mat::Zero(H, A_dim);
    for (int e = 0; e < cfg.n_elite; ++e) mean += delta[order[e]];
    mean /= cfg.n_elite;
    Mat var = Mat::Zero(H, A_dim);
    for (int e = 0; e < cfg.n_elite; ++e) var += (delta[order[e]] - mean).cwiseAbs2();
    var /= cfg.n_elite;
    out.mu = (1.0 - cfg.lr) * out.mu + cfg.lr * mean;
    out.sigma = ((1.0 - cfg.lr) * out.sigma.cwiseAbs2() + cfg.lr * var).cwiseSqrt().cwiseMax(1e-9);

    if (trace) {
      std::vector<double> elite(cfg.n_elite);
      for (int e = 0; e < cfg.n_elite; ++e) elite[e] = scores[order[e]];
      std::sort(elite.begin(), elite.end());
      const int m = cfg.n_elite;
      trace->median_elite_score.push_back(m % 2 ? elite[m / 2] : 0.5 * (elite[m / 2 - 1] + elite[m / 2]));
      trace->best_score.push_back(scores[order[0]]);
    }
  }
  return out;
}

Vec plan_first_action(const PlanningModel& model, const Plan& plan) {
  const Vec a = (plan.actions.row(0) + plan.mu.row(0)).transpose();
  return a.cwiseMax(model.action_low).cwiseMin(model.action_high);
}

Plan shift_plan(const Plan& plan, const CemConfig& cfg) {
  const Eigen::Index H = plan.actions.rows();
  const Eigen::Index A = plan.actions.cols();
  Plan out{Mat::Zero(H, A), Mat::Zero(H, A), Mat::Constant(H, A, cfg.init_std)};
  const Mat full = plan.actions + plan.mu;
  if (H > 1) out.actions.topRows(H - 1) = full.bottomRows(H - 1);
  return out;
}

MpcAgent::MpcAgent(PlanningModel model, CemConfig cfg, Mode mode, int replan_every)
    : model_(std::move(model)), cfg_(cfg), mode_(mode), replan_every_(replan_every) {
  cfg_.validate();
  if (replan_every_ < 1) throw DomainError("MpcAgent: replan_every must be positive");
  begin_episode();
}

void MpcAgent::begin_episode() {
  plan_ = initial_plan(cfg_, static_cast<int>(model_.action_low.size()));
  has_belief_ = false;
  b_ = model_.chain.rho0;
  steps_ = 0;
}

Vec MpcAgent::planning_belief(int true_z) const {
  if (mode_ == Mode::oracle) {
    Vec one_hot = Vec::Zero(model_.num_contexts());
    one_hot[true_z] = 1.0;
    return one_hot;
  }
  return has_belief_ ? belief_predict(b_, model_.chain) : model_.chain.rho0;
}

Vec MpcAgent::act(const Vec& s, int true_z, Rng& rng) {
  if (steps_ % replan_every_ == 0) plan_ = cem_plan(model_, s, planning_belief(true_z), plan_, cfg_, rng);
  const Vec a = plan_first_action(model_, plan_);
  plan_ = shift_plan(plan_, cfg_);
  ++steps_;
  return a;
}

void MpcAgent::observe(const Vec& s, const Vec& a, const Vec& s_next) {
  if (mode_ == Mode::oracle) return;
  const int K = model_.num_contexts();
  Vec loglik(K);
  for (int k = 0; k < K; ++k) {
    const Vec mean = model_.mean(k, s, a);
    const Vec& sd = model_.noise_std[k];
    const Vec r = (s_next - mean).cwiseQuotient(sd);
    loglik[k] = -sd.array().log().sum() - 0.5 * r.squaredNorm() - 0.5 * s.size() * std::log(2.0 * M_PI);
  }
  b_ = belief_update(has_belief_ ? belief_predict(b_, model_.chain) : model_.chain.rho0, loglik, steps_);
  has_belief_ = true;
}

std::optional<Vec> MpcAgent::belief() const {
  if (mode_ == Mode::oracle || !has_belief_) return std::nullopt;
  return b_;
}

std::uint64_t episode_seed(std::uint64_t seed, int episode) {
  return Rng(seed).split(1000 + static_cast<std::uint64_t>(episode)).next_u64();
}

int misidentified_switches(const Mat& beliefs, const std::vector<int>& true_z) {
  const auto T = static_cast<Eigen::Index>(true_z.size());
  if (beliefs.rows() != T) throw DomainError("misidentified_switches: length mismatch");
  if (T == 0) return 0;
  std::vector<int> decoded(T);
  int n_true = 0;
  for (Eigen::Index t = 0; t < T; ++t) {
    Eigen::Index best = 0;
    beliefs.row(t).maxCoeff(&best);
    decoded[t] = static_cast<int>(best);
    n_true = std::max(n_true, true_z[t] + 1);
  }
  Mat votes = Mat::Zero(beliefs.cols(), n_true);
  for (Eigen::Index t = 0; t < T; ++t) votes(decoded[t], true_z[t]) += 1.0;
  std::vector<int> label(beliefs.cols());
  for (Eigen::Index k = 0; k < beliefs.cols(); ++k) {
    Eigen::Index best = 0;
    votes.row(k).maxCoeff(&best);
    label[k] = static_cast<int>(best);
  }
  int miss = 0;
  for (Eigen::Index t = 1; t < T; ++t)
    if (true_z[t] != true_z[t - 1] && label[decoded[t]] != true_z[t]) ++miss;
  return miss;
}

EvalStats evaluate(const Env& env, Agent& agent, int episodes, int horizon, std::uint64_t seed) {
  if (episodes < 1) throw DomainError("evaluate: episodes must be at least 1");
  EvalStats st;
  for (int e = 0; e < episodes; ++e) {
    const Episode ep = rollout(env, agent, horizon, episode_seed(seed, e));
    st.returns.push_back(ep.total_return);
    st.failures += ep.failed ? 1 : 0;
    st.misidentified_switches.push_back(
        ep.beliefs.rows() > 0 ? misidentified_switches(ep.beliefs, ep.traj.true_z) : -1);
  }
  const double n = static_cast<double>(episodes);
  st.mean = std::accumulate(st.returns.begin(), st.returns.end(), 0.0) / n;
  double ss = 0.0;
  for (double r : st.returns) ss += (r - st.mean) * (r - st.mean);
  st.std = episodes > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  return st;
}

double paired_bootstrap_halfwidth(const std::vector<double>& diffs, int n_boot, std::uint64_t seed) {
  if (diffs.empty() || n_boot < 2) throw DomainError("paired_bootstrap_halfwidth: need data and resamples");
  Rng rng(seed);
  const auto n = diffs.size();
  std::vector<double> means(n_boot);
  for (int bi = 0; bi < n_boot; ++bi) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = std::min(n - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(n)));
      acc += diffs[j];
    }
    means[bi] = acc / static_cast<double>(n);
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double q) {
    const double pos = q * (n_boot - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min<std::size_t>(lo + 1, n_boot - 1);
    return means[lo] + (pos - lo) * (means[hi] - means[lo]);
  };
  return 0.5 * (quantile(0.975) - quantile(0.025));
}

}  // namespace hdpcmdp
