#include "hdpcmdp/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>

#include <json.hpp>

#include "hdpcmdp/belief.hpp"
#include "hdpcmdp/io.hpp"

namespace hdpcmdp {

using nlohmann::json;

std::uint64_t rollout_seed(std::uint64_t run_seed, std::uint64_t stream, std::uint64_t n) {
  return Rng(run_seed).split(stream).split(n).next_u64();
}

std::vector<bool> settled_steps(const std::vector<int>& true_z, int cooloff) {
  std::vector<bool> out(true_z.size(), false);
  std::size_t last_change = 0;
  for (std::size_t t = 0; t < true_z.size(); ++t) {
    if (t > 0 && true_z[t] != true_z[t - 1]) last_change = t;
    out[t] = static_cast<int>(t - last_change) >= cooloff;
  }
  return out;
}

void write_error_manifest(const std::string& out_dir, const std::string& stage, const std::exception& e) {
  json j;
  j["error"] = e.what();
  j["stage"] = stage;
  if (const auto* ne = dynamic_cast<const NumericalError*>(&e)) {
    j["type"] = "numerical";
    j["step"] = ne->step();
  } else if (const auto* ce = dynamic_cast<const ConvergenceError*>(&e)) {
    j["type"] = "convergence";
    j["residual"] = ce->residual();
  } else if (dynamic_cast<const DomainError*>(&e)) {
    j["type"] = "domain";
  } else {
    j["type"] = "error";
  }
  try {
    std::filesystem::create_directories(out_dir);
    write_text((std::filesystem::path(out_dir) / "error.json").string(), j.dump(1) + "\n");
  } catch (const std::exception&) {
    // Nothing more can be reported if the directory itself is unusable.
  }
}

namespace {

std::ofstream open_log(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  return os;
}

double third_largest(const Vec& p) {
  if (p.size() < 3) return 0.0;
  std::vector<double> v(p.data(), p.data() + p.size());
  std::sort(v.begin(), v.end(), std::greater<>());
  return v[2];
}

}  // namespace

RunArtifacts run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, const std::string& config_text) {
  namespace fs = std::filesystem;
  const fs::path dir(out_dir);
  RunArtifacts art;
  art.out_dir = out_dir;
  art.chain_csv = (dir / "chain.csv").string();
  art.beliefs_csv = (dir / "beliefs.csv").string();
  art.zseq_csv = (dir / "zseq.csv").string();
  art.metrics_jsonl = (dir / "metrics.jsonl").string();
  art.returns_jsonl = (dir / "returns.jsonl").string();
  art.train_log_jsonl = (dir / "train_log.jsonl").string();
  art.dataset_jsonl = (dir / "dataset.jsonl").string();
  art.checkpoint = (dir / "checkpoint.json").string();

  std::string stage = "setup";
  try {
    fs::create_directories(dir);
    fs::remove(dir / "error.json");
    write_text((dir / "config.txt").string(), config_text.empty() ? to_text(cfg) : config_text);
    write_text((dir / "config.resolved.txt").string(), to_text(cfg));
    cfg.validate();

    const Env env = make_env(cfg);
    const std::string env_name = to_string(cfg.env);
    const NetworkSpec spec = make_network_spec(env.state_dim(), env.action_dim(), cfg.hidden);
    HdpHyper hyper = cfg.hyper;
    Rng init_rng = Rng(cfg.seed).split(3);
    VariationalParams vp = init_variational(hyper, spec, init_rng);

    auto metrics = open_log(art.metrics_jsonl);
    auto returns = open_log(art.returns_jsonl);
    auto train_log = open_log(art.train_log_jsonl);

    std::vector<DatasetEntry> data;
    auto collect = [&](Agent& agent, int count, std::uint64_t stream) {
      for (int i = 0; i < count; ++i) {
        const std::uint64_t seed = rollout_seed(cfg.seed, stream, static_cast<std::uint64_t>(i));
        Episode ep = rollout(env, agent, cfg.episode_length, seed);
        if (ep.traj.T() >= 1) data.push_back({std::move(ep.traj), env_name, seed});
      }
      save_dataset(art.dataset_jsonl, data);
    };

    double last_elbo = std::numeric_limits<double>::quiet_NaN();
    auto refit = [&](int iterations, int outer_epoch) {
      TrainConfig tc = cfg.train;
      tc.epochs = iterations;
      tc.seed = rollout_seed(cfg.seed, 2, static_cast<std::uint64_t>(outer_epoch));
      const FitResult fr = fit(trajectories_of(data), hyper, tc, vp);
      for (const auto& r : fr.log) {
        json j{{"outer_epoch", outer_epoch},          {"epoch", r.epoch},
               {"elbo", r.elbo},                      {"active_contexts", r.active_contexts},
               {"grad_norm_theta", r.grad_norm_theta}, {"grad_norm_mu", r.grad_norm_mu},
               {"grad_norm_nu", r.grad_norm_nu},      {"wall_ms", r.wall_ms}};
        train_log << j.dump() << '\n';
      }
      train_log.flush();
      vp = fr.vp;
      if (!fr.log.empty()) last_elbo = fr.log.back().elbo;
      if (fr.aborted) {
        save_checkpoint(art.checkpoint, {hyper, cfg.train.kind, vp});
        throw NumericalError("training aborted: " + fr.message);
      }
    };

    auto belief_agent = [&](const DistilledModel& dm) {
      return MpcAgent(learned_model(dm.chain, dm.thetas, env), cfg.cem, MpcAgent::Mode::belief, cfg.replan_every);
    };

    auto report = [&](int outer_epoch) {
      const DistilledModel dm = distilled_model(vp, cfg.epsilon_test);
      const std::string chain_path = (dir / ("chain_epoch_" + std::to_string(outer_epoch) + ".csv")).string();
      save_chain(chain_path, dm.chain);
      art.epoch_chains.push_back(chain_path);

      double acc_sum = 0.0;
      int acc_n = 0;
      for (const auto& e : data) {
        if (e.traj.true_z.empty()) continue;
        const auto decoded = decode_contexts(dm.chain, dm.thetas, e.traj);
        acc_sum += best_permutation_accuracy(decoded, e.traj.true_z, settled_steps(e.traj.true_z, cfg.cooloff));
        ++acc_n;
      }

      json m;
      m["epoch"] = outer_epoch;
      m["dataset_size"] = data.size();
      m["elbo"] = last_elbo;
      m["active_contexts"] = vp.K() - static_cast<int>(vp.removed.size());
      m["distilled_contexts"] = dm.kept.size();
      m["kept"] = dm.kept;
      m["stationary"] = std::vector<double>(dm.stationary.data(), dm.stationary.data() + dm.stationary.size());
      m["third_largest_mass"] = third_largest(dm.stationary);
      m["decode_accuracy"] = acc_n ? acc_sum / acc_n : std::numeric_limits<double>::quiet_NaN();

      if (cfg.eval_episodes > 0) {
        stage = "evaluate";
        MpcAgent agent = belief_agent(dm);
        const std::uint64_t eval_seed = rollout_seed(cfg.seed, 4, static_cast<std::uint64_t>(outer_epoch));
        const EvalStats st = evaluate(env, agent, cfg.eval_episodes, cfg.episode_length, eval_seed);
        for (int i = 0; i < cfg.eval_episodes; ++i) {
          json r{{"agent", agent.name()}, {"env", env_name}, {"epoch", outer_epoch}, {"episode", i},
                 {"return", st.returns[i]}, {"seed", episode_seed(eval_seed, i)}};
          if (st.misidentified_switches[i] >= 0) r["misidentified_switches"] = st.misidentified_switches[i];
          returns << r.dump() << '\n';
        }
        returns.flush();
        m["mean_return"] = st.mean;
        m["std_return"] = st.std;
        m["failures"] = st.failures;
      }
      metrics << m.dump() << '\n';
      metrics.flush();
      return dm;
    };

    stage = "warm_start";
    RandomAgent random(env.action_low(), env.action_high());
    collect(random, cfg.n_warm, 1);
    if (data.empty()) throw NumericalError("warm start produced no usable trajectory");
    stage = "fit";
    refit(cfg.warm_iterations, 0);
    DistilledModel dm = report(0);

    for (int e = 1; e <= cfg.n_epochs; ++e) {
      stage = "collect";
      if (cfg.n_traj > 0) {
        MpcAgent agent = belief_agent(dm);
        collect(agent, cfg.n_traj, 100 + static_cast<std::uint64_t>(e));
      }
      stage = "fit";
      refit(cfg.epoch_iterations, e);
      dm = report(e);
    }

    stage = "artifacts";
    save_chain(art.chain_csv, dm.chain);
    save_checkpoint(art.checkpoint, {hyper, cfg.train.kind, vp});
    const Trajectory& last = data.back().traj;
    save_beliefs_csv(art.beliefs_csv, filter_trajectory(dm.chain, dm.thetas, last), last.true_z);
    save_zseq_csv(art.zseq_csv, decode_contexts(dm.chain, dm.thetas, last), last.true_z);
    return art;
  } catch (const std::exception& e) {
    write_error_manifest(out_dir, stage, e);
    throw;
  }
}

}  // namespace hdpcmdp
