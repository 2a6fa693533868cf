// Command-line front end: data generation, model fitting, distillation,
// model evaluation, control and the full outer loop.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hdpcmdp/belief.hpp"
#include "hdpcmdp/config.hpp"
#include "hdpcmdp/control.hpp"
#include "hdpcmdp/experiment.hpp"
#include "hdpcmdp/io.hpp"
#include "hdpcmdp/message_passing.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hdpcmdp;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string prior;
  std::optional<double> epsilon;
  std::string data;
  std::string checkpoint;
  std::string agent = "belief";
  int episodes = -1;
  int epochs = -1;
  int index = -1;
};

struct Loaded {
  ExperimentConfig cfg;
  std::string text;  // verbatim config file, empty when none was given
};

Loaded load(const Options& o) {
  Loaded l;
  if (!o.config.empty()) {
    l.text = read_text(o.config);
    l.cfg = parse_config(l.text);
  } else {
    l.cfg = default_config(EnvKind::cartpole_swingup);
  }
  if (o.seed) l.cfg.seed = *o.seed;
  if (!o.prior.empty()) l.cfg.train.kind = parse_prior_kind(o.prior);
  l.cfg.validate();
  return l;
}

void echo_config(const Loaded& l, const fs::path& dir) {
  write_text((dir / "config.txt").string(), l.text.empty() ? to_text(l.cfg) : l.text);
  write_text((dir / "config.resolved.txt").string(), to_text(l.cfg));
}

void write_metrics(const fs::path& dir, const std::vector<json>& lines) {
  std::string s;
  for (const auto& j : lines) s += j.dump() + "\n";
  write_text((dir / "metrics.jsonl").string(), s);
}

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

int count_switches(const std::vector<int>& z) {
  int n = 0;
  for (std::size_t t = 1; t < z.size(); ++t) n += z[t] != z[t - 1];
  return n;
}

int cmd_gen_data(const Options& o, std::string& stage) {
  const Loaded l = load(o);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  echo_config(l, dir);
  stage = "gen_data";
  const Env env = make_env(l.cfg);
  const int n = o.episodes >= 0 ? o.episodes : l.cfg.n_warm;
  RandomAgent agent(env.action_low(), env.action_high());
  std::vector<DatasetEntry> data;
  long steps = 0;
  int switches = 0;
  for (int i = 0; i < n; ++i) {
    const std::uint64_t seed = rollout_seed(l.cfg.seed, 1, static_cast<std::uint64_t>(i));
    Episode ep = rollout(env, agent, l.cfg.episode_length, seed);
    steps += ep.traj.T();
    switches += count_switches(ep.traj.true_z);
    data.push_back({std::move(ep.traj), to_string(l.cfg.env), seed});
  }
  save_dataset((dir / "dataset.jsonl").string(), data);
  write_metrics(dir, {json{{"trajectories", n}, {"steps", steps}, {"switches", switches}}});
  return 0;
}

int cmd_fit(const Options& o, std::string& stage) {
  if (o.data.empty()) throw Error("fit needs --data");
  Loaded l = load(o);
  if (o.epsilon) l.cfg.train.epsilon_train = l.cfg.epsilon_test = *o.epsilon;
  const fs::path dir(o.out);
  fs::create_directories(dir);
  echo_config(l, dir);

  stage = "load_data";
  const auto entries = load_dataset(o.data);
  if (entries.empty()) throw Error("dataset '" + o.data + "' is empty");
  const auto data = trajectories_of(entries);

  stage = "fit";
  const Env env = make_env(l.cfg);
  if (data.front().states.rows() != env.state_dim() || data.front().actions.rows() != env.action_dim())
    throw DomainError("dataset dimensions do not match the configured environment");
  const NetworkSpec spec = make_network_spec(env.state_dim(), env.action_dim(), l.cfg.hidden);
  TrainConfig tc = l.cfg.train;
  tc.epochs = o.epochs >= 0 ? o.epochs : l.cfg.warm_iterations;
  tc.seed = rollout_seed(l.cfg.seed, 2, 0);
  Rng init_rng = Rng(l.cfg.seed).split(3);
  const VariationalParams init = init_variational(l.cfg.hyper, spec, init_rng);
  const FitResult fr = fit(data, l.cfg.hyper, tc, init);

  std::ofstream log((dir / "train_log.jsonl").string(), std::ios::binary | std::ios::trunc);
  for (const auto& r : fr.log)
    log << json{{"epoch", r.epoch},
                {"elbo", r.elbo},
                {"active_contexts", r.active_contexts},
                {"grad_norm_theta", r.grad_norm_theta},
                {"grad_norm_mu", r.grad_norm_mu},
                {"grad_norm_nu", r.grad_norm_nu},
                {"wall_ms", r.wall_ms}}
               .dump()
        << '\n';
  save_checkpoint((dir / "checkpoint.json").string(), {l.cfg.hyper, tc.kind, fr.vp});
  if (fr.aborted) throw NumericalError("training aborted: " + fr.message);

  stage = "distill";
  const ContextChain expected = extract_chain(fr.vp);
  save_chain((dir / "expected_chain.csv").string(), expected);
  const DistilledModel dm = distilled_model(fr.vp, l.cfg.epsilon_test);
  save_chain((dir / "chain.csv").string(), dm.chain);

  std::vector<json> lines;
  for (const auto& r : fr.log)
    lines.push_back(json{{"epoch", r.epoch}, {"elbo", r.elbo}, {"active_contexts", r.active_contexts}});
  lines.push_back(json{{"final", true},
                       {"prior", to_string(tc.kind)},
                       {"elbo", fr.log.empty() ? 0.0 : fr.log.back().elbo},
                       {"removed_in_training", fr.vp.removed},
                       {"distilled_contexts", dm.kept.size()},
                       {"kept", dm.kept},
                       {"stationary", to_std(dm.stationary)}});
  write_metrics(dir, lines);
  return 0;
}

int cmd_distill(const Options& o, std::string& stage) {
  if (o.checkpoint.empty()) throw Error("distill needs --checkpoint");
  const double eps = o.epsilon.value_or(0.01);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  stage = "load_checkpoint";
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  stage = "distill";
  const DistilledModel dm = distilled_model(ck.vp, eps);
  save_chain((dir / "chain.csv").string(), dm.chain);
  const DistilledModel pm = distilled_model(ck.vp, eps, DistillMode::policy);
  save_chain((dir / "chain_policy.csv").string(), pm.chain);
  write_metrics(dir, {json{{"epsilon", eps},
                           {"distilled_contexts", dm.kept.size()},
                           {"kept", dm.kept},
                           {"removed", dm.removed},
                           {"stationary", to_std(dm.stationary)},
                           {"distilled_stationary", to_std(stationary_distribution(dm.chain.R))}}});
  return 0;
}

int cmd_eval_model(const Options& o, std::string& stage) {
  if (o.checkpoint.empty() || o.data.empty()) throw Error("eval-model needs --checkpoint and --data");
  const Loaded l = load(o);
  const double eps = o.epsilon.value_or(l.cfg.epsilon_test);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  stage = "load";
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const auto entries = load_dataset(o.data);
  if (entries.empty()) throw Error("dataset '" + o.data + "' is empty");
  stage = "evaluate";
  const DistilledModel dm = distilled_model(ck.vp, eps);
  std::vector<json> lines;
  double acc_sum = 0.0, ev_sum = 0.0;
  long steps = 0;
  int acc_n = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Trajectory& tr = entries[i].traj;
    const MessageTable tab = message_pass(dm.chain, dm.thetas, tr);
    json j{{"trajectory", i}, {"log_evidence", tab.log_evidence}};
    ev_sum += tab.log_evidence;
    steps += tr.T();
    if (!tr.true_z.empty()) {
      std::vector<int> decoded(tr.T());
      for (int t = 0; t < tr.T(); ++t) tab.marginals.row(t).maxCoeff(&decoded[t]);
      const double acc = best_permutation_accuracy(decoded, tr.true_z, settled_steps(tr.true_z, l.cfg.cooloff));
      j["decode_accuracy"] = acc;
      acc_sum += acc;
      ++acc_n;
    }
    lines.push_back(j);
  }
  lines.push_back(json{{"final", true},
                       {"epsilon", eps},
                       {"distilled_contexts", dm.kept.size()},
                       {"log_evidence_per_step", ev_sum / static_cast<double>(std::max(1L, steps))},
                       {"decode_accuracy", acc_n ? acc_sum / acc_n : std::numeric_limits<double>::quiet_NaN()}});
  write_metrics(dir, lines);

  const int idx = o.index >= 0 ? o.index : 0;
  if (idx >= static_cast<int>(entries.size())) throw Error("--index out of range");
  const Trajectory& tr = entries[idx].traj;
  save_chain((dir / "chain.csv").string(), dm.chain);
  save_beliefs_csv((dir / "beliefs.csv").string(), filter_trajectory(dm.chain, dm.thetas, tr), tr.true_z);
  save_zseq_csv((dir / "zseq.csv").string(), decode_contexts(dm.chain, dm.thetas, tr), tr.true_z);
  return 0;
}

int cmd_control(const Options& o, std::string& stage) {
  const Loaded l = load(o);
  const fs::path dir(o.out);
  fs::create_directories(dir);
  echo_config(l, dir);
  const Env env = make_env(l.cfg);
  const int episodes = o.episodes >= 0 ? o.episodes : l.cfg.eval_episodes;

  stage = "agent";
  std::unique_ptr<Agent> agent;
  if (o.agent == "random") {
    agent = std::make_unique<RandomAgent>(env.action_low(), env.action_high());
  } else if (o.agent == "oracle") {
    agent = std::make_unique<MpcAgent>(true_model(env), l.cfg.cem, MpcAgent::Mode::oracle, l.cfg.replan_every);
  } else if (o.agent == "belief") {
    PlanningModel model = true_model(env);
    if (!o.checkpoint.empty()) {
      const Checkpoint ck = load_checkpoint(o.checkpoint);
      const DistilledModel dm = distilled_model(ck.vp, o.epsilon.value_or(l.cfg.epsilon_test));
      model = learned_model(dm.chain, dm.thetas, env);
    }
    agent = std::make_unique<MpcAgent>(std::move(model), l.cfg.cem, MpcAgent::Mode::belief, l.cfg.replan_every);
  } else {
    throw Error("unknown agent '" + o.agent + "' (expected belief, oracle or random)");
  }

  stage = "control";
  const std::uint64_t seed = rollout_seed(l.cfg.seed, 4, 0);
  const EvalStats st = evaluate(env, *agent, episodes, l.cfg.episode_length, seed);
  std::string returns;
  for (int i = 0; i < episodes; ++i) {
    json r{{"agent", agent->name()}, {"env", to_string(l.cfg.env)}, {"episode", i},
           {"return", st.returns[i]}, {"seed", episode_seed(seed, i)}};
    if (st.misidentified_switches[i] >= 0) r["misidentified_switches"] = st.misidentified_switches[i];
    returns += r.dump() + "\n";
  }
  write_text((dir / "returns.jsonl").string(), returns);
  write_metrics(dir, {json{{"agent", agent->name()},
                           {"episodes", episodes},
                           {"mean_return", st.mean},
                           {"std_return", st.std},
                           {"failures", st.failures}}});
  return 0;
}

int cmd_experiment(const Options& o, std::string& stage) {
  Loaded l = load(o);
  if (o.epsilon) l.cfg.train.epsilon_train = l.cfg.epsilon_test = *o.epsilon;
  if (o.epochs >= 0) l.cfg.n_epochs = o.epochs;
  stage = "experiment";
  // run_experiment writes its own manifest and config echo.
  run_experiment(l.cfg, o.out, l.text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical Dirichlet process contextual MDP toolkit"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Config file (key = value)")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Run seed (overrides the config)");
    sub->add_option("--out", o.out, "Output directory");
  };
  auto prior_eps = [&](CLI::App* sub) {
    sub->add_option("--prior", o.prior, "Transition prior")->check(CLI::IsMember({"hdp", "dirichlet", "mle"}));
    sub->add_option("--epsilon", o.epsilon, "Distillation threshold")->check(CLI::Range(0.0, 1.0));
  };

  auto* gen = app.add_subcommand("gen-data", "Random-agent rollouts to dataset.jsonl");
  common(gen);
  gen->add_option("--episodes", o.episodes, "Number of trajectories (default: warm_rollouts)");

  auto* fitc = app.add_subcommand("fit", "Variational fit of a dataset");
  common(fitc);
  prior_eps(fitc);
  fitc->add_option("--data", o.data, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  fitc->add_option("--epochs", o.epochs, "Training epochs (default: warm_model_iterations)");

  auto* dist = app.add_subcommand("distill", "Distill a fitted model");
  dist->add_option("--checkpoint", o.checkpoint, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
  dist->add_option("--epsilon", o.epsilon, "Distillation threshold")->check(CLI::Range(0.0, 1.0));
  dist->add_option("--out", o.out, "Output directory");

  auto* evm = app.add_subcommand("eval-model", "Filtering and decoding of a dataset");
  common(evm);
  evm->add_option("--checkpoint", o.checkpoint, "Checkpoint JSON")->required()->check(CLI::ExistingFile);
  evm->add_option("--data", o.data, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  evm->add_option("--epsilon", o.epsilon, "Distillation threshold")->check(CLI::Range(0.0, 1.0));
  evm->add_option("--index", o.index, "Trajectory written to beliefs.csv / zseq.csv");

  auto* ctl = app.add_subcommand("control", "Closed-loop evaluation of an MPC or random agent");
  common(ctl);
  ctl->add_option("--agent", o.agent, "belief, oracle or random")->check(CLI::IsMember({"belief", "oracle", "random"}));
  ctl->add_option("--checkpoint", o.checkpoint, "Learned model for the belief agent (default: true model)")
      ->check(CLI::ExistingFile);
  ctl->add_option("--epsilon", o.epsilon, "Distillation threshold")->check(CLI::Range(0.0, 1.0));
  ctl->add_option("--episodes", o.episodes, "Episodes (default: eval_episodes)");

  auto* exp = app.add_subcommand("experiment", "Full learning loop with the MPC agent");
  common(exp);
  prior_eps(exp);
  exp->add_option("--epochs", o.epochs, "Outer epochs (overrides the config)");

  CLI11_PARSE(app, argc, argv);

  std::string stage = "setup";
  try {
    if (gen->parsed()) return cmd_gen_data(o, stage);
    if (fitc->parsed()) return cmd_fit(o, stage);
    if (dist->parsed()) return cmd_distill(o, stage);
    if (evm->parsed()) return cmd_eval_model(o, stage);
    if (ctl->parsed()) return cmd_control(o, stage);
    if (exp->parsed()) return cmd_experiment(o, stage);
  } catch (const std::exception& e) {
    if (!exp->parsed() || stage == "setup") write_error_manifest(o.out, stage, e);
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
