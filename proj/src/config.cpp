#include "hdpcmdp/config.hpp"

#include <cstdio>
#include <map>
#include <sstream>
#include <type_traits>

#include "hdpcmdp/io.hpp"

namespace hdpcmdp {

namespace {

ContextChain two_context_chain() {
  ContextChain c{Vec::Constant(2, 0.5), Mat(2, 2)};
  c.R << 0.9, 0.1, 0.1, 0.9;
  return c;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  const double x = std::stod(v, &used);
  if (used != v.size()) throw DomainError("'" + v + "' is not a number");
  return x;
}

long long to_int(const std::string& v) {
  std::size_t used = 0;
  const long long x = std::stoll(v, &used);
  if (used != v.size()) throw DomainError("'" + v + "' is not an integer");
  return x;
}

std::vector<double> to_doubles(const std::string& v) {
  std::vector<double> out;
  if (v.empty()) return out;
  for (const auto& p : split(v, ',')) out.push_back(to_double(p));
  return out;
}

std::vector<int> to_ints(const std::string& v) {
  std::vector<int> out;
  if (v.empty() || v == "none") return out;
  for (const auto& p : split(v, ',')) out.push_back(static_cast<int>(to_int(p)));
  return out;
}

Mat to_matrix(const std::string& v) {
  const auto rows = split(v, ';');
  std::vector<std::vector<double>> vals;
  for (const auto& r : rows) vals.push_back(to_doubles(r));
  if (vals.empty() || vals[0].empty()) throw DomainError("empty matrix");
  Mat m(vals.size(), vals[0].size());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (vals[i].size() != vals[0].size()) throw DomainError("ragged matrix rows");
    for (std::size_t j = 0; j < vals[i].size(); ++j) m(i, j) = vals[i][j];
  }
  return m;
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ',';
    if constexpr (std::is_floating_point_v<T>) {
      os << num(v[i]);
    } else {
      os << v[i];
    }
  }
  return os.str();
}

std::string vec_text(const Vec& v) { return join(std::vector<double>(v.data(), v.data() + v.size())); }

std::string mat_text(const Mat& m) {
  std::string out;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (i) out += ';';
    out += vec_text(m.row(i).transpose());
  }
  return out;
}

using Setter = void (*)(ExperimentConfig&, const std::string&);
using Getter = std::string (*)(const ExperimentConfig&);
struct Key {
  const char* name;
  Setter set;
  Getter get;
};

// Table of keys in canonical order. `env` is handled before the others.
const std::vector<Key>& key_table() {
  static const std::vector<Key> keys = {
      {"env", [](ExperimentConfig& c, const std::string& v) { c.env = parse_env_kind(v); },
       [](const ExperimentConfig& c) { return to_string(c.env); }},
      {"context_mode", [](ExperimentConfig& c, const std::string& v) { c.context_mode = parse_context_mode(v); },
       [](const ExperimentConfig& c) { return to_string(c.context_mode); }},
      {"cooloff", [](ExperimentConfig& c, const std::string& v) { c.cooloff = static_cast<int>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.cooloff); }},
      {"initial",
       [](ExperimentConfig& c, const std::string& v) {
         const auto x = to_doubles(v);
         c.chain.rho0 = Eigen::Map<const Vec>(x.data(), static_cast<Eigen::Index>(x.size()));
       },
       [](const ExperimentConfig& c) { return vec_text(c.chain.rho0); }},
      {"transition", [](ExperimentConfig& c, const std::string& v) { c.chain.R = to_matrix(v); },
       [](const ExperimentConfig& c) { return mat_text(c.chain.R); }},
      {"chi", [](ExperimentConfig& c, const std::string& v) { c.chi = to_doubles(v); },
       [](const ExperimentConfig& c) { return join(c.chi); }},
      {"noise_std", [](ExperimentConfig& c, const std::string& v) { c.noise_std = to_double(v); },
       [](const ExperimentConfig& c) { return num(c.noise_std); }},
      {"episode_length",
       [](ExperimentConfig& c, const std::string& v) { c.episode_length = static_cast<int>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.episode_length); }},
      {"K", [](ExperimentConfig& c, const std::string& v) { c.hyper.K = static_cast<int>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.hyper.K); }},
      {"gamma", [](ExperimentConfig& c, const std::string& v) { c.hyper.gamma = to_double(v); },
       [](const ExperimentConfig& c) { return num(c.hyper.gamma); }},
      {"alpha", [](ExperimentConfig& c, const std::string& v) { c.hyper.alpha = to_double(v); },
       [](const ExperimentConfig& c) { return num(c.hyper.alpha); }},
      {"kappa", [](ExperimentConfig& c, const std::string& v) { c.hyper.kappa = to_double(v); },
       [](const ExperimentConfig& c) { return num(c.hyper.kappa); }},
      {"theta_prior_std", [](ExperimentConfig& c, const std::string& v) { c.hyper.theta_prior_std = to_double(v); },
       [](const ExperimentConfig& c) { return num(c.hyper.theta_prior_std); }},
      {"hidden", [](ExperimentConfig& c, const std::string& v) { c.hidden = to_ints(v); },
       [](const ExperimentConfig& c) { return c.hidden.empty() ? std::string("none") : join(c.hidden); }},
      {"prior", [](ExperimentConfig& c, const std::string& v) { c.train.kind = parse_prior_kind(v); },
       [](const ExperimentConfig& c) { return to_string(c.train.kind); }},
      {"lr_theta", [](ExperimentConfig& c, const std::string& v) { c.train.lr_theta = to_double(v); },
       [](const ExperimentConfig& c) { return num(c.train.lr_theta); }},
      {"lr_mu", [](ExperimentConfig& c, const std::string& v) { c.train.lr_mu = to_double(v); },
       [](const ExperimentConfig& c) { return num(c.train.lr_mu); }},
      {"lr_nu", [](ExperimentConfig& c, const std::string& v) { c.train.lr_nu = to_double(v); },
       [](const ExperimentConfig& c) { return num(c.train.lr_nu); }},
      {"clip_norm", [](ExperimentConfig& c, const std::string& v) { c.train.clip_norm = to_double(v); },
       [](const ExperimentConfig& c) { return num(c.train.clip_norm); }},
      {"batch_size", [](ExperimentConfig& c, const std::string& v) { c.train.batch_size = static_cast<int>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.train.batch_size); }},
      {"n_mu_samples",
       [](ExperimentConfig& c, const std::string& v) { c.train.n_mu_samples = static_cast<int>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.train.n_mu_samples); }},
      {"distill_every",
       [](ExperimentConfig& c, const std::string& v) { c.train.distill_every = static_cast<int>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.train.distill_every); }},
      {"epsilon_train", [](ExperimentConfig& c, const std::string& v) { c.train.epsilon_train = to_double(v); },
       [](const ExperimentConfig& c) { return num(c.train.epsilon_train); }},
      {"epsilon_test", [](ExperimentConfig& c, const std::string& v) { c.epsilon_test = to_double(v); },
       [](const ExperimentConfig& c) { return num(c.epsilon_test); }},
      {"warm_rollouts", [](ExperimentConfig& c, const std::string& v) { c.n_warm = static_cast<int>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.n_warm); }},
      {"rollouts_per_epoch", [](ExperimentConfig& c, const std::string& v) { c.n_traj = static_cast<int>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.n_traj); }},
      {"warm_model_iterations",
       [](ExperimentConfig& c, const std::string& v) { c.warm_iterations = static_cast<int>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.warm_iterations); }},
      {"model_iterations",
       [](ExperimentConfig& c, const std::string& v) { c.epoch_iterations = static_cast<int>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.epoch_iterations); }},
      {"epochs", [](ExperimentConfig& c, const std::string& v) { c.n_epochs = static_cast<int>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.n_epochs); }},
      {"eval_episodes", [](ExperimentConfig& c, const std::string& v) { c.eval_episodes = static_cast<int>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.eval_episodes); }},
      {"cem_horizon", [](ExperimentConfig& c, const std::string& v) { c.cem.horizon = static_cast<int>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.cem.horizon); }},
      {"cem_population", [](ExperimentConfig& c, const std::string& v) { c.cem.n_pops = static_cast<int>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.cem.n_pops); }},
      {"cem_elites", [](ExperimentConfig& c, const std::string& v) { c.cem.n_elite = static_cast<int>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.cem.n_elite); }},
      {"cem_traces", [](ExperimentConfig& c, const std::string& v) { c.cem.n_traces = static_cast<int>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.cem.n_traces); }},
      {"cem_iterations", [](ExperimentConfig& c, const std::string& v) { c.cem.n_iters = static_cast<int>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.cem.n_iters); }},
      {"cem_lr", [](ExperimentConfig& c, const std::string& v) { c.cem.lr = to_double(v); },
       [](const ExperimentConfig& c) { return num(c.cem.lr); }},
      {"cem_init_std", [](ExperimentConfig& c, const std::string& v) { c.cem.init_std = to_double(v); },
       [](const ExperimentConfig& c) { return num(c.cem.init_std); }},
      {"cem_discount", [](ExperimentConfig& c, const std::string& v) { c.cem.discount = to_double(v); },
       [](const ExperimentConfig& c) { return num(c.cem.discount); }},
      {"replan_every", [](ExperimentConfig& c, const std::string& v) { c.replan_every = static_cast<int>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.replan_every); }},
      {"seed", [](ExperimentConfig& c, const std::string& v) { c.seed = static_cast<std::uint64_t>(to_int(v)); },
       [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
  };
  return keys;
}

}  // namespace

void ExperimentConfig::validate() const {
  chain.validate(1e-9);
  if (static_cast<int>(chi.size()) != chain.size())
    throw DomainError("config: chi needs one entry per true context");
  if (cooloff < 0) throw DomainError("config: cooloff must be nonnegative");
  if (episode_length < 1) throw DomainError("config: episode_length must be positive");
  hyper.validate();
  train.validate();
  cem.validate();
  for (int h : hidden)
    if (h < 1) throw DomainError("config: hidden layer sizes must be positive");
  if (n_warm < 1) throw DomainError("config: warm_rollouts must be at least 1");
  if (n_traj < 0 || n_epochs < 0 || warm_iterations < 0 || epoch_iterations < 0)
    throw DomainError("config: rollout and iteration counts must be nonnegative");
  if (!(epsilon_test >= 0.0 && epsilon_test < 1.0)) throw DomainError("config: epsilon_test must lie in [0,1)");
  if (eval_episodes < 0) throw DomainError("config: eval_episodes must be nonnegative");
  if (replan_every < 1) throw DomainError("config: replan_every must be positive");
}

ExperimentConfig default_config(EnvKind env) {
  ExperimentConfig c;
  c.env = env;
  c.chain = two_context_chain();
  if (env == EnvKind::cartpole_swingup) {
    c.chi = {1.0, -1.0};
    c.hidden = {128};
  } else {
    c.chi = make_switching_linear(c.chain).linear.chi;
    c.n_warm = 200;
  }
  return c;
}

ExperimentConfig parse_config(const std::string& text) {
  std::map<std::string, std::pair<std::string, int>> entries;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool known = false;
    for (const auto& k : key_table()) known = known || key == k.name;
    if (!known) throw Error("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (entries.count(key)) throw Error("config line " + std::to_string(lineno) + ": repeated key '" + key + "'");
    entries[key] = {value, lineno};
  }

  ExperimentConfig cfg = default_config(entries.count("env") ? parse_env_kind(entries["env"].first)
                                                               : EnvKind::cartpole_swingup);
  for (const auto& k : key_table()) {
    const auto it = entries.find(k.name);
    if (it == entries.end()) continue;
    try {
      k.set(cfg, it->second.first);
    } catch (const std::exception& ex) {
      throw Error("config line " + std::to_string(it->second.second) + " (" + k.name + "): " + ex.what());
    }
  }
  // A transition matrix given without an initial row starts uniform.
  if (entries.count("transition") && !entries.count("initial"))
    cfg.chain.rho0 = Vec::Constant(cfg.chain.R.rows(), 1.0 / static_cast<double>(cfg.chain.R.rows()));
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) { return parse_config(read_text(path)); }

std::string to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& k : key_table()) out += std::string(k.name) + " = " + k.get(cfg) + "\n";
  return out;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& k : key_table()) n.push_back(k.name);
    return n;
  }();
  return names;
}

Env make_env(const ExperimentConfig& cfg) {
  Env env = cfg.env == EnvKind::switching_linear ? make_switching_linear(cfg.chain, cfg.cooloff)
                                                 : make_cartpole(cfg.chain, cfg.chi, cfg.cooloff);
  if (cfg.env == EnvKind::switching_linear) {
    env.linear.chi = cfg.chi;
    if (cfg.noise_std >= 0.0) env.linear.noise_std = cfg.noise_std;
  } else if (cfg.noise_std >= 0.0) {
    env.cartpole.noise_std = cfg.noise_std;
  }
  env.process.mode = cfg.context_mode;
  env.validate();
  return env;
}

}  // namespace hdpcmdp
