#include "hdpcmdp/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace hdpcmdp {

using nlohmann::json;

namespace {

json rows_json(const Mat& m) {
  // m is dim x n with time along columns; emitted as n rows.
  json out = json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    json row = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

Mat rows_from_json(const json& j, const char* field) {
  if (!j.is_array() || j.empty()) throw Error(std::string("'") + field + "' must be a nonempty array of rows");
  const std::size_t dim = j[0].size();
  if (dim == 0) throw Error(std::string("'") + field + "' rows must be nonempty");
  Mat m(dim, j.size());
  for (std::size_t c = 0; c < j.size(); ++c) {
    if (!j[c].is_array() || j[c].size() != dim) throw Error(std::string("ragged rows in '") + field + "'");
    for (std::size_t r = 0; r < dim; ++r) {
      if (!j[c][r].is_number()) throw Error(std::string("non-numeric entry in '") + field + "'");
      m(r, c) = j[c][r].get<double>();
    }
  }
  return m;
}

json vec_json(const Vec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vec vec_from_json(const json& j, Eigen::Index expected, const char* field) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != expected)
    throw Error(std::string("checkpoint: '") + field + "' has the wrong length");
  Vec v(expected);
  for (Eigen::Index i = 0; i < expected; ++i) v[i] = j[i].get<double>();
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path + "' for writing");
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  return is;
}

std::string fmt17(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

void write_dataset(std::ostream& os, const std::vector<DatasetEntry>& data) {
  for (const auto& e : data) {
    e.traj.validate();
    json j;
    j["states"] = rows_json(e.traj.states);
    j["actions"] = rows_json(e.traj.actions);
    j["true_z"] = e.traj.true_z;
    j["env"] = e.env;
    j["seed"] = e.seed;
    os << j.dump() << '\n';
  }
}

void save_dataset(const std::string& path, const std::vector<DatasetEntry>& data) {
  auto os = open_out(path);
  write_dataset(os, data);
  if (!os) throw Error("write to '" + path + "' failed");
}

std::vector<DatasetEntry> read_dataset(std::istream& is) {
  std::vector<DatasetEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      if (!j.is_object()) throw Error("record is not an object");
      for (const char* key : {"states", "actions"})
        if (!j.contains(key)) throw Error(std::string("missing '") + key + "'");
      DatasetEntry e;
      e.traj.states = rows_from_json(j["states"], "states");
      e.traj.actions = rows_from_json(j["actions"], "actions");
      if (j.contains("true_z") && !j["true_z"].is_null()) e.traj.true_z = j["true_z"].get<std::vector<int>>();
      if (j.contains("env")) e.env = j["env"].get<std::string>();
      if (j.contains("seed")) e.seed = j["seed"].get<std::uint64_t>();
      e.traj.validate();
      out.push_back(std::move(e));
    } catch (const std::exception& ex) {
      throw Error("dataset line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

std::vector<DatasetEntry> load_dataset(const std::string& path) {
  auto is = open_in(path);
  return read_dataset(is);
}

std::vector<Trajectory> trajectories_of(const std::vector<DatasetEntry>& data) {
  std::vector<Trajectory> out;
  out.reserve(data.size());
  for (const auto& e : data) out.push_back(e.traj);
  return out;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  const auto& vp = ck.vp;
  vp.validate();
  json j;
  j["format"] = "hdpcmdp-checkpoint-1";
  j["K"] = vp.K();
  j["network"] = {{"layer_sizes", vp.thetas[0].spec.layer_sizes}, {"action_dim", vp.thetas[0].spec.action_dim}};
  j["hyper"] = {{"gamma", ck.hyper.gamma},
                {"alpha", ck.hyper.alpha},
                {"kappa", ck.hyper.kappa},
                {"K", ck.hyper.K},
                {"theta_prior_std", ck.hyper.theta_prior_std}};
  j["prior"] = to_string(ck.kind);
  j["removed"] = vp.removed;
  j["nu_hat"] = vec_json(vp.nu_hat);
  std::vector<double> mu;
  for (Eigen::Index r = 0; r < vp.mu_hat.rows(); ++r)
    for (Eigen::Index c = 0; c < vp.mu_hat.cols(); ++c) mu.push_back(vp.mu_hat(r, c));
  j["mu_hat"] = mu;
  j["mu_hat_row"] = vec_json(vp.mu_hat_row);
  json thetas = json::array();
  for (const auto& th : vp.thetas) thetas.push_back(vec_json(th.flatten()));
  j["thetas"] = thetas;
  auto os = open_out(path);
  os << j.dump(1) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  auto is = open_in(path);
  json j;
  try {
    j = json::parse(is);
  } catch (const std::exception& ex) {
    throw Error("checkpoint '" + path + "': " + ex.what());
  }
  try {
    if (j.value("format", "") != "hdpcmdp-checkpoint-1") throw Error("unknown format");
    Checkpoint ck;
    const int K = j.at("K").get<int>();
    NetworkSpec spec{j.at("network").at("layer_sizes").get<std::vector<int>>(),
                     j.at("network").at("action_dim").get<int>()};
    spec.validate();
    const json& h = j.at("hyper");
    ck.hyper = {h.at("gamma").get<double>(), h.at("alpha").get<double>(), h.at("kappa").get<double>(),
                h.at("K").get<int>(), h.at("theta_prior_std").get<double>()};
    ck.hyper.validate();
    ck.kind = parse_prior_kind(j.at("prior").get<std::string>());
    auto& vp = ck.vp;
    vp.removed = j.at("removed").get<std::vector<int>>();
    vp.nu_hat = vec_from_json(j.at("nu_hat"), K - 1, "nu_hat");
    const Vec mu = vec_from_json(j.at("mu_hat"), static_cast<Eigen::Index>(K + 1) * (K - 1), "mu_hat");
    vp.mu_hat.resize(K + 1, K - 1);
    for (int r = 0; r <= K; ++r)
      for (int c = 0; c < K - 1; ++c) vp.mu_hat(r, c) = mu[r * (K - 1) + c];
    vp.mu_hat_row = vec_from_json(j.at("mu_hat_row"), K + 1, "mu_hat_row");
    const json& th = j.at("thetas");
    if (!th.is_array() || static_cast<int>(th.size()) != K) throw Error("'thetas' must hold K entries");
    for (int k = 0; k < K; ++k)
      vp.thetas.push_back(ContextParams::unflatten(spec, vec_from_json(th[k], spec.num_params(), "thetas")));
    vp.validate();
    return ck;
  } catch (const json::exception& ex) {
    throw Error("checkpoint '" + path + "': " + ex.what());
  } catch (const Error& ex) {
    throw Error("checkpoint '" + path + "': " + ex.what());
  }
}

void save_chain(const std::string& path, const ContextChain& chain) { write_text(path, chain_to_csv(chain)); }

ContextChain load_chain(const std::string& path) { return chain_from_csv(read_text(path)); }

void save_beliefs_csv(const std::string& path, const Mat& beliefs, const std::vector<int>& true_z) {
  if (!true_z.empty() && static_cast<Eigen::Index>(true_z.size()) != beliefs.rows())
    throw DomainError("save_beliefs_csv: true_z length mismatch");
  std::ostringstream os;
  os << 't';
  for (Eigen::Index k = 0; k < beliefs.cols(); ++k) os << ",b_" << k;
  os << ",decoded_z";
  if (!true_z.empty()) os << ",true_z";
  os << '\n';
  for (Eigen::Index t = 0; t < beliefs.rows(); ++t) {
    os << t;
    for (Eigen::Index k = 0; k < beliefs.cols(); ++k) os << ',' << fmt17(beliefs(t, k));
    Eigen::Index best = 0;
    beliefs.row(t).maxCoeff(&best);
    os << ',' << best;
    if (!true_z.empty()) os << ',' << true_z[t];
    os << '\n';
  }
  write_text(path, os.str());
}

void save_zseq_csv(const std::string& path, const std::vector<int>& decoded, const std::vector<int>& true_z) {
  if (!true_z.empty() && true_z.size() != decoded.size())
    throw DomainError("save_zseq_csv: true_z length mismatch");
  std::ostringstream os;
  os << "t,decoded_z" << (true_z.empty() ? "" : ",true_z") << '\n';
  for (std::size_t t = 0; t < decoded.size(); ++t) {
    os << t << ',' << decoded[t];
    if (!true_z.empty()) os << ',' << true_z[t];
    os << '\n';
  }
  write_text(path, os.str());
}

void write_text(const std::string& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
  if (!os) throw Error("write to '" + path + "' failed");
}

std::string read_text(const std::string& path) {
  auto is = open_in(path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace hdpcmdp
