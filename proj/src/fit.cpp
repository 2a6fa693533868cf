#include "hdpcmdp/fit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace hdpcmdp {

void TrainConfig::validate() const {
  if (!(lr_theta > 0.0 && lr_mu > 0.0 && lr_nu > 0.0))
    throw DomainError("TrainConfig: learning rates must be positive");
  if (!(clip_norm > 0.0)) throw DomainError("TrainConfig: clip_norm must be positive");
  if (epochs < 0) throw DomainError("TrainConfig: epochs must be nonnegative");
  if (batch_size < 1) throw DomainError("TrainConfig: batch_size must be positive");
  if (n_mu_samples < 1) throw DomainError("TrainConfig: n_mu_samples must be positive");
  if (distill_every < 0) throw DomainError("TrainConfig: distill_every must be nonnegative");
  if (!(epsilon_train >= 0.0 && epsilon_train < 1.0))
    throw DomainError("TrainConfig: epsilon_train must lie in [0,1)");
}

namespace {

// Unconstrained coordinates: [logit nu | log mu_hat (row-major) | log slack | thetas].
struct Layout {
  int K;
  int n_nu, n_mu, n_slack;
  std::vector<int> theta_offset;
  int total;

  explicit Layout(const VariationalParams& vp) : K(vp.K()) {
    n_nu = K - 1;
    n_mu = (K + 1) * (K - 1);
    n_slack = K + 1;
    int pos = n_nu + n_mu + n_slack;
    for (const auto& th : vp.thetas) {
      theta_offset.push_back(pos);
      pos += th.spec.num_params();
    }
    total = pos;
  }
  int mu_index(int j, int k) const { return n_nu + j * (K - 1) + k; }
  int slack_index(int j) const { return n_nu + n_mu + j; }
};

Vec to_raw(const VariationalParams& vp, const Layout& lay) {
  Vec x(lay.total);
  for (int k = 0; k < lay.n_nu; ++k) x[k] = std::log(vp.nu_hat[k] / (1.0 - vp.nu_hat[k]));
  for (int j = 0; j <= lay.K; ++j) {
    for (int k = 0; k < lay.K - 1; ++k) x[lay.mu_index(j, k)] = std::log(vp.mu_hat(j, k));
    x[lay.slack_index(j)] = std::log(vp.slack(j));
  }
  for (int c = 0; c < lay.K; ++c) {
    const Vec flat = vp.thetas[c].flatten();
    x.segment(lay.theta_offset[c], flat.size()) = flat;
  }
  return x;
}

void from_raw(const Vec& x, const Layout& lay, VariationalParams& vp) {
  for (int k = 0; k < lay.n_nu; ++k) vp.nu_hat[k] = 1.0 / (1.0 + std::exp(-x[k]));
  for (int j = 0; j <= lay.K; ++j) {
    double row = std::exp(x[lay.slack_index(j)]);
    for (int k = 0; k < lay.K - 1; ++k) {
      vp.mu_hat(j, k) = std::exp(x[lay.mu_index(j, k)]);
      row += vp.mu_hat(j, k);
    }
    vp.mu_hat_row[j] = row;
  }
  for (int c = 0; c < lay.K; ++c) {
    const int n = vp.thetas[c].spec.num_params();
    vp.thetas[c] = ContextParams::unflatten(vp.thetas[c].spec, x.segment(lay.theta_offset[c], n));
  }
}

Vec raw_gradient(const VariationalParams& vp, const ElboGradient& g, const Layout& lay) {
  Vec out(lay.total);
  for (int k = 0; k < lay.n_nu; ++k) {
    const double v = vp.nu_hat[k];
    out[k] = g.nu[k] * v * (1.0 - v);
  }
  for (int j = 0; j <= lay.K; ++j) {
    for (int k = 0; k < lay.K - 1; ++k)
      out[lay.mu_index(j, k)] = (g.mu_hat(j, k) + g.mu_hat_row[j]) * vp.mu_hat(j, k);
    out[lay.slack_index(j)] = g.mu_hat_row[j] * vp.slack(j);
  }
  for (int c = 0; c < lay.K; ++c) out.segment(lay.theta_offset[c], g.thetas[c].size()) = g.thetas[c];
  return out;
}

void freeze_removed(const VariationalParams& vp, const Layout& lay, Vec& g) {
  for (int c : vp.removed) {
    g.segment(lay.theta_offset[c], vp.thetas[c].spec.num_params()).setZero();
    for (int k = 0; k < lay.K - 1; ++k) g[lay.mu_index(c + 1, k)] = 0.0;
    g[lay.slack_index(c + 1)] = 0.0;
  }
}

struct Adam {
  Vec m, v;
  int t = 0;
  explicit Adam(int n) : m(Vec::Zero(n)), v(Vec::Zero(n)) {}

  void ascend(Vec& x, const Vec& g, const Vec& lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    x.array() += lr.array() * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

void update_removed(VariationalParams& vp, double epsilon) {
  const ContextChain chain = extract_chain(vp);
  const Vec p = stationary_distribution(chain.R);
  std::vector<int> removed = vp.removed;
  for (int k = 0; k < vp.K(); ++k)
    if (p[k] < epsilon && !std::binary_search(vp.removed.begin(), vp.removed.end(), k)) removed.push_back(k);
  std::sort(removed.begin(), removed.end());
  if (static_cast<int>(removed.size()) >= vp.K()) {
    // Never prune everything: keep the context with the largest mass.
    Eigen::Index best = 0;
    p.maxCoeff(&best);
    removed.erase(std::find(removed.begin(), removed.end(), static_cast<int>(best)));
    warn("fit: distillation would remove every context; keeping context " + std::to_string(best));
  }
  vp.removed = std::move(removed);
}

}  // namespace

FitResult fit(const std::vector<Trajectory>& dataset, const HdpHyper& hyper,
              const TrainConfig& cfg, const VariationalParams& init) {
  if (dataset.empty()) throw DomainError("fit: empty dataset");
  cfg.validate();
  hyper.validate();
  init.validate();
  for (const auto& tr : dataset) tr.validate();

  FitResult res;
  res.vp = init;
  const Layout lay(init);
  Vec x = to_raw(init, lay);
  Vec lr(lay.total);
  lr.head(lay.n_nu).setConstant(cfg.lr_nu);
  lr.segment(lay.n_nu, lay.n_mu + lay.n_slack).setConstant(cfg.lr_mu);
  lr.tail(lay.total - lay.theta_offset.front()).setConstant(cfg.lr_theta);
  Adam adam(lay.total);

  Rng rng(cfg.seed);
  Rng shuffle_rng = rng.split(1);
  Rng sample_rng = rng.split(2);
  const double N = static_cast<double>(dataset.size());
  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(shuffle_rng.uniform() * static_cast<double>(i));
      std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    EpochLog rec;
    rec.epoch = epoch;
    int n_batches = 0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      Batch batch;
      for (std::size_t i = lo; i < hi; ++i) batch.push_back(&dataset[order[i]]);

      const VariationalParams last_good = res.vp;
      try {
        ElboValue value;
        const ElboGradient g =
            elbo_gradients(res.vp, batch, hyper, cfg.kind, cfg.n_mu_samples, N, sample_rng, &value);
        Vec graw = raw_gradient(res.vp, g, lay);
        freeze_removed(res.vp, lay, graw);
        if (!graw.allFinite()) throw NumericalError("fit: non-finite gradient");
        rec.grad_norm_nu += graw.head(lay.n_nu).norm();
        rec.grad_norm_mu += graw.segment(lay.n_nu, lay.n_mu + lay.n_slack).norm();
        rec.grad_norm_theta += graw.tail(lay.total - lay.theta_offset.front()).norm();
        rec.elbo += value.total;
        const double norm = graw.norm();
        if (norm > cfg.clip_norm) graw *= cfg.clip_norm / norm;
        adam.ascend(x, graw, lr);
        if (!x.allFinite()) throw NumericalError("fit: non-finite parameters");
        from_raw(x, lay, res.vp);
        res.vp.validate();
      } catch (const Error& e) {
        res.vp = last_good;
        res.aborted = true;
        res.message = std::string("epoch ") + std::to_string(epoch) + ": " + e.what();
        return res;
      }
      ++n_batches;
    }
    rec.elbo /= n_batches;
    rec.grad_norm_nu /= n_batches;
    rec.grad_norm_mu /= n_batches;
    rec.grad_norm_theta /= n_batches;
    if (cfg.distill_every > 0 && (epoch + 1) % cfg.distill_every == 0)
      update_removed(res.vp, cfg.epsilon_train);
    rec.active_contexts = res.vp.K() - static_cast<int>(res.vp.removed.size());
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    res.log.push_back(rec);
  }
  return res;
}

FitResult fit(const std::vector<Trajectory>& dataset, const HdpHyper& hyper,
              const TrainConfig& cfg, const NetworkSpec& spec) {
  Rng rng = Rng(cfg.seed).split(3);
  return fit(dataset, hyper, cfg, init_variational(hyper, spec, rng));
}

}  // namespace hdpcmdp
