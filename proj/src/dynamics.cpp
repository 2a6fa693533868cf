#include "hdpcmdp/dynamics.hpp"

#include <cmath>

namespace hdpcmdp {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

struct Forward {
  std::vector<Mat> pre;   // pre-activations per layer
  std::vector<Mat> post;  // post[0] = input, post[l+1] = relu(pre[l]) (last = pre)
};

Forward forward(const ContextParams& theta, const Mat& X) {
  const int L = theta.spec.num_layers();
  Forward f;
  f.post.reserve(L + 1);
  f.pre.reserve(L);
  f.post.push_back(X);
  for (int l = 0; l < L; ++l) {
    Mat z = theta.weights[l] * f.post.back();
    z.colwise() += theta.biases[l];
    f.pre.push_back(z);
    f.post.push_back(l + 1 < L ? Mat(z.cwiseMax(0.0)) : z);
  }
  return f;
}

Mat stack_inputs(const Mat& S, const Mat& A) {
  Mat X(S.rows() + A.rows(), S.cols());
  X.topRows(S.rows()) = S;
  X.bottomRows(A.rows()) = A;
  return X;
}

void check_dims(const ContextParams& theta, Eigen::Index s_dim, Eigen::Index a_dim) {
  if (s_dim != theta.spec.state_dim() || a_dim != theta.spec.action_dim)
    throw DomainError("dynamics: state/action dimension does not match the network");
}

// Backprop of sum_t w_t log N(S1_t | S_t + net(X_t), sigma) into `grad`.
// Returns the weighted log-density.
double backprop(const ContextParams& theta, const Mat& S, const Mat& A, const Mat& S1,
                const Vec& w, Vec& grad) {
  const NetworkSpec& spec = theta.spec;
  const int L = spec.num_layers();
  const Forward f = forward(theta, stack_inputs(S, A));
  const Vec inv_var = (-2.0 * theta.log_std).array().exp();
  const Mat r = S1 - S - f.post.back();
  const Mat r2 = r.array().square().colwise() * inv_var.array();

  double value = 0.0;
  const double per_step_const = -theta.log_std.sum() - spec.state_dim() * kHalfLog2Pi;
  for (Eigen::Index t = 0; t < r.cols(); ++t) value += w[t] * (per_step_const - 0.5 * r2.col(t).sum());
  if (!std::isfinite(value)) throw NumericalError("dynamics: non-finite log-likelihood");

  // Offsets of each layer's block in the flat vector.
  std::vector<int> offset(L + 1, 0);
  for (int l = 0; l < L; ++l)
    offset[l + 1] = offset[l] + spec.layer_sizes[l + 1] * (spec.layer_sizes[l] + 1);

  Mat g = (r.array().colwise() * inv_var.array()).rowwise() * w.transpose().array();
  for (int l = L - 1; l >= 0; --l) {
    const int rows = spec.layer_sizes[l + 1];
    const int cols = spec.layer_sizes[l];
    Eigen::Map<Mat>(grad.data() + offset[l], rows, cols) += g * f.post[l].transpose();
    grad.segment(offset[l] + rows * cols, rows) += g.rowwise().sum();
    if (l > 0) {
      g = (theta.weights[l].transpose() * g).cwiseProduct(
          (f.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  const int D = spec.state_dim();
  grad.segment(offset[L], D) += (r2.array().rowwise() * w.transpose().array()).rowwise().sum().matrix() -
                                Vec::Constant(D, w.sum());
  if (!grad.allFinite()) throw NumericalError("dynamics: non-finite gradient");
  return value;
}

}  // namespace

int NetworkSpec::num_network_params() const {
  int n = 0;
  for (int l = 0; l + 1 < static_cast<int>(layer_sizes.size()); ++l)
    n += layer_sizes[l + 1] * (layer_sizes[l] + 1);
  return n;
}

void NetworkSpec::validate() const {
  if (layer_sizes.size() < 2) throw DomainError("NetworkSpec: need at least input and output layers");
  for (int s : layer_sizes)
    if (s < 1) throw DomainError("NetworkSpec: layer sizes must be positive");
  if (action_dim < 0 || layer_sizes.front() != state_dim() + action_dim)
    throw DomainError("NetworkSpec: input size must equal state_dim + action_dim");
}

NetworkSpec make_network_spec(int state_dim, int action_dim, const std::vector<int>& hidden) {
  NetworkSpec spec;
  spec.action_dim = action_dim;
  spec.layer_sizes.push_back(state_dim + action_dim);
  spec.layer_sizes.insert(spec.layer_sizes.end(), hidden.begin(), hidden.end());
  spec.layer_sizes.push_back(state_dim);
  spec.validate();
  return spec;
}

Vec ContextParams::flatten() const {
  Vec flat(spec.num_params());
  int pos = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const auto n = weights[l].size();
    flat.segment(pos, n) = Eigen::Map<const Vec>(weights[l].data(), n);
    pos += n;
    flat.segment(pos, biases[l].size()) = biases[l];
    pos += biases[l].size();
  }
  flat.segment(pos, log_std.size()) = log_std;
  return flat;
}

ContextParams ContextParams::unflatten(const NetworkSpec& spec, const Vec& flat) {
  spec.validate();
  if (flat.size() != spec.num_params())
    throw DomainError("ContextParams::unflatten: expected " + std::to_string(spec.num_params()) +
                      " values, got " + std::to_string(flat.size()));
  ContextParams p;
  p.spec = spec;
  int pos = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int rows = spec.layer_sizes[l + 1];
    const int cols = spec.layer_sizes[l];
    p.weights.push_back(Eigen::Map<const Mat>(flat.data() + pos, rows, cols));
    pos += rows * cols;
    p.biases.push_back(flat.segment(pos, rows));
    pos += rows;
  }
  p.log_std = flat.segment(pos, spec.state_dim());
  return p;
}

ContextParams ContextParams::zeros(const NetworkSpec& spec) {
  return unflatten(spec, Vec::Zero(spec.num_params()));
}

ContextParams init_context_params(const NetworkSpec& spec, double weight_std, Rng& rng) {
  ContextParams p = ContextParams::zeros(spec);
  for (auto& W : p.weights)
    for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = weight_std * rng.normal();
  p.log_std.setConstant(std::log(0.1));
  return p;
}

Gaussian predict(const ContextParams& theta, const Vec& s, const Vec& a) {
  check_dims(theta, s.size(), a.size());
  const Forward f = forward(theta, stack_inputs(s, a));
  return {s + f.post.back().col(0), theta.log_std.array().exp().matrix()};
}

Mat predict_mean_batch(const ContextParams& theta, const Mat& S, const Mat& A) {
  check_dims(theta, S.rows(), A.rows());
  if (S.cols() != A.cols()) throw DomainError("predict_mean_batch: column counts differ");
  return S + forward(theta, stack_inputs(S, A)).post.back();
}

double log_likelihood(const ContextParams& theta, const Vec& s, const Vec& a, const Vec& s_next) {
  const Gaussian g = predict(theta, s, a);
  if (s_next.size() != s.size()) throw DomainError("dynamics: next state dimension mismatch");
  const Vec z = (s_next - g.mean).cwiseQuotient(g.std);
  const double v = -theta.log_std.sum() - s.size() * kHalfLog2Pi - 0.5 * z.squaredNorm();
  if (!std::isfinite(v)) throw NumericalError("dynamics: non-finite log-likelihood");
  return v;
}

std::pair<double, Vec> log_likelihood_and_grad(const ContextParams& theta, const Vec& s,
                                               const Vec& a, const Vec& s_next) {
  check_dims(theta, s.size(), a.size());
  if (s_next.size() != s.size()) throw DomainError("dynamics: next state dimension mismatch");
  Vec grad = Vec::Zero(theta.spec.num_params());
  const double v = backprop(theta, s, a, s_next, Vec::Ones(1), grad);
  return {v, grad};
}

void Trajectory::validate() const {
  if (actions.cols() < 1) throw DomainError("Trajectory: need at least one transition");
  if (states.cols() != actions.cols() + 1)
    throw DomainError("Trajectory: states must have exactly one more column than actions");
  if (!true_z.empty() && static_cast<Eigen::Index>(true_z.size()) != actions.cols())
    throw DomainError("Trajectory: true_z length must equal the number of actions");
}

Vec log_likelihoods(const ContextParams& theta, const Trajectory& traj) {
  const Eigen::Index T = traj.actions.cols();
  check_dims(theta, traj.states.rows(), traj.actions.rows());
  const Mat S = traj.states.leftCols(T);
  const Mat mean = S + forward(theta, stack_inputs(S, traj.actions)).post.back();
  const Vec inv_std = (-theta.log_std).array().exp();
  const Mat z = (traj.states.rightCols(T) - mean).array().colwise() * inv_std.array();
  const double c = -theta.log_std.sum() - theta.spec.state_dim() * kHalfLog2Pi;
  Vec out = (c - 0.5 * z.colwise().squaredNorm().array()).transpose();
  for (Eigen::Index t = 0; t < T; ++t)
    if (!std::isfinite(out[t])) throw NumericalError("dynamics: non-finite log-likelihood", t);
  return out;
}

void accumulate_weighted_grad(const ContextParams& theta, const Trajectory& traj, const Vec& w,
                              Vec& grad) {
  const Eigen::Index T = traj.actions.cols();
  check_dims(theta, traj.states.rows(), traj.actions.rows());
  if (w.size() != T) throw DomainError("accumulate_weighted_grad: weight length mismatch");
  if (grad.size() != theta.spec.num_params())
    throw DomainError("accumulate_weighted_grad: gradient length mismatch");
  backprop(theta, traj.states.leftCols(T), traj.actions, traj.states.rightCols(T), w, grad);
}

}  // namespace hdpcmdp
