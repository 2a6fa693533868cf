#include "hdpcmdp/message_passing.hpp"

#include <cmath>
#include <limits>

namespace hdpcmdp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Mat log_matrix(const Mat& m) {
  Mat out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.size(); ++i) out.data()[i] = m.data()[i] > 0.0 ? std::log(m.data()[i]) : kNegInf;
  return out;
}

}  // namespace

double log_sum_exp(const Eigen::Ref<const Vec>& v) {
  const double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

Mat context_log_likelihoods(const std::vector<ContextParams>& thetas, const Trajectory& traj) {
  Mat L(traj.T(), thetas.size());
  for (std::size_t k = 0; k < thetas.size(); ++k) L.col(k) = log_likelihoods(thetas[k], traj);
  return L;
}

MessageTable message_pass(const ContextChain& chain, const Mat& loglik, bool with_pairwise) {
  const Eigen::Index T = loglik.rows();
  const Eigen::Index K = loglik.cols();
  if (K != chain.size()) throw DomainError("message_pass: likelihood columns do not match K");
  if (T < 1) throw DomainError("message_pass: empty trajectory");
  const Mat logR = log_matrix(chain.R);
  const Mat logRt = logR.transpose();

  MessageTable tab;
  tab.log_forward.resize(T, K);
  tab.log_backward.resize(T, K);
  Vec scratch(K);

  for (Eigen::Index k = 0; k < K; ++k)
    tab.log_forward(0, k) = (chain.rho0[k] > 0.0 ? std::log(chain.rho0[k]) : kNegInf) + loglik(0, k);
  if (tab.log_forward.row(0).maxCoeff() == kNegInf)
    throw NumericalError("message_pass: every context has zero likelihood at step 0", 0);
  for (Eigen::Index t = 1; t < T; ++t) {
    const Vec prev = tab.log_forward.row(t - 1).transpose();
    for (Eigen::Index k = 0; k < K; ++k) {
      scratch = prev + logRt.row(k).transpose();
      tab.log_forward(t, k) = loglik(t, k) + log_sum_exp(scratch);
    }
    if (tab.log_forward.row(t).maxCoeff() == kNegInf)
      throw NumericalError("message_pass: every context has zero likelihood at step " +
                               std::to_string(t),
                           static_cast<int>(t));
  }
  tab.log_evidence = log_sum_exp(tab.log_forward.row(T - 1).transpose());

  tab.log_backward.row(T - 1).setZero();
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    const Vec next = (loglik.row(t + 1) + tab.log_backward.row(t + 1)).transpose();
    for (Eigen::Index j = 0; j < K; ++j) {
      scratch = logR.row(j).transpose() + next;
      tab.log_backward(t, j) = log_sum_exp(scratch);
    }
  }

  tab.marginals.resize(T, K);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index k = 0; k < K; ++k)
      tab.marginals(t, k) = std::exp(tab.log_forward(t, k) + tab.log_backward(t, k) - tab.log_evidence);
    tab.marginals.row(t) /= tab.marginals.row(t).sum();
  }

  if (with_pairwise) {
    tab.pairwise.reserve(T - 1);
    for (Eigen::Index t = 0; t + 1 < T; ++t) {
      Mat slab(K, K);
      for (Eigen::Index j = 0; j < K; ++j)
        for (Eigen::Index k = 0; k < K; ++k)
          slab(j, k) = std::exp(tab.log_forward(t, j) + logR(j, k) + loglik(t + 1, k) +
                                tab.log_backward(t + 1, k) - tab.log_evidence);
      slab /= slab.sum();
      tab.pairwise.push_back(std::move(slab));
    }
  }
  return tab;
}

MessageTable message_pass(const ContextChain& chain, const std::vector<ContextParams>& thetas,
                          const Trajectory& traj) {
  if (static_cast<int>(thetas.size()) != chain.size())
    throw DomainError("message_pass: number of thetas does not match the chain");
  traj.validate();
  return message_pass(chain, context_log_likelihoods(thetas, traj));
}

ChainGradient chain_evidence_grad(const Mat& loglik, const MessageTable& table) {
  const Eigen::Index T = loglik.rows();
  const Eigen::Index K = loglik.cols();
  ChainGradient g{Vec(K), Mat::Zero(K, K)};
  for (Eigen::Index k = 0; k < K; ++k)
    g.rho0[k] = std::exp(loglik(0, k) + table.log_backward(0, k) - table.log_evidence);
  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index k = 0; k < K; ++k) {
      const double tail = loglik(t, k) + table.log_backward(t, k) - table.log_evidence;
      if (tail == kNegInf) continue;
      for (Eigen::Index j = 0; j < K; ++j) g.R(j, k) += std::exp(table.log_forward(t - 1, j) + tail);
    }
  }
  return g;
}

LikelihoodGradient likelihood_grads(const ContextChain& chain,
                                    const std::vector<ContextParams>& thetas,
                                    const Trajectory& traj, const MessageTable& table) {
  if (static_cast<int>(thetas.size()) != chain.size())
    throw DomainError("likelihood_grads: number of thetas does not match the chain");
  LikelihoodGradient out;
  const Mat L = context_log_likelihoods(thetas, traj);
  out.chain = chain_evidence_grad(L, table);
  for (std::size_t k = 0; k < thetas.size(); ++k) {
    Vec g = Vec::Zero(thetas[k].spec.num_params());
    const Vec w = table.marginals.col(k);
    if (w.maxCoeff() > 0.0) accumulate_weighted_grad(thetas[k], traj, w, g);
    out.thetas.push_back(std::move(g));
  }
  return out;
}

}  // namespace hdpcmdp
