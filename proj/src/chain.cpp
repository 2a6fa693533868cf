#include "hdpcmdp/chain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace hdpcmdp {

namespace {

Mat take(const Mat& m, const std::vector<int>& rows, const std::vector<int>& cols) {
  Mat out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = m(rows[i], cols[j]);
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_partition(int K, const std::vector<int>& kept, const std::vector<int>& removed) {
  std::vector<int> seen(K, 0);
  for (int i : kept) {
    if (i < 0 || i >= K) throw DomainError("distill: index out of range");
    ++seen[i];
  }
  for (int i : removed) {
    if (i < 0 || i >= K) throw DomainError("distill: index out of range");
    ++seen[i];
  }
  if (std::any_of(seen.begin(), seen.end(), [](int c) { return c != 1; }))
    throw DomainError("distill: kept and removed must partition the context indices");
  if (kept.empty()) throw DomainError("distill: kept set is empty");
}

// (I - R22)^{-1} R21, or throws if I - R22 is singular.
Mat escape_block(const Mat& R22, const Mat& R21) {
  const Eigen::Index n = R22.rows();
  const Mat lhs = Mat::Identity(n, n) - R22;
  Eigen::FullPivLU<Mat> lu(lhs);
  if (!lu.isInvertible()) {
    throw NumericalError(
        "distill: I - R_{I2,I2} is singular (spurious block has spectral radius 1)");
  }
  return lu.solve(R21);
}

}  // namespace

void ContextChain::validate(double tol) const {
  const Eigen::Index K = rho0.size();
  if (K < 1) throw DomainError("ContextChain: empty chain");
  if (R.rows() != K || R.cols() != K) throw DomainError("ContextChain: R must be K x K");
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  for (Eigen::Index i = 0; i < K; ++i)
    if (!in_unit(rho0[i])) throw DomainError("ContextChain: rho0 entry outside [0,1]");
  if (std::fabs(rho0.sum() - 1.0) > tol) throw DomainError("ContextChain: rho0 does not sum to 1");
  for (Eigen::Index i = 0; i < K; ++i) {
    for (Eigen::Index j = 0; j < K; ++j)
      if (!in_unit(R(i, j))) throw DomainError("ContextChain: R entry outside [0,1]");
    if (std::fabs(R.row(i).sum() - 1.0) > tol)
      throw DomainError("ContextChain: row " + std::to_string(i) + " of R does not sum to 1");
  }
}

ContextChain uniform_chain(int K) {
  return {Vec::Constant(K, 1.0 / K), Mat::Constant(K, K, 1.0 / K)};
}

Vec stationary_distribution(const Mat& R) {
  const Eigen::Index K = R.rows();
  if (K < 1 || R.cols() != K) throw DomainError("stationary_distribution: R must be square");
  constexpr int kMaxSweeps = 100000;
  constexpr double kTol = 1e-12;

  Eigen::RowVectorXd p = Eigen::RowVectorXd::Constant(K, 1.0 / K);
  double residual = 0.0;
  for (int it = 0; it < kMaxSweeps; ++it) {
    Eigen::RowVectorXd next = p * R;
    next /= next.sum();
    residual = (next - p).cwiseAbs().maxCoeff();
    p = next;
    if (residual < kTol) return p.transpose();
  }

  // Power iteration stalls on periodic or nearly decomposable chains; solve
  // (R^T - I) p = 0 with the last equation replaced by sum(p) = 1.
  Mat A = R.transpose() - Mat::Identity(K, K);
  A.row(K - 1).setOnes();
  Vec rhs = Vec::Zero(K);
  rhs[K - 1] = 1.0;
  Eigen::FullPivLU<Mat> lu(A);
  if (lu.isInvertible()) {
    Vec q = lu.solve(rhs);
    const double fixed_residual = (q.transpose() * R - q.transpose()).cwiseAbs().maxCoeff();
    if (q.minCoeff() > -1e-12 && fixed_residual < 1e-10) {
      q = q.cwiseMax(0.0);
      return q / q.sum();
    }
    residual = std::min(residual, fixed_residual);
  }
  throw ConvergenceError("stationary_distribution: no convergence (reducible or periodic chain?)",
                         residual);
}

ContextChain distill_partition(const ContextChain& chain, const std::vector<int>& kept,
                               const std::vector<int>& removed, DistillMode mode) {
  const int K = chain.size();
  check_partition(K, kept, removed);
  const int n1 = static_cast<int>(kept.size());

  Mat R_hat = take(chain.R, kept, kept);
  Mat escape;
  if (!removed.empty()) {
    escape = escape_block(take(chain.R, removed, removed), take(chain.R, removed, kept));
    R_hat += take(chain.R, kept, removed) * escape;
  }
  // Clean rounding so rows stay stochastic.
  R_hat = R_hat.cwiseMax(0.0);
  for (int i = 0; i < n1; ++i) R_hat.row(i) /= R_hat.row(i).sum();

  Vec rho_hat(n1);
  for (int i = 0; i < n1; ++i) rho_hat[i] = chain.rho0[kept[i]];
  if (!(rho_hat.sum() > 0.0)) {
    // All initial mass sits in removed states: route it through the escape block.
    Vec rho_removed(removed.size());
    for (std::size_t i = 0; i < removed.size(); ++i) rho_removed[i] = chain.rho0[removed[i]];
    rho_hat = (rho_removed.transpose() * escape).transpose();
  }
  rho_hat /= rho_hat.sum();

  if (mode == DistillMode::mpc) return {rho_hat, R_hat};

  ContextChain out{Vec::Zero(K), Mat::Zero(K, K)};
  for (int i = 0; i < n1; ++i) {
    out.rho0[kept[i]] = rho_hat[i];
    for (int j = 0; j < n1; ++j) out.R(kept[i], kept[j]) = R_hat(i, j);
  }
  for (std::size_t i = 0; i < removed.size(); ++i) {
    double row_sum = escape.row(i).cwiseMax(0.0).sum();
    for (int j = 0; j < n1; ++j) out.R(removed[i], kept[j]) = std::max(escape(i, j), 0.0) / row_sum;
  }
  return out;
}

DistillResult distill(const ContextChain& chain, double epsilon, DistillMode mode) {
  chain.validate(1e-9);
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw DomainError("distill: epsilon must lie in [0,1)");
  DistillResult result;
  result.stationary = stationary_distribution(chain.R);
  const int K = chain.size();
  for (int i = 0; i < K; ++i) {
    (result.stationary[i] >= epsilon ? result.kept : result.removed).push_back(i);
  }
  if (result.kept.empty()) {
    Eigen::Index best = 0;
    result.stationary.maxCoeff(&best);
    result.kept = {static_cast<int>(best)};
    result.removed.erase(std::find(result.removed.begin(), result.removed.end(), best));
    result.fallback_used = true;
    warn("distill: epsilon removes every context; keeping argmax stationary context " +
         std::to_string(best));
  }
  result.chain = distill_partition(chain, result.kept, result.removed, mode);
  return result;
}

ChainGradient distill_policy_backward(const ContextChain& chain, const std::vector<int>& kept,
                                      const std::vector<int>& removed,
                                      const ChainGradient& reduced_grad) {
  const int K = chain.size();
  check_partition(K, kept, removed);
  const int n1 = static_cast<int>(kept.size());
  const int n2 = static_cast<int>(removed.size());
  ChainGradient g{Vec::Zero(K), Mat::Zero(K, K)};

  const Mat G = take(reduced_grad.R, kept, kept);
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n1; ++j) g.R(kept[i], kept[j]) = G(i, j);

  // rho_hat = rho_I1 / sum(rho_I1)
  double s = 0.0;
  for (int i : kept) s += chain.rho0[i];
  if (s > 0.0) {
    double dot = 0.0;
    for (int i : kept) dot += reduced_grad.rho0[i] * chain.rho0[i] / s;
    for (int i : kept) g.rho0[i] = (reduced_grad.rho0[i] - dot) / s;
  }
  if (n2 == 0) return g;

  const Mat R12 = take(chain.R, kept, removed);
  const Mat R21 = take(chain.R, removed, kept);
  const Mat R22 = take(chain.R, removed, removed);
  Eigen::FullPivLU<Mat> lu(Mat::Identity(n2, n2) - R22);
  if (!lu.isInvertible()) throw NumericalError("distill_policy_backward: singular I - R22");
  const Mat X = lu.solve(R21);

  // R_hat = R11 + R12 X, X = M R21, M = (I - R22)^{-1}; the escape rows of
  // the policy output are X itself.
  Mat gX = take(reduced_grad.R, removed, kept) + R12.transpose() * G;
  const Mat gR12 = G * X.transpose();
  const Mat MtgX = lu.transpose().solve(gX);
  const Mat gR21 = MtgX;
  const Mat gR22 = MtgX * X.transpose();
  for (int i = 0; i < n1; ++i)
    for (int j = 0; j < n2; ++j) g.R(kept[i], removed[j]) = gR12(i, j);
  for (int i = 0; i < n2; ++i) {
    for (int j = 0; j < n1; ++j) g.R(removed[i], kept[j]) = gR21(i, j);
    for (int j = 0; j < n2; ++j) g.R(removed[i], removed[j]) = gR22(i, j);
  }
  return g;
}

std::string chain_to_csv(const ContextChain& chain) {
  std::ostringstream out;
  auto write_row = [&](auto&& row) {
    for (Eigen::Index j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << format_double(row[j]);
    }
    out << '\n';
  };
  write_row(chain.rho0);
  for (Eigen::Index i = 0; i < chain.R.rows(); ++i) write_row(Vec(chain.R.row(i).transpose()));
  return out.str();
}

ContextChain chain_from_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw DomainError("chain csv: bad number on line " + std::to_string(line_no));
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DomainError("chain csv: empty input");
  const std::size_t K = rows.front().size();
  if (rows.size() != K + 1) throw DomainError("chain csv: expected K+1 rows for K contexts");
  ContextChain chain{Vec(K), Mat(K, K)};
  for (std::size_t j = 0; j < K; ++j) chain.rho0[j] = rows[0][j];
  for (std::size_t i = 0; i < K; ++i) {
    if (rows[i + 1].size() != K) throw DomainError("chain csv: ragged row " + std::to_string(i + 2));
    for (std::size_t j = 0; j < K; ++j) chain.R(i, j) = rows[i + 1][j];
  }
  chain.validate(1e-9);
  return chain;
}

}  // namespace hdpcmdp
