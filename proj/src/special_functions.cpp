#include "hdpcmdp/special_functions.hpp"

#include <cmath>
#include <limits>

#include "hdpcmdp/common.hpp"

namespace hdpcmdp::special {

double digamma(double x) {
  if (!(x > 0.0)) throw DomainError("digamma: argument must be positive");
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // Bernoulli-number tail: 1/12, 1/120, 1/252, 1/240, 1/132, 691/32760, 1/12
  const double series =
      inv2 * (1.0 / 12 -
              inv2 * (1.0 / 120 -
                      inv2 * (1.0 / 252 -
                              inv2 * (1.0 / 240 -
                                      inv2 * (1.0 / 132 - inv2 * (691.0 / 32760 - inv2 / 12.0))))));
  return result + std::log(x) - 0.5 * inv - series;
}

double log_beta_function(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

namespace {

// Continued fraction for I_x(a,b) (valid and fast for x < (a+1)/(a+b+2)).
double beta_continued_fraction(double x, double a, double b) {
  constexpr int kMaxIter = 100000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw ConvergenceError("incomplete_beta: continued fraction did not converge", std::fabs(h));
}

}  // namespace

double incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("incomplete_beta: shapes must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("incomplete_beta: x outside [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      a * std::log(x) + b * std::log1p(-x) - log_beta_function(a, b);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(log_front) * beta_continued_fraction(x, a, b) / a;
  }
  return 1.0 - std::exp(log_front) * beta_continued_fraction(1.0 - x, b, a) / b;
}

double beta_log_pdf(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("beta_log_pdf: shapes must be positive");
  if (!(x >= 0.0 && x <= 1.0)) return -std::numeric_limits<double>::infinity();
  const double left = a == 1.0 ? 0.0 : (a - 1.0) * std::log(x);
  const double right = b == 1.0 ? 0.0 : (b - 1.0) * std::log1p(-x);
  return left + right - log_beta_function(a, b);
}

double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

}  // namespace hdpcmdp::special
