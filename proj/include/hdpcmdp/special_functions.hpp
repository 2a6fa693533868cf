#pragma once

namespace hdpcmdp::special {

/// Digamma by recurrence shift above 6 followed by the asymptotic series.
double digamma(double x);

double log_beta_function(double a, double b);

/// Regularized incomplete Beta I_x(a, b), modified Lentz continued fraction
/// with the symmetry switch at x > (a + 1) / (a + b + 2). Accurate to ~1e-13.
double incomplete_beta(double x, double a, double b);

double beta_log_pdf(double x, double a, double b);

/// log of sum exp over two values; handles -inf on either side.
double log_add_exp(double a, double b);

}  // namespace hdpcmdp::special
