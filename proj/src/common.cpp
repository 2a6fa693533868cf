#include <cmath>
#include <iostream>
#include <mutex>
#include <utility>

#include "hdpcmdp/common.hpp"
#include "hdpcmdp/rng.hpp"

namespace hdpcmdp {

namespace {

std::mutex& handler_mutex() {
  static std::mutex m;
  return m;
}

WarningHandler& handler_slot() {
  static WarningHandler h = [](const std::string& msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return h;
}

}  // namespace

WarningHandler set_warning_handler(WarningHandler handler) {
  std::lock_guard<std::mutex> lock(handler_mutex());
  return std::exchange(handler_slot(), std::move(handler));
}

void warn(const std::string& message) {
  std::lock_guard<std::mutex> lock(handler_mutex());
  if (handler_slot()) handler_slot()(message);
}

int Rng::categorical(const Vec& weights) {
  const double total = weights.sum();
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw DomainError("categorical: weights must have positive finite mass");
  }
  const double u = uniform() * total;
  double acc = 0.0;
  int last_positive = -1;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (weights[i] < 0.0) throw DomainError("categorical: negative weight");
    if (weights[i] > 0.0) last_positive = static_cast<int>(i);
    acc += weights[i];
    if (u < acc) return static_cast<int>(i);
  }
  return last_positive;
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw DomainError("gamma: shape must be positive");
  if (shape < 1.0) {
    const double u = uniform();
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double Rng::beta(double a, double b) {
  const double x = gamma(a);
  const double y = gamma(b);
  double r = x / (x + y);
  if (!std::isfinite(r)) r = a / (a + b);
  constexpr double kEdge = 1e-15;
  return std::min(std::max(r, kEdge), 1.0 - kEdge);
}

}  // namespace hdpcmdp
