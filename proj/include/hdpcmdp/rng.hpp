#pragma once

#include <cstdint>
#include <random>

#include "hdpcmdp/common.hpp"

namespace hdpcmdp {

/// Seeded random stream. Child streams derived with `split` depend only on
/// the parent seed and the stream id, never on how much of the parent has
/// been consumed, so independent consumers stay reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }

  Rng split(std::uint64_t stream_id) const {
    return Rng(mix(seed_ ^ mix(stream_id + 0x632be59bd9b4e019ULL)));
  }

  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_(engine_); }
  std::uint64_t next_u64() { return engine_(); }

  Vec normal_vector(Eigen::Index n) {
    Vec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  /// Index drawn from unnormalized nonnegative weights by inverse CDF.
  int categorical(const Vec& weights);

  /// Marsaglia-Tsang; shapes below one use the u^(1/shape) boost.
  double gamma(double shape);
  double beta(double a, double b);

  std::mt19937_64& engine() { return engine_; }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace hdpcmdp
