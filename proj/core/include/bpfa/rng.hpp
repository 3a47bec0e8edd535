#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace bpfa {

// Named sub-stream ids. Every random decision in a run is drawn from a
// stream derived from (master seed, purpose, indices...), so any iteration
// can be replayed without sequential generator state.
enum StreamId : std::uint64_t {
  kStreamData = 1,
  kStreamInit,
  kStreamBatch,
  kStreamBeta,
  kStreamLocal,
  kStreamEval,
  kStreamWarmStart,
  kStreamHoldout,
  kStreamMask,
  kStreamNoise,
  kStreamChain,
};

/// Seeded generator with the handful of distributions the model needs.
/// Gamma draws use (shape, rate); beta draws via two gammas.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Derives an independent stream from a master seed and a path of ids,
  /// e.g. Rng::stream(seed, {kStreamLocal, t, i}).
  static Rng stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

  double uniform();  // [0, 1)
  double normal() { return normal(0.0, 1.0); }
  double normal(double mean, double sd);
  double gamma(double shape, double rate);
  double beta(double a, double b);
  bool bernoulli(double p);
  /// Uniform integer in [0, n).
  std::int64_t uniform_int(std::int64_t n);

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

/// splitmix64 finalizer; used to mix stream-path components into seeds.
std::uint64_t mix64(std::uint64_t x);

}  // namespace bpfa
