#include "bpfa/rng.hpp"

#include <algorithm>
#include <limits>

namespace bpfa {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng Rng::stream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t part : path) {
    h = mix64(h ^ mix64(part + 0x632be59bd9b4e019ULL));
  }
  return Rng(h);
}

double Rng::uniform() {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  double u = dist(gen_);
  return std::min(u, std::nextafter(1.0, 0.0));
}

double Rng::normal(double mean, double sd) {
  std::normal_distribution<double> dist(mean, sd);
  return dist(gen_);
}

double Rng::gamma(double shape, double rate) {
  std::gamma_distribution<double> dist(shape, 1.0 / rate);
  // Guard against underflow to exactly zero at small shapes.
  return std::max(dist(gen_), 1e-300);
}

double Rng::beta(double a, double b) {
  double x = gamma(a, 1.0);
  double y = gamma(b, 1.0);
  double v = x / (x + y);
  return std::clamp(v, 1e-300, 1.0 - 1e-16);
}

bool Rng::bernoulli(double p) { return uniform() < p; }

std::int64_t Rng::uniform_int(std::int64_t n) {
  std::uniform_int_distribution<std::int64_t> dist(0, n - 1);
  return dist(gen_);
}

}  // namespace bpfa
