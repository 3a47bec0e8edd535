#pragma once

#include <cmath>
#include <span>

namespace bpfa {

/// Digamma function, accurate to ~1e-14 for x > 0 (recurrence up to the
/// asymptotic regime, then a Bernoulli series).
double digamma(double x);

inline double log_beta_fn(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

/// log Beta(x; a, b) density.
inline double log_beta_pdf(double x, double a, double b) {
  if (x <= 0.0 || x >= 1.0) return -std::numeric_limits<double>::infinity();
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta_fn(a, b);
}

/// log Gamma(x; shape, rate) density.
inline double log_gamma_pdf(double x, double shape, double rate) {
  if (x <= 0.0) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

/// log N(x; mean, 1/precision) density.
inline double log_normal_pdf(double x, double mean, double precision) {
  double r = x - mean;
  return 0.5 * std::log(precision / (2.0 * M_PI)) - 0.5 * precision * r * r;
}

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

double log_sum_exp(std::span<const double> values);

/// Bernoulli entropy with the usual 0 log 0 = 0 convention.
inline double bernoulli_entropy(double p) {
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log1p(-p);
  return h;
}

}  // namespace bpfa
