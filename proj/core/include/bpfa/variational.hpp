#pragma once

#include <span>

#include "bpfa/model.hpp"

namespace bpfa {

/// Global variational state: q(pi_k) = Beta(a_k, b_k), q(gamma_obs) =
/// Gamma(c, d), q(gamma_w) = Gamma(e, f) (shape/rate), and q(phi_k) =
/// N(mu_k / tau_k, I / tau_k) with mu stored precision-scaled. These are the
/// natural coordinates in which the stochastic updates interpolate.
struct GlobalVariationalState {
  Vector a_k, b_k;  // K
  double c = 1.0, d = 1.0;
  double e = 1.0, f = 1.0;
  Vector tau_k;     // K, >= D always
  Matrix mu;        // K x D

  int feature_count() const { return static_cast<int>(a_k.size()); }
  int dim() const { return static_cast<int>(mu.cols()); }

  /// Throws std::runtime_error if any positivity invariant is violated.
  void check_valid() const;
};

/// Per-datum sufficient-statistic contribution, laid out to match the global
/// natural parameter vector. All fields are additive across data.
struct NaturalStats {
  Vector z_sum;       // K: E[z_ik]
  Vector z_comp_sum;  // K: E[1 - z_ik]
  double c_count = 0.0;  // |observed entries| / 2
  double d_stat = 0.0;   // (1/2) E || y_i - (z_i o w_i) Phi ||^2 over observed entries
  double e_count = 0.0;  // K / 2
  double f_stat = 0.0;   // (1/2) E || w_i ||^2
  Vector tau_stat;    // K: E[gamma_obs z_ik w_ik^2], scaled by |obs|/D under masking
  Matrix mu_stat;     // K x D, zero at unobserved dims

  static NaturalStats zero(int K, int D);
  NaturalStats& operator+=(const NaturalStats& other);
};

/// Moments of the exponential-family variational factors.
struct ExpectedGlobals {
  Vector logit_pi;   // K: psi(a_k) - psi(b_k) = E[log(pi_k / (1 - pi_k))]
  double gamma_obs = 1.0;  // c / d
  double gamma_w = 1.0;    // e / f
  Matrix phi_mean;   // K x D: mu_k / tau_k
  Vector phi_var;    // K: per-dimension variance 1 / tau_k
};

/// The prior natural parameter block as a state: Beta pseudo-counts a/K and
/// b(K-1)/K per feature, the Gamma priors, precision D per feature, zero
/// precision-scaled mean.
GlobalVariationalState prior_natural(const Hyperparameters& hyper, int D);

/// Robbins-Monro step size rho = (t + t0)^(-zeta), t >= 1.
double step_size(long t, const Hyperparameters& hyper);

/// One stochastic natural-gradient step: in natural coordinates,
/// lambda <- (1 - rho) lambda + rho (eta_prior + (N/|batch|) sum_i eta_i).
/// Throws std::runtime_error if a resulting precision/shape/rate is <= 0.
GlobalVariationalState svi_step(const GlobalVariationalState& state,
                                std::span<const NaturalStats> batch, long total_n, double rho,
                                const Hyperparameters& hyper);

/// Reference batch M-step: the closed-form conjugate update computed
/// directly from the prior block and the full-data statistics.
GlobalVariationalState full_batch_cavi_update(const Hyperparameters& hyper, int D,
                                              std::span<const NaturalStats> all_stats);

/// Draws one concrete global sample from the current variational state.
GlobalSample sample_global(const GlobalVariationalState& state, Rng& rng);

/// Mean global sample (pi at a/(a+b), Phi at mu/tau, precisions at their
/// Gamma means); used for plug-in posterior-mean predictions.
GlobalSample mean_global(const GlobalVariationalState& state);

ExpectedGlobals expected_global(const GlobalVariationalState& state);

}  // namespace bpfa
