// Test-side oracles, kept independent of the library's computation paths:
// brute-force enumerations with analytic weight integrals, an exact
// enumeration-based ELBO, literal-loop local ELBO evaluators, quadrature,
// and a numerical local optimizer.
#pragma once

#include <functional>
#include <span>

#include "bpfa/local.hpp"
#include "bpfa/variational.hpp"

namespace bpfa::oracle {

/// Exact z marginals of p(z | y_obs, beta) by enumerating all 2^K
/// configurations with the weights integrated analytically (Gaussian
/// marginal likelihood per configuration).
Vector exact_z_marginals(const GlobalSample& beta, const Vector& y_obs, const Matrix& phi_obs);

/// Exact z marginals of the expected-conditional local distribution by
/// enumeration (weights integrated analytically per configuration).
Vector mimno_z_marginals(const ExpectedGlobals& moments, const Vector& y_obs, int obs_count,
                         const Matrix& phi_mean_obs);

/// Exact per-datum natural statistics under the expected-conditional local
/// distribution, with joint cross moments (enumeration + Gaussian moments).
NaturalStats mimno_exact_stats(const ExpectedGlobals& moments, RowRef y,
                               std::span<const int> obs, int D);

/// Exact full ELBO for the two-block factorization q(beta) x prod_i q(psi_i)
/// with the optimal unconstrained local factors, via per-datum enumeration:
/// ELBO = sum_i log Z_i - KL(q(beta) || p(beta)).
double full_elbo_enumeration(const GlobalVariationalState& state, const Dataset& data,
                             const Hyperparameters& hyper);

/// Literal-loop evaluation of the local ELBOs, written against the displayed
/// forms term by term (independent of the library's residual-based path).
double reference_local_elbo(const LocalVariationalParams& params, const GlobalSample& beta,
                            const Vector& y_obs, const Matrix& phi_obs, Strategy variant);
double reference_local_elbo(const LocalVariationalParams& params, const ExpectedGlobals& moments,
                            const Vector& y_obs, const Matrix& phi_mean_obs, int obs_count,
                            Strategy variant);

/// Derivative-free maximization of fn over a box by cyclic golden-section
/// line searches; used to solve small local optima numerically.
std::vector<double> maximize_coordinatewise(const std::function<double(std::span<const double>)>& fn,
                                            std::vector<double> x, std::vector<double> lo,
                                            std::vector<double> hi, int rounds = 200);

/// Composite Simpson integration.
double simpson(const std::function<double(double)>& fn, double lo, double hi, int intervals);

}  // namespace bpfa::oracle
