#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bpfa/variational.hpp"

namespace bpfa {

/// Local variational parameters for one datum: Bernoulli means theta_ik and
/// the Gaussian slab in precision / precision-scaled-mean form, so the slab
/// mean is nu/kappa and its variance 1/kappa.
struct LocalVariationalParams {
  Vector theta;  // K, clamped to [1e-10, 1 - 1e-10]
  Vector nu;     // K
  Vector kappa;  // K, > 0

  /// theta = 1/2, nu = 0, kappa = prior precision; the per-epoch
  /// re-initialization used by all coordinate-ascent strategies.
  static LocalVariationalParams standard_init(int K, double prior_precision);
};

constexpr double kThetaClamp = 1e-10;

enum class Strategy {
  kMfSvi,       // expected globals, fully factorized locals
  kMfSsvi,      // sampled globals, fully factorized locals
  kTitsiasSsvi, // sampled globals, spike-and-slab locals
  kMimnoSvi,    // expected globals, Gibbs on the expected local conditional
  kGibbsSsvi,   // sampled globals, Gibbs on the exact local conditional
};

struct GibbsOptions {
  // How a fresh local chain starts: all indicators off (the first sweep then
  // activates features against the raw datum), drawn from the view's
  // activation prior, or all at probability 1/2.
  enum class Init { kZero, kPrior, kHalf };

  int burn_in = 3;
  int n_samples = 3;
  bool random_scan = false;  // default is a fixed 1..K scan per sweep
  Init init = Init::kZero;

  void validate() const;
};

struct StrategyTag {
  Strategy kind = Strategy::kGibbsSsvi;
  GibbsOptions gibbs;

  std::string label() const;
  static StrategyTag parse(const std::string& name);

  /// True for the strategies that consume one sampled beta per minibatch.
  bool sampled_view() const {
    return kind == Strategy::kMfSsvi || kind == Strategy::kTitsiasSsvi ||
           kind == Strategy::kGibbsSsvi;
  }
  bool gibbs_local() const {
    return kind == Strategy::kMimnoSvi || kind == Strategy::kGibbsSsvi;
  }
  bool coordinate_ascent() const { return !gibbs_local(); }
};

struct LocalOptions {
  int max_sweeps = 100;
  double rel_tol = 1e-8;          // relative local-ELBO change for convergence
  bool track_elbo = false;        // record the per-sweep ELBO trace
  bool paper_literal_mu = false;  // drop the noise-precision factor in mu_stat
  bool fixed_unit_weights = false;  // pin every w_ik to 1 (indicator-only inference)
};

/// Per-(datum, global view) context: observed values and loadings gathered
/// into dense |O|-sized blocks, with the inner products every strategy needs.
/// For moment views, q_k carries the loading second moment
/// ||mean phi_k||^2 + |O|/tau_k; for sampled views q_k = p_k.
struct LocalView {
  Vector y;            // |O|
  Matrix phi;          // K x |O|
  Vector s;            // K: phi_k . y
  Vector p;            // K: ||phi_k||^2 over observed dims
  Vector q;            // K: second-moment version of p
  Vector logit_prior;  // K
  double gamma_obs = 1.0;
  double gamma_w = 1.0;
  int dim = 0;         // full D
  std::vector<int> cols;  // observed column ids
  bool unit_weights = false;

  int feature_count() const { return static_cast<int>(s.size()); }
  int obs_count() const { return static_cast<int>(cols.size()); }
};

using RowRef = Eigen::Ref<const Eigen::RowVectorXd>;

LocalView make_local_view(const ExpectedGlobals& moments, RowRef y, std::span<const int> obs,
                          int D);
LocalView make_local_view(const GlobalSample& beta, RowRef y, std::span<const int> obs, int D);

struct LocalFit {
  LocalVariationalParams params;
  NaturalStats stats;
  bool converged = true;
  int sweeps = 0;
  std::vector<double> elbo_trace;
};

/// Cyclic coordinate ascent on the variant's local ELBO. Every coordinate
/// update is closed form: (nu_k, kappa_k) jointly, then a sigmoid update for
/// theta_k. Stops when the relative ELBO change drops below rel_tol or after
/// max_sweeps (converged = false, best-so-far returned).
LocalFit coordinate_ascent(const LocalView& view, const LocalVariationalParams& init,
                           Strategy variant, const LocalOptions& opts);

/// One in-place sweep of the per-feature local conditionals: z_k flips given
/// the current w_k, then w_k is redrawn from its slab (z_k = 1) or prior
/// branch. `res` must hold y_obs - sum_k z_k w_k phi_k,obs on entry and is
/// kept consistent. Shared by the local Gibbs strategies and the full chain.
void gibbs_feature_sweep(const LocalView& view, std::span<std::uint8_t> z, Vector& w, Vector& res,
                         Rng& rng, bool random_scan = false);

/// Gibbs chain on the local conditionals implied by the view, started from
/// z ~ Bernoulli(1/2), w ~ N(0, 1/gamma_w). Statistics are averaged over the
/// n_samples post-burn-in states.
NaturalStats gibbs_local_chain(const LocalView& view, const GibbsOptions& gopts, Rng& rng,
                               const LocalOptions& opts = {},
                               std::vector<LocalSample>* retained = nullptr);

/// Closed-form expectations of the per-datum natural statistics under the
/// factorized (MF) or spike-and-slab (Titsias) local family.
NaturalStats stats_from_variational(const LocalVariationalParams& params, const LocalView& view,
                                    Strategy variant, bool paper_literal_mu = false);

/// The variant's local ELBO with parameter-free constants omitted.
double local_elbo(const LocalVariationalParams& params, const LocalView& view, Strategy variant);

struct LocalGrad {
  Vector theta, nu, kappa;
};

/// Analytic partial derivatives of local_elbo in (theta, nu, kappa); the
/// closed-form coordinate updates are the stationary points of these.
LocalGrad local_elbo_grad(const LocalVariationalParams& params, const LocalView& view,
                          Strategy variant);

// The five strategies as named entry points.

LocalFit mf_svi_local(const ExpectedGlobals& moments, RowRef y, std::span<const int> obs,
                      const LocalVariationalParams& init, const LocalOptions& opts = {});
LocalFit mf_ssvi_local(const GlobalSample& beta, RowRef y, std::span<const int> obs,
                       const LocalVariationalParams& init, const LocalOptions& opts = {});
LocalFit titsias_ssvi_local(const GlobalSample& beta, RowRef y, std::span<const int> obs,
                            const LocalVariationalParams& init, const LocalOptions& opts = {});
NaturalStats mimno_gibbs_local(const ExpectedGlobals& moments, RowRef y, std::span<const int> obs,
                               const GibbsOptions& gopts, Rng& rng, const LocalOptions& opts = {},
                               std::vector<LocalSample>* retained = nullptr);
NaturalStats gibbs_ssvi_local(const GlobalSample& beta, RowRef y, std::span<const int> obs,
                              const GibbsOptions& gopts, Rng& rng, const LocalOptions& opts = {},
                              std::vector<LocalSample>* retained = nullptr);

}  // namespace bpfa
