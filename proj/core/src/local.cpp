#include "bpfa/local.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "bpfa/special.hpp"

namespace bpfa {

void GibbsOptions::validate() const {
  if (burn_in < 0) throw std::invalid_argument("burn_in must be >= 0");
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
}

LocalVariationalParams LocalVariationalParams::standard_init(int K, double prior_precision) {
  LocalVariationalParams p;
  p.theta = Vector::Constant(K, 0.5);
  p.nu = Vector::Zero(K);
  p.kappa = Vector::Constant(K, prior_precision);
  return p;
}

std::string StrategyTag::label() const {
  switch (kind) {
    case Strategy::kMfSvi: return "mf-svi";
    case Strategy::kMfSsvi: return "mf-ssvi";
    case Strategy::kTitsiasSsvi: return "titsias-ssvi";
    case Strategy::kMimnoSvi: return "mimno-svi";
    case Strategy::kGibbsSsvi: return "gibbs-ssvi";
  }
  return "unknown";
}

StrategyTag StrategyTag::parse(const std::string& name) {
  StrategyTag tag;
  if (name == "mf-svi") tag.kind = Strategy::kMfSvi;
  else if (name == "mf-ssvi") tag.kind = Strategy::kMfSsvi;
  else if (name == "titsias-ssvi") tag.kind = Strategy::kTitsiasSsvi;
  else if (name == "mimno-svi") tag.kind = Strategy::kMimnoSvi;
  else if (name == "gibbs-ssvi") tag.kind = Strategy::kGibbsSsvi;
  else throw std::invalid_argument("unknown strategy: " + name);
  return tag;
}

namespace {

void gather_common(LocalView& view, RowRef y, std::span<const int> obs, const Matrix& loadings,
                   int D) {
  const int K = static_cast<int>(loadings.rows());
  const int n = static_cast<int>(obs.size());
  view.dim = D;
  view.cols.assign(obs.begin(), obs.end());
  view.y.resize(n);
  view.phi.resize(K, n);
  for (int j = 0; j < n; ++j) {
    const int col = view.cols[static_cast<std::size_t>(j)];
    view.y[j] = y[col];
    for (int k = 0; k < K; ++k) view.phi(k, j) = loadings(k, col);
  }
  view.s.resize(K);
  view.p.resize(K);
  for (int k = 0; k < K; ++k) {
    view.s[k] = view.phi.row(k).dot(view.y);
    view.p[k] = view.phi.row(k).squaredNorm();
  }
}

}  // namespace

LocalView make_local_view(const ExpectedGlobals& moments, RowRef y, std::span<const int> obs,
                          int D) {
  LocalView view;
  gather_common(view, y, obs, moments.phi_mean, D);
  view.logit_prior = moments.logit_pi;
  view.q = view.p + static_cast<double>(view.obs_count()) * moments.phi_var;
  view.gamma_obs = moments.gamma_obs;
  view.gamma_w = moments.gamma_w;
  return view;
}

LocalView make_local_view(const GlobalSample& beta, RowRef y, std::span<const int> obs, int D) {
  LocalView view;
  gather_common(view, y, obs, beta.Phi, D);
  const int K = beta.feature_count();
  view.logit_prior.resize(K);
  for (int k = 0; k < K; ++k) view.logit_prior[k] = logit(beta.pi[k]);
  view.q = view.p;
  view.gamma_obs = beta.gamma_obs;
  view.gamma_w = beta.gamma_w;
  return view;
}

namespace {

inline double slab_mean(const LocalVariationalParams& p, const LocalView& view, int k) {
  return view.unit_weights ? 1.0 : p.nu[k] / p.kappa[k];
}

inline double slab_second_moment(const LocalVariationalParams& p, const LocalView& view, int k) {
  if (view.unit_weights) return 1.0;
  const double m = p.nu[k] / p.kappa[k];
  return m * m + 1.0 / p.kappa[k];
}

/// ELBO given precomputed slab moments and the expected reconstruction r.
double elbo_from_moments(const LocalView& view, const Vector& theta, const Vector& m,
                         const Vector& v, const Vector& kappa, const Vector& r,
                         Strategy variant) {
  const int K = view.feature_count();
  const double g = view.gamma_obs;
  const double gw = view.gamma_w;

  double lik = 0.0;
  double self = 0.0;
  for (int k = 0; k < K; ++k) {
    lik += theta[k] * m[k] * view.s[k] - 0.5 * theta[k] * v[k] * view.q[k];
    const double tm = theta[k] * m[k];
    self += tm * tm * view.p[k];
  }
  lik = g * lik - 0.5 * g * (r.squaredNorm() - self);

  double rest = 0.0;
  for (int k = 0; k < K; ++k) {
    rest += theta[k] * view.logit_prior[k] + bernoulli_entropy(theta[k]);
  }
  if (!view.unit_weights) {
    if (variant == Strategy::kTitsiasSsvi) {
      // The z=0 branch matches the prior exactly, so its prior and entropy
      // terms cancel; only slab terms remain.
      for (int k = 0; k < K; ++k) {
        rest += theta[k] * (0.5 * std::log(gw / kappa[k]) + 0.5 - 0.5 * gw * v[k]);
      }
    } else {
      for (int k = 0; k < K; ++k) {
        rest += -0.5 * gw * v[k] - 0.5 * std::log(kappa[k]);
      }
    }
  }
  return lik + rest;
}

void compute_moments(const LocalVariationalParams& p, const LocalView& view, Vector& m,
                     Vector& v) {
  const int K = view.feature_count();
  m.resize(K);
  v.resize(K);
  for (int k = 0; k < K; ++k) {
    m[k] = slab_mean(p, view, k);
    v[k] = slab_second_moment(p, view, k);
  }
}

Vector expected_reconstruction(const LocalView& view, const Vector& theta, const Vector& m) {
  Vector r = Vector::Zero(view.obs_count());
  for (int k = 0; k < view.feature_count(); ++k) {
    r += (theta[k] * m[k]) * view.phi.row(k).transpose();
  }
  return r;
}

}  // namespace

double local_elbo(const LocalVariationalParams& params, const LocalView& view, Strategy variant) {
  Vector m, v;
  compute_moments(params, view, m, v);
  Vector r = expected_reconstruction(view, params.theta, m);
  return elbo_from_moments(view, params.theta, m, v, params.kappa, r, variant);
}

LocalGrad local_elbo_grad(const LocalVariationalParams& params, const LocalView& view,
                          Strategy variant) {
  const int K = view.feature_count();
  const double g = view.gamma_obs;
  const double gw = view.gamma_w;
  Vector m, v;
  compute_moments(params, view, m, v);
  Vector r = expected_reconstruction(view, params.theta, m);

  LocalGrad grad;
  grad.theta = Vector::Zero(K);
  grad.nu = Vector::Zero(K);
  grad.kappa = Vector::Zero(K);
  const bool titsias = variant == Strategy::kTitsiasSsvi;
  for (int k = 0; k < K; ++k) {
    const double theta = params.theta[k];
    const double kap = params.kappa[k];
    const double nu = params.nu[k];
    const double rho = view.s[k] - (view.phi.row(k).dot(r) - theta * m[k] * view.p[k]);

    double gt = g * (m[k] * rho - 0.5 * v[k] * view.q[k]) + view.logit_prior[k] - logit(theta);
    if (titsias && !view.unit_weights) {
      gt += 0.5 * std::log(gw / kap) + 0.5 - 0.5 * gw * v[k];
    }
    grad.theta[k] = gt;

    if (!view.unit_weights) {
      if (titsias) {
        grad.nu[k] = theta * (g * rho / kap - (g * view.q[k] + gw) * nu / (kap * kap));
        grad.kappa[k] =
            theta * (-g * rho * nu / (kap * kap) +
                     (g * view.q[k] + gw) * (nu * nu / (kap * kap * kap) + 0.5 / (kap * kap)) -
                     0.5 / kap);
      } else {
        const double b = g * theta * view.q[k] + gw;
        grad.nu[k] = g * theta * rho / kap - b * nu / (kap * kap);
        grad.kappa[k] = -g * theta * rho * nu / (kap * kap) +
                        b * (nu * nu / (kap * kap * kap) + 0.5 / (kap * kap)) - 0.5 / kap;
      }
    }
  }
  return grad;
}

LocalFit coordinate_ascent(const LocalView& view, const LocalVariationalParams& init,
                           Strategy variant, const LocalOptions& opts) {
  const int K = view.feature_count();
  const double g = view.gamma_obs;
  const double gw = view.gamma_w;
  const bool titsias = variant == Strategy::kTitsiasSsvi;

  LocalFit fit;
  fit.params = init;
  LocalVariationalParams& p = fit.params;
  if (view.unit_weights) {
    p.nu = p.kappa;  // slab pinned at mean 1
  }

  Vector m, v;
  compute_moments(p, view, m, v);
  Vector r = expected_reconstruction(view, p.theta, m);

  double prev = elbo_from_moments(view, p.theta, m, v, p.kappa, r, variant);
  if (opts.track_elbo) fit.elbo_trace.push_back(prev);
  fit.converged = false;

  for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
    fit.sweeps = sweep;
    for (int k = 0; k < K; ++k) {
      const double old_tm = p.theta[k] * m[k];
      const double rho = view.s[k] - (view.phi.row(k).dot(r) - old_tm * view.p[k]);

      if (!view.unit_weights) {
        if (titsias) {
          p.kappa[k] = g * view.q[k] + gw;
          p.nu[k] = g * rho;
        } else {
          p.kappa[k] = g * p.theta[k] * view.q[k] + gw;
          p.nu[k] = g * p.theta[k] * rho;
        }
        m[k] = p.nu[k] / p.kappa[k];
        v[k] = m[k] * m[k] + 1.0 / p.kappa[k];
      }

      double gt = g * (m[k] * rho - 0.5 * v[k] * view.q[k]) + view.logit_prior[k];
      if (titsias && !view.unit_weights) {
        gt += 0.5 * std::log(gw / p.kappa[k]) + 0.5 - 0.5 * gw * v[k];
      }
      p.theta[k] = std::clamp(sigmoid(gt), kThetaClamp, 1.0 - kThetaClamp);

      const double new_tm = p.theta[k] * m[k];
      if (new_tm != old_tm) {
        r += (new_tm - old_tm) * view.phi.row(k).transpose();
      }
    }

    const double cur = elbo_from_moments(view, p.theta, m, v, p.kappa, r, variant);
    if (opts.track_elbo) fit.elbo_trace.push_back(cur);
    if (std::abs(cur - prev) <= opts.rel_tol * std::max(1.0, std::abs(cur))) {
      prev = cur;
      fit.converged = true;
      break;
    }
    prev = cur;
  }

  fit.stats = stats_from_variational(p, view, variant, opts.paper_literal_mu);
  return fit;
}

NaturalStats stats_from_variational(const LocalVariationalParams& params, const LocalView& view,
                                    Strategy variant, bool paper_literal_mu) {
  const int K = view.feature_count();
  const int n_obs = view.obs_count();
  const double g = view.gamma_obs;
  const double obs_scale = view.dim > 0 ? static_cast<double>(n_obs) / view.dim : 0.0;
  const double g_mu = paper_literal_mu ? 1.0 : g;

  Vector m, v;
  compute_moments(params, view, m, v);
  Vector r = expected_reconstruction(view, params.theta, m);
  Vector res = view.y - r;

  NaturalStats st = NaturalStats::zero(K, view.dim);
  st.z_sum = params.theta;
  st.z_comp_sum = Vector::Ones(K) - params.theta;
  st.c_count = 0.5 * n_obs;
  st.e_count = 0.5 * K;

  double d_corr = 0.0;
  for (int k = 0; k < K; ++k) {
    const double theta = params.theta[k];
    const double tm = theta * m[k];
    d_corr += theta * v[k] * view.q[k] - tm * tm * view.p[k];
    st.tau_stat[k] = g * theta * v[k] * obs_scale;

    double w2;
    if (view.unit_weights) {
      w2 = 1.0;
    } else if (variant == Strategy::kTitsiasSsvi) {
      w2 = theta * v[k] + (1.0 - theta) / view.gamma_w;
    } else {
      w2 = v[k];
    }
    st.f_stat += 0.5 * w2;

    const double coeff = g_mu * tm;
    if (coeff != 0.0) {
      for (int j = 0; j < n_obs; ++j) {
        st.mu_stat(k, view.cols[static_cast<std::size_t>(j)]) =
            coeff * (res[j] + tm * view.phi(k, j));
      }
    }
  }
  st.d_stat = 0.5 * (res.squaredNorm() + d_corr);
  return st;
}

void gibbs_feature_sweep(const LocalView& view, std::span<std::uint8_t> z, Vector& w, Vector& res,
                         Rng& rng, bool random_scan) {
  const int K = view.feature_count();
  const double g = view.gamma_obs;
  const double gw = view.gamma_w;
  const double w_sd = 1.0 / std::sqrt(gw);

  std::vector<int> order;
  if (random_scan) {
    order.resize(static_cast<std::size_t>(K));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
  }

  for (int idx = 0; idx < K; ++idx) {
    const int k = random_scan ? order[static_cast<std::size_t>(idx)] : idx;
    if (z[static_cast<std::size_t>(k)]) {
      res += w[k] * view.phi.row(k).transpose();
    }
    const double t = view.phi.row(k).dot(res);

    const double log_odds =
        view.logit_prior[k] - 0.5 * g * w[k] * w[k] * view.q[k] + g * w[k] * t;
    z[static_cast<std::size_t>(k)] = rng.bernoulli(sigmoid(log_odds)) ? 1 : 0;

    if (!view.unit_weights) {
      if (z[static_cast<std::size_t>(k)]) {
        const double prec = g * view.q[k] + gw;
        w[k] = rng.normal(g * t / prec, 1.0 / std::sqrt(prec));
      } else {
        w[k] = rng.normal(0.0, w_sd);
      }
    }
    if (z[static_cast<std::size_t>(k)]) {
      res -= w[k] * view.phi.row(k).transpose();
    }
  }
}

NaturalStats gibbs_local_chain(const LocalView& view, const GibbsOptions& gopts, Rng& rng,
                               const LocalOptions& opts, std::vector<LocalSample>* retained) {
  gopts.validate();
  const int K = view.feature_count();
  const int n_obs = view.obs_count();
  const double g = view.gamma_obs;
  const double gw = view.gamma_w;
  const double obs_scale = view.dim > 0 ? static_cast<double>(n_obs) / view.dim : 0.0;
  const double g_mu = opts.paper_literal_mu ? 1.0 : g;

  // Short chains are sensitive to their start: dense random starts leave
  // junk activations alive through the burn-in and inflate the feature
  // counts and residuals the global update sees.
  std::vector<std::uint8_t> z(static_cast<std::size_t>(K));
  Vector w(K);
  const double w_sd = 1.0 / std::sqrt(gw);
  for (int k = 0; k < K; ++k) {
    double p0 = 0.0;
    if (gopts.init == GibbsOptions::Init::kPrior) p0 = sigmoid(view.logit_prior[k]);
    if (gopts.init == GibbsOptions::Init::kHalf) p0 = 0.5;
    z[static_cast<std::size_t>(k)] = p0 > 0.0 && rng.bernoulli(p0) ? 1 : 0;
    w[k] = view.unit_weights ? 1.0 : rng.normal(0.0, w_sd);
  }

  Vector res = view.y;
  for (int k = 0; k < K; ++k) {
    if (z[static_cast<std::size_t>(k)]) res -= w[k] * view.phi.row(k).transpose();
  }

  NaturalStats st = NaturalStats::zero(K, view.dim);
  st.c_count = 0.5 * n_obs;
  st.e_count = 0.5 * K;

  const int total_sweeps = gopts.burn_in + gopts.n_samples;
  for (int sweep = 1; sweep <= total_sweeps; ++sweep) {
    gibbs_feature_sweep(view, z, w, res, rng, gopts.random_scan);

    if (sweep > gopts.burn_in) {
      double d_corr = 0.0;
      for (int k = 0; k < K; ++k) {
        const bool on = z[static_cast<std::size_t>(k)] != 0;
        st.z_sum[k] += on ? 1.0 : 0.0;
        st.z_comp_sum[k] += on ? 0.0 : 1.0;
        st.f_stat += 0.5 * w[k] * w[k];
        if (on) {
          d_corr += w[k] * w[k] * (view.q[k] - view.p[k]);
          st.tau_stat[k] += g * w[k] * w[k] * obs_scale;
          const double coeff = g_mu * w[k];
          for (int j = 0; j < n_obs; ++j) {
            st.mu_stat(k, view.cols[static_cast<std::size_t>(j)]) +=
                coeff * (res[j] + w[k] * view.phi(k, j));
          }
        }
      }
      st.d_stat += 0.5 * (res.squaredNorm() + d_corr);
      if (retained) {
        LocalSample sample;
        sample.z = z;
        sample.w = w;
        retained->push_back(std::move(sample));
      }
    }
  }

  const double inv = 1.0 / gopts.n_samples;
  st.z_sum *= inv;
  st.z_comp_sum *= inv;
  st.d_stat *= inv;
  st.f_stat *= inv;
  st.tau_stat *= inv;
  st.mu_stat *= inv;
  return st;
}

LocalFit mf_svi_local(const ExpectedGlobals& moments, RowRef y, std::span<const int> obs,
                      const LocalVariationalParams& init, const LocalOptions& opts) {
  LocalView view = make_local_view(moments, y, obs, static_cast<int>(y.size()));
  view.unit_weights = opts.fixed_unit_weights;
  return coordinate_ascent(view, init, Strategy::kMfSvi, opts);
}

LocalFit mf_ssvi_local(const GlobalSample& beta, RowRef y, std::span<const int> obs,
                       const LocalVariationalParams& init, const LocalOptions& opts) {
  LocalView view = make_local_view(beta, y, obs, static_cast<int>(y.size()));
  view.unit_weights = opts.fixed_unit_weights;
  return coordinate_ascent(view, init, Strategy::kMfSsvi, opts);
}

LocalFit titsias_ssvi_local(const GlobalSample& beta, RowRef y, std::span<const int> obs,
                            const LocalVariationalParams& init, const LocalOptions& opts) {
  LocalView view = make_local_view(beta, y, obs, static_cast<int>(y.size()));
  view.unit_weights = opts.fixed_unit_weights;
  return coordinate_ascent(view, init, Strategy::kTitsiasSsvi, opts);
}

NaturalStats mimno_gibbs_local(const ExpectedGlobals& moments, RowRef y, std::span<const int> obs,
                               const GibbsOptions& gopts, Rng& rng, const LocalOptions& opts,
                               std::vector<LocalSample>* retained) {
  LocalView view = make_local_view(moments, y, obs, static_cast<int>(y.size()));
  view.unit_weights = opts.fixed_unit_weights;
  return gibbs_local_chain(view, gopts, rng, opts, retained);
}

NaturalStats gibbs_ssvi_local(const GlobalSample& beta, RowRef y, std::span<const int> obs,
                              const GibbsOptions& gopts, Rng& rng, const LocalOptions& opts,
                              std::vector<LocalSample>* retained) {
  LocalView view = make_local_view(beta, y, obs, static_cast<int>(y.size()));
  view.unit_weights = opts.fixed_unit_weights;
  return gibbs_local_chain(view, gopts, rng, opts, retained);
}

}  // namespace bpfa
