#include "oracles.hpp"

#include <cmath>

#include "bpfa/special.hpp"

namespace bpfa::oracle {

namespace {

// log N(y; 0, Sigma) for small dense Sigma.
double log_mvn_zero(const Vector& y, const Eigen::MatrixXd& sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  const Eigen::MatrixXd L = llt.matrixL();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < L.rows(); ++i) log_det += 2.0 * std::log(L(i, i));
  const Vector alpha = llt.solve(y);
  return -0.5 * (y.size() * std::log(2.0 * M_PI) + log_det + y.dot(alpha));
}

struct QuadraticEnumeration {
  std::vector<double> weights;            // normalized, per configuration
  std::vector<Vector> means;              // conditional w mean per configuration
  std::vector<Eigen::MatrixXd> covs;      // conditional w covariance per configuration
  std::vector<std::vector<int>> configs;  // z bits per configuration
};

// Enumerates z configurations of a local density of the form
// exp(sum_k z_k delta_k - 1/2 w' M_z w + v_z' w), integrating w analytically:
// M_z = gw I + g (diag(z o q) + offdiag(z z' o cross)), v_z = g (z o s).
QuadraticEnumeration enumerate_quadratic_local(const Vector& delta, const Vector& s,
                                               const Vector& q, const Eigen::MatrixXd& cross,
                                               double g, double gw) {
  const int K = static_cast<int>(delta.size());
  QuadraticEnumeration out;
  std::vector<double> log_weights;
  for (int bits = 0; bits < (1 << K); ++bits) {
    std::vector<int> z(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) z[static_cast<std::size_t>(k)] = (bits >> k) & 1;

    Eigen::MatrixXd M = gw * Eigen::MatrixXd::Identity(K, K);
    Vector v = Vector::Zero(K);
    double log_w = 0.0;
    for (int k = 0; k < K; ++k) {
      if (!z[static_cast<std::size_t>(k)]) continue;
      log_w += delta[k];
      M(k, k) += g * q[k];
      v[k] = g * s[k];
      for (int j = 0; j < K; ++j) {
        if (j != k && z[static_cast<std::size_t>(j)]) M(k, j) += g * cross(k, j);
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    const Eigen::MatrixXd L = llt.matrixL();
    double log_det = 0.0;
    for (int i = 0; i < K; ++i) log_det += 2.0 * std::log(L(i, i));
    const Vector mean = llt.solve(v);
    log_w += 0.5 * v.dot(mean) - 0.5 * log_det;

    log_weights.push_back(log_w);
    out.means.push_back(mean);
    out.covs.push_back(llt.solve(Eigen::MatrixXd::Identity(K, K)));
    out.configs.push_back(std::move(z));
  }
  const double lse = log_sum_exp(log_weights);
  out.weights.resize(log_weights.size());
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    out.weights[i] = std::exp(log_weights[i] - lse);
  }
  return out;
}

void mimno_inner_products(const ExpectedGlobals& moments, const Matrix& phi_mean_obs,
                          int obs_count, const Vector& y_obs, Vector& s, Vector& q,
                          Eigen::MatrixXd& cross) {
  const int K = static_cast<int>(phi_mean_obs.rows());
  s.resize(K);
  q.resize(K);
  cross.resize(K, K);
  for (int k = 0; k < K; ++k) {
    s[k] = phi_mean_obs.row(k).dot(y_obs);
    q[k] = phi_mean_obs.row(k).squaredNorm() + obs_count * moments.phi_var[k];
    for (int j = 0; j < K; ++j) cross(k, j) = phi_mean_obs.row(k).dot(phi_mean_obs.row(j));
  }
}

}  // namespace

Vector exact_z_marginals(const GlobalSample& beta, const Vector& y_obs, const Matrix& phi_obs) {
  const int K = beta.feature_count();
  const int n = static_cast<int>(y_obs.size());
  std::vector<double> log_weights;
  for (int bits = 0; bits < (1 << K); ++bits) {
    double log_w = 0.0;
    Eigen::MatrixXd sigma = (1.0 / beta.gamma_obs) * Eigen::MatrixXd::Identity(n, n);
    for (int k = 0; k < K; ++k) {
      if ((bits >> k) & 1) {
        log_w += std::log(beta.pi[k]);
        sigma += (1.0 / beta.gamma_w) * phi_obs.row(k).transpose() * phi_obs.row(k);
      } else {
        log_w += std::log1p(-beta.pi[k]);
      }
    }
    log_w += log_mvn_zero(y_obs, sigma);
    log_weights.push_back(log_w);
  }
  const double lse = log_sum_exp(log_weights);
  Vector marginals = Vector::Zero(K);
  for (int bits = 0; bits < (1 << K); ++bits) {
    const double w = std::exp(log_weights[static_cast<std::size_t>(bits)] - lse);
    for (int k = 0; k < K; ++k) {
      if ((bits >> k) & 1) marginals[k] += w;
    }
  }
  return marginals;
}

Vector mimno_z_marginals(const ExpectedGlobals& moments, const Vector& y_obs, int obs_count,
                         const Matrix& phi_mean_obs) {
  const int K = static_cast<int>(phi_mean_obs.rows());
  Vector s, q;
  Eigen::MatrixXd cross;
  mimno_inner_products(moments, phi_mean_obs, obs_count, y_obs, s, q, cross);
  QuadraticEnumeration en = enumerate_quadratic_local(moments.logit_pi, s, q, cross,
                                                      moments.gamma_obs, moments.gamma_w);
  Vector marginals = Vector::Zero(K);
  for (std::size_t i = 0; i < en.weights.size(); ++i) {
    for (int k = 0; k < K; ++k) {
      if (en.configs[i][static_cast<std::size_t>(k)]) marginals[k] += en.weights[i];
    }
  }
  return marginals;
}

NaturalStats mimno_exact_stats(const ExpectedGlobals& moments, RowRef y, std::span<const int> obs,
                               int D) {
  const int K = static_cast<int>(moments.logit_pi.size());
  const int n = static_cast<int>(obs.size());
  Vector y_obs(n);
  Matrix phi_obs(K, n);
  for (int j = 0; j < n; ++j) {
    y_obs[j] = y[obs[static_cast<std::size_t>(j)]];
    for (int k = 0; k < K; ++k) {
      phi_obs(k, j) = moments.phi_mean(k, obs[static_cast<std::size_t>(j)]);
    }
  }
  Vector s, q;
  Eigen::MatrixXd cross;
  mimno_inner_products(moments, phi_obs, n, y_obs, s, q, cross);
  QuadraticEnumeration en = enumerate_quadratic_local(moments.logit_pi, s, q, cross,
                                                      moments.gamma_obs, moments.gamma_w);

  // Joint moments over (z, w).
  Vector ez = Vector::Zero(K), ezw = Vector::Zero(K), ezww = Vector::Zero(K),
         eww = Vector::Zero(K);
  Eigen::MatrixXd ezzww = Eigen::MatrixXd::Zero(K, K);
  for (std::size_t i = 0; i < en.weights.size(); ++i) {
    const double wgt = en.weights[i];
    const Vector& mean = en.means[i];
    const Eigen::MatrixXd& cov = en.covs[i];
    for (int k = 0; k < K; ++k) {
      const double second = cov(k, k) + mean[k] * mean[k];
      eww[k] += wgt * second;
      if (!en.configs[i][static_cast<std::size_t>(k)]) continue;
      ez[k] += wgt;
      ezw[k] += wgt * mean[k];
      ezww[k] += wgt * second;
      for (int j = 0; j < K; ++j) {
        if (j != k && en.configs[i][static_cast<std::size_t>(j)]) {
          ezzww(k, j) += wgt * (cov(k, j) + mean[k] * mean[j]);
        }
      }
    }
  }

  const double g = moments.gamma_obs;
  const double obs_scale = static_cast<double>(n) / D;
  NaturalStats st = NaturalStats::zero(K, D);
  st.z_sum = ez;
  st.z_comp_sum = Vector::Ones(K) - ez;
  st.c_count = 0.5 * n;
  st.e_count = 0.5 * K;
  for (int k = 0; k < K; ++k) {
    st.f_stat += 0.5 * eww[k];
    st.tau_stat[k] = g * ezww[k] * obs_scale;
  }
  double d2 = y_obs.squaredNorm();
  for (int k = 0; k < K; ++k) {
    d2 += -2.0 * ezw[k] * s[k] + ezww[k] * q[k];
    for (int j = 0; j < K; ++j) {
      if (j != k) d2 += ezzww(k, j) * cross(k, j);
    }
  }
  st.d_stat = 0.5 * d2;
  for (int k = 0; k < K; ++k) {
    for (int j = 0; j < n; ++j) {
      const int col = obs[static_cast<std::size_t>(j)];
      double cross_term = 0.0;
      for (int l = 0; l < K; ++l) {
        if (l != k) cross_term += ezzww(k, l) * phi_obs(l, j);
      }
      st.mu_stat(k, col) = g * (ezw[k] * y_obs[j] - cross_term);
    }
  }
  return st;
}

double full_elbo_enumeration(const GlobalVariationalState& state, const Dataset& data,
                             const Hyperparameters& hyper) {
  const int K = state.feature_count();
  const int D = state.dim();
  const ExpectedGlobals m = expected_global(state);

  double elbo = 0.0;
  for (int i = 0; i < data.rows(); ++i) {
    std::vector<int> obs;
    for (int d = 0; d < D; ++d) {
      if (data.mask(i, d)) obs.push_back(d);
    }
    const int n = static_cast<int>(obs.size());
    Vector y_obs(n);
    Matrix phi_obs(K, n);
    for (int j = 0; j < n; ++j) {
      y_obs[j] = data.Y(i, obs[static_cast<std::size_t>(j)]);
      for (int k = 0; k < K; ++k) phi_obs(k, j) = m.phi_mean(k, obs[static_cast<std::size_t>(j)]);
    }
    Vector s, q;
    Eigen::MatrixXd cross;
    mimno_inner_products(m, phi_obs, n, y_obs, s, q, cross);
    QuadraticEnumeration en =
        enumerate_quadratic_local(m.logit_pi, s, q, cross, m.gamma_obs, m.gamma_w);

    // Recompute the unnormalized log weights to get log Z_i itself.
    std::vector<double> log_weights;
    for (int bits = 0; bits < (1 << K); ++bits) {
      Eigen::MatrixXd M = m.gamma_w * Eigen::MatrixXd::Identity(K, K);
      Vector v = Vector::Zero(K);
      double log_w = 0.0;
      for (int k = 0; k < K; ++k) {
        if (!((bits >> k) & 1)) continue;
        log_w += m.logit_pi[k];
        M(k, k) += m.gamma_obs * q[k];
        v[k] = m.gamma_obs * s[k];
        for (int j = 0; j < K; ++j) {
          if (j != k && ((bits >> j) & 1)) M(k, j) += m.gamma_obs * cross(k, j);
        }
      }
      Eigen::LLT<Eigen::MatrixXd> llt(M);
      const Eigen::MatrixXd L = llt.matrixL();
      double log_det = 0.0;
      for (int kk = 0; kk < K; ++kk) log_det += 2.0 * std::log(L(kk, kk));
      log_w += 0.5 * v.dot(llt.solve(v)) - 0.5 * log_det;
      log_weights.push_back(log_w);
    }
    (void)en;

    double const_i = 0.5 * n * (digamma(state.c) - std::log(state.d) - std::log(2.0 * M_PI)) -
                     0.5 * m.gamma_obs * y_obs.squaredNorm() +
                     0.5 * K * (digamma(state.e) - std::log(state.f) - std::log(2.0 * M_PI));
    for (int k = 0; k < K; ++k) {
      const_i += digamma(state.b_k[k]) - digamma(state.a_k[k] + state.b_k[k]);
    }
    elbo += const_i + 0.5 * K * std::log(2.0 * M_PI) + log_sum_exp(log_weights);
  }

  // KL(q(beta) || p(beta)) factor by factor.
  const double alpha0 = hyper.a / hyper.K;
  const double beta0 = hyper.b * (hyper.K - 1) / hyper.K;
  for (int k = 0; k < K; ++k) {
    const double a = state.a_k[k];
    const double b = state.b_k[k];
    elbo -= log_beta_fn(alpha0, beta0) - log_beta_fn(a, b) + (a - alpha0) * digamma(a) +
            (b - beta0) * digamma(b) + (alpha0 - a + beta0 - b) * digamma(a + b);
  }
  auto gamma_kl = [](double c, double d, double c0, double d0) {
    return (c - c0) * digamma(c) - std::lgamma(c) + std::lgamma(c0) +
           c0 * (std::log(d) - std::log(d0)) + c * (d0 - d) / d;
  };
  elbo -= gamma_kl(state.c, state.d, hyper.c_prior, hyper.d_prior);
  elbo -= gamma_kl(state.e, state.f, hyper.e_prior, hyper.f_prior);
  for (int k = 0; k < K; ++k) {
    for (int d = 0; d < D; ++d) {
      const double mean = state.mu(k, d) / state.tau_k[k];
      elbo -= 0.5 * std::log(state.tau_k[k] / D) +
              0.5 * D * (1.0 / state.tau_k[k] + mean * mean) - 0.5;
    }
  }
  return elbo;
}

namespace {

double reference_elbo_impl(const LocalVariationalParams& params, const Vector& logit_prior,
                           double g, double gw, const Vector& y_obs, const Matrix& phi_obs,
                           const Vector& q, Strategy variant) {
  const int K = static_cast<int>(params.theta.size());
  double elbo = 0.0;
  for (int k = 0; k < K; ++k) {
    const double theta = params.theta[k];
    const double mk = params.nu[k] / params.kappa[k];
    const double vk = mk * mk + 1.0 / params.kappa[k];
    double inner = 2.0 * mk * phi_obs.row(k).dot(y_obs) - vk * q[k];
    for (int j = 0; j < K; ++j) {
      if (j == k) continue;
      inner -= params.theta[j] * (params.nu[j] / params.kappa[j]) * mk *
               phi_obs.row(j).dot(phi_obs.row(k));
    }
    elbo += 0.5 * g * theta * inner;
    elbo += theta * logit_prior[k];
    elbo -= theta * std::log(theta) + (1.0 - theta) * std::log1p(-theta);
    if (variant == Strategy::kTitsiasSsvi) {
      elbo += theta * (0.5 * std::log(gw / params.kappa[k]) + 0.5 - 0.5 * gw * vk);
    } else {
      elbo += -0.5 * gw * vk - 0.5 * std::log(params.kappa[k]);
    }
  }
  return elbo;
}

}  // namespace

double reference_local_elbo(const LocalVariationalParams& params, const GlobalSample& beta,
                            const Vector& y_obs, const Matrix& phi_obs, Strategy variant) {
  const int K = beta.feature_count();
  Vector lp(K), q(K);
  for (int k = 0; k < K; ++k) {
    lp[k] = logit(beta.pi[k]);
    q[k] = phi_obs.row(k).squaredNorm();
  }
  return reference_elbo_impl(params, lp, beta.gamma_obs, beta.gamma_w, y_obs, phi_obs, q, variant);
}

double reference_local_elbo(const LocalVariationalParams& params, const ExpectedGlobals& moments,
                            const Vector& y_obs, const Matrix& phi_mean_obs, int obs_count,
                            Strategy variant) {
  const int K = static_cast<int>(moments.logit_pi.size());
  Vector q(K);
  for (int k = 0; k < K; ++k) {
    q[k] = phi_mean_obs.row(k).squaredNorm() + obs_count * moments.phi_var[k];
  }
  return reference_elbo_impl(params, moments.logit_pi, moments.gamma_obs, moments.gamma_w, y_obs,
                             phi_mean_obs, q, variant);
}

std::vector<double> maximize_coordinatewise(
    const std::function<double(std::span<const double>)>& fn, std::vector<double> x,
    std::vector<double> lo, std::vector<double> hi, int rounds) {
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int round = 0; round < rounds; ++round) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      double a = lo[i], b = hi[i];
      double c = b - gr * (b - a);
      double d = a + gr * (b - a);
      for (int it = 0; it < 80; ++it) {
        x[i] = c;
        const double fc = fn(x);
        x[i] = d;
        const double fd = fn(x);
        if (fc > fd) {
          b = d;
        } else {
          a = c;
        }
        c = b - gr * (b - a);
        d = a + gr * (b - a);
      }
      x[i] = 0.5 * (a + b);
    }
  }
  return x;
}

double simpson(const std::function<double(double)>& fn, double lo, double hi, int intervals) {
  if (intervals % 2 != 0) ++intervals;
  const double h = (hi - lo) / intervals;
  double sum = fn(lo) + fn(hi);
  for (int i = 1; i < intervals; ++i) {
    sum += fn(lo + i * h) * (i % 2 == 0 ? 2.0 : 4.0);
  }
  return sum * h / 3.0;
}

}  // namespace bpfa::oracle
