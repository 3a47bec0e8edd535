#include "bpfa/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "bpfa/special.hpp"

namespace bpfa {

void Hyperparameters::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("hyperparameter ") + name + " must be > 0");
    }
  };
  positive(a, "a");
  positive(b, "b");
  positive(c_prior, "c_prior");
  positive(d_prior, "d_prior");
  positive(e_prior, "e_prior");
  positive(f_prior, "f_prior");
  if (K < 2) {
    throw std::invalid_argument("truncation K must be >= 2 (K = 1 gives Beta(a, 0))");
  }
  if (t0 < 0.0 || !std::isfinite(t0)) {
    throw std::invalid_argument("t0 must be >= 0");
  }
  if (!(zeta > 0.5) || !(zeta <= 1.0)) {
    throw std::invalid_argument("zeta must lie in (0.5, 1]");
  }
}

bool Dataset::fully_observed() const {
  return mask.size() == 0 || mask.minCoeff() == 1;
}

void Dataset::validate() const {
  if (mask.rows() != Y.rows() || mask.cols() != Y.cols()) {
    throw std::invalid_argument("mask and Y must have identical shape");
  }
  if (!row_ids.empty() && static_cast<Eigen::Index>(row_ids.size()) != Y.rows()) {
    throw std::invalid_argument("row_ids length must match Y rows");
  }
  for (Eigen::Index i = 0; i < mask.rows(); ++i) {
    if (mask.row(i).maxCoeff() == 0) {
      throw std::invalid_argument("row " + std::to_string(i) + " has no observed entries");
    }
  }
}

Dataset Dataset::fully_observed_from(Matrix Y) {
  Dataset d;
  d.mask = MaskMatrix::Ones(Y.rows(), Y.cols());
  d.row_ids.resize(static_cast<std::size_t>(Y.rows()));
  for (std::size_t i = 0; i < d.row_ids.size(); ++i) d.row_ids[i] = static_cast<std::int64_t>(i);
  d.Y = std::move(Y);
  return d;
}

MaskIndex::MaskIndex(const Dataset& data) {
  const int n = data.rows();
  const int dim = data.cols();
  cols_.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& c = cols_[static_cast<std::size_t>(i)];
    c.reserve(static_cast<std::size_t>(dim));
    for (int d = 0; d < dim; ++d) {
      if (data.mask(i, d)) c.push_back(d);
    }
    total_ += static_cast<long>(c.size());
    if (static_cast<int>(c.size()) != dim) all_observed_ = false;
  }
}

Vector sample_truncated_beta_process(const Hyperparameters& hyper, Rng& rng) {
  hyper.validate();
  const double alpha = hyper.a / hyper.K;
  const double beta = hyper.b * (hyper.K - 1) / hyper.K;
  Vector pi(hyper.K);
  for (int k = 0; k < hyper.K; ++k) pi[k] = rng.beta(alpha, beta);
  return pi;
}

GenerativeDraw sample_generative_given_pi(const Vector& pi, int N, int D, double gamma_w,
                                          double gamma_obs, Rng& rng) {
  if (N < 1 || D < 1) throw std::invalid_argument("N and D must be >= 1");
  if (!(gamma_w > 0.0) || !(gamma_obs > 0.0)) {
    throw std::invalid_argument("gamma_w and gamma_obs must be > 0");
  }
  const int K = static_cast<int>(pi.size());

  GenerativeDraw out;
  out.global.pi = pi;
  out.global.gamma_w = gamma_w;
  out.global.gamma_obs = gamma_obs;
  out.global.Phi.resize(K, D);
  const double phi_sd = 1.0 / std::sqrt(static_cast<double>(D));
  for (int k = 0; k < K; ++k) {
    for (int d = 0; d < D; ++d) out.global.Phi(k, d) = rng.normal(0.0, phi_sd);
  }

  const double w_sd = 1.0 / std::sqrt(gamma_w);
  const double noise_sd = 1.0 / std::sqrt(gamma_obs);
  Matrix Y(N, D);
  out.locals.resize(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    LocalSample& loc = out.locals[static_cast<std::size_t>(i)];
    loc.z.resize(static_cast<std::size_t>(K));
    loc.w.resize(K);
    Eigen::RowVectorXd signal = Eigen::RowVectorXd::Zero(D);
    for (int k = 0; k < K; ++k) {
      loc.z[static_cast<std::size_t>(k)] = rng.bernoulli(pi[k]) ? 1 : 0;
      loc.w[k] = rng.normal(0.0, w_sd);
      if (loc.z[static_cast<std::size_t>(k)]) signal += loc.w[k] * out.global.Phi.row(k);
    }
    for (int d = 0; d < D; ++d) Y(i, d) = signal[d] + rng.normal(0.0, noise_sd);
  }
  out.data = Dataset::fully_observed_from(std::move(Y));
  return out;
}

GenerativeDraw sample_generative(const Hyperparameters& hyper, int N, int D, double gamma_w,
                                 double gamma_obs, Rng& rng) {
  Vector pi = sample_truncated_beta_process(hyper, rng);
  return sample_generative_given_pi(pi, N, D, gamma_w, gamma_obs, rng);
}

double log_joint(const GlobalSample& beta, const std::vector<LocalSample>& psi,
                 const Dataset& data, const Hyperparameters& hyper) {
  hyper.validate();
  const int K = beta.feature_count();
  const int D = beta.dim();
  const int N = data.rows();
  if (beta.Phi.rows() != K) throw std::invalid_argument("Phi rows must equal K");
  if (static_cast<int>(psi.size()) != N) throw std::invalid_argument("psi size must equal N");
  if (N > 0 && data.cols() != D) throw std::invalid_argument("data dim mismatch");

  const double neg_inf = -std::numeric_limits<double>::infinity();
  double lp = 0.0;

  // Global priors.
  const double alpha0 = hyper.a / hyper.K;
  const double beta0 = hyper.b * (hyper.K - 1) / hyper.K;
  for (int k = 0; k < K; ++k) {
    lp += log_beta_pdf(beta.pi[k], alpha0, beta0);
    for (int d = 0; d < D; ++d) {
      lp += log_normal_pdf(beta.Phi(k, d), 0.0, static_cast<double>(D));
    }
  }
  lp += log_gamma_pdf(beta.gamma_obs, hyper.c_prior, hyper.d_prior);
  lp += log_gamma_pdf(beta.gamma_w, hyper.e_prior, hyper.f_prior);
  if (!std::isfinite(lp)) return neg_inf;

  // Locals and likelihood over observed entries.
  for (int i = 0; i < N; ++i) {
    const LocalSample& loc = psi[static_cast<std::size_t>(i)];
    Eigen::RowVectorXd signal = Eigen::RowVectorXd::Zero(D);
    for (int k = 0; k < K; ++k) {
      const bool on = loc.z[static_cast<std::size_t>(k)] != 0;
      const double p = beta.pi[k];
      if (on) {
        if (p <= 0.0) return neg_inf;
        lp += std::log(p);
        signal += loc.w[k] * beta.Phi.row(k);
      } else {
        if (p >= 1.0) return neg_inf;
        lp += std::log1p(-p);
      }
      lp += log_normal_pdf(loc.w[k], 0.0, beta.gamma_w);
    }
    for (int d = 0; d < D; ++d) {
      if (data.mask(i, d)) {
        lp += log_normal_pdf(data.Y(i, d), signal[d], beta.gamma_obs);
      }
    }
  }
  return lp;
}

}  // namespace bpfa
