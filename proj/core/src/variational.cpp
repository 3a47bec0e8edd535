#include "bpfa/variational.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "bpfa/special.hpp"

namespace bpfa {

namespace {

constexpr double kPositivityFloor = 1e-30;

double clamp_positive(double v, const char* name) {
  if (v > kPositivityFloor) return v;
  std::cerr << "bpfa: clamping " << name << " = " << v << " to " << kPositivityFloor << "\n";
  if (!(v > 0.0)) {
    throw std::runtime_error(std::string("degenerate variational state: ") + name + " <= 0");
  }
  return kPositivityFloor;
}

}  // namespace

void GlobalVariationalState::check_valid() const {
  auto all_positive = [](const Vector& v, const char* name) {
    if (v.size() == 0 || v.minCoeff() <= 0.0) {
      throw std::runtime_error(std::string("degenerate variational state: ") + name);
    }
  };
  all_positive(a_k, "a_k");
  all_positive(b_k, "b_k");
  all_positive(tau_k, "tau_k");
  if (c <= 0.0 || d <= 0.0 || e <= 0.0 || f <= 0.0) {
    throw std::runtime_error("degenerate variational state: gamma parameters");
  }
}

NaturalStats NaturalStats::zero(int K, int D) {
  NaturalStats s;
  s.z_sum = Vector::Zero(K);
  s.z_comp_sum = Vector::Zero(K);
  s.tau_stat = Vector::Zero(K);
  s.mu_stat = Matrix::Zero(K, D);
  return s;
}

NaturalStats& NaturalStats::operator+=(const NaturalStats& other) {
  z_sum += other.z_sum;
  z_comp_sum += other.z_comp_sum;
  c_count += other.c_count;
  d_stat += other.d_stat;
  e_count += other.e_count;
  f_stat += other.f_stat;
  tau_stat += other.tau_stat;
  mu_stat += other.mu_stat;
  return *this;
}

GlobalVariationalState prior_natural(const Hyperparameters& hyper, int D) {
  hyper.validate();
  if (D < 1) throw std::invalid_argument("D must be >= 1");
  GlobalVariationalState s;
  s.a_k = Vector::Constant(hyper.K, hyper.a / hyper.K);
  s.b_k = Vector::Constant(hyper.K, hyper.b * (hyper.K - 1) / hyper.K);
  s.c = hyper.c_prior;
  s.d = hyper.d_prior;
  s.e = hyper.e_prior;
  s.f = hyper.f_prior;
  s.tau_k = Vector::Constant(hyper.K, static_cast<double>(D));
  s.mu = Matrix::Zero(hyper.K, D);
  return s;
}

double step_size(long t, const Hyperparameters& hyper) {
  if (t < 1) throw std::invalid_argument("step_size requires t >= 1");
  return std::pow(static_cast<double>(t) + hyper.t0, -hyper.zeta);
}

namespace {

NaturalStats sum_stats(std::span<const NaturalStats> stats, int K, int D) {
  NaturalStats total = NaturalStats::zero(K, D);
  for (const NaturalStats& s : stats) total += s;
  return total;
}

}  // namespace

GlobalVariationalState svi_step(const GlobalVariationalState& state,
                                std::span<const NaturalStats> batch, long total_n, double rho,
                                const Hyperparameters& hyper) {
  if (batch.empty()) throw std::invalid_argument("svi_step requires a nonempty batch");
  if (rho < 0.0 || rho > 1.0) throw std::invalid_argument("rho must lie in [0, 1]");
  if (rho == 0.0) return state;
  const int K = state.feature_count();
  const int D = state.dim();

  const double scale = static_cast<double>(total_n) / static_cast<double>(batch.size());
  NaturalStats total = sum_stats(batch, K, D);
  GlobalVariationalState prior = prior_natural(hyper, D);

  const double keep = 1.0 - rho;
  GlobalVariationalState out;
  out.a_k = keep * state.a_k + rho * (prior.a_k + scale * total.z_sum);
  out.b_k = keep * state.b_k + rho * (prior.b_k + scale * total.z_comp_sum);
  out.c = keep * state.c + rho * (prior.c + scale * total.c_count);
  out.d = keep * state.d + rho * (prior.d + scale * total.d_stat);
  out.e = keep * state.e + rho * (prior.e + scale * total.e_count);
  out.f = keep * state.f + rho * (prior.f + scale * total.f_stat);
  out.tau_k = keep * state.tau_k + rho * (prior.tau_k + scale * total.tau_stat);
  out.mu = keep * state.mu + rho * scale * total.mu_stat;

  for (int k = 0; k < K; ++k) {
    out.a_k[k] = clamp_positive(out.a_k[k], "a_k");
    out.b_k[k] = clamp_positive(out.b_k[k], "b_k");
    out.tau_k[k] = clamp_positive(out.tau_k[k], "tau_k");
  }
  out.c = clamp_positive(out.c, "c");
  out.d = clamp_positive(out.d, "d");
  out.e = clamp_positive(out.e, "e");
  out.f = clamp_positive(out.f, "f");
  return out;
}

GlobalVariationalState full_batch_cavi_update(const Hyperparameters& hyper, int D,
                                              std::span<const NaturalStats> all_stats) {
  if (all_stats.empty()) throw std::invalid_argument("full_batch_cavi_update requires stats");
  const int K = hyper.K;
  NaturalStats total = sum_stats(all_stats, K, D);

  GlobalVariationalState out = prior_natural(hyper, D);
  out.a_k += total.z_sum;
  out.b_k += total.z_comp_sum;
  out.c += total.c_count;
  out.d += total.d_stat;
  out.e += total.e_count;
  out.f += total.f_stat;
  out.tau_k += total.tau_stat;
  out.mu = total.mu_stat;
  out.check_valid();
  return out;
}

GlobalSample sample_global(const GlobalVariationalState& state, Rng& rng) {
  state.check_valid();
  const int K = state.feature_count();
  const int D = state.dim();
  GlobalSample beta;
  beta.pi.resize(K);
  beta.Phi.resize(K, D);
  for (int k = 0; k < K; ++k) {
    beta.pi[k] = rng.beta(state.a_k[k], state.b_k[k]);
    const double sd = 1.0 / std::sqrt(state.tau_k[k]);
    for (int d = 0; d < D; ++d) {
      beta.Phi(k, d) = state.mu(k, d) / state.tau_k[k] + sd * rng.normal();
    }
  }
  beta.gamma_obs = rng.gamma(state.c, state.d);
  beta.gamma_w = rng.gamma(state.e, state.f);
  return beta;
}

GlobalSample mean_global(const GlobalVariationalState& state) {
  const int K = state.feature_count();
  GlobalSample beta;
  beta.pi.resize(K);
  beta.Phi = state.mu;
  for (int k = 0; k < K; ++k) {
    beta.pi[k] = state.a_k[k] / (state.a_k[k] + state.b_k[k]);
    beta.Phi.row(k) /= state.tau_k[k];
  }
  beta.gamma_obs = state.c / state.d;
  beta.gamma_w = state.e / state.f;
  return beta;
}

ExpectedGlobals expected_global(const GlobalVariationalState& state) {
  state.check_valid();
  const int K = state.feature_count();
  ExpectedGlobals m;
  m.logit_pi.resize(K);
  m.phi_var.resize(K);
  m.phi_mean = state.mu;
  for (int k = 0; k < K; ++k) {
    m.logit_pi[k] = digamma(state.a_k[k]) - digamma(state.b_k[k]);
    m.phi_var[k] = 1.0 / state.tau_k[k];
    m.phi_mean.row(k) /= state.tau_k[k];
  }
  m.gamma_obs = state.c / state.d;
  m.gamma_w = state.e / state.f;
  return m;
}

}  // namespace bpfa
