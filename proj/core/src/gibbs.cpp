#include "bpfa/gibbs.hpp"

#include <chrono>
#include <cmath>

#include "bpfa/local.hpp"
#include "bpfa/parallel.hpp"

namespace bpfa {

ChainState init_chain(const Dataset& data, const Hyperparameters& hyper, Rng& rng) {
  hyper.validate();
  const int N = data.rows();
  const int D = data.cols();

  ChainState state;
  state.beta.pi = sample_truncated_beta_process(hyper, rng);
  state.beta.Phi.resize(hyper.K, D);
  const double phi_sd = 1.0 / std::sqrt(static_cast<double>(D));
  for (int k = 0; k < hyper.K; ++k) {
    for (int d = 0; d < D; ++d) state.beta.Phi(k, d) = rng.normal(0.0, phi_sd);
  }
  state.beta.gamma_obs = rng.gamma(hyper.c_prior, hyper.d_prior);
  state.beta.gamma_w = rng.gamma(hyper.e_prior, hyper.f_prior);

  const double w_sd = 1.0 / std::sqrt(state.beta.gamma_w);
  state.psi.resize(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    LocalSample& loc = state.psi[static_cast<std::size_t>(i)];
    loc.z.resize(static_cast<std::size_t>(hyper.K));
    loc.w.resize(hyper.K);
    for (int k = 0; k < hyper.K; ++k) {
      loc.z[static_cast<std::size_t>(k)] = rng.bernoulli(state.beta.pi[k]) ? 1 : 0;
      loc.w[k] = rng.normal(0.0, w_sd);
    }
  }
  return state;
}

void gibbs_iteration(ChainState& state, const Dataset& data, const MaskIndex& index,
                     const Hyperparameters& hyper, Rng& rng, int threads) {
  const int N = data.rows();
  const int D = data.cols();
  const int K = hyper.K;

  // Local phase: conditionally independent given beta, so per-datum streams
  // keep the result identical for any thread count.
  const std::uint64_t local_seed = rng.engine()();
  Matrix residual = Matrix::Zero(N, D);  // observed cells only; others stay 0
  parallel_for(N, threads, [&](int i) {
    const auto& obs = index.cols(i);
    LocalView view = make_local_view(state.beta, data.Y.row(i), obs, D);
    LocalSample& loc = state.psi[static_cast<std::size_t>(i)];

    Vector res = view.y;
    for (int k = 0; k < K; ++k) {
      if (loc.z[static_cast<std::size_t>(k)]) res -= loc.w[k] * view.phi.row(k).transpose();
    }
    Rng local_rng = Rng::stream(local_seed, {static_cast<std::uint64_t>(i)});
    gibbs_feature_sweep(view, loc.z, loc.w, res, local_rng);
    for (std::size_t j = 0; j < obs.size(); ++j) {
      residual(i, obs[j]) = res[static_cast<Eigen::Index>(j)];
    }
  });

  // pi_k | Z
  Vector z_count = Vector::Zero(K);
  for (int i = 0; i < N; ++i) {
    const LocalSample& loc = state.psi[static_cast<std::size_t>(i)];
    for (int k = 0; k < K; ++k) z_count[k] += loc.z[static_cast<std::size_t>(k)];
  }
  for (int k = 0; k < K; ++k) {
    state.beta.pi[k] =
        rng.beta(hyper.a / K + z_count[k], hyper.b * (K - 1) / K + (N - z_count[k]));
  }

  // Phi | rest, one feature at a time against the maintained residual. The
  // conditional is diagonal with per-dimension precision D + gamma_obs *
  // sum_i z_ik w_ik^2 over rows observing that dimension.
  const double g = state.beta.gamma_obs;
  Vector prec(D), mean_prec(D);
  for (int k = 0; k < K; ++k) {
    prec.setConstant(static_cast<double>(D));
    mean_prec.setZero();
    for (int i = 0; i < N; ++i) {
      const LocalSample& loc = state.psi[static_cast<std::size_t>(i)];
      if (!loc.z[static_cast<std::size_t>(k)]) continue;
      const double w = loc.w[k];
      for (int d : index.cols(i)) {
        residual(i, d) += w * state.beta.Phi(k, d);
        prec[d] += g * w * w;
        mean_prec[d] += g * w * residual(i, d);
      }
    }
    for (int d = 0; d < D; ++d) {
      state.beta.Phi(k, d) = rng.normal(mean_prec[d] / prec[d], 1.0 / std::sqrt(prec[d]));
    }
    for (int i = 0; i < N; ++i) {
      const LocalSample& loc = state.psi[static_cast<std::size_t>(i)];
      if (!loc.z[static_cast<std::size_t>(k)]) continue;
      const double w = loc.w[k];
      for (int d : index.cols(i)) residual(i, d) -= w * state.beta.Phi(k, d);
    }
  }

  // gamma_obs | rest and gamma_w | rest.
  double rss = residual.squaredNorm();
  state.beta.gamma_obs =
      rng.gamma(hyper.c_prior + 0.5 * index.total_observed(), hyper.d_prior + 0.5 * rss);
  double wss = 0.0;
  for (int i = 0; i < N; ++i) wss += state.psi[static_cast<std::size_t>(i)].w.squaredNorm();
  state.beta.gamma_w =
      rng.gamma(hyper.e_prior + 0.5 * static_cast<double>(N) * K, hyper.f_prior + 0.5 * wss);

  ++state.iteration;
}

ChainRun run_chain(const Dataset& data, const Hyperparameters& hyper, int iterations, int thin,
                   Rng& rng, int threads) {
  if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (thin < 1) throw std::invalid_argument("thin must be >= 1");

  MaskIndex index(data);
  ChainState state = init_chain(data, hyper, rng);

  ChainRun run;
  const auto start = std::chrono::steady_clock::now();
  for (int t = 1; t <= iterations; ++t) {
    gibbs_iteration(state, data, index, hyper, rng, threads);
    if (t % thin == 0) {
      run.states.push_back(state);
      run.seconds.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
  }
  return run;
}

}  // namespace bpfa
