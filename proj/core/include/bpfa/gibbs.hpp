#pragma once

#include "bpfa/model.hpp"

namespace bpfa {

/// Full uncollapsed chain over all local and global variables.
struct ChainState {
  GlobalSample beta;
  std::vector<LocalSample> psi;  // length N
  long iteration = 0;
};

/// Draws the initial chain state from the prior (precisions from their
/// Gamma priors, locals from the prior given beta).
ChainState init_chain(const Dataset& data, const Hyperparameters& hyper, Rng& rng);

/// One full sweep: locals for each i in ascending order (same per-feature
/// conditionals as the exact local sampler), then pi, Phi, gamma_obs,
/// gamma_w from their conjugate conditionals. The optional thread count
/// parallelizes the local phase only (locals are conditionally independent
/// given beta); results are identical for any thread count.
void gibbs_iteration(ChainState& state, const Dataset& data, const MaskIndex& index,
                     const Hyperparameters& hyper, Rng& rng, int threads = 1);

struct ChainRun {
  std::vector<ChainState> states;   // thinned
  std::vector<double> seconds;      // cumulative wall clock at each kept state
};

/// Runs `iterations` sweeps keeping every `thin`-th state, with per-state
/// cumulative wall-clock for time-vs-quality curves.
ChainRun run_chain(const Dataset& data, const Hyperparameters& hyper, int iterations, int thin,
                   Rng& rng, int threads = 1);

}  // namespace bpfa
