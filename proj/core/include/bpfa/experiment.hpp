#pragma once

#include <string>
#include <vector>

#include "bpfa/checkpoint.hpp"
#include "bpfa/eval.hpp"

namespace bpfa {

/// Full configuration of one experiment run. Flags override config-file
/// values; defaults mirror the standard settings (a = b = 10, c' = 1,
/// d' = 10, e' = f' = 1, rho_t = t^-0.75, burn-in 3, 3 retained samples,
/// M = 64 predictive samples).
struct ExperimentConfig {
  std::string task = "synthetic";  // synthetic | image-interp | image-denoise | matrix
  StrategyTag strategy;
  int K = 250;
  int batch_size = 250;
  long epochs = 1000;  // iterations; one minibatch per iteration
  std::uint64_t seed = 0;
  Hyperparameters hyper;  // hyper.K is overridden by K

  // Evaluation schedule: wall-clock by default, or every eval_every_iters
  // iterations when that is set (> 0). The final iteration always evaluates.
  double eval_every_s = 5.0;
  long eval_every_iters = 0;
  int M = 64;
  int eval_max_rows = 0;  // 0 = score all test rows

  // Initialization.
  bool warm_start = false;
  int warm_subset = 1000;
  int warm_iterations = 30;

  // Task parameters.
  double holdout_fraction = 0.075;
  double observe_fraction = 0.2;
  double noise_sd = 15.0;
  int synth_N = 2000;
  int synth_D = 40;
  int synth_K_true = 20;
  double synth_gamma_w = 1.0;
  double synth_gamma_obs = 100.0;

  // IO.
  std::string input_path;
  std::string mask_path;
  std::string out_dir = ".";
  std::string resume_path;
  long ckpt_every_iters = 0;

  // Behavior.
  bool paper_literal_mu = false;
  int threads = 1;
  bool wall_timing = true;  // false writes wall_clock_s = 0 (bitwise-reproducible files)
  double max_seconds = 0.0;  // wall-clock training guard; 0 = unlimited
  int baseline_thin = 1;

  void validate() const;
};

/// Everything a run needs after data construction: standardized training
/// data, the held-out entries with standardized truth, and, for image tasks,
/// the clean original for PSNR.
struct PreparedTask {
  Dataset data;
  StandardizationRecord record;
  HoldoutSpec holdout;
  bool is_image = false;
  Image original;
  int patch = 8;
};

PreparedTask prepare_task(const ExperimentConfig& config);

/// Runs the stochastic variational loop: per iteration compute the step
/// size, draw a minibatch, run the configured local strategy per datum (one
/// sampled beta per minibatch for the sampled-view strategies, refreshed
/// moments otherwise), reduce the statistics, and take a natural-gradient
/// step. Writes metrics.jsonl, final.ckpt, and recon.pgm for image tasks.
int run_experiment(const ExperimentConfig& config);

/// Runs the full uncollapsed chain with the same data pipeline, evaluation
/// schedule, and metrics schema (strategy label "gibbs-baseline").
int run_baseline(const ExperimentConfig& config);

/// Merges metric files into one long-format CSV
/// (strategy,seed,wall_clock_s,epoch,metric,value) sorted by (strategy, time).
int emit_plot_data(const std::vector<std::string>& metric_files, const std::string& out_csv);

}  // namespace bpfa
