#pragma once

#include <optional>
#include <string>

#include "bpfa/data.hpp"
#include "bpfa/gibbs.hpp"
#include "bpfa/local.hpp"

namespace bpfa {

/// One evaluation checkpoint, emitted as a JSON line. psnr_db is present only
/// for image tasks. Reported loglik/MSE are in standardized units; PSNR is in
/// original pixel units.
struct MetricRecord {
  double wall_clock_s = 0.0;
  long epoch = 0;  // iteration count (one minibatch per iteration)
  double pred_loglik = 0.0;
  double pred_mse = 0.0;
  std::optional<double> psnr_db;
  std::string strategy;
  std::uint64_t seed = 0;

  std::string to_json_line() const;
  static MetricRecord from_json_line(const std::string& line);
};

struct PredictiveResult {
  double loglik = 0.0;
  double mse = 0.0;
};

struct PredictiveOptions {
  StrategyTag strategy;
  int M = 64;              // predictive sample count
  int threads = 1;
  int max_rows = 0;        // 0 = score every test row; otherwise a seeded cap
  LocalOptions local;
};

/// Held-out predictive log-likelihood and MSE from a fitted variational
/// state. Draws M tuples (z, w, Phi, gamma_obs) from q, inferring each test
/// row's locals from its observed training entries with the active strategy,
/// and scores held-out dims as sum_i log mean_m N(y_hat | pred, I/gamma).
PredictiveResult predictive_metrics(const GlobalVariationalState& state, const Dataset& train,
                                    const MaskIndex& index, const HoldoutSpec& holdout,
                                    const PredictiveOptions& opts, std::uint64_t eval_seed);

/// Baseline version: the tuples are the last up-to-M retained chain states,
/// whose locals were fitted to the training-observed entries.
PredictiveResult predictive_metrics_chain(std::span<const ChainState> states,
                                          const HoldoutSpec& holdout, int M);

/// Mean squared error over held-out entries.
double predictive_mse(const Vector& predictions, const Vector& truth);

/// 20 log10(max_value / rmse) with the rmse over all pixels. Returns +inf
/// when the reconstruction is exact.
double psnr(const Image& original, const Image& reconstruction, double max_value);

/// Per-row posterior-mean patch predictions (standardized units) under the
/// given strategy. Sampled-view strategies use the plug-in mean beta. For the
/// Gibbs-local strategies the per-row activation means are averaged over
/// max(recon_samples, n_samples) retained states.
Matrix predict_patch_means(const GlobalVariationalState& state, const Dataset& data,
                           const MaskIndex& index, const StrategyTag& strategy,
                           const LocalOptions& opts, std::uint64_t eval_seed, int threads = 1,
                           int recon_samples = 12);

/// Same from chain states (averaging the states' own locals and loadings).
Matrix predict_patch_means_chain(std::span<const ChainState> states, const Dataset& data, int M);

/// Averages overlapping patch predictions back into an image: predictions are
/// destandardized, every pixel is the unweighted mean of all patch cells
/// covering it, and the result is clamped to [0, max_value].
Image reconstruct_from_patches(const Matrix& patch_predictions,
                               const StandardizationRecord& record, int height, int width,
                               double max_value, int patch = 8);

}  // namespace bpfa
