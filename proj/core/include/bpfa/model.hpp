#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "bpfa/rng.hpp"

namespace bpfa {

// Rows are data points / features throughout, so row-major storage keeps the
// hot per-row loops contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Fixed model constants: beta-process mass/concentration, the two Gamma
/// priors on the noise and weight precisions, the truncation level, and the
/// Robbins-Monro learning schedule (t0, zeta).
struct Hyperparameters {
  double a = 10.0;
  double b = 10.0;
  double c_prior = 1.0;
  double d_prior = 10.0;
  double e_prior = 1.0;
  double f_prior = 1.0;
  int K = 100;
  double t0 = 0.0;
  double zeta = 0.75;

  /// Throws std::invalid_argument on any violated constraint. K = 1 is
  /// rejected: the second beta-process parameter b(K-1)/K would be zero.
  void validate() const;

  static Hyperparameters defaults(int K) {
    Hyperparameters h;
    h.K = K;
    return h;
  }
};

/// One concrete draw of the shared variables: feature probabilities pi_k,
/// factor loadings Phi (rows phi_k), and the two precisions.
struct GlobalSample {
  Vector pi;      // K, entries in (0,1)
  Matrix Phi;     // K x D
  double gamma_w = 1.0;
  double gamma_obs = 1.0;

  int feature_count() const { return static_cast<int>(pi.size()); }
  int dim() const { return static_cast<int>(Phi.cols()); }
};

/// Per-datum latent variables: binary feature indicators and weights.
struct LocalSample {
  std::vector<std::uint8_t> z;  // K, in {0,1}
  Vector w;                     // K
};

/// Observed data. mask(i,d) = 1 means Y(i,d) is observed; the likelihood
/// factorizes over observed entries only.
struct Dataset {
  Matrix Y;
  MaskMatrix mask;
  std::vector<std::int64_t> row_ids;

  int rows() const { return static_cast<int>(Y.rows()); }
  int cols() const { return static_cast<int>(Y.cols()); }
  bool fully_observed() const;

  /// Shape consistency plus the loader contract that every row has at least
  /// one observed entry. Throws std::invalid_argument.
  void validate() const;

  static Dataset fully_observed_from(Matrix Y);
};

/// Cached per-row observed-column indices for a mask.
class MaskIndex {
 public:
  explicit MaskIndex(const Dataset& data);

  const std::vector<int>& cols(int row) const { return cols_[static_cast<std::size_t>(row)]; }
  int count(int row) const { return static_cast<int>(cols_[static_cast<std::size_t>(row)].size()); }
  bool all_observed() const { return all_observed_; }
  long total_observed() const { return total_; }

 private:
  std::vector<std::vector<int>> cols_;
  bool all_observed_ = true;
  long total_ = 0;
};

/// Draws pi_k ~ Beta(a/K, b(K-1)/K) independently for k = 1..K.
Vector sample_truncated_beta_process(const Hyperparameters& hyper, Rng& rng);

struct GenerativeDraw {
  Dataset data;
  GlobalSample global;
  std::vector<LocalSample> locals;
};

/// Samples a full dataset from the generative model with the precisions held
/// at the given constants (the Gamma priors are used only during inference):
/// Y = (Z o W) Phi + E, phi_k ~ N(0, I/D), and a fully-observed mask.
GenerativeDraw sample_generative(const Hyperparameters& hyper, int N, int D, double gamma_w,
                                 double gamma_obs, Rng& rng);

/// Same, with the feature probabilities supplied instead of drawn.
GenerativeDraw sample_generative_given_pi(const Vector& pi, int N, int D, double gamma_w,
                                          double gamma_obs, Rng& rng);

/// Exact log joint density of (beta, psi, Y_observed) under the generative
/// model plus the Gamma priors on both precisions. Returns -inf when some
/// pi_k in {0,1} makes a required Bernoulli term log 0.
double log_joint(const GlobalSample& beta, const std::vector<LocalSample>& psi,
                 const Dataset& data, const Hyperparameters& hyper);

}  // namespace bpfa
