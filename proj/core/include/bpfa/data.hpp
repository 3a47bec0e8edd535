#pragma once

#include <string>
#include <utility>

#include "bpfa/gibbs.hpp"
#include "bpfa/variational.hpp"

namespace bpfa {

/// Grayscale image; pixel values in [0, max_value].
struct Image {
  Matrix pixels;  // H x W
  double max_value = 255.0;

  int height() const { return static_cast<int>(pixels.rows()); }
  int width() const { return static_cast<int>(pixels.cols()); }
};

struct StandardizationRecord {
  Vector means;  // D
  Vector stds;   // D, > 0
};

/// Per-column standardization over observed entries only (population
/// variance, divisor n). Zero-variance columns get std forced to 1 with a
/// warning; columns with fewer than 2 observed entries are an error.
std::pair<Matrix, StandardizationRecord> standardize(const Matrix& Y, const MaskMatrix& mask);

Matrix destandardize(const Matrix& Y_std, const StandardizationRecord& record);

/// All overlapping patch x patch windows as rows in raster order. Row i is
/// the patch at (i / (W-patch+1), i % (W-patch+1)), flattened row-major.
Dataset patchify(const Image& img, int patch = 8);

/// Same, with each patch cell's observation bit looked up from the pixel
/// mask so a pixel's status is consistent across every patch containing it.
Dataset patchify_with_pixel_mask(const Image& img, const MaskMatrix& pixel_mask, int patch = 8);

/// Pixel-level mask with exactly floor(observe_fraction * H * W) observed
/// pixels, chosen uniformly without replacement.
MaskMatrix make_interpolation_mask(int height, int width, double observe_fraction, Rng& rng);

/// Joint interpolation + denoising corruption: a fraction of pixels is kept,
/// and the kept pixels get N(0, noise_sd^2) additive noise in original pixel
/// units, clamped to [0, max_value].
std::pair<Image, MaskMatrix> make_denoising_task(const Image& img, double observe_fraction,
                                                 double noise_sd, Rng& rng);

/// Held-out matrix cells: indices into the original data, with the true
/// (standardized) values captured at split time.
struct HoldoutSpec {
  std::vector<std::pair<int, int>> entries;
  Vector truth;  // aligned with entries
  double fraction = 0.0;
  std::uint64_t seed = 0;
};

/// Moves a uniformly chosen fraction of observed entries out of the training
/// mask. Rows that would lose their last training entry get their selection
/// resampled; throws if no valid split exists.
HoldoutSpec holdout_entries(Dataset& data, double fraction, Rng& rng);

/// Random global initialization: prior pseudo-counts plus one, tau at the
/// prior precision, and mu rows scaled so the mean loading matches the
/// prior's per-entry variance.
GlobalVariationalState random_init(const Hyperparameters& hyper, int D, Rng& rng);

/// Runs the full chain on a uniform row subset and moment-matches the final
/// state into a variational state. iterations = 0 returns random_init.
GlobalVariationalState gibbs_warm_start(const Dataset& data, const Hyperparameters& hyper,
                                        int subset_size, int iterations, Rng& rng,
                                        int threads = 1);

// File formats: binary 8-bit graymap images; whitespace-delimited text
// matrices at 17 significant digits with NaN meaning unobserved; 0/1 mask
// files of the same shape.

Image read_image(const std::string& path);
void write_image(const std::string& path, const Image& img);

Dataset read_matrix(const std::string& path, const std::string& mask_path = "");
void write_matrix(const std::string& path, const Matrix& Y);
void write_mask(const std::string& path, const MaskMatrix& mask);

}  // namespace bpfa
