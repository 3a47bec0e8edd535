#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "bpfa/data.hpp"

using namespace bpfa;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_SUITE_BEGIN("data");

TEST_CASE("standardization uses the population convention per column") {
  Matrix Y(2, 1);
  Y << 0.0, 2.0;
  auto [std_Y, rec] = standardize(Y, MaskMatrix::Ones(2, 1));
  CHECK(std_Y(0, 0) == doctest::Approx(-1.0));
  CHECK(std_Y(1, 0) == doctest::Approx(1.0));
  CHECK(rec.means[0] == doctest::Approx(1.0));
  CHECK(rec.stds[0] == doctest::Approx(1.0));
}

TEST_CASE("already standardized data passes through unchanged") {
  Rng rng(1);
  Matrix Y(5000, 3);
  for (int i = 0; i < Y.rows(); ++i) {
    for (int d = 0; d < 3; ++d) Y(i, d) = rng.normal();
  }
  auto [once, rec1] = standardize(Y, MaskMatrix::Ones(Y.rows(), 3));
  auto [twice, rec2] = standardize(once, MaskMatrix::Ones(Y.rows(), 3));
  CHECK((twice - once).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(rec2.means.cwiseAbs().maxCoeff() < 1e-12);
  CHECK((rec2.stds.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("standardize/destandardize is the identity on observed entries") {
  Rng rng(2);
  Matrix Y(50, 4);
  MaskMatrix mask(50, 4);
  for (int i = 0; i < 50; ++i) {
    for (int d = 0; d < 4; ++d) {
      Y(i, d) = rng.normal(3.0, 2.0);
      mask(i, d) = rng.bernoulli(0.8) ? 1 : 0;
    }
  }
  for (int d = 0; d < 4; ++d) mask(0, d) = mask(1, d) = 1;
  auto [std_Y, rec] = standardize(Y, mask);
  Matrix back = destandardize(std_Y, rec);
  for (int i = 0; i < 50; ++i) {
    for (int d = 0; d < 4; ++d) {
      if (mask(i, d)) CHECK(back(i, d) == doctest::Approx(Y(i, d)).epsilon(1e-12));
    }
  }
}

TEST_CASE("standardize rejects columns with fewer than two observations") {
  Matrix Y = Matrix::Zero(3, 2);
  MaskMatrix mask = MaskMatrix::Ones(3, 2);
  mask(0, 1) = mask(1, 1) = 0;
  CHECK_THROWS_AS(standardize(Y, mask), std::invalid_argument);
}

TEST_CASE("zero-variance columns get their std forced to one") {
  Matrix Y(4, 1);
  Y << 5.0, 5.0, 5.0, 5.0;
  auto [std_Y, rec] = standardize(Y, MaskMatrix::Ones(4, 1));
  CHECK(rec.stds[0] == 1.0);
  CHECK(std_Y.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("patch counts match the sliding-window formula") {
  Image small;
  small.pixels = Matrix::Zero(8, 8);
  CHECK(patchify(small).rows() == 1);
  CHECK(patchify(small).Y.row(0).size() == 64);

  Image big;
  big.pixels = Matrix::Zero(512, 512);
  CHECK(patchify(big).rows() == 255025);
  Image mid;
  mid.pixels = Matrix::Zero(256, 256);
  CHECK(patchify(mid).rows() == 62001);

  Image tiny;
  tiny.pixels = Matrix::Zero(7, 9);
  CHECK_THROWS_AS(patchify(tiny), std::invalid_argument);
}

TEST_CASE("patch rows are raster ordered and row-major flattened") {
  Image img;
  img.pixels = Matrix(9, 10);
  for (int r = 0; r < 9; ++r) {
    for (int c = 0; c < 10; ++c) img.pixels(r, c) = 100.0 * r + c;
  }
  Dataset d = patchify(img);
  REQUIRE(d.rows() == 2 * 3);
  // Row index i covers the patch at (i / 3, i % 3).
  CHECK(d.Y(4, 0) == img.pixels(1, 1));       // patch (1,1), cell (0,0)
  CHECK(d.Y(4, 8 + 2) == img.pixels(2, 3));   // cell (1,2)
  CHECK(d.Y(5, 63) == img.pixels(8, 9));      // last patch, last cell
}

TEST_CASE("interpolation masks have exact counts and a full-fraction shortcut") {
  Rng rng(3);
  MaskMatrix full = make_interpolation_mask(16, 16, 1.0, rng);
  CHECK(static_cast<int>(full.cast<int>().sum()) == 256);

  Rng rng2(4);
  MaskMatrix fifth = make_interpolation_mask(512, 512, 0.2, rng2);
  CHECK(static_cast<long>(fifth.cast<long>().sum()) == 52428);
}

TEST_CASE("patch masks inherit each pixel's observation bit consistently") {
  Rng rng(5);
  Image img;
  img.pixels = Matrix::Zero(14, 13);
  MaskMatrix pixel_mask = make_interpolation_mask(14, 13, 0.3, rng);
  Dataset d = patchify_with_pixel_mask(img, pixel_mask);
  const int cols = 13 - 7;
  for (int i = 0; i < d.rows(); ++i) {
    const int pr = i / cols;
    const int pc = i % cols;
    for (int u = 0; u < 8; ++u) {
      for (int v = 0; v < 8; ++v) {
        CHECK(d.mask(i, 8 * u + v) == pixel_mask(pr + u, pc + v));
      }
    }
  }
}

TEST_CASE("denoising corruption has the configured spread and count") {
  Image gray;
  gray.pixels = Matrix::Constant(256, 256, 128.0);
  Rng rng(6);
  auto [corrupted, mask] = make_denoising_task(gray, 0.5, 15.0, rng);
  CHECK(static_cast<long>(mask.cast<long>().sum()) == 32768);

  double ss = 0.0;
  long n = 0;
  for (int r = 0; r < 256; ++r) {
    for (int c = 0; c < 256; ++c) {
      if (mask(r, c)) {
        const double d = corrupted.pixels(r, c) - 128.0;
        ss += d * d;
        ++n;
      } else {
        CHECK(corrupted.pixels(r, c) == 128.0);
      }
    }
  }
  CHECK(std::sqrt(ss / n) == doctest::Approx(15.0).epsilon(0.5 / 15.0));

  Rng rng2(7);
  auto [clean, mask2] = make_denoising_task(gray, 0.5, 0.0, rng2);
  CHECK((clean.pixels - gray.pixels).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("holdout splits count, stay disjoint, and reproduce under a seed") {
  Rng data_rng(8);
  Matrix Y(1000, 40);
  for (int i = 0; i < 1000; ++i) {
    for (int d = 0; d < 40; ++d) Y(i, d) = data_rng.normal();
  }
  Dataset d1 = Dataset::fully_observed_from(Y);
  Rng rng(9);
  HoldoutSpec spec = holdout_entries(d1, 0.075, rng);
  CHECK(spec.entries.size() == 3000);
  for (const auto& [r, c] : spec.entries) {
    CHECK(d1.mask(r, c) == 0);
  }
  for (int i = 0; i < 1000; ++i) {
    CHECK(static_cast<int>(d1.mask.row(i).cast<int>().sum()) >= 1);
  }

  Dataset d2 = Dataset::fully_observed_from(Y);
  Rng rng2(9);
  HoldoutSpec spec2 = holdout_entries(d2, 0.075, rng2);
  CHECK(spec.entries == spec2.entries);
}

TEST_CASE("holdout keeps one training entry per row even under pressure") {
  Matrix Y(3, 2);
  Y << 1, 2, 3, 4, 5, 6;
  Dataset d = Dataset::fully_observed_from(Y);
  Rng rng(10);
  HoldoutSpec spec = holdout_entries(d, 0.45, rng);  // 2 of 6 entries held out
  CHECK(spec.entries.size() == 2);
  for (int i = 0; i < 3; ++i) {
    CHECK(static_cast<int>(d.mask.row(i).cast<int>().sum()) >= 1);
  }
  // Truth was captured before masking.
  for (std::size_t j = 0; j < spec.entries.size(); ++j) {
    const auto [r, c] = spec.entries[j];
    CHECK(spec.truth[static_cast<Eigen::Index>(j)] == Y(r, c));
  }
}

TEST_CASE("an impossible split is rejected") {
  Matrix Y(2, 1);
  Y << 1, 2;
  Dataset d = Dataset::fully_observed_from(Y);
  Rng rng(11);
  CHECK_THROWS_AS(holdout_entries(d, 0.9, rng), std::invalid_argument);
}

TEST_CASE("warm start with zero iterations is the random initialization") {
  Hyperparameters h = Hyperparameters::defaults(6);
  Rng data_rng(12);
  Dataset data = sample_generative(h, 60, 5, 1.0, 50.0, data_rng).data;

  Rng a(77), b(77);
  GlobalVariationalState warm = gibbs_warm_start(data, h, 20, 0, a);
  GlobalVariationalState rand = random_init(h, 5, b);
  CHECK((warm.mu - rand.mu).cwiseAbs().maxCoeff() == 0.0);
  CHECK((warm.a_k - rand.a_k).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("warm start is deterministic and returns a valid state") {
  Hyperparameters h = Hyperparameters::defaults(6);
  Rng data_rng(13);
  Dataset data = sample_generative(h, 80, 5, 1.0, 50.0, data_rng).data;

  Rng a(78), b(78);
  GlobalVariationalState s1 = gibbs_warm_start(data, h, 40, 10, a);
  GlobalVariationalState s2 = gibbs_warm_start(data, h, 40, 10, b);
  CHECK((s1.mu - s2.mu).cwiseAbs().maxCoeff() == 0.0);
  CHECK(s1.d == s2.d);
  CHECK_NOTHROW(s1.check_valid());
  CHECK(s1.tau_k.minCoeff() >= 5.0);
}

TEST_CASE("random initialization keeps the prior scale for the mean loadings") {
  Hyperparameters h = Hyperparameters::defaults(50);
  const int D = 30;
  Rng rng(14);
  GlobalVariationalState s = random_init(h, D, rng);
  CHECK(s.a_k[0] == doctest::Approx(h.a / 50.0 + 1.0));
  CHECK(s.b_k[0] == doctest::Approx(h.b * 49.0 / 50.0 + 1.0));
  CHECK(s.tau_k.minCoeff() == doctest::Approx(static_cast<double>(D)));
  // mu/tau entries should have variance about 1/D.
  double ss = 0.0;
  for (int k = 0; k < 50; ++k) {
    for (int d = 0; d < D; ++d) {
      const double mean = s.mu(k, d) / s.tau_k[k];
      ss += mean * mean;
    }
  }
  CHECK(ss / (50.0 * D) == doctest::Approx(1.0 / D).epsilon(0.15));
}

TEST_CASE("image files round trip losslessly") {
  Rng rng(15);
  Image img;
  img.pixels = Matrix(9, 13);
  for (int r = 0; r < 9; ++r) {
    for (int c = 0; c < 13; ++c) img.pixels(r, c) = static_cast<double>(rng.uniform_int(256));
  }
  const std::string path = temp_path("bpfa_test_img.pgm");
  write_image(path, img);
  Image back = read_image(path);
  CHECK(back.max_value == 255.0);
  CHECK((back.pixels - img.pixels).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("non-graymap headers are rejected") {
  const std::string path = temp_path("bpfa_test_bad.pgm");
  std::ofstream out(path, std::ios::binary);
  out << "P6\n2 2\n255\n";
  out.write("aaaaaaaaaaaa", 12);
  out.close();
  CHECK_THROWS_AS(read_image(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("matrix files: NaN means unobserved, values round trip at 17 digits") {
  Matrix Y(2, 3);
  Y << 0.1234567890123456789, -2.0 / 3.0, 1e-17, 4.0, 5.0, -6.5;
  const std::string path = temp_path("bpfa_test_matrix.txt");
  write_matrix(path, Y);
  Dataset d = read_matrix(path);
  CHECK((d.Y - Y).cwiseAbs().maxCoeff() == 0.0);
  CHECK(d.fully_observed());

  std::ofstream out(path);
  out << "1.5 nan 2.5\nNaN 3.5 4.5\n";
  out.close();
  Dataset with_missing = read_matrix(path);
  CHECK(with_missing.mask(0, 1) == 0);
  CHECK(with_missing.mask(1, 0) == 0);
  CHECK(with_missing.mask(0, 0) == 1);
  CHECK(with_missing.Y(1, 1) == 3.5);
  std::filesystem::remove(path);
}

TEST_CASE("mask files must be 0/1 and shape-consistent") {
  const std::string mpath = temp_path("bpfa_test_mask.txt");
  const std::string ypath = temp_path("bpfa_test_vals.txt");
  std::ofstream y(ypath);
  y << "1 2\n3 4\n";
  y.close();
  std::ofstream m(mpath);
  m << "1 0\n1 2\n";
  m.close();
  CHECK_THROWS_AS(read_matrix(ypath, mpath), std::runtime_error);
  std::ofstream m2(mpath);
  m2 << "1 0\n1 1\n";
  m2.close();
  Dataset d = read_matrix(ypath, mpath);
  CHECK(d.mask(0, 1) == 0);
  std::filesystem::remove(mpath);
  std::filesystem::remove(ypath);
}

TEST_SUITE_END();
