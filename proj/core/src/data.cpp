#include "bpfa/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace bpfa {

std::pair<Matrix, StandardizationRecord> standardize(const Matrix& Y, const MaskMatrix& mask) {
  const int N = static_cast<int>(Y.rows());
  const int D = static_cast<int>(Y.cols());
  if (mask.rows() != N || mask.cols() != D) {
    throw std::invalid_argument("mask shape mismatch in standardize");
  }

  StandardizationRecord rec;
  rec.means = Vector::Zero(D);
  rec.stds = Vector::Ones(D);
  for (int d = 0; d < D; ++d) {
    long n = 0;
    double sum = 0.0;
    for (int i = 0; i < N; ++i) {
      if (mask(i, d)) {
        ++n;
        sum += Y(i, d);
      }
    }
    if (n < 2) {
      throw std::invalid_argument("column " + std::to_string(d) +
                                  " has fewer than 2 observed entries");
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (int i = 0; i < N; ++i) {
      if (mask(i, d)) {
        const double r = Y(i, d) - mean;
        ss += r * r;
      }
    }
    const double var = ss / static_cast<double>(n);
    rec.means[d] = mean;
    if (var > 0.0) {
      rec.stds[d] = std::sqrt(var);
    } else {
      std::cerr << "bpfa: column " << d << " has zero variance, std forced to 1\n";
      rec.stds[d] = 1.0;
    }
  }

  Matrix out = Y;
  for (int d = 0; d < D; ++d) {
    out.col(d) = (out.col(d).array() - rec.means[d]) / rec.stds[d];
  }
  return {std::move(out), std::move(rec)};
}

Matrix destandardize(const Matrix& Y_std, const StandardizationRecord& record) {
  Matrix out = Y_std;
  for (int d = 0; d < static_cast<int>(out.cols()); ++d) {
    out.col(d) = out.col(d).array() * record.stds[d] + record.means[d];
  }
  return out;
}

namespace {

void check_patch_dims(const Image& img, int patch) {
  if (patch < 1) throw std::invalid_argument("patch must be >= 1");
  if (img.height() < patch || img.width() < patch) {
    throw std::invalid_argument("image smaller than patch size");
  }
}

}  // namespace

Dataset patchify(const Image& img, int patch) {
  MaskMatrix full = MaskMatrix::Ones(img.height(), img.width());
  return patchify_with_pixel_mask(img, full, patch);
}

Dataset patchify_with_pixel_mask(const Image& img, const MaskMatrix& pixel_mask, int patch) {
  check_patch_dims(img, patch);
  if (pixel_mask.rows() != img.height() || pixel_mask.cols() != img.width()) {
    throw std::invalid_argument("pixel mask shape mismatch");
  }
  const int rows = img.height() - patch + 1;
  const int cols = img.width() - patch + 1;
  const int N = rows * cols;
  const int D = patch * patch;

  Dataset data;
  data.Y.resize(N, D);
  data.mask.resize(N, D);
  data.row_ids.resize(static_cast<std::size_t>(N));
  int i = 0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c, ++i) {
      data.row_ids[static_cast<std::size_t>(i)] = i;
      int d = 0;
      for (int u = 0; u < patch; ++u) {
        for (int v = 0; v < patch; ++v, ++d) {
          data.Y(i, d) = img.pixels(r + u, c + v);
          data.mask(i, d) = pixel_mask(r + u, c + v);
        }
      }
    }
  }
  return data;
}

MaskMatrix make_interpolation_mask(int height, int width, double observe_fraction, Rng& rng) {
  if (!(observe_fraction > 0.0) || observe_fraction > 1.0) {
    throw std::invalid_argument("observe_fraction must lie in (0, 1]");
  }
  const long total = static_cast<long>(height) * width;
  const long keep = observe_fraction == 1.0
                        ? total
                        : static_cast<long>(std::floor(observe_fraction * static_cast<double>(total)));

  std::vector<long> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0L);
  // Partial Fisher-Yates: only the first `keep` positions are needed.
  for (long j = 0; j < keep; ++j) {
    const long pick = j + rng.uniform_int(total - j);
    std::swap(order[static_cast<std::size_t>(j)], order[static_cast<std::size_t>(pick)]);
  }

  MaskMatrix mask = MaskMatrix::Zero(height, width);
  for (long j = 0; j < keep; ++j) {
    const long p = order[static_cast<std::size_t>(j)];
    mask(static_cast<int>(p / width), static_cast<int>(p % width)) = 1;
  }
  return mask;
}

std::pair<Image, MaskMatrix> make_denoising_task(const Image& img, double observe_fraction,
                                                 double noise_sd, Rng& rng) {
  if (noise_sd < 0.0) throw std::invalid_argument("noise_sd must be >= 0");
  MaskMatrix mask = make_interpolation_mask(img.height(), img.width(), observe_fraction, rng);
  Image corrupted = img;
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      if (mask(r, c) && noise_sd > 0.0) {
        const double v = corrupted.pixels(r, c) + rng.normal(0.0, noise_sd);
        corrupted.pixels(r, c) = std::clamp(v, 0.0, img.max_value);
      }
    }
  }
  return {std::move(corrupted), std::move(mask)};
}

HoldoutSpec holdout_entries(Dataset& data, double fraction, Rng& rng) {
  if (!(fraction > 0.0) || fraction >= 1.0) {
    throw std::invalid_argument("holdout fraction must lie in (0, 1)");
  }
  const int N = data.rows();
  const int D = data.cols();

  std::vector<std::pair<int, int>> observed;
  std::vector<int> row_count(static_cast<std::size_t>(N), 0);
  for (int i = 0; i < N; ++i) {
    for (int d = 0; d < D; ++d) {
      if (data.mask(i, d)) {
        observed.emplace_back(i, d);
        ++row_count[static_cast<std::size_t>(i)];
      }
    }
  }
  const long target = static_cast<long>(std::floor(fraction * static_cast<double>(observed.size())));
  if (target < 1) throw std::invalid_argument("holdout fraction selects no entries");

  // Choose a uniform subset, then repair rows that lost every training entry
  // by swapping one of their picks for an unused entry elsewhere.
  for (long j = 0; j < target; ++j) {
    const long pick = j + rng.uniform_int(static_cast<long>(observed.size()) - j);
    std::swap(observed[static_cast<std::size_t>(j)], observed[static_cast<std::size_t>(pick)]);
  }
  std::vector<int> test_per_row(static_cast<std::size_t>(N), 0);
  for (long j = 0; j < target; ++j) {
    ++test_per_row[static_cast<std::size_t>(observed[static_cast<std::size_t>(j)].first)];
  }
  long cursor = target;
  for (long j = 0; j < target; ++j) {
    const int row = observed[static_cast<std::size_t>(j)].first;
    if (test_per_row[static_cast<std::size_t>(row)] < row_count[static_cast<std::size_t>(row)]) {
      continue;  // row keeps at least one training entry
    }
    // Scan the unchosen tail for a replacement from a row with slack.
    bool swapped = false;
    while (cursor < static_cast<long>(observed.size())) {
      const int cand_row = observed[static_cast<std::size_t>(cursor)].first;
      if (test_per_row[static_cast<std::size_t>(cand_row)] + 1 <
          row_count[static_cast<std::size_t>(cand_row)]) {
        --test_per_row[static_cast<std::size_t>(row)];
        ++test_per_row[static_cast<std::size_t>(cand_row)];
        std::swap(observed[static_cast<std::size_t>(j)],
                  observed[static_cast<std::size_t>(cursor)]);
        ++cursor;
        swapped = true;
        break;
      }
      ++cursor;
    }
    if (!swapped) {
      throw std::invalid_argument("holdout split impossible: a row cannot retain an entry");
    }
  }

  HoldoutSpec spec;
  spec.fraction = fraction;
  spec.entries.assign(observed.begin(), observed.begin() + target);
  std::sort(spec.entries.begin(), spec.entries.end());
  spec.truth.resize(static_cast<Eigen::Index>(target));
  for (long j = 0; j < target; ++j) {
    const auto [r, c] = spec.entries[static_cast<std::size_t>(j)];
    spec.truth[static_cast<Eigen::Index>(j)] = data.Y(r, c);
    data.mask(r, c) = 0;
  }
  return spec;
}

GlobalVariationalState random_init(const Hyperparameters& hyper, int D, Rng& rng) {
  GlobalVariationalState s = prior_natural(hyper, D);
  s.a_k.array() += 1.0;
  s.b_k.array() += 1.0;
  s.c += 1.0;
  s.d += 1.0;
  s.e += 1.0;
  s.f += 1.0;
  // mu rows ~ N(0, D), so the mean loading mu/tau has per-entry variance 1/D.
  const double sd = std::sqrt(static_cast<double>(D));
  for (int k = 0; k < hyper.K; ++k) {
    for (int d = 0; d < D; ++d) s.mu(k, d) = sd * rng.normal();
  }
  return s;
}

GlobalVariationalState gibbs_warm_start(const Dataset& data, const Hyperparameters& hyper,
                                        int subset_size, int iterations, Rng& rng, int threads) {
  if (subset_size < 1 || subset_size > data.rows()) {
    throw std::invalid_argument("subset_size must lie in [1, N]");
  }
  if (iterations == 0) return random_init(hyper, data.cols(), rng);

  const int N = data.rows();
  const int D = data.cols();
  std::vector<int> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), 0);
  for (int j = 0; j < subset_size; ++j) {
    const int pick = j + static_cast<int>(rng.uniform_int(N - j));
    std::swap(order[static_cast<std::size_t>(j)], order[static_cast<std::size_t>(pick)]);
  }

  Dataset subset;
  subset.Y.resize(subset_size, D);
  subset.mask.resize(subset_size, D);
  subset.row_ids.resize(static_cast<std::size_t>(subset_size));
  for (int j = 0; j < subset_size; ++j) {
    const int i = order[static_cast<std::size_t>(j)];
    subset.Y.row(j) = data.Y.row(i);
    subset.mask.row(j) = data.mask.row(i);
    subset.row_ids[static_cast<std::size_t>(j)] = i;
  }

  ChainRun run = run_chain(subset, hyper, iterations, iterations, rng, threads);
  const ChainState& last = run.states.back();
  MaskIndex index(subset);

  // Moment matching: Beta mass = prior mass + subset size around the sampled
  // pi; tau from the batch evidence at the final chain state; Gamma factors
  // with the batch shape and the sampled precision as the mean.
  GlobalVariationalState s = prior_natural(hyper, D);
  const double mass = hyper.a / hyper.K + hyper.b * (hyper.K - 1) / hyper.K + subset_size;
  for (int k = 0; k < hyper.K; ++k) {
    s.a_k[k] = std::max(last.beta.pi[k] * mass, 1e-3);
    s.b_k[k] = std::max((1.0 - last.beta.pi[k]) * mass, 1e-3);
  }
  for (int k = 0; k < hyper.K; ++k) {
    double evidence = 0.0;
    for (int j = 0; j < subset_size; ++j) {
      const LocalSample& loc = last.psi[static_cast<std::size_t>(j)];
      if (loc.z[static_cast<std::size_t>(k)]) {
        const double scale = static_cast<double>(index.count(j)) / D;
        evidence += last.beta.gamma_obs * loc.w[k] * loc.w[k] * scale;
      }
    }
    s.tau_k[k] = D + evidence;
    s.mu.row(k) = s.tau_k[k] * last.beta.Phi.row(k);
  }
  s.c = hyper.c_prior + 0.5 * static_cast<double>(index.total_observed());
  s.d = s.c / last.beta.gamma_obs;
  s.e = hyper.e_prior + 0.5 * static_cast<double>(subset_size) * hyper.K;
  s.f = s.e / last.beta.gamma_w;
  return s;
}

// ---------------------------------------------------------------------------
// File IO

Image read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw std::runtime_error("not a binary graymap (P5): " + path);

  auto next_token = [&in, &path]() -> long {
    // Skip whitespace and '#' comment lines.
    while (true) {
      int ch = in.peek();
      if (ch == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(ch)) {
        in.get();
      } else {
        break;
      }
    }
    long v = 0;
    if (!(in >> v)) throw std::runtime_error("malformed graymap header: " + path);
    return v;
  };

  const long width = next_token();
  const long height = next_token();
  const long maxval = next_token();
  if (width < 1 || height < 1 || maxval < 1 || maxval > 255) {
    throw std::runtime_error("unsupported graymap header: " + path);
  }
  in.get();  // single whitespace after maxval

  std::vector<unsigned char> buf(static_cast<std::size_t>(width * height));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw std::runtime_error("truncated graymap payload: " + path);
  }

  Image img;
  img.max_value = static_cast<double>(maxval);
  img.pixels.resize(height, width);
  for (long r = 0; r < height; ++r) {
    for (long c = 0; c < width; ++c) {
      img.pixels(r, c) = static_cast<double>(buf[static_cast<std::size_t>(r * width + c)]);
    }
  }
  return img;
}

void write_image(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write image: " + path);
  const int maxval = static_cast<int>(std::lround(img.max_value));
  out << "P5\n" << img.width() << " " << img.height() << "\n" << maxval << "\n";
  std::vector<unsigned char> buf(static_cast<std::size_t>(img.height()) * img.width());
  std::size_t idx = 0;
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c, ++idx) {
      const double v = std::clamp(img.pixels(r, c), 0.0, img.max_value);
      buf[idx] = static_cast<unsigned char>(std::lround(v));
    }
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

namespace {

std::vector<std::vector<double>> read_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open matrix: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    for (char& ch : line) {
      if (ch == ',' || ch == '\t') ch = ' ';
    }
    std::istringstream ss(line);
    std::vector<double> row;
    std::string tok;
    while (ss >> tok) {
      if (tok == "nan" || tok == "NaN" || tok == "NAN") {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
      } else {
        row.push_back(std::stod(tok));
      }
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("empty matrix file: " + path);
  for (const auto& row : rows) {
    if (row.size() != rows.front().size()) {
      throw std::runtime_error("ragged rows in matrix file: " + path);
    }
  }
  return rows;
}

}  // namespace

Dataset read_matrix(const std::string& path, const std::string& mask_path) {
  auto rows = read_rows(path);
  const int N = static_cast<int>(rows.size());
  const int D = static_cast<int>(rows.front().size());

  Dataset data;
  data.Y.resize(N, D);
  data.mask = MaskMatrix::Ones(N, D);
  data.row_ids.resize(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    data.row_ids[static_cast<std::size_t>(i)] = i;
    for (int d = 0; d < D; ++d) {
      const double v = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
      if (std::isnan(v)) {
        data.Y(i, d) = 0.0;
        data.mask(i, d) = 0;
      } else {
        data.Y(i, d) = v;
      }
    }
  }

  if (!mask_path.empty()) {
    auto mrows = read_rows(mask_path);
    if (static_cast<int>(mrows.size()) != N ||
        static_cast<int>(mrows.front().size()) != D) {
      throw std::runtime_error("mask dimensions do not match matrix: " + mask_path);
    }
    for (int i = 0; i < N; ++i) {
      for (int d = 0; d < D; ++d) {
        const double v = mrows[static_cast<std::size_t>(i)][static_cast<std::size_t>(d)];
        if (v != 0.0 && v != 1.0) {
          throw std::runtime_error("mask entries must be 0 or 1: " + mask_path);
        }
        if (v == 0.0) data.mask(i, d) = 0;
      }
    }
  }
  data.validate();
  return data;
}

void write_matrix(const std::string& path, const Matrix& Y) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write matrix: " + path);
  char buf[64];
  for (int i = 0; i < static_cast<int>(Y.rows()); ++i) {
    for (int d = 0; d < static_cast<int>(Y.cols()); ++d) {
      std::snprintf(buf, sizeof(buf), "%.17g", Y(i, d));
      out << buf << (d + 1 == Y.cols() ? "\n" : " ");
    }
  }
}

void write_mask(const std::string& path, const MaskMatrix& mask) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write mask: " + path);
  for (int i = 0; i < static_cast<int>(mask.rows()); ++i) {
    for (int d = 0; d < static_cast<int>(mask.cols()); ++d) {
      out << static_cast<int>(mask(i, d)) << (d + 1 == mask.cols() ? "\n" : " ");
    }
  }
}

}  // namespace bpfa
