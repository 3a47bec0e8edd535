#include "bpfa/eval.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "bpfa/parallel.hpp"
#include "bpfa/special.hpp"

namespace bpfa {

namespace {

double finite_or_sentinel(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? 1e300 : -1e300;
}

}  // namespace

std::string MetricRecord::to_json_line() const {
  nlohmann::json j;
  j["wall_clock_s"] = finite_or_sentinel(wall_clock_s);
  j["epoch"] = epoch;
  j["pred_loglik"] = finite_or_sentinel(pred_loglik);
  j["pred_mse"] = finite_or_sentinel(pred_mse);
  if (psnr_db.has_value()) j["psnr_db"] = finite_or_sentinel(*psnr_db);
  j["strategy"] = strategy;
  j["seed"] = seed;
  return j.dump();
}

MetricRecord MetricRecord::from_json_line(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line);
  MetricRecord r;
  r.wall_clock_s = j.at("wall_clock_s").get<double>();
  r.epoch = j.at("epoch").get<long>();
  r.pred_loglik = j.at("pred_loglik").get<double>();
  r.pred_mse = j.at("pred_mse").get<double>();
  if (j.contains("psnr_db")) r.psnr_db = j.at("psnr_db").get<double>();
  r.strategy = j.at("strategy").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

double predictive_mse(const Vector& predictions, const Vector& truth) {
  if (predictions.size() != truth.size() || predictions.size() == 0) {
    throw std::invalid_argument("predictive_mse requires matching nonempty vectors");
  }
  return (predictions - truth).squaredNorm() / static_cast<double>(truth.size());
}

namespace {

struct TestRow {
  int row = 0;
  std::vector<int> held_out_cols;
  std::vector<double> truth;
};

std::vector<TestRow> group_by_row(const HoldoutSpec& holdout) {
  std::map<int, TestRow> by_row;
  for (std::size_t j = 0; j < holdout.entries.size(); ++j) {
    const auto [r, c] = holdout.entries[j];
    TestRow& tr = by_row[r];
    tr.row = r;
    tr.held_out_cols.push_back(c);
    tr.truth.push_back(holdout.truth[static_cast<Eigen::Index>(j)]);
  }
  std::vector<TestRow> rows;
  rows.reserve(by_row.size());
  for (auto& [r, tr] : by_row) {
    // Keep per-row columns in a canonical order as well.
    std::vector<std::size_t> idx(tr.held_out_cols.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&tr](std::size_t a, std::size_t b) {
      return tr.held_out_cols[a] < tr.held_out_cols[b];
    });
    TestRow sorted;
    sorted.row = tr.row;
    for (std::size_t i : idx) {
      sorted.held_out_cols.push_back(tr.held_out_cols[i]);
      sorted.truth.push_back(tr.truth[i]);
    }
    rows.push_back(std::move(sorted));
  }
  return rows;
}

std::vector<TestRow> cap_rows(std::vector<TestRow> rows, int max_rows, std::uint64_t seed) {
  if (max_rows <= 0 || static_cast<int>(rows.size()) <= max_rows) return rows;
  Rng rng = Rng::stream(seed, {kStreamEval, 0xcafe});
  for (int j = 0; j < max_rows; ++j) {
    const int pick = j + static_cast<int>(rng.uniform_int(static_cast<long>(rows.size()) - j));
    std::swap(rows[static_cast<std::size_t>(j)], rows[static_cast<std::size_t>(pick)]);
  }
  rows.resize(static_cast<std::size_t>(max_rows));
  std::sort(rows.begin(), rows.end(),
            [](const TestRow& a, const TestRow& b) { return a.row < b.row; });
  return rows;
}

// Draw one (z, w) tuple from a fitted factorized or spike-and-slab family.
void draw_local(const LocalVariationalParams& params, Strategy variant, double gamma_w, Rng& rng,
                std::vector<std::uint8_t>& z, Vector& w) {
  const int K = static_cast<int>(params.theta.size());
  z.resize(static_cast<std::size_t>(K));
  w.resize(K);
  for (int k = 0; k < K; ++k) {
    const bool on = rng.bernoulli(params.theta[k]);
    z[static_cast<std::size_t>(k)] = on ? 1 : 0;
    const double mean = params.nu[k] / params.kappa[k];
    const double sd = 1.0 / std::sqrt(params.kappa[k]);
    if (variant == Strategy::kTitsiasSsvi && !on) {
      w[k] = rng.normal(0.0, 1.0 / std::sqrt(gamma_w));
    } else {
      w[k] = rng.normal(mean, sd);
    }
  }
}

struct RowScore {
  std::vector<double> log_densities;  // per tuple
  Vector pred_sum;                    // accumulated predictions per held-out col
};

}  // namespace

PredictiveResult predictive_metrics(const GlobalVariationalState& state, const Dataset& train,
                                    const MaskIndex& index, const HoldoutSpec& holdout,
                                    const PredictiveOptions& opts, std::uint64_t eval_seed) {
  if (opts.M < 1) throw std::invalid_argument("M must be >= 1");
  std::vector<TestRow> rows = cap_rows(group_by_row(holdout), opts.max_rows, eval_seed);
  for (const TestRow& tr : rows) {
    if (index.count(tr.row) == 0) {
      throw std::invalid_argument("test row " + std::to_string(tr.row) +
                                  " has no observed training entries");
    }
  }

  const StrategyTag& tag = opts.strategy;
  const int M = opts.M;
  const int D = train.cols();

  // Sampled-view strategies share one beta per tuple; moment-view strategies
  // share the moment record and draw (Phi, gamma_obs) per tuple.
  std::vector<GlobalSample> betas;
  ExpectedGlobals moments;
  if (tag.sampled_view()) {
    for (int m = 0; m < M; ++m) {
      Rng rng = Rng::stream(eval_seed, {kStreamEval, 1, static_cast<std::uint64_t>(m)});
      betas.push_back(sample_global(state, rng));
    }
  } else {
    moments = expected_global(state);
    for (int m = 0; m < M; ++m) {
      Rng rng = Rng::stream(eval_seed, {kStreamEval, 1, static_cast<std::uint64_t>(m)});
      betas.push_back(sample_global(state, rng));
    }
  }

  std::vector<RowScore> scores(rows.size());
  parallel_for(static_cast<int>(rows.size()), opts.threads, [&](int ri) {
    const TestRow& tr = rows[static_cast<std::size_t>(ri)];
    const auto& obs = index.cols(tr.row);
    const int n_test = static_cast<int>(tr.held_out_cols.size());
    RowScore& sc = scores[static_cast<std::size_t>(ri)];
    sc.log_densities.resize(static_cast<std::size_t>(M));
    sc.pred_sum = Vector::Zero(n_test);

    Rng rng = Rng::stream(eval_seed, {kStreamEval, 2, static_cast<std::uint64_t>(tr.row)});
    std::vector<std::uint8_t> z;
    Vector w;

    // Moment-view strategies fit once; their local distribution does not
    // depend on the tuple index.
    LocalVariationalParams fitted;
    std::vector<LocalSample> mimno_states;
    if (tag.kind == Strategy::kMfSvi) {
      fitted = coordinate_ascent(
                   make_local_view(moments, train.Y.row(tr.row), obs, D),
                   LocalVariationalParams::standard_init(state.feature_count(), moments.gamma_w),
                   Strategy::kMfSvi, opts.local)
                   .params;
    } else if (tag.kind == Strategy::kMimnoSvi) {
      GibbsOptions gopts = tag.gibbs;
      gopts.n_samples = M;  // one retained state per tuple
      LocalView view = make_local_view(moments, train.Y.row(tr.row), obs, D);
      gibbs_local_chain(view, gopts, rng, opts.local, &mimno_states);
    }

    for (int m = 0; m < M; ++m) {
      const GlobalSample& beta = betas[static_cast<std::size_t>(m)];
      switch (tag.kind) {
        case Strategy::kMfSvi:
          draw_local(fitted, tag.kind, moments.gamma_w, rng, z, w);
          break;
        case Strategy::kMimnoSvi:
          z = mimno_states[static_cast<std::size_t>(m)].z;
          w = mimno_states[static_cast<std::size_t>(m)].w;
          break;
        case Strategy::kMfSsvi:
        case Strategy::kTitsiasSsvi: {
          LocalView view = make_local_view(beta, train.Y.row(tr.row), obs, D);
          LocalFit fit = coordinate_ascent(
              view, LocalVariationalParams::standard_init(state.feature_count(), beta.gamma_w),
              tag.kind, opts.local);
          draw_local(fit.params, tag.kind, beta.gamma_w, rng, z, w);
          break;
        }
        case Strategy::kGibbsSsvi: {
          GibbsOptions gopts = tag.gibbs;
          gopts.n_samples = 1;
          LocalView view = make_local_view(beta, train.Y.row(tr.row), obs, D);
          std::vector<LocalSample> kept;
          gibbs_local_chain(view, gopts, rng, opts.local, &kept);
          z = kept.front().z;
          w = kept.front().w;
          break;
        }
      }

      double log_density = 0.0;
      for (int j = 0; j < n_test; ++j) {
        const int col = tr.held_out_cols[static_cast<std::size_t>(j)];
        double pred = 0.0;
        for (int k = 0; k < state.feature_count(); ++k) {
          if (z[static_cast<std::size_t>(k)]) pred += w[k] * beta.Phi(k, col);
        }
        sc.pred_sum[j] += pred;
        log_density +=
            log_normal_pdf(tr.truth[static_cast<std::size_t>(j)], pred, beta.gamma_obs);
      }
      sc.log_densities[static_cast<std::size_t>(m)] = log_density;
    }
  });

  PredictiveResult out;
  long n_entries = 0;
  double sq_err = 0.0;
  const double log_m = std::log(static_cast<double>(M));
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    const TestRow& tr = rows[ri];
    const RowScore& sc = scores[ri];
    out.loglik += log_sum_exp(sc.log_densities) - log_m;
    for (std::size_t j = 0; j < tr.truth.size(); ++j) {
      const double mean_pred = sc.pred_sum[static_cast<Eigen::Index>(j)] / M;
      const double err = mean_pred - tr.truth[j];
      sq_err += err * err;
      ++n_entries;
    }
  }
  out.mse = sq_err / static_cast<double>(n_entries);
  return out;
}

PredictiveResult predictive_metrics_chain(std::span<const ChainState> states,
                                          const HoldoutSpec& holdout, int M) {
  if (states.empty()) throw std::invalid_argument("no chain states to evaluate");
  const int use = std::min<int>(M, static_cast<int>(states.size()));
  std::span<const ChainState> tail = states.subspan(states.size() - static_cast<std::size_t>(use));

  std::vector<TestRow> rows = group_by_row(holdout);
  PredictiveResult out;
  long n_entries = 0;
  double sq_err = 0.0;
  std::vector<double> log_densities(static_cast<std::size_t>(use));
  const double log_m = std::log(static_cast<double>(use));

  for (const TestRow& tr : rows) {
    const int n_test = static_cast<int>(tr.held_out_cols.size());
    Vector pred_sum = Vector::Zero(n_test);
    for (int m = 0; m < use; ++m) {
      const ChainState& st = tail[static_cast<std::size_t>(m)];
      const LocalSample& loc = st.psi[static_cast<std::size_t>(tr.row)];
      double log_density = 0.0;
      for (int j = 0; j < n_test; ++j) {
        const int col = tr.held_out_cols[static_cast<std::size_t>(j)];
        double pred = 0.0;
        for (int k = 0; k < st.beta.feature_count(); ++k) {
          if (loc.z[static_cast<std::size_t>(k)]) pred += loc.w[k] * st.beta.Phi(k, col);
        }
        pred_sum[j] += pred;
        log_density +=
            log_normal_pdf(tr.truth[static_cast<std::size_t>(j)], pred, st.beta.gamma_obs);
      }
      log_densities[static_cast<std::size_t>(m)] = log_density;
    }
    out.loglik += log_sum_exp(log_densities) - log_m;
    for (std::size_t j = 0; j < tr.truth.size(); ++j) {
      const double err = pred_sum[static_cast<Eigen::Index>(j)] / use - tr.truth[j];
      sq_err += err * err;
      ++n_entries;
    }
  }
  out.mse = sq_err / static_cast<double>(n_entries);
  return out;
}

double psnr(const Image& original, const Image& reconstruction, double max_value) {
  if (original.height() != reconstruction.height() ||
      original.width() != reconstruction.width()) {
    throw std::invalid_argument("psnr requires images of identical dimensions");
  }
  if (!(max_value > 0.0)) throw std::invalid_argument("max_value must be > 0");
  const double mse =
      (original.pixels - reconstruction.pixels).squaredNorm() / original.pixels.size();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(max_value / std::sqrt(mse));
}

Matrix predict_patch_means(const GlobalVariationalState& state, const Dataset& data,
                           const MaskIndex& index, const StrategyTag& strategy,
                           const LocalOptions& opts, std::uint64_t eval_seed, int threads,
                           int recon_samples) {
  const int N = data.rows();
  const int D = data.cols();
  const int K = state.feature_count();

  const ExpectedGlobals moments = expected_global(state);
  const GlobalSample plug_in = mean_global(state);

  Matrix predictions(N, D);
  parallel_for(N, threads, [&](int i) {
    const auto& obs = index.cols(i);
    Vector ezw(K);  // E[z_k w_k] under the fitted local distribution
    if (strategy.coordinate_ascent()) {
      LocalFit fit;
      if (strategy.kind == Strategy::kMfSvi) {
        fit = coordinate_ascent(make_local_view(moments, data.Y.row(i), obs, D),
                                LocalVariationalParams::standard_init(K, moments.gamma_w),
                                strategy.kind, opts);
      } else {
        fit = coordinate_ascent(make_local_view(plug_in, data.Y.row(i), obs, D),
                                LocalVariationalParams::standard_init(K, plug_in.gamma_w),
                                strategy.kind, opts);
      }
      for (int k = 0; k < K; ++k) {
        ezw[k] = fit.params.theta[k] * fit.params.nu[k] / fit.params.kappa[k];
      }
    } else {
      Rng rng = Rng::stream(eval_seed, {kStreamEval, 3, static_cast<std::uint64_t>(i)});
      LocalView view = strategy.kind == Strategy::kMimnoSvi
                           ? make_local_view(moments, data.Y.row(i), obs, D)
                           : make_local_view(plug_in, data.Y.row(i), obs, D);
      GibbsOptions gopts = strategy.gibbs;
      gopts.n_samples = std::max(gopts.n_samples, recon_samples);
      std::vector<LocalSample> kept;
      gibbs_local_chain(view, gopts, rng, opts, &kept);
      ezw.setZero();
      for (const LocalSample& s : kept) {
        for (int k = 0; k < K; ++k) {
          if (s.z[static_cast<std::size_t>(k)]) ezw[k] += s.w[k];
        }
      }
      ezw /= static_cast<double>(kept.size());
    }
    predictions.row(i) = (ezw.transpose() * moments.phi_mean).eval();
  });
  return predictions;
}

Matrix predict_patch_means_chain(std::span<const ChainState> states, const Dataset& data, int M) {
  if (states.empty()) throw std::invalid_argument("no chain states to evaluate");
  const int use = std::min<int>(M, static_cast<int>(states.size()));
  std::span<const ChainState> tail = states.subspan(states.size() - static_cast<std::size_t>(use));
  const int N = data.rows();
  const int D = data.cols();

  Matrix predictions = Matrix::Zero(N, D);
  for (const ChainState& st : tail) {
    for (int i = 0; i < N; ++i) {
      const LocalSample& loc = st.psi[static_cast<std::size_t>(i)];
      for (int k = 0; k < st.beta.feature_count(); ++k) {
        if (loc.z[static_cast<std::size_t>(k)]) {
          predictions.row(i) += loc.w[k] * st.beta.Phi.row(k);
        }
      }
    }
  }
  predictions /= static_cast<double>(use);
  return predictions;
}

Image reconstruct_from_patches(const Matrix& patch_predictions,
                               const StandardizationRecord& record, int height, int width,
                               double max_value, int patch) {
  const int rows = height - patch + 1;
  const int cols = width - patch + 1;
  if (patch_predictions.rows() != static_cast<Eigen::Index>(rows) * cols ||
      patch_predictions.cols() != static_cast<Eigen::Index>(patch) * patch) {
    throw std::invalid_argument("patch prediction dimensions do not match image dims");
  }

  Matrix destd = destandardize(patch_predictions, record);
  Matrix sum = Matrix::Zero(height, width);
  Matrix count = Matrix::Zero(height, width);
  int i = 0;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c, ++i) {
      int d = 0;
      for (int u = 0; u < patch; ++u) {
        for (int v = 0; v < patch; ++v, ++d) {
          sum(r + u, c + v) += destd(i, d);
          count(r + u, c + v) += 1.0;
        }
      }
    }
  }

  Image img;
  img.max_value = max_value;
  img.pixels = sum.array() / count.array();
  img.pixels = img.pixels.array().min(max_value).max(0.0);
  return img;
}

}  // namespace bpfa
