#include "bpfa/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "bpfa/parallel.hpp"
#include "bpfa/rng.hpp"

namespace bpfa {

namespace {

std::uint64_t sub_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t part : path) h = mix64(h ^ mix64(part + 0x632be59bd9b4e019ULL));
  return h;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (K < 2) throw std::invalid_argument("K must be >= 2");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (M < 1) throw std::invalid_argument("M must be >= 1");
  if (task != "synthetic" && task != "image-interp" && task != "image-denoise" &&
      task != "matrix") {
    throw std::invalid_argument("unknown task: " + task);
  }
  if ((task == "image-interp" || task == "image-denoise" || task == "matrix") &&
      input_path.empty()) {
    throw std::invalid_argument("task '" + task + "' requires --input");
  }
  if (!wall_timing && eval_every_iters < 1) {
    throw std::invalid_argument("--timing none requires --eval-every-iters");
  }
  strategy.gibbs.validate();
  Hyperparameters h = hyper;
  h.K = K;
  h.validate();
}

namespace {

PreparedTask prepare_image_task(const ExperimentConfig& config) {
  PreparedTask task;
  task.is_image = true;
  task.original = read_image(config.input_path);

  Image working = task.original;
  MaskMatrix pixel_mask;
  if (config.task == "image-denoise") {
    Rng rng = Rng::stream(config.seed, {kStreamNoise});
    auto [corrupted, mask] =
        make_denoising_task(task.original, config.observe_fraction, config.noise_sd, rng);
    working = std::move(corrupted);
    pixel_mask = std::move(mask);
  } else {
    Rng rng = Rng::stream(config.seed, {kStreamMask});
    pixel_mask = make_interpolation_mask(task.original.height(), task.original.width(),
                                         config.observe_fraction, rng);
  }

  task.data = patchify_with_pixel_mask(working, pixel_mask, task.patch);
  // Unobserved cells carry no information; zero them so nothing can leak.
  for (int i = 0; i < task.data.rows(); ++i) {
    for (int d = 0; d < task.data.cols(); ++d) {
      if (!task.data.mask(i, d)) task.data.Y(i, d) = 0.0;
    }
  }
  auto [y_std, record] = standardize(task.data.Y, task.data.mask);
  task.data.Y = std::move(y_std);
  task.record = std::move(record);

  // Held-out entries are the unobserved patch cells, scored against the
  // clean image in standardized units. Rows with no observed entries cannot
  // support local inference and are skipped.
  Dataset clean = patchify(task.original, task.patch);
  task.holdout.fraction = 1.0 - config.observe_fraction;
  task.holdout.seed = config.seed;
  std::vector<double> truth;
  for (int i = 0; i < task.data.rows(); ++i) {
    if (task.data.mask.row(i).maxCoeff() == 0) continue;
    for (int d = 0; d < task.data.cols(); ++d) {
      if (!task.data.mask(i, d)) {
        task.holdout.entries.emplace_back(i, d);
        truth.push_back((clean.Y(i, d) - task.record.means[d]) / task.record.stds[d]);
      }
    }
  }
  task.holdout.truth =
      Eigen::Map<const Vector>(truth.data(), static_cast<Eigen::Index>(truth.size()));
  return task;
}

PreparedTask prepare_matrix_like_task(const ExperimentConfig& config) {
  PreparedTask task;
  if (config.task == "synthetic") {
    Hyperparameters gen = config.hyper;
    gen.K = config.synth_K_true;
    Rng rng = Rng::stream(config.seed, {kStreamData});
    task.data = sample_generative(gen, config.synth_N, config.synth_D, config.synth_gamma_w,
                                  config.synth_gamma_obs, rng)
                    .data;
  } else {
    task.data = read_matrix(config.input_path, config.mask_path);
  }

  Rng holdout_rng = Rng::stream(config.seed, {kStreamHoldout});
  task.holdout = holdout_entries(task.data, config.holdout_fraction, holdout_rng);
  task.holdout.seed = config.seed;

  auto [y_std, record] = standardize(task.data.Y, task.data.mask);
  task.data.Y = std::move(y_std);
  task.record = std::move(record);
  for (std::size_t j = 0; j < task.holdout.entries.size(); ++j) {
    const int col = task.holdout.entries[j].second;
    task.holdout.truth[static_cast<Eigen::Index>(j)] =
        (task.holdout.truth[static_cast<Eigen::Index>(j)] - task.record.means[col]) /
        task.record.stds[col];
  }
  return task;
}

struct MetricsWriter {
  std::ofstream out;

  explicit MetricsWriter(const std::string& path) : out(path, std::ios::app) {
    if (!out) throw std::runtime_error("cannot open metrics file: " + path);
  }
  void append(const MetricRecord& record) {
    out << record.to_json_line() << "\n";
    out.flush();
  }
};

class EvalSchedule {
 public:
  EvalSchedule(const ExperimentConfig& config) : config_(config) {}

  bool due(long t, double elapsed_s) {
    if (t == config_.epochs) return true;
    if (config_.eval_every_iters > 0) return t % config_.eval_every_iters == 0;
    if (elapsed_s - last_eval_s_ >= config_.eval_every_s) {
      last_eval_s_ = elapsed_s;
      return true;
    }
    return false;
  }

 private:
  const ExperimentConfig& config_;
  double last_eval_s_ = 0.0;
};

double psnr_of_state(const GlobalVariationalState& state, const PreparedTask& task,
                     const MaskIndex& index, const ExperimentConfig& config, long t) {
  LocalOptions lopts;
  lopts.paper_literal_mu = config.paper_literal_mu;
  Matrix predictions =
      predict_patch_means(state, task.data, index, config.strategy, lopts,
                          sub_seed(config.seed, {kStreamEval, static_cast<std::uint64_t>(t)}),
                          config.threads);
  Image recon =
      reconstruct_from_patches(predictions, task.record, task.original.height(),
                               task.original.width(), task.original.max_value, task.patch);
  return psnr(task.original, recon, task.original.max_value);
}

}  // namespace

PreparedTask prepare_task(const ExperimentConfig& config) {
  config.validate();
  if (config.task == "image-interp" || config.task == "image-denoise") {
    return prepare_image_task(config);
  }
  return prepare_matrix_like_task(config);
}

int run_experiment(const ExperimentConfig& config) {
  PreparedTask task = prepare_task(config);
  const int N = task.data.rows();
  const int D = task.data.cols();
  if (config.batch_size > N) throw std::invalid_argument("batch size exceeds N");

  Hyperparameters hyper = config.hyper;
  hyper.K = config.K;
  hyper.validate();
  MaskIndex index(task.data);

  GlobalVariationalState state;
  long start_iteration = 0;
  if (!config.resume_path.empty()) {
    Checkpoint ck = load_checkpoint(config.resume_path);
    if (ck.kind != Checkpoint::Kind::kVariational) {
      throw std::runtime_error("resume checkpoint is not a variational state");
    }
    if (ck.state.feature_count() != config.K || ck.state.dim() != D) {
      throw std::runtime_error("resume checkpoint shape does not match configuration");
    }
    state = std::move(ck.state);
    start_iteration = ck.iteration;
  } else if (config.warm_start) {
    Rng rng = Rng::stream(config.seed, {kStreamWarmStart});
    state = gibbs_warm_start(task.data, hyper, std::min(config.warm_subset, N),
                             config.warm_iterations, rng, config.threads);
  } else {
    Rng rng = Rng::stream(config.seed, {kStreamInit});
    state = random_init(hyper, D, rng);
  }

  std::filesystem::create_directories(config.out_dir);
  MetricsWriter metrics(config.out_dir + "/metrics.jsonl");

  LocalOptions lopts;
  lopts.paper_literal_mu = config.paper_literal_mu;

  PredictiveOptions popts;
  popts.strategy = config.strategy;
  popts.M = config.M;
  popts.threads = config.threads;
  popts.max_rows = config.eval_max_rows;
  popts.local = lopts;

  EvalSchedule schedule(config);
  const auto start_time = std::chrono::steady_clock::now();
  auto elapsed = [&start_time]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  };

  auto evaluate = [&](long t) {
    PredictiveResult pred = predictive_metrics(
        state, task.data, index, task.holdout, popts,
        sub_seed(config.seed, {kStreamEval, static_cast<std::uint64_t>(t)}));
    MetricRecord record;
    record.wall_clock_s = config.wall_timing ? elapsed() : 0.0;
    record.epoch = t;
    record.pred_loglik = pred.loglik;
    record.pred_mse = pred.mse;
    record.strategy = config.strategy.label();
    record.seed = config.seed;
    if (task.is_image) record.psnr_db = psnr_of_state(state, task, index, config, t);
    metrics.append(record);
  };

  std::vector<NaturalStats> stats(static_cast<std::size_t>(config.batch_size));
  std::vector<int> batch(static_cast<std::size_t>(config.batch_size));
  const bool sampled_view = config.strategy.sampled_view();

  for (long t = start_iteration + 1; t <= config.epochs; ++t) {
    const double rho = step_size(t, hyper);

    Rng batch_rng = Rng::stream(config.seed, {kStreamBatch, static_cast<std::uint64_t>(t)});
    for (int j = 0; j < config.batch_size; ++j) {
      batch[static_cast<std::size_t>(j)] = static_cast<int>(batch_rng.uniform_int(N));
    }

    GlobalSample beta;
    ExpectedGlobals moments;
    if (sampled_view) {
      Rng beta_rng = Rng::stream(config.seed, {kStreamBeta, static_cast<std::uint64_t>(t)});
      beta = sample_global(state, beta_rng);
    } else {
      moments = expected_global(state);
    }

    parallel_for(config.batch_size, config.threads, [&](int j) {
      const int i = batch[static_cast<std::size_t>(j)];
      const auto& obs = index.cols(i);
      Rng rng = Rng::stream(config.seed, {kStreamLocal, static_cast<std::uint64_t>(t),
                                          static_cast<std::uint64_t>(j)});
      NaturalStats& slot = stats[static_cast<std::size_t>(j)];
      switch (config.strategy.kind) {
        case Strategy::kMfSvi:
          slot = mf_svi_local(moments, task.data.Y.row(i), obs,
                              LocalVariationalParams::standard_init(config.K, moments.gamma_w),
                              lopts)
                     .stats;
          break;
        case Strategy::kMfSsvi:
          slot = mf_ssvi_local(beta, task.data.Y.row(i), obs,
                               LocalVariationalParams::standard_init(config.K, beta.gamma_w),
                               lopts)
                     .stats;
          break;
        case Strategy::kTitsiasSsvi:
          slot = titsias_ssvi_local(beta, task.data.Y.row(i), obs,
                                    LocalVariationalParams::standard_init(config.K, beta.gamma_w),
                                    lopts)
                     .stats;
          break;
        case Strategy::kMimnoSvi:
          slot = mimno_gibbs_local(moments, task.data.Y.row(i), obs, config.strategy.gibbs, rng,
                                   lopts);
          break;
        case Strategy::kGibbsSsvi:
          slot = gibbs_ssvi_local(beta, task.data.Y.row(i), obs, config.strategy.gibbs, rng,
                                  lopts);
          break;
      }
    });

    state = svi_step(state, stats, N, rho, hyper);

    const bool out_of_time = config.max_seconds > 0.0 && elapsed() >= config.max_seconds;
    if (schedule.due(t, elapsed()) || out_of_time) evaluate(t);
    if (config.ckpt_every_iters > 0 && t % config.ckpt_every_iters == 0) {
      save_checkpoint(config.out_dir + "/iter_" + std::to_string(t) + ".ckpt", state, t,
                      config.seed);
    }
    if (out_of_time) {
      std::cerr << "bpfa: stopping at iteration " << t << " (max-seconds reached)\n";
      break;
    }
  }

  save_checkpoint(config.out_dir + "/final.ckpt", state, config.epochs, config.seed);
  if (task.is_image) {
    Matrix predictions = predict_patch_means(
        state, task.data, index, config.strategy, lopts,
        sub_seed(config.seed, {kStreamEval, static_cast<std::uint64_t>(config.epochs)}),
        config.threads);
    write_image(config.out_dir + "/recon.pgm",
                reconstruct_from_patches(predictions, task.record, task.original.height(),
                                         task.original.width(), task.original.max_value,
                                         task.patch));
  }
  return 0;
}

int run_baseline(const ExperimentConfig& config) {
  PreparedTask task = prepare_task(config);
  const int N = task.data.rows();

  Hyperparameters hyper = config.hyper;
  hyper.K = config.K;
  hyper.validate();
  MaskIndex index(task.data);

  std::filesystem::create_directories(config.out_dir);
  MetricsWriter metrics(config.out_dir + "/metrics.jsonl");

  Rng rng = Rng::stream(config.seed, {kStreamChain});
  ChainState state = init_chain(task.data, hyper, rng);
  std::deque<ChainState> retained;

  EvalSchedule schedule(config);
  const auto start_time = std::chrono::steady_clock::now();
  auto elapsed = [&start_time]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  };

  auto evaluate = [&](long t) {
    std::vector<ChainState> states(retained.begin(), retained.end());
    PredictiveResult pred = predictive_metrics_chain(states, task.holdout, config.M);
    MetricRecord record;
    record.wall_clock_s = config.wall_timing ? elapsed() : 0.0;
    record.epoch = t;
    record.pred_loglik = pred.loglik;
    record.pred_mse = pred.mse;
    record.strategy = "gibbs-baseline";
    record.seed = config.seed;
    if (task.is_image) {
      Matrix predictions = predict_patch_means_chain(states, task.data, config.M);
      Image recon =
          reconstruct_from_patches(predictions, task.record, task.original.height(),
                                   task.original.width(), task.original.max_value, task.patch);
      record.psnr_db = psnr(task.original, recon, task.original.max_value);
    }
    metrics.append(record);
  };

  for (long t = 1; t <= config.epochs; ++t) {
    gibbs_iteration(state, task.data, index, hyper, rng, config.threads);
    if (t % config.baseline_thin == 0) {
      retained.push_back(state);
      while (static_cast<int>(retained.size()) > config.M) retained.pop_front();
    }
    const bool out_of_time = config.max_seconds > 0.0 && elapsed() >= config.max_seconds;
    if ((schedule.due(t, elapsed()) || out_of_time) && !retained.empty()) evaluate(t);
    if (out_of_time) {
      std::cerr << "bpfa: stopping at iteration " << t << " (max-seconds reached)\n";
      break;
    }
  }

  save_chain_checkpoint(config.out_dir + "/final.ckpt", state, config.seed);
  return 0;
}

int emit_plot_data(const std::vector<std::string>& metric_files, const std::string& out_csv) {
  if (metric_files.empty()) throw std::invalid_argument("no metric files given");

  struct Row {
    std::string strategy;
    std::uint64_t seed;
    double wall_clock_s;
    long epoch;
    std::string metric;
    double value;
  };
  std::vector<Row> rows;
  for (const std::string& path : metric_files) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open metrics file: " + path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      MetricRecord r = MetricRecord::from_json_line(line);
      rows.push_back({r.strategy, r.seed, r.wall_clock_s, r.epoch, "pred_loglik", r.pred_loglik});
      rows.push_back({r.strategy, r.seed, r.wall_clock_s, r.epoch, "pred_mse", r.pred_mse});
      if (r.psnr_db.has_value()) {
        rows.push_back({r.strategy, r.seed, r.wall_clock_s, r.epoch, "psnr_db", *r.psnr_db});
      }
    }
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.strategy, a.wall_clock_s, a.epoch, a.seed, a.metric) <
           std::tie(b.strategy, b.wall_clock_s, b.epoch, b.seed, b.metric);
  });

  std::ofstream out(out_csv);
  if (!out) throw std::runtime_error("cannot write csv: " + out_csv);
  out << "strategy,seed,wall_clock_s,epoch,metric,value\n";
  char buf[64];
  for (const Row& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.wall_clock_s);
    out << r.strategy << ',' << r.seed << ',' << buf << ',' << r.epoch << ',' << r.metric << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", r.value);
    out << buf << '\n';
  }
  return 0;
}

}  // namespace bpfa
