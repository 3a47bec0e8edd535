// Experiment CLI: `run` drives the stochastic variational loop, `baseline`
// the full Gibbs chain, `plotdata` merges metric files for plotting.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "bpfa/experiment.hpp"

namespace {

void add_common_options(CLI::App* cmd, bpfa::ExperimentConfig& config, std::string& strategy,
                        std::string& init, std::string& timing, std::string& config_path) {
  cmd->add_option("--config", config_path, "key=value config file (flags override)");
  cmd->add_option("--task", config.task, "synthetic | image-interp | image-denoise | matrix");
  cmd->add_option("--strategy", strategy,
                  "mf-svi | mf-ssvi | titsias-ssvi | mimno-svi | gibbs-ssvi");
  cmd->add_option("--K", config.K, "truncation level");
  cmd->add_option("--batch", config.batch_size, "minibatch size");
  cmd->add_option("--epochs", config.epochs, "iterations (one minibatch each)");
  cmd->add_option("--seed", config.seed, "master seed");
  cmd->add_option("--init", init, "random | gibbs:<subset>:<iters>");
  cmd->add_option("--burnin", config.strategy.gibbs.burn_in, "local Gibbs burn-in sweeps");
  cmd->add_option("--nsamples", config.strategy.gibbs.n_samples, "retained local Gibbs sweeps");
  cmd->add_option_function<std::string>(
         "--gibbs-init",
         [&config](const std::string& v) {
           if (v == "zero") config.strategy.gibbs.init = bpfa::GibbsOptions::Init::kZero;
           else if (v == "prior") config.strategy.gibbs.init = bpfa::GibbsOptions::Init::kPrior;
           else if (v == "half") config.strategy.gibbs.init = bpfa::GibbsOptions::Init::kHalf;
           else throw CLI::ValidationError("--gibbs-init must be zero | prior | half");
         },
         "local chain start: zero | prior | half")
      ->default_str("zero");
  cmd->add_option("--eval-every-s", config.eval_every_s, "wall-clock evaluation period");
  cmd->add_option("--eval-every-iters", config.eval_every_iters,
                  "iteration-based evaluation period (overrides wall clock)");
  cmd->add_option("--eval-rows", config.eval_max_rows,
                  "cap on scored test rows (0 = all; image tasks default 400)");
  cmd->add_option("--holdout", config.holdout_fraction, "held-out fraction of observed entries");
  cmd->add_option("--observe-frac", config.observe_fraction, "observed pixel fraction");
  cmd->add_option("--noise-sd", config.noise_sd, "denoising noise sd in pixel units");
  cmd->add_option("--M", config.M, "predictive sample count");
  cmd->add_flag("--paper-literal-mu", config.paper_literal_mu,
                "drop the noise-precision factor from the loading-mean statistic");
  cmd->add_option("--input", config.input_path, "input image (pgm) or matrix (txt)");
  cmd->add_option("--mask", config.mask_path, "optional 0/1 mask file for matrix input");
  cmd->add_option("--out", config.out_dir, "output directory");
  cmd->add_option("--threads", config.threads, "worker threads");
  cmd->add_option("--timing", timing, "wall | none (none writes wall_clock_s = 0)");
  cmd->add_option("--max-seconds", config.max_seconds, "training wall-clock budget");
  cmd->add_option("--N", config.synth_N, "synthetic rows");
  cmd->add_option("--D", config.synth_D, "synthetic columns");
  cmd->add_option("--K-true", config.synth_K_true, "synthetic generating features");
  cmd->add_option("--gamma-w", config.synth_gamma_w, "synthetic weight precision");
  cmd->add_option("--gamma-obs", config.synth_gamma_obs, "synthetic noise precision");
  cmd->add_option("--a", config.hyper.a, "beta-process mass");
  cmd->add_option("--b", config.hyper.b, "beta-process concentration");
  cmd->add_option("--c-prior", config.hyper.c_prior, "gamma_obs prior shape");
  cmd->add_option("--d-prior", config.hyper.d_prior, "gamma_obs prior rate");
  cmd->add_option("--e-prior", config.hyper.e_prior, "gamma_w prior shape");
  cmd->add_option("--f-prior", config.hyper.f_prior, "gamma_w prior rate");
  cmd->add_option("--t0", config.hyper.t0, "learning schedule offset");
  cmd->add_option("--zeta", config.hyper.zeta, "learning schedule exponent");

  // Flags override config-file values by appearing later in the argv.
  for (CLI::Option* opt : cmd->get_options()) {
    if (opt->get_expected_min() > 0) opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }
}

// Expands `--config <file>` into the argument list: config-derived arguments
// are inserted right after the subcommand name so explicit flags win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  if (args.size() < 2) return args;

  std::string path;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      break;
    }
  }
  if (path.empty()) return args;

  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::vector<std::string> expanded{args[0], args[1]};
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    std::size_t start = 0;
    while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start]))) ++start;
    line.erase(0, start);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw std::runtime_error("config file lines must be key=value: " + line);
    }
    const std::string key = line.substr(0, eq);
    if (key == "config") throw std::runtime_error("config files cannot nest --config");
    expanded.push_back("--" + key + "=" + line.substr(eq + 1));
  }
  expanded.insert(expanded.end(), args.begin() + 2, args.end());
  return expanded;
}

void finalize_config(bpfa::ExperimentConfig& config, const std::string& strategy,
                     const std::string& init, const std::string& timing, bool eval_rows_set) {
  config.strategy.kind = bpfa::StrategyTag::parse(strategy).kind;
  if (init == "random") {
    config.warm_start = false;
  } else if (init.rfind("gibbs", 0) == 0) {
    config.warm_start = true;
    // gibbs:<subset>:<iters>
    const auto first = init.find(':');
    if (first != std::string::npos) {
      const auto second = init.find(':', first + 1);
      if (second == std::string::npos) throw CLI::ValidationError("--init gibbs:<subset>:<iters>");
      config.warm_subset = std::stoi(init.substr(first + 1, second - first - 1));
      config.warm_iterations = std::stoi(init.substr(second + 1));
    }
  } else {
    throw CLI::ValidationError("--init must be 'random' or 'gibbs:<subset>:<iters>'");
  }
  if (timing == "wall") {
    config.wall_timing = true;
  } else if (timing == "none") {
    config.wall_timing = false;
  } else {
    throw CLI::ValidationError("--timing must be 'wall' or 'none'");
  }
  const bool image_task = config.task == "image-interp" || config.task == "image-denoise";
  if (image_task && !eval_rows_set) config.eval_max_rows = 400;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Beta process factor analysis: stochastic variational inference and Gibbs"};
  app.require_subcommand(1);

  bpfa::ExperimentConfig config;
  std::string strategy = "gibbs-ssvi";
  std::string init = "random";
  std::string timing = "wall";
  std::string config_path;
  std::string resume;

  CLI::App* run = app.add_subcommand("run", "run one SVI experiment");
  add_common_options(run, config, strategy, init, timing, config_path);
  run->add_option("--resume", resume, "checkpoint to continue from");
  run->add_option("--ckpt-every-iters", config.ckpt_every_iters, "periodic checkpoint interval");

  CLI::App* baseline = app.add_subcommand("baseline", "run the full Gibbs sampler");
  add_common_options(baseline, config, strategy, init, timing, config_path);
  baseline->add_option("--thin", config.baseline_thin, "keep every thin-th chain state");

  CLI::App* plot = app.add_subcommand("plotdata", "merge metric files into a tidy CSV");
  std::vector<std::string> metric_files;
  std::string out_csv = "plotdata.csv";
  plot->add_option("files", metric_files, "metrics.jsonl files")->required();
  plot->add_option("--out", out_csv, "output CSV path");

  try {
    std::vector<std::string> args = expand_config(argc, argv);
    std::vector<const char*> cargs;
    cargs.reserve(args.size());
    for (const std::string& a : args) cargs.push_back(a.c_str());
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  } catch (const std::exception& err) {
    std::cerr << "bpfa: " << err.what() << "\n";
    return 1;
  }

  try {
    if (run->parsed()) {
      finalize_config(config, strategy, init, timing, run->count("--eval-rows") > 0);
      config.resume_path = resume;
      return bpfa::run_experiment(config);
    }
    if (baseline->parsed()) {
      finalize_config(config, strategy, init, timing, baseline->count("--eval-rows") > 0);
      return bpfa::run_baseline(config);
    }
    if (plot->parsed()) {
      return bpfa::emit_plot_data(metric_files, out_csv);
    }
  } catch (const std::exception& err) {
    std::cerr << "bpfa: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
