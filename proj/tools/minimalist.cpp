#include <string>
#include <vector>

#include "CLI11.hpp"
#include "minimalist/benchmark.hpp"
#include "minimalist/cli.hpp"
#include "minimalist/version.hpp"

namespace mn = minimalist;

int main(int argc, char** argv) {
  CLI::App app{"minimalist: amortized likelihood-to-evidence ratio estimation "
               "by mutual-information maximization"};
  app.set_version_flag("--version", mn::kVersion);
  app.require_subcommand(1);

  // --- simulate -----------------------------------------------------------
  mn::SimulateArgs sim;
  std::string sim_task_params = "{}";
  auto* c_sim = app.add_subcommand("simulate", "draw (theta, x) pairs from a task");
  c_sim->add_option("--task", sim.task, "task name (gauss_toy|ou1d|ou_nd|birth_death|sir|lorenz)")
      ->required();
  c_sim->add_option("--task-params", sim_task_params, "task parameters as JSON, e.g. {\"dim\":3}");
  c_sim->add_option("--n", sim.n, "number of pairs")->required();
  c_sim->add_option("--seed", sim.seed, "RNG seed");
  c_sim->add_option("--out", sim.out, "output prefix (<out>.csv, <out>.meta.json)");
  c_sim->add_option("--theta", sim.theta, "fix theta for every row (comma-separated)")
      ->delimiter(',');
  c_sim->add_flag("--at-star", sim.at_star, "simulate at the task's reference hypothesis");
  c_sim->add_option("--jobs", sim.jobs, "worker threads");

  // --- train ---------------------------------------------------------------
  mn::TrainArgs train_args;
  auto* c_train = app.add_subcommand("train", "train an estimator from a JSON config");
  c_train->add_option("--config", train_args.config_path, "experiment config JSON")->required();
  c_train->add_option("--output-dir", train_args.output_dir, "override config output_dir");
  c_train->add_option("--jobs", train_args.jobs, "worker threads for simulation");

  // --- posterior / mcmc ------------------------------------------------------
  mn::PosteriorArgs post;
  auto add_posterior_options = [&](CLI::App* cmd, bool mcmc_only) {
    cmd->add_option("--checkpoint", post.checkpoint, "trained model checkpoint")->required();
    cmd->add_option("--observations", post.observations, "CSV of observed trajectories")
        ->required();
    cmd->add_option("--m", post.m, "use only the first M observation rows");
    cmd->add_option("--out", post.out, "output prefix");
    cmd->add_option("--n-samples", post.n_samples, "MCMC samples to record");
    cmd->add_option("--burn-in", post.burn_in, "MCMC burn-in steps");
    cmd->add_option("--thinning", post.thinning, "MCMC thinning factor");
    cmd->add_option("--seed", post.seed, "RNG seed");
    cmd->add_flag("--plot", post.plot, "emit SVG figures");
    cmd->add_option("--jobs", post.jobs, "worker threads");
    if (!mcmc_only) {
      cmd->add_flag("--grid", post.grid, "scan the posterior on the task grid");
      cmd->add_flag("--mcmc", post.mcmc, "sample the posterior by random-walk Metropolis");
      cmd->add_flag("--analytic", post.analytic, "also write the exact OU posterior");
    }
  };
  auto* c_post = app.add_subcommand("posterior", "evaluate the amortized posterior");
  add_posterior_options(c_post, false);
  auto* c_mcmc = app.add_subcommand("mcmc", "sample the amortized posterior (MCMC only)");
  add_posterior_options(c_mcmc, true);

  // --- benchmark -------------------------------------------------------------
  mn::BenchmarkArgs bench;
  auto* c_bench = app.add_subcommand("benchmark", "run the objective-comparison suite");
  c_bench->add_option("--suite", bench.suite_path, "suite config JSON")->required();
  c_bench->add_option("--jobs", bench.jobs, "worker threads (overrides suite)");
  c_bench->add_option("--limit-cells", bench.limit_cells,
                      "pause after this many newly computed cells (resume later)");

  // --- compare-likelihood -----------------------------------------------------
  mn::CompareLikelihoodArgs cmp;
  auto* c_cmp = app.add_subcommand(
      "compare-likelihood", "two-sample JS/AUROC between simulator and model likelihood");
  c_cmp->add_option("--checkpoint", cmp.checkpoint, "trained model checkpoint")->required();
  c_cmp->add_option("--n", cmp.n, "samples per class");
  c_cmp->add_option("--pool-factor", cmp.pool_factor, "marginal pool size multiplier");
  c_cmp->add_option("--seed", cmp.seed, "RNG seed");
  c_cmp->add_option("--out", cmp.out, "results CSV (appended)");
  c_cmp->add_option("--jobs", cmp.jobs, "worker threads");

  // --- grid-search -------------------------------------------------------------
  mn::GridSearchArgs gs;
  std::string gs_task_params = "{}";
  auto* c_gs = app.add_subcommand("grid-search", "hyperparameter grid search by test MI");
  c_gs->add_option("--task", gs.task, "task name")->required();
  c_gs->add_option("--task-params", gs_task_params, "task parameters as JSON");
  c_gs->add_option("--objective", gs.objective, "mine|fdiv|bce");
  c_gs->add_option("--n", gs.n, "training set size");
  c_gs->add_option("--replicates", gs.replicates, "models per grid point");
  c_gs->add_option("--seed", gs.seed, "RNG seed");
  c_gs->add_option("--out", gs.out, "output prefix");
  c_gs->add_option("--l2-grid", gs.l2_grid, "L2 strengths")->delimiter(',');
  c_gs->add_option("--lr-grid", gs.lr_grid, "learning rates")->delimiter(',');
  c_gs->add_option("--batch-grid", gs.batch_grid, "batch sizes")->delimiter(',');
  c_gs->add_option("--max-epochs", gs.max_epochs, "override the per-N epoch budget");
  c_gs->add_option("--jobs", gs.jobs, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return mn::kExitConfig;
  }

  try {
    if (c_sim->parsed()) {
      sim.task_params = nlohmann::json::parse(sim_task_params);
      return mn::cmd_simulate(sim);
    }
    if (c_train->parsed()) return mn::cmd_train(train_args);
    if (c_post->parsed()) return mn::cmd_posterior(post);
    if (c_mcmc->parsed()) {
      post.mcmc = true;
      return mn::cmd_posterior(post);
    }
    if (c_bench->parsed()) return mn::cmd_benchmark(bench);
    if (c_cmp->parsed()) return mn::cmd_compare_likelihood(cmp);
    if (c_gs->parsed()) {
      gs.task_params = nlohmann::json::parse(gs_task_params);
      return mn::cmd_grid_search(gs);
    }
  } catch (const nlohmann::json::parse_error& e) {
    std::cerr << "error: invalid JSON argument: " << e.what() << "\n";
    return mn::kExitConfig;
  }
  return mn::kExitConfig;
}
