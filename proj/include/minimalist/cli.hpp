#pragma once

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "minimalist/inference.hpp"
#include "minimalist/io.hpp"
#include "minimalist/metrics.hpp"
#include "minimalist/parallel.hpp"
#include "minimalist/simulators.hpp"
#include "minimalist/svg.hpp"
#include "minimalist/training.hpp"
#include "minimalist/version.hpp"

namespace minimalist {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

// MINIMALIST_SEED overrides config/flag seeds (used by CI).
inline std::optional<std::uint64_t> seed_override_from_env() {
  const char* v = std::getenv("MINIMALIST_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::strtoull(v, nullptr, 10);
}

inline std::uint64_t effective_seed(std::uint64_t configured) {
  if (auto o = seed_override_from_env()) return *o;
  return configured;
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

// Inventory of everything a command emitted, with content hashes, written
// alongside the outputs.
class ManifestBuilder {
 public:
  ManifestBuilder(const std::string& command, const json& config, std::uint64_t seed) {
    j_["tool"] = "minimalist";
    j_["version"] = kVersion;
    j_["command"] = command;
    j_["config_hash"] = fnv1a_string(config.dump());
    j_["seed"] = seed;
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    j_["started_at"] = buf;
    j_["files"] = json::array();
  }

  void add_file(const std::string& path) {
    j_["files"].push_back({{"path", path}, {"fnv1a64", fnv1a_file(path)}});
  }

  void set(const std::string& key, const json& value) { j_[key] = value; }

  void write(const std::string& path) {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    j_["finished_at"] = buf;
    ensure_parent_dir(path);
    save_json_file(path, j_);
  }

 private:
  json j_;
};

// Maps exceptions to the documented exit codes.
inline int run_command(const std::function<void()>& body) {
  try {
    body();
    return kExitOk;
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const numeric_error& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kExitNumeric;
  }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string task;
  json task_params = json::object();
  int n = 1000;
  std::uint64_t seed = 1;
  std::string out = "dataset";  // prefix: writes <out>.csv, <out>.meta.json
  std::vector<double> theta;    // when set, simulate every row at this theta
  bool at_star = false;         // shortcut for theta = theta_star
  int jobs = 1;
};

inline std::vector<std::string> dataset_header(const Task& task) {
  std::vector<std::string> h;
  for (int i = 0; i < task.theta_dim(); ++i) h.push_back("theta_" + std::to_string(i));
  for (int i = 0; i < task.x_dim(); ++i) h.push_back("x_" + std::to_string(i));
  return h;
}

inline int cmd_simulate(const SimulateArgs& args) {
  return run_command([&] {
    auto task = make_task(args.task, args.task_params);
    if (args.n < 1) throw config_error("--n must be >= 1");
    std::uint64_t seed = effective_seed(args.seed);
    SimStats stats;
    MatrixXd data;
    VectorXd theta_fixed;
    if (args.at_star || !args.theta.empty()) {
      theta_fixed = args.at_star
                        ? task->theta_star()
                        : Eigen::Map<const VectorXd>(args.theta.data(),
                                                     static_cast<Eigen::Index>(args.theta.size()));
      if (theta_fixed.size() != task->theta_dim())
        throw config_error("--theta needs " + std::to_string(task->theta_dim()) + " values");
      data = simulate_at(*task, theta_fixed, args.n, seed, args.jobs, &stats);
    } else {
      data = generate_dataset(*task, args.n, seed, args.jobs, &stats);
    }

    std::string csv_path = args.out + ".csv";
    std::string meta_path = args.out + ".meta.json";
    ensure_parent_dir(csv_path);
    write_matrix_csv(csv_path, dataset_header(*task), data);

    json meta{{"task", task->name()},
              {"task_params", task->params_json()},
              {"seed", seed},
              {"N", args.n},
              {"obs_times", task->obs_times()},
              {"version", kVersion},
              {"retries", stats.retries.load()},
              {"bd_cap_hits", stats.bd_cap_hits.load()}};
    if (theta_fixed.size() > 0) {
      std::vector<double> tv(theta_fixed.data(), theta_fixed.data() + theta_fixed.size());
      meta["theta_fixed"] = tv;
    }
    save_json_file(meta_path, meta);

    ManifestBuilder manifest("simulate", meta, seed);
    manifest.add_file(csv_path);
    manifest.add_file(meta_path);
    manifest.write(args.out + ".manifest.json");
    std::cerr << "wrote " << csv_path << " (" << args.n << " rows)\n";
  });
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::string output_dir;  // overrides config when set
  int jobs = 1;
};

inline void save_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
  CsvWriter w(path);
  w.write_row({"epoch", "train_loss", "val_loss"});
  for (const auto& r : history)
    w.write_row({std::to_string(r.epoch), format_double(r.train_loss), format_double(r.val_loss)});
}

inline int cmd_train(const TrainArgs& args) {
  return run_command([&] {
    json cfg_json = load_json_file(args.config_path);
    ExperimentConfig cfg = experiment_config_from_json(cfg_json);
    cfg.trainer.seed = effective_seed(cfg.trainer.seed);
    if (!args.output_dir.empty()) cfg.output_dir = args.output_dir;
    if (cfg.output_dir.empty()) throw config_error("field 'output_dir' is required");

    auto task = make_task(cfg.task_name, cfg.task_params);
    MatrixXd dataset;
    const MatrixXd* dataset_ptr = nullptr;
    if (!cfg.dataset_path.empty()) {
      if (!std::filesystem::exists(cfg.dataset_path))
        throw config_error("field 'dataset': file not found: " + cfg.dataset_path);
      dataset = csv_to_matrix(read_csv(cfg.dataset_path));
      if (dataset.cols() != task->theta_dim() + task->x_dim())
        throw config_error("field 'dataset': has " + std::to_string(dataset.cols()) +
                           " columns, task needs " +
                           std::to_string(task->theta_dim() + task->x_dim()));
      dataset_ptr = &dataset;
    }

    TrainedEstimator est = train(*task, cfg, dataset_ptr, args.jobs);

    std::filesystem::create_directories(cfg.output_dir);
    std::string ckpt_path = cfg.output_dir + "/checkpoint.json";
    std::string hist_path = cfg.output_dir + "/history.csv";
    json ckpt = checkpoint_to_json(est);
    ckpt["n_train"] = cfg.n_train;
    save_json_file(ckpt_path, ckpt);
    save_history_csv(hist_path, est.history);

    ManifestBuilder manifest("train", cfg_json, cfg.trainer.seed);
    manifest.add_file(ckpt_path);
    manifest.add_file(hist_path);
    manifest.write(cfg.output_dir + "/manifest.json");
    double best_val = std::numeric_limits<double>::infinity();
    for (const auto& r : est.history) best_val = std::min(best_val, r.val_loss);
    std::cerr << "trained " << to_string(cfg.objective) << " on " << cfg.task_name << ": "
              << est.history.size() << " epochs, best val loss " << best_val << "\n";
  });
}

// ---------------------------------------------------------------------------
// posterior / mcmc
// ---------------------------------------------------------------------------

struct PosteriorArgs {
  std::string checkpoint;
  std::string observations;  // CSV with x columns (theta columns tolerated)
  int m = 0;                 // 0 = use all rows
  bool grid = false;
  bool mcmc = false;
  bool analytic = false;
  std::string out = "posterior";
  int n_samples = 10000;
  int burn_in = 1000;
  int thinning = 10;
  std::uint64_t seed = 1;
  bool plot = false;
  int jobs = 1;
};

// Accepts either bare x columns or a full (theta, x) dataset.
inline MatrixXd load_observations(const std::string& path, int theta_dim, int x_dim) {
  CsvTable table = read_csv(path);
  MatrixXd all = csv_to_matrix(table);
  if (all.cols() == x_dim) return all;
  if (all.cols() == theta_dim + x_dim) return all.rightCols(x_dim);
  throw config_error("observations file has " + std::to_string(all.cols()) +
                     " columns; expected " + std::to_string(x_dim) + " or " +
                     std::to_string(theta_dim + x_dim));
}

inline void write_grid_csv(const std::string& path, const PosteriorGrid& grid) {
  CsvWriter w(path);
  std::vector<std::string> header;
  for (std::size_t d = 0; d < grid.axes.size(); ++d) header.push_back("theta_" + std::to_string(d));
  header.push_back("density");
  header.push_back("log_density");
  w.write_row(header);
  std::vector<double> row(grid.axes.size() + 2);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    VectorXd theta = grid.theta_at(i);
    for (Eigen::Index d = 0; d < theta.size(); ++d) row[static_cast<std::size_t>(d)] = theta(d);
    row[grid.axes.size()] = grid.density(static_cast<Eigen::Index>(i));
    row[grid.axes.size() + 1] = grid.log_density(static_cast<Eigen::Index>(i));
    w.write_numeric_row(row);
  }
}

inline void write_chain_csv(const std::string& path, const McmcChain& chain) {
  CsvWriter w(path);
  std::vector<std::string> header;
  for (Eigen::Index d = 0; d < chain.samples.cols(); ++d)
    header.push_back("theta_" + std::to_string(d));
  w.write_row(header);
  std::vector<double> row(static_cast<std::size_t>(chain.samples.cols()));
  for (Eigen::Index i = 0; i < chain.samples.rows(); ++i) {
    for (Eigen::Index d = 0; d < chain.samples.cols(); ++d)
      row[static_cast<std::size_t>(d)] = chain.samples(i, d);
    w.write_numeric_row(row);
  }
}

inline int cmd_posterior(const PosteriorArgs& args) {
  return run_command([&] {
    if (!args.grid && !args.mcmc && !args.analytic)
      throw config_error("choose at least one of --grid, --mcmc, --analytic");
    TrainedEstimator est = checkpoint_from_json(load_json_file(args.checkpoint));
    if (est.task_name.empty()) throw config_error("checkpoint lacks a task name");
    auto task = make_task(est.task_name, est.task_params);
    MatrixXd obs = load_observations(args.observations, task->theta_dim(), task->x_dim());
    if (args.m > 0) {
      if (args.m > obs.rows())
        throw config_error("--m exceeds observation rows (" + std::to_string(obs.rows()) + ")");
      obs = obs.topRows(args.m);
    }
    std::uint64_t seed = effective_seed(args.seed);
    json cfg{{"checkpoint", args.checkpoint}, {"observations", args.observations},
             {"m", static_cast<int>(obs.rows())}};
    ManifestBuilder manifest("posterior", cfg, seed);

    auto prior = [&task](const VectorXd& t) { return task->prior_logdensity(t); };
    if (args.grid) {
      PosteriorGrid grid = posterior_grid(est, obs, prior, task->theta_grid(), args.jobs);
      std::string path = args.out + "_grid.csv";
      ensure_parent_dir(path);
      write_grid_csv(path, grid);
      manifest.add_file(path);
      if (args.plot && grid.axes.size() == 2) {
        svg_heatmap(args.out + "_grid.svg", grid, est.task_name + " posterior");
        manifest.add_file(args.out + "_grid.svg");
      }
      if (args.plot && grid.axes.size() == 1) {
        svg_density_lines(args.out + "_grid.svg", {{"model", &grid}},
                          est.task_name + " posterior");
        manifest.add_file(args.out + "_grid.svg");
      }
    }
    if (args.mcmc) {
      Rng rng = make_rng(seed);
      McmcChain chain =
          mcmc_posterior(est, *task, obs, args.n_samples, rng, args.burn_in, args.thinning);
      if (chain.low_acceptance)
        std::cerr << "warning: acceptance rate " << chain.acceptance_rate
                  << " below 0.01; adjust proposal scale\n";
      std::string path = args.out + "_chain.csv";
      ensure_parent_dir(path);
      write_chain_csv(path, chain);
      manifest.add_file(path);
      manifest.set("acceptance_rate", chain.acceptance_rate);
    }
    if (args.analytic) {
      if (est.task_name == "ou1d") {
        OuTask1d ou;
        PosteriorGrid grid = ou_analytic_posterior(ou, obs, ou.theta_grid(), args.jobs);
        std::string path = args.out + "_analytic.csv";
        ensure_parent_dir(path);
        write_grid_csv(path, grid);
        manifest.add_file(path);
      } else if (est.task_name == "ou_nd") {
        const auto& ou = dynamic_cast<const OuTaskNd&>(*task);
        for (int e = 0; e < ou.theta_dim(); ++e) {
          PosteriorGrid grid = ou_nd_analytic_marginal(
              ou, obs, e, ou.theta_grid()[static_cast<std::size_t>(e)], args.jobs);
          std::string path = args.out + "_analytic_elem" + std::to_string(e) + ".csv";
          ensure_parent_dir(path);
          write_grid_csv(path, grid);
          manifest.add_file(path);
        }
      } else {
        throw config_error("--analytic is only available for ou1d and ou_nd");
      }
    }
    manifest.write(args.out + ".manifest.json");
  });
}

// ---------------------------------------------------------------------------
// grid-search
// ---------------------------------------------------------------------------

struct GridSearchArgs {
  std::string task;
  json task_params = json::object();
  std::string objective = "mine";
  int n = 100000;
  int replicates = 5;
  std::uint64_t seed = 1;
  std::string out = "grid_search";
  std::vector<double> l2_grid = {1e-4, 1e-5, 1e-6};
  std::vector<double> lr_grid = {1e-2, 1e-3, 1e-4};
  std::vector<int> batch_grid = {1000, 10000};
  int max_epochs = 0;  // 0 = auto for n
  int jobs = 1;
};

// Trainer defaults from the hyperparameter grid, with an epoch budget
// that scales down as the per-epoch sample count grows.
inline TrainerConfig auto_trainer_for(int n_train) {
  TrainerConfig tc;
  tc.learning_rate = 1e-2;
  if (n_train > 200000) {
    tc.max_epochs = 80;
    tc.patience = 16;
  } else if (n_train > 20000) {
    tc.max_epochs = 150;
    tc.patience = 20;
  } else {
    tc.max_epochs = 300;
    tc.patience = 25;
  }
  return tc;
}

inline int cmd_grid_search(const GridSearchArgs& args) {
  return run_command([&] {
    auto task = make_task(args.task, args.task_params);
    ObjectiveKind objective = objective_from_string(args.objective);
    ExperimentConfig base;
    base.task_name = args.task;
    base.objective = objective;
    base.n_train = args.n;
    base.n_val = std::min(args.n, 10000);
    base.trainer = auto_trainer_for(args.n);
    if (args.max_epochs > 0) base.trainer.max_epochs = args.max_epochs;
    base.trainer.seed = effective_seed(args.seed);

    GridSearchResult result =
        grid_search(*task, objective, args.l2_grid, args.lr_grid, args.batch_grid, args.n,
                    args.replicates, base, args.jobs);

    std::string csv_path = args.out + ".csv";
    ensure_parent_dir(csv_path);
    CsvWriter w(csv_path);
    w.write_row({"l2_strength", "learning_rate", "batch_size", "replicate", "test_mi"});
    for (const auto& p : result.points)
      for (std::size_t r = 0; r < p.replicate_mi.size(); ++r)
        w.write_row({format_double(p.l2_strength), format_double(p.learning_rate),
                     std::to_string(p.batch_size), std::to_string(r),
                     format_double(p.replicate_mi[r])});
    w.flush();

    std::string best_path = args.out + "_best.json";
    save_json_file(best_path, trainer_config_to_json(result.best));

    json cfg{{"task", args.task}, {"objective", args.objective}, {"n", args.n}};
    ManifestBuilder manifest("grid-search", cfg, base.trainer.seed);
    manifest.add_file(csv_path);
    manifest.add_file(best_path);
    manifest.write(args.out + ".manifest.json");
    std::cerr << "best: l2=" << result.best.l2_strength << " lr=" << result.best.learning_rate
              << " batch=" << result.best.batch_size << "\n";
  });
}

// ---------------------------------------------------------------------------
// compare-likelihood
// ---------------------------------------------------------------------------

struct CompareLikelihoodArgs {
  std::string checkpoint;
  int n = 10000;          // samples per class
  int pool_factor = 5;    // marginal pool size = pool_factor * n
  std::uint64_t seed = 1;
  std::string out = "likelihood_compare.csv";
  bool with_auroc = true;
  int jobs = 1;
};

inline int cmd_compare_likelihood(const CompareLikelihoodArgs& args) {
  return run_command([&] {
    TrainedEstimator est = checkpoint_from_json(load_json_file(args.checkpoint));
    auto task = make_task(est.task_name, est.task_params);
    std::uint64_t seed = effective_seed(args.seed);

    MatrixXd truth =
        simulate_at(*task, task->theta_star(), args.n, mix64(seed, 0x7275), args.jobs)
            .rightCols(task->x_dim());
    MatrixXd pool =
        generate_dataset(*task, args.pool_factor * args.n, mix64(seed, 0x706f), args.jobs)
            .rightCols(task->x_dim());
    Rng rng = make_rng(mix64(seed, 0x726a));
    MatrixXd model_samples =
        rejection_sample_likelihood(est, task->theta_star(), pool, args.n, rng);

    TrainerConfig tc = default_classifier_trainer(mix64(seed, 0x636c), args.n);
    double js = classifier_js(truth, model_samples, tc);
    double roc = args.with_auroc ? classifier_auroc(truth, model_samples, tc) : 0.5;

    bool fresh = !std::filesystem::exists(args.out);
    ensure_parent_dir(args.out);
    CsvWriter w(args.out, /*append=*/true);
    if (fresh) w.write_row({"task", "objective", "N", "replicate", "metric", "value", "uncertainty"});
    json ckpt = load_json_file(args.checkpoint);
    int n_train = ckpt.value("n_train", 0);
    w.write_row({task->name(), to_string(est.objective), std::to_string(n_train), "0",
                 "likelihood_js", format_double(js), "0"});
    if (args.with_auroc)
      w.write_row({task->name(), to_string(est.objective), std::to_string(n_train), "0",
                   "likelihood_auroc", format_double(roc), "0"});
    w.flush();
    std::cout << "likelihood_js=" << js;
    if (args.with_auroc) std::cout << " likelihood_auroc=" << roc;
    std::cout << "\n";
  });
}

}  // namespace minimalist
